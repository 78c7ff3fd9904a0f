import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photon_bec.core import HBAR, K_B, ValidationError
from photon_bec.spectrum import (
    SpectrumCurve,
    TrapModel,
    chemical_potential,
    critical_number,
    experiment_trap,
    fit_spectrum,
    level_occupations,
    level_wavelengths,
    spectrum_curve,
)

OMEGA = 2 * math.pi * 40.0
GRID = np.arange(555.0, 575.0, 0.02)


@pytest.fixture(scope="module")
def trap():
    return experiment_trap()


def test_critical_number_experiment_value():
    # pi^2/3 (k_B T / hbar Omega)^2 evaluated by hand in SI units
    x = 1.380649e-23 * 300 / (1.054571817e-34 * 2 * math.pi * 40e9)
    assert critical_number(300.0, OMEGA) == pytest.approx(math.pi ** 2 / 3 * x * x, rel=1e-8)
    assert critical_number(300.0, OMEGA) == pytest.approx(80660, rel=0.01)


def test_critical_number_scaling():
    n = critical_number(300.0, OMEGA)
    assert critical_number(300.0, 2 * OMEGA) == pytest.approx(n / 4, rel=1e-14)
    assert critical_number(150.0, OMEGA) == pytest.approx(n / 4, rel=1e-14)


def test_critical_number_validation():
    with pytest.raises(ValidationError):
        critical_number(0.0, OMEGA)
    with pytest.raises(ValidationError):
        critical_number(300.0, -1.0)


def test_trap_validation():
    with pytest.raises(ValidationError):
        TrapModel(T=-1, Omega=OMEGA, lambda_c=571.3)
    with pytest.raises(ValidationError):
        TrapModel(T=300, Omega=OMEGA, lambda_c=571.3, pol=3)


def test_omega_c_from_wavelength(trap):
    assert trap.omega_c == pytest.approx(2 * math.pi * 299792458.0 / 571.3e-9 * 1e-9, rel=1e-14)


def test_chemical_potential_single_photon(trap):
    mu = chemical_potential(trap, 1.0)
    expected = HBAR * trap.omega_c * 1e9 - K_B * 300.0 * math.log(2.0)
    assert mu == pytest.approx(expected, rel=1e-14)


def test_large_condensate_pushes_mu_to_cutoff(trap):
    e_c = HBAR * trap.omega_c * 1e9
    gaps = [(e_c - chemical_potential(trap, n)) / (K_B * 300) for n in (1e2, 1e4, 1e8)]
    assert gaps[0] > gaps[1] > gaps[2] > 0
    assert gaps[2] == pytest.approx(1e-8, rel=1e-6)


def test_occupation_asymptote_small_k(trap):
    occ = level_occupations(trap, 1e12)
    eps = trap.level_spacing
    for k in (1, 2, 5):
        classical = trap.pol * (k + 1) / (k * eps)
        assert occ[k] == pytest.approx(classical, rel=k * eps)


def test_ground_level_is_condensate(trap):
    assert level_occupations(trap, 12345.0)[0] == pytest.approx(trap.pol * 12345.0, rel=1e-12)


def test_thermal_cloud_approaches_critical_number(trap):
    occ = level_occupations(trap, 1e12)
    assert occ[1:].sum() == pytest.approx(critical_number(300.0, OMEGA), rel=0.02)


def test_truncation_converged(trap):
    a = level_occupations(trap, 1e4).sum()
    b = level_occupations(trap, 1e4, rel_tol=5e-10).sum()
    assert abs(b - a) / a < 1e-6


def test_level_wavelengths_start_at_cutoff(trap):
    lam = level_wavelengths(trap, 3)
    assert lam[0] == 571.3
    assert np.all(np.diff(lam) < 0)
    assert lam[0] - lam[1] == pytest.approx(571.3 * OMEGA / trap.omega_c, rel=1e-4)


def test_peak_at_cutoff_zero_resolution(trap):
    c = spectrum_curve(trap, 1e7, 0.0, GRID)
    assert c.peak_wavelength == pytest.approx(571.3, abs=0.01)
    assert c.intensity.max() == 1.0
    # the spike dominates every other bin
    second = np.sort(c.intensity)[-2]
    assert second < 1e-3


def test_peak_at_cutoff_with_resolution(trap):
    c = spectrum_curve(trap, 1e5, 0.2, GRID)
    assert c.peak_wavelength == pytest.approx(571.3, abs=0.02)
    assert np.all(c.intensity[GRID > 572.5] < 1e-6)


def test_peak_to_tail_ratio_grows_with_condensate(trap):
    n_c = critical_number(300.0, OMEGA)
    tail = (GRID > 560) & (GRID < 565)
    ratios = []
    for f in (0.1, 1.0, 10.0):
        c = spectrum_curve(trap, f * n_c, 0.2, GRID)
        ratios.append(c.intensity.max() / c.intensity[tail].mean())
    assert ratios[0] < ratios[1] < ratios[2]


def test_grid_refinement_invariance(trap):
    coarse = spectrum_curve(trap, 1e4, 0.2, np.arange(555, 575, 0.02))
    fine = spectrum_curve(trap, 1e4, 0.2, np.arange(555, 575, 0.01))
    assert np.max(np.abs(coarse.intensity - fine.intensity[::2])) < 1e-4


def test_grid_must_cover_cutoff(trap):
    with pytest.raises(ValidationError):
        spectrum_curve(trap, 1e4, 0.2, np.arange(555, 570, 0.02))
    with pytest.raises(ValidationError):
        spectrum_curve(trap, 1e4, 0.2, np.arange(572, 580, 0.02))
    with pytest.raises(ValidationError):
        spectrum_curve(trap, 1e4, -0.1, GRID)


def test_polarization_only_scales_populations():
    one = spectrum_curve(experiment_trap(pol=1), 3e4, 0.2, GRID)
    two = spectrum_curve(experiment_trap(pol=2), 3e4, 0.2, GRID)
    assert np.allclose(one.intensity, two.intensity, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("n", [1e3, 2e4, 80660.0, 5e5])
def test_fit_round_trip(trap, n):
    data = spectrum_curve(trap, n, 0.2, GRID)
    assert fit_spectrum(data, trap) == pytest.approx(n, rel=1e-4)


def test_fit_exact_at_critical_number(trap):
    n_c = critical_number(300.0, OMEGA)
    data = spectrum_curve(trap, n_c, 0.2, GRID)
    assert fit_spectrum(data, trap) == pytest.approx(n_c, rel=1e-6)


def test_fit_with_moderate_noise(trap):
    n = 2e4
    clean = spectrum_curve(trap, n, 0.2, GRID)
    rng = np.random.default_rng(4)
    noisy = clean.intensity * (1 + 0.01 * rng.standard_normal(GRID.size))
    fitted = fit_spectrum(SpectrumCurve(GRID, np.clip(noisy, 0, None), 0.2), trap)
    assert fitted == pytest.approx(n, rel=0.01)


def test_fit_monotone_response(trap):
    low = fit_spectrum(spectrum_curve(trap, 1e4, 0.2, GRID), trap)
    high = fit_spectrum(spectrum_curve(trap, 4e4, 0.2, GRID), trap)
    assert high > low


def test_fit_fails_without_signal(trap):
    from photon_bec.core import ConvergenceError

    with pytest.raises(ConvergenceError):
        fit_spectrum(SpectrumCurve(GRID, np.zeros_like(GRID), 0.2), trap)


@given(log_n=st.floats(2.0, 6.0))
def test_fit_round_trip_property(log_n):
    trap = experiment_trap()
    n = 10.0 ** log_n
    data = spectrum_curve(trap, n, 0.3, GRID)
    assert fit_spectrum(data, trap) == pytest.approx(n, rel=1e-3)


def test_spectrum_csv_and_validation(trap):
    c = spectrum_curve(trap, 1e4, 0.2, GRID)
    assert c.to_csv().splitlines()[0] == "wavelength_nm,intensity"
    assert np.all(c.intensity >= 0)
    with pytest.raises(ValidationError):
        SpectrumCurve(GRID, -np.ones_like(GRID))
