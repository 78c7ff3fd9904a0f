"""
Equilibrium Bose-Einstein spectrum of the harmonically trapped 2D photon gas.

Level ``k`` of the trap has energy ``hbar (omega_c + k Omega)`` and
degeneracy ``pol * (k + 1)``.  The chemical potential follows from the
ground-state occupation ``n_c``::

    (hbar omega_c - mu) / k_B T = ln(1 + 1 / n_c)

Intensities are photon numbers per level (not energy weighted), mapped to
wavelengths ``lambda_k = lambda_c / (1 + k Omega / omega_c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from ._io import csv_text, write_text
from .core import HBAR, K_B, SPEED_OF_LIGHT, ConvergenceError, ValidationError

__all__ = [
    "TrapModel",
    "SpectrumCurve",
    "critical_number",
    "chemical_potential",
    "level_occupations",
    "level_wavelengths",
    "spectrum_curve",
    "fit_spectrum",
    "experiment_trap",
]

_NS = 1e-9
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_KERNEL_REACH = 8.0  # Gaussian tails beyond 8 sigma are below 1e-13


@dataclass(frozen=True)
class TrapModel:
    """Trap parameters.

    Parameters
    ----------
    T : float
        Temperature in K.
    Omega : float
        Trap frequency in rad/ns.
    lambda_c : float
        Cutoff wavelength in nm.
    pol : int
        Polarization degeneracy of every level.  It scales all occupations
        by the same factor, so spectral shapes and fitted ``n_c`` do not
        depend on it; it only matters for absolute populations.
    """

    T: float
    Omega: float
    lambda_c: float
    pol: int = 2

    def __post_init__(self):
        for name in ("T", "Omega", "lambda_c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(name, f"must be positive and finite, got {v!r}")
        if self.pol not in (1, 2):
            raise ValidationError("pol", "must be 1 or 2")

    @property
    def omega_c(self) -> float:
        """Cutoff angular frequency in rad/ns."""
        return 2.0 * math.pi * SPEED_OF_LIGHT / (self.lambda_c * 1e-9) * _NS

    @property
    def level_spacing(self) -> float:
        """``hbar Omega / k_B T``."""
        return HBAR * self.Omega / _NS / (K_B * self.T)


def experiment_trap(**overrides) -> TrapModel:
    """300 K, ``Omega = 2 pi * 40 GHz``, ``lambda_c = 571.3 nm``."""
    kw = dict(T=300.0, Omega=2.0 * math.pi * 40.0, lambda_c=571.3)
    kw.update(overrides)
    return TrapModel(**kw)


@dataclass(frozen=True)
class SpectrumCurve:
    wavelength: np.ndarray
    intensity: np.ndarray
    resolution_fwhm: float = 0.0

    def __post_init__(self):
        wl = np.asarray(self.wavelength, dtype=float)
        I = np.asarray(self.intensity, dtype=float)
        if wl.ndim != 1 or wl.shape != I.shape:
            raise ValidationError("wavelength", "wavelength and intensity must be 1-D of equal length")
        if np.any(I < 0) or not np.all(np.isfinite(I)):
            raise ValidationError("intensity", "must be finite and non-negative")
        if not self.resolution_fwhm >= 0:
            raise ValidationError("resolution_fwhm", "must be non-negative")
        object.__setattr__(self, "wavelength", wl)
        object.__setattr__(self, "intensity", I)

    def __len__(self):
        return len(self.wavelength)

    @property
    def peak_wavelength(self) -> float:
        return float(self.wavelength[np.argmax(self.intensity)])

    def to_csv(self, path: str | Path | None = None) -> str:
        rows = zip(self.wavelength, self.intensity)
        return write_text(path, csv_text(("wavelength_nm", "intensity"), rows))


def critical_number(T: float, Omega: float) -> float:
    """``pi^2/3 (k_B T / hbar Omega)^2`` with ``Omega`` in rad/ns."""
    if not (T > 0 and Omega > 0):
        raise ValidationError("T" if not T > 0 else "Omega", "must be positive")
    x = K_B * T / (HBAR * Omega / _NS)
    return math.pi ** 2 / 3.0 * x * x


def _reduced_mu(n_condensate: float) -> float:
    # (hbar omega_c - mu) / k_B T; log1p keeps digits for large n
    if not n_condensate > 0:
        raise ValidationError("n_condensate", "must be positive")
    return math.log1p(1.0 / n_condensate)


def chemical_potential(trap: TrapModel, n_condensate: float) -> float:
    """Chemical potential in J for ground-state occupation ``n_condensate``.

    The Bose factor is inverted in closed form.
    """
    x0 = _reduced_mu(n_condensate)
    return HBAR * trap.omega_c / _NS - K_B * trap.T * x0


def _occupations(x0: float, eps: float, pol: int, k: np.ndarray) -> np.ndarray:
    return pol * (k + 1.0) / np.expm1(x0 + eps * k)


def level_occupations(trap: TrapModel, n_condensate: float, rel_tol: float = 1e-9) -> np.ndarray:
    """Photon number in each trap level ``k = 0, 1, ...``.

    Occupations decrease with ``k``; the ladder is cut after the first level
    whose population drops below ``rel_tol`` times the running total of the
    excited levels.
    Element 0 is ``pol * n_condensate``.
    """
    if not 0 < rel_tol < 1:
        raise ValidationError("rel_tol", "must lie in (0, 1)")
    x0 = _reduced_mu(n_condensate)
    eps = trap.level_spacing
    chunk = max(1024, int(4.0 / eps))
    parts = []
    total = 0.0
    start = 0
    while True:
        k = np.arange(start, start + chunk, dtype=float)
        occ = _occupations(x0, eps, trap.pol, k)
        # occupations decrease with k; measure the tail against the excited
        # levels only so a huge condensate cannot cut the thermal cloud short
        excited = np.where(k > 0, occ, 0.0)
        cum = total + np.cumsum(excited)
        small = np.nonzero((k > 0) & (occ < rel_tol * cum))[0]
        if len(small):
            parts.append(occ[: int(small[0]) + 1])
            break
        parts.append(occ)
        total = cum[-1]
        start += chunk
    return np.concatenate(parts)


def level_wavelengths(trap: TrapModel, count: int) -> np.ndarray:
    """Wavelengths in nm of the first ``count`` levels."""
    k = np.arange(count, dtype=float)
    return trap.lambda_c / (1.0 + k * trap.Omega / trap.omega_c)


def _check_grid(trap: TrapModel, grid) -> np.ndarray:
    wl = np.asarray(grid, dtype=float)
    if wl.ndim != 1 or wl.size < 2 or np.any(np.diff(wl) <= 0):
        raise ValidationError("grid", "must be a strictly increasing 1-D array")
    if not (wl[0] < trap.lambda_c <= wl[-1]):
        raise ValidationError(
            "grid", f"must extend to both sides of the cutoff {trap.lambda_c} nm")
    return wl


def _response(trap: TrapModel, wl: np.ndarray, fwhm: float, n_levels: int):
    """Per-level response on ``wl``: Gaussian kernels or nearest-bin indicators."""
    lam = level_wavelengths(trap, n_levels)
    reach = _KERNEL_REACH * fwhm * _FWHM_TO_SIGMA
    keep = lam >= wl[0] - reach
    lam = lam[keep]
    if fwhm > 0:
        sigma = fwhm * _FWHM_TO_SIGMA
        R = np.exp(-0.5 * ((wl[:, None] - lam[None, :]) / sigma) ** 2)
    else:
        R = np.zeros((wl.size, lam.size))
        edges = 0.5 * (wl[1:] + wl[:-1])
        R[np.searchsorted(edges, lam), np.arange(lam.size)] = 1.0
    return R, int(np.count_nonzero(keep))


def _raw_intensity(trap, wl, fwhm, n_condensate):
    occ = level_occupations(trap, n_condensate)
    R, used = _response(trap, wl, fwhm, occ.size)
    return R @ occ[:used], occ[:used]


def _continuous_peak(trap, wl, fwhm, occ, I):
    # refine the grid maximum so the normalization does not depend on the grid
    i = int(np.argmax(I))
    if fwhm == 0:
        return I[i]
    sigma = fwhm * _FWHM_TO_SIGMA
    lam = level_wavelengths(trap, occ.size)

    def neg(x):
        return -float(occ @ np.exp(-0.5 * ((x - lam) / sigma) ** 2))

    lo, hi = wl[max(i - 1, 0)], wl[min(i + 1, wl.size - 1)]
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-9 * fwhm})
    return max(-res.fun, I[i])


def spectrum_curve(trap: TrapModel, n_condensate: float, resolution_fwhm: float, grid) -> SpectrumCurve:
    """Spectrum on ``grid`` (nm), normalized to unit peak.

    Each level contributes its photon number, spread by a Gaussian of the given
    FWHM (nm); with zero resolution it is binned onto the nearest grid point.

    Raises
    ------
    ValidationError
        If the grid does not straddle ``lambda_c`` or ``resolution_fwhm < 0``.
    """
    wl = _check_grid(trap, grid)
    if not (resolution_fwhm >= 0 and math.isfinite(resolution_fwhm)):
        raise ValidationError("resolution_fwhm", "must be finite and non-negative")
    I, occ = _raw_intensity(trap, wl, resolution_fwhm, n_condensate)
    peak = _continuous_peak(trap, wl, resolution_fwhm, occ, I)
    return SpectrumCurve(wl, I / peak, resolution_fwhm)


def fit_spectrum(
    data: SpectrumCurve,
    trap: TrapModel,
    bounds: tuple[float, float] = (1e-3, 1e10),
    scan_points: int = 120,
) -> float:
    """Least-squares estimate of the condensate occupation from a spectrum.

    The intensity scale is a nuisance parameter eliminated analytically, which
    leaves a one-dimensional problem in ``log n``: a coarse scan locates the
    basin and a bounded Brent search refines it.

    Raises
    ------
    ConvergenceError
        If the optimum lies on the boundary of ``bounds`` or the refinement
        fails.
    """
    wl = _check_grid(trap, data.wavelength)
    d = data.intensity
    fwhm = data.resolution_fwhm
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValidationError("bounds", "need 0 < lower < upper")
    # the response matrix only depends on the level set, fixed by the
    # high-temperature tail; size it with the smallest occupation in range
    n_levels = level_occupations(trap, hi).size
    R, used = _response(trap, wl, fwhm, n_levels)
    eps = trap.level_spacing
    k = np.arange(used, dtype=float)
    dd = float(d @ d)

    def cost(u):
        m = R @ _occupations(_reduced_mu(math.exp(u)), eps, trap.pol, k)
        mm = float(m @ m)
        dm = float(d @ m)
        if dm <= 0:
            return dd
        return (dd - dm * dm / mm) / dd

    us = np.linspace(math.log(lo), math.log(hi), scan_points)
    costs = np.array([cost(u) for u in us])
    i = int(np.argmin(costs))
    if i == 0 or i == scan_points - 1:
        raise ConvergenceError("spectrum fit optimum on the search boundary")
    res = minimize_scalar(cost, bounds=(us[i - 1], us[i + 1]), method="bounded",
                          options={"xatol": 1e-12})
    if not res.success:
        raise ConvergenceError(f"spectrum fit did not converge: {res.message}")
    return float(math.exp(res.x))
