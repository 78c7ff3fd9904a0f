"""
Comparison of the moment closure against the exact small-M solution.

:func:`run_oracle_checks` collects every check into a JSON-ready report.
Checks that test the closure itself are marked informational below threshold,
where the closure is not expected to hold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .core import ModelParams
from .correlations import coupling_matrix, eigen, g2_curve
from .fitting import fit_g2
from .moments import CLOSURE_MIN_N, g2_zero, moment_steady_state
from .oracle import (
    default_burn_in,
    gillespie_simulate,
    oracle_g2,
    solve_oracle,
    trajectory_g2,
    trajectory_mean_n,
    verify_truncation_identity,
)

__all__ = ["Check", "run_oracle_checks", "MOMENT_RTOL", "G2_RMS_TOL", "EIGEN_RTOL", "SE_FACTOR"]

MOMENT_RTOL = 0.05
G2_RMS_TOL = 0.10
EIGEN_RTOL = 0.10
SE_FACTOR = 3.0
IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    informational: bool = False


def _rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else abs(a)


def run_oracle_checks(
    params: ModelParams,
    seed: int = 1,
    t_end: float = 20000.0,
    tau_points: int = 201,
) -> dict:
    """Run the closure, regression-theorem and stochastic comparisons.

    Returns a dict with the individual checks and an overall ``passed`` flag
    that ignores informational entries.
    """
    checks: list[Check] = []

    def add(name, value, tol, informational=False):
        value = float(value)
        checks.append(Check(name, value, tol, bool(value <= tol), informational))

    gen, dist = solve_oracle(params)
    exact = dist.moments()
    colsum = np.abs(np.asarray(gen.Q.sum(axis=0))).max()
    add("generator_column_sum", colsum / max(abs(gen.Q.diagonal()).max(), 1e-300), IDENTITY_TOL)
    ident = verify_truncation_identity(dist)
    add("pair_identity_excited", ident.pair_excited, IDENTITY_TOL)
    add("pair_identity_mixed", ident.pair_mixed, IDENTITY_TOL)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mom = moment_steady_state(params)
    below = bool(mom.closure_unreliable or exact["n"] < CLOSURE_MIN_N)

    closure = {"n": mom.n, "m_up": mom.m_up, "n2": mom.n2, "nm": mom.nm, "m2": mom.m2}
    for key, value in closure.items():
        add(f"moment_{key}", _rel(value, exact[key]), MOMENT_RTOL, below)

    g2_exact = None
    if exact["n"] > 0:
        ev = eigen(coupling_matrix(params, mom)) if mom.n > 0 else None
        rate = abs(ev.lambda_real) if ev is not None and ev.lambda_real != 0 else params.kappa
        tau = np.linspace(0.0, 20.0 / rate, tau_points)
        g2_exact = oracle_g2(gen, dist, tau, "normal")
        amp = abs(g2_exact.g2[0] - 1.0)
        if ev is not None:
            closed = g2_curve(params, mom, tau, "normal")
            rms = math.sqrt(float(np.mean((closed.g2 - g2_exact.g2) ** 2)))
            add("g2_rms", rms / amp if amp > 0 else rms, G2_RMS_TOL, below)
            fit = fit_g2(g2_exact)
            add("lambda_real", _rel(fit.lambda_real, ev.lambda_real), EIGEN_RTOL, below)
            if ev.regime == "underdamped":
                add("lambda_imag", _rel(fit.lambda_imag, ev.lambda_imag), EIGEN_RTOL, below)

    # stochastic checks compare against the exact chain, so they always count
    burn = default_burn_in(params)
    traj = gillespie_simulate(params, seed, burn + t_end)
    again = gillespie_simulate(params, seed, min(burn + t_end, burn + 100.0))
    prefix = again.times.size
    same = np.array_equal(traj.times[:prefix], again.times) and \
        np.array_equal(traj.n[:prefix], again.n)
    add("seed_reproducible", 0.0 if same else 1.0, 0.0)
    mean_n, se_n = trajectory_mean_n(traj, burn)
    add("gillespie_mean_n_sigma", abs(mean_n - exact["n"]) / se_n if se_n > 0 else math.inf,
        SE_FACTOR)
    if g2_exact is not None:
        est = trajectory_g2(traj, np.array([0.0]), burn_in=burn)
        se = est.stderr[0]
        z = abs(est.g2[0] - g2_exact.g2[0]) / se if se > 0 else math.inf
        add("gillespie_g2_zero_sigma", z, SE_FACTOR)

    return {
        "params": {k: v for k, v in asdict(params).items() if v is not None},
        "n_max": gen.n_max,
        "states": int(np.count_nonzero(gen.reachable)),
        "below_threshold": below,
        "oracle": {
            **exact,
            "g2_zero_normal": None if g2_exact is None else float(g2_exact.g2[0]),
        },
        "closure": {
            **closure,
            "g2_zero_normal": g2_zero(mom, "normal") if mom.n > 0 else None,
        },
        "checks": [asdict(c) for c in checks],
        "passed": all(c.passed for c in checks if not c.informational),
    }
