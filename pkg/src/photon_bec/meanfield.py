"""
Mean-field rate equations for the condensate photon number ``n`` and the
number of excited molecules ``m_up``.

    dn/dt    = -kappa n - B_abs (M - m) n + B_em (n + 1) m
    dm/dt    = G_up (M - m) - G_down m + B_abs (M - m) n - B_em (n + 1) m

Rates in GHz, times in ns.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from ._io import csv_text, write_text
from .core import ConvergenceError, ModelParams, StiffnessError, ValidationError

__all__ = [
    "MeanFieldState",
    "TimeSeries",
    "mean_field_rhs",
    "mean_field_jacobian",
    "integrate",
    "steady_state",
    "steady_state_closed_form",
    "pump_for_target_n",
    "inversion_at",
]

RTOL = 1e-9
ATOL = 1e-12


@dataclass(frozen=True)
class MeanFieldState:
    n: float
    m_up: float

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.m_up], dtype=float)


@dataclass(frozen=True)
class TimeSeries:
    """Solution of the rate equations on an increasing time grid (ns)."""

    times: np.ndarray
    n: np.ndarray
    m_up: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("times", "must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> MeanFieldState:
        return MeanFieldState(float(self.n[i]), float(self.m_up[i]))

    @property
    def final(self) -> MeanFieldState:
        return self[-1]

    def to_csv(self, path: str | Path | None = None) -> str:
        rows = zip(self.times, self.n, self.m_up)
        return write_text(path, csv_text(("t_ns", "n", "m_up"), rows))


def mean_field_rhs(state: MeanFieldState, params: ModelParams) -> tuple[float, float]:
    """Time derivatives ``(dn/dt, dm_up/dt)`` of the mean-field equations."""
    return _rhs(state.n, state.m_up, params)


def _rhs(n, m, p: ModelParams):
    absorb = p.B_abs * (p.M - m) * n
    emit = p.B_em * (n + 1.0) * m
    dn = -p.kappa * n - absorb + emit
    dm = p.gamma_up * (p.M - m) - p.gamma_down * m + absorb - emit
    return dn, dm


def mean_field_jacobian(state: MeanFieldState, params: ModelParams) -> np.ndarray:
    """Analytic 2x2 Jacobian of :func:`mean_field_rhs` w.r.t. ``(n, m_up)``."""
    p = params
    n, m = state.n, state.m_up
    # d(absorb - emit)/dn and d(absorb - emit)/dm
    a_n = p.B_abs * (p.M - m) - p.B_em * m
    a_m = -p.B_abs * n - p.B_em * (n + 1.0)
    return np.array([
        [-p.kappa - a_n, -a_m],
        [a_n, -p.gamma_up - p.gamma_down + a_m],
    ])


def integrate(
    params: ModelParams,
    initial: MeanFieldState,
    t_end: float,
    rel_tol: float = RTOL,
    abs_tol: float = ATOL,
    t_eval=None,
    max_steps: int = 200_000,
) -> TimeSeries:
    """Integrate the rate equations from ``initial`` up to ``t_end`` (ns).

    Uses an explicit embedded Runge-Kutta 5(4) pair first.  If that stalls
    (step-size underflow or more than ``max_steps`` right-hand-side
    evaluations, the signature of stiffness at large ``M * B``), the whole
    interval is redone with Radau IIA and the analytic Jacobian.

    Parameters
    ----------
    t_eval : array_like, optional
        Output times; defaults to the solver's own steps.

    Raises
    ------
    StiffnessError
        If the implicit fallback cannot advance either.
    """
    if not t_end > 0:
        raise ValidationError("t_end", "must be positive")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ValidationError("tolerance", "rel_tol and abs_tol must be positive")

    def f(_t, y):
        return _rhs(y[0], y[1], params)

    def jac(_t, y):
        return mean_field_jacobian(MeanFieldState(y[0], y[1]), params)

    y0 = initial.as_array()
    kw = dict(rtol=rel_tol, atol=abs_tol, t_eval=t_eval)
    sol = _bounded_rk(f, (0.0, t_end), y0, max_steps, **kw)
    if sol is None or not sol.success:
        sol = solve_ivp(f, (0.0, t_end), y0, method="Radau", jac=jac, **kw)
        if not sol.success:
            raise StiffnessError(f"integration stalled at t={sol.t[-1]:.6g} ns: {sol.message}")
    return TimeSeries(np.asarray(sol.t), sol.y[0].copy(), sol.y[1].copy())


class _Budget(Exception):
    pass


def _bounded_rk(f, span, y0, max_evals, **kw):
    count = 0

    def counted(t, y):
        nonlocal count
        count += 1
        if count > max_evals:
            raise _Budget
        return f(t, y)

    try:
        return solve_ivp(counted, span, y0, method="RK45", **kw)
    except _Budget:
        return None


def inversion_at(n: float, params: ModelParams) -> float:
    """Excited-molecule number that makes ``dn/dt`` vanish at photon number ``n``."""
    p = params
    den = p.B_em * (n + 1.0) + p.B_abs * n
    if den == 0.0:
        return 0.0 if n == 0 else math.inf
    return n * (p.kappa + p.B_abs * p.M) / den


def _newton(params: ModelParams, x0: np.ndarray, tol: float, max_iter: int = 100):
    # Iterate to a negligible step rather than stopping at `tol`: the residual
    # bound is loose in absolute terms when M is large.
    p = params
    x = x0.astype(float)
    for _ in range(max_iter):
        F = np.array(_rhs(x[0], x[1], p))
        if not np.any(F):
            return x
        J = mean_field_jacobian(MeanFieldState(*x), p)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        norm0 = np.linalg.norm(F)
        t = 1.0
        while t > 1e-12:
            trial = x + t * step
            if trial[0] >= 0 and 0 <= trial[1] <= p.M:
                if np.linalg.norm(_rhs(trial[0], trial[1], p)) <= norm0:
                    break
            t *= 0.5
        else:
            break
        x = trial
        if np.all(np.abs(t * step) <= 1e-14 * np.maximum(np.abs(x), 1.0)):
            break
    F = np.array(_rhs(x[0], x[1], p))
    return x if np.max(np.abs(F)) < tol else None


def _residual_bound(p: ModelParams) -> float:
    return 1e-10 * max(p.kappa, p.gamma_up, p.gamma_down, 1e-300) * p.M


def steady_state(params: ModelParams) -> MeanFieldState:
    """Physical root of the mean-field equations.

    Damped Newton with the analytic Jacobian, started from the large-``M``
    closed form; the iterate is kept inside ``n >= 0, 0 <= m_up <= M``.  If
    Newton fails, the equations are integrated to long times and Newton is
    restarted from there.  The returned root has max-norm residual below
    ``1e-10 * max(kappa, gamma_up, gamma_down) * M``.

    Raises
    ------
    ValidationError
        If ``kappa == gamma_down == 0``.
    ConvergenceError
        If no physical root is found.
    """
    p = params
    if not (p.kappa > 0 or p.gamma_down > 0):
        raise ValidationError("kappa", "need kappa > 0 or gamma_down > 0 for a steady state")
    tol = _residual_bound(p)
    if p.gamma_up == 0.0:
        # (0, 0) is then an exact fixed point; it is the attracting one
        # whenever losses exist (no source of excitation at all).
        return MeanFieldState(0.0, 0.0)

    starts = []
    if p.kappa > 0 and p.B_em + p.B_abs > 0:
        cf = _closed_form(p)
        n0 = max(cf.n, 1e-3)
        starts.append(np.array([n0, min(inversion_at(n0, p), p.M * (1 - 1e-12))]))
    g = p.gamma_up + p.gamma_down
    starts.append(np.array([0.0, p.M * p.gamma_up / g]))
    for x0 in starts:
        x = _newton(p, x0, tol)
        if x is not None:
            return MeanFieldState(float(x[0]), float(x[1]))

    rates = [r for r in (p.kappa, p.gamma_up, p.gamma_down) if r > 0]
    t_relax = 200.0 / min(rates)
    try:
        ts = integrate(p, MeanFieldState(0.0, 0.0), t_relax, rel_tol=1e-10, abs_tol=1e-12)
    except StiffnessError as exc:
        raise ConvergenceError(f"mean-field steady state: {exc}") from exc
    x = _newton(p, ts.final.as_array(), tol)
    if x is None:
        raise ConvergenceError("no physical mean-field root found")
    return MeanFieldState(float(x[0]), float(x[1]))


def _closed_form(p: ModelParams) -> MeanFieldState:
    B = p.B_em + p.B_abs
    n = p.M * (p.B_em * p.gamma_up - p.B_abs * p.gamma_down) / (p.kappa * B)
    m = (p.M * p.B_abs + p.kappa) / B
    return MeanFieldState(n, m)


def steady_state_closed_form(params: ModelParams) -> MeanFieldState:
    """Leading-order large-``M`` steady state.

    ``n = M (B_em G_up - B_abs G_down) / (kappa (B_em + B_abs))`` and
    ``m_up = (M B_abs + kappa) / (B_abs + B_em)``.  The photon number carries an
    ``O(1)`` error and the inversion an ``O(1/M)`` one; below threshold the
    formula for ``n`` goes negative and is returned as is.
    """
    p = params
    if p.M < 1e3:
        warnings.warn("closed-form steady state assumes M >> 1", stacklevel=2)
    if p.kappa * (p.B_em + p.B_abs) == 0:
        raise ZeroDivisionError("kappa * (B_em + B_abs) is zero")
    return _closed_form(p)


def pump_for_target_n(params: ModelParams, n_target: float) -> float:
    """Pump rate ``gamma_up`` whose mean-field steady state has ``n = n_target``.

    At fixed ``n`` the photon equation is linear in ``m_up``, so the inversion
    is explicit: ``m_up = inversion_at(n)`` and then
    ``gamma_up = (kappa n + gamma_down m_up) / (M - m_up)`` from the sum of
    both equations.

    Raises
    ------
    ValidationError
        If ``n_target <= 0``.
    ConvergenceError
        If the target cannot be reached (required inversion ``m_up >= M``).
    """
    p = params
    if not n_target > 0:
        raise ValidationError("n_target", "must be positive")
    m = inversion_at(n_target, p)
    if not m < p.M:
        raise ConvergenceError(
            f"photon number {n_target!r} needs inversion m_up={m!r} >= M={p.M!r}")
    return (p.kappa * n_target + p.gamma_down * m) / (p.M - m)
