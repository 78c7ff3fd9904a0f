"""
First and second moments of the photon/molecule birth-death process.

The five tracked moments are ``<n>``, ``<m>``, ``<n^2>``, ``<n m>`` and
``<m^2>`` where ``m`` counts excited molecules.  Their equations of motion
are exact except for the two third moments ``<n^2 m>`` and ``<n m^2>``, which
are closed by setting the third cumulant to zero::

    <n^2 m> = 2 <n><n m> + <m><n^2> - 2 <n>^2 <m>
    <n m^2> = 2 <m><n m> + <n><m^2> - 2 <n><m>^2

The first-moment equations keep ``<n m>`` rather than factorizing it, so the
steady state of all five moments is solved as one coupled system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from ._io import json_text, write_text
from .core import ConvergenceError, ModelParams, ValidationError
from .meanfield import MeanFieldState, mean_field_rhs, steady_state

__all__ = [
    "MomentState",
    "moment_rhs",
    "central_rhs",
    "central_jacobian",
    "moment_steady_state",
    "g2_zero",
    "closure_third_moments",
    "CLOSURE_MIN_N",
]

Ordering = Literal["normal", "direct"]

# Below this photon number the Gaussian closure is flagged as unreliable.
CLOSURE_MIN_N = 5.0


@dataclass(frozen=True)
class MomentState:
    """Raw first and second moments.

    ``residual`` (relative, see :func:`moment_steady_state`) and
    ``closure_unreliable`` are set by the steady-state solver only.
    """

    n: float
    m_up: float
    n2: float
    nm: float
    m2: float
    residual: float | None = None
    closure_unreliable: bool = False
    # (var_n, cov, var_m) kept exactly when known; with M ~ 1e9 the raw
    # second moments alone lose most digits of the molecule variance
    _central: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def var_n(self) -> float:
        if self._central is not None:
            return self._central[0]
        return self.n2 - self.n * self.n

    @property
    def cov(self) -> float:
        if self._central is not None:
            return self._central[1]
        return self.nm - self.n * self.m_up

    @property
    def var_m(self) -> float:
        if self._central is not None:
            return self._central[2]
        return self.m2 - self.m_up * self.m_up

    @property
    def mean_field(self) -> MeanFieldState:
        return MeanFieldState(self.n, self.m_up)

    @classmethod
    def from_central(cls, n, m, var_n, cov, var_m, **extra) -> "MomentState":
        return cls(n, m, var_n + n * n, cov + n * m, var_m + m * m,
                   _central=(float(var_n), float(cov), float(var_m)), **extra)

    def central(self) -> np.ndarray:
        return np.array([self.n, self.m_up, self.var_n, self.cov, self.var_m])

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.m_up, self.n2, self.nm, self.m2])

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "_central"}

    def to_json(self, path: str | Path | None = None) -> str:
        return write_text(path, json_text(self.to_dict()))


def closure_third_moments(state: MomentState) -> tuple[float, float]:
    """Third moments ``(<n^2 m>, <n m^2>)`` with vanishing third cumulant."""
    n, m = state.n, state.m_up
    nnm = 2 * n * state.nm + m * state.n2 - 2 * n * n * m
    nmm = 2 * m * state.nm + n * state.m2 - 2 * n * m * m
    return nnm, nmm


def moment_rhs(
    state: MomentState,
    params: ModelParams,
    third_moments: tuple[float, float] | None = None,
    factorize_first: bool = False,
) -> np.ndarray:
    """Time derivatives of ``(n, m_up, n2, nm, m2)``.

    Parameters
    ----------
    third_moments : (float, float), optional
        Exact ``(<n^2 m>, <n m^2>)``.  When given, the right-hand side is the
        exact one for the underlying jump process; by default the cumulant
        closure is used.
    factorize_first : bool
        Replace ``<n m>`` by ``<n><m>`` in the first-moment equations, which
        reduces them to the mean-field equations.

    Returns
    -------
    ndarray, shape (5,)
    """
    p = params
    M, k, gu, gd, Ba, Be = p.M, p.kappa, p.gamma_up, p.gamma_down, p.B_abs, p.B_em
    n, m, n2, nm, m2 = state.n, state.m_up, state.n2, state.nm, state.m2
    nnm, nmm = closure_third_moments(state) if third_moments is None else third_moments

    nm1 = n * m if factorize_first else nm
    dn = -k * n - Ba * (M * n - nm1) + Be * (nm1 + m)
    dm = gu * (M - m) - gd * m + Ba * (M * n - nm1) - Be * (nm1 + m)
    dn2 = (k * (n - 2 * n2)
           + Ba * ((M * n - nm) - 2 * M * n2 + 2 * nnm)
           + Be * (2 * nnm + 3 * nm + m))
    dnm = (-k * nm + gu * (M * n - nm) - gd * nm
           + Ba * (M * n2 - M * nm - M * n - nnm + nmm + nm)
           + Be * (nmm - nnm - 2 * nm + m2 - m))
    dm2 = (gu * (2 * M * m + M - m - 2 * m2) + gd * (m - 2 * m2)
           + Ba * ((2 * M - 1) * nm + M * n - 2 * nmm)
           - Be * (2 * nmm + 2 * m2 - nm - m))
    return np.array([dn, dm, dn2, dnm, dm2])


def _rates(n, m, p: ModelParams):
    # effective couplings of the linearized fluctuations
    GM = math.fsum((p.B_abs * p.M, -p.B_abs * m, -p.B_em * m))
    Gn = p.B_abs * n + p.B_em * (n + 1.0)
    return GM, Gn


def central_rhs(x, params: ModelParams) -> np.ndarray:
    """Closed moment equations in central variables.

    ``x = (n, m, var_n, cov, var_m)``.  Algebraically identical to
    :func:`moment_rhs` with the closure, but free of the cancellation between
    ``<n^2>`` and ``<n>^2`` that ruins the raw form when ``M`` is large.
    """
    p = params
    n, m, vn, c, vm = x
    GM, Gn = _rates(n, m, p)
    B = p.B_abs + p.B_em
    G = p.gamma_up + p.gamma_down
    Jnn, Jmm = -(p.kappa + GM), -G - Gn
    fn = -p.kappa * n - p.B_abs * (p.M - m) * n + p.B_em * (n + 1.0) * m
    fm = p.gamma_up * (p.M - m) - p.gamma_down * m + p.B_abs * (p.M - m) * n - p.B_em * (n + 1.0) * m
    W = p.B_abs * (p.M - m) * n + p.B_em * (n + 1.0) * m + (p.B_em - p.B_abs) * c
    return np.array([
        fn + B * c,
        fm - B * c,
        2 * Jnn * vn + 2 * Gn * c + p.kappa * n + W,
        (Jnn + Jmm) * c + GM * vn + Gn * vm - W,
        2 * Jmm * vm + 2 * GM * c + p.gamma_up * (p.M - m) + p.gamma_down * m + W,
    ])


def central_jacobian(x, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of :func:`central_rhs`."""
    p = params
    n, m, vn, c, vm = x
    GM, Gn = _rates(n, m, p)
    B = p.B_abs + p.B_em
    dB = p.B_em - p.B_abs
    G = p.gamma_up + p.gamma_down
    Jnn, Jmm = -(p.kappa + GM), -G - Gn
    Wn = p.B_abs * (p.M - m) + p.B_em * m
    Wm = -p.B_abs * n + p.B_em * (n + 1.0)
    return np.array([
        [Jnn, Gn, 0.0, B, 0.0],
        [GM, Jmm, 0.0, -B, 0.0],
        [2 * B * c + p.kappa + Wn, 2 * B * vn + Wm, 2 * Jnn, 2 * Gn + dB, 0.0],
        [-B * c + B * vm - Wn, B * c - B * vn - Wm, GM, Jnn + Jmm - dB, Gn],
        [-2 * B * vm + Wn, -2 * B * c - p.gamma_up + p.gamma_down + Wm, 0.0, 2 * GM + dB, 2 * Jmm],
    ])


def _lyapunov_covariance(n, m, p: ModelParams) -> np.ndarray:
    """Covariance of the linear-noise approximation around ``(n, m)``."""
    GM, Gn = _rates(n, m, p)
    J = np.array([[-(p.kappa + GM), Gn], [GM, -(p.gamma_up + p.gamma_down) - Gn]])
    W = p.B_abs * (p.M - m) * n + p.B_em * (n + 1.0) * m
    D = np.array([
        [p.kappa * n + W, -W],
        [-W, p.gamma_up * (p.M - m) + p.gamma_down * m + W],
    ])
    return solve_continuous_lyapunov(J, -D)


def _rate_scale(x, p: ModelParams) -> np.ndarray:
    # natural magnitude of each equation, used to make residuals relative
    n, m = abs(x[0]), abs(x[1])
    flow = p.kappa * n + p.gamma_up * (p.M - m) + p.gamma_down * m + p.B_em * (n + 1) * m
    flow = max(flow, 1e-300)
    sn, sm = max(math.sqrt(abs(x[2])), 1.0), max(math.sqrt(abs(x[4])), 1.0)
    return np.array([flow, flow, flow * sn * sn, flow * sn * sm, flow * sm * sm])


def moment_steady_state(
    params: ModelParams,
    factorize_first: bool = False,
    rtol: float = 1e-12,
    max_iter: int = 200,
) -> MomentState:
    """Steady state of the closed five-moment system.

    The mean-field root and the linear-noise covariance around it give the
    starting point; damped Newton with the analytic Jacobian then solves all
    five equations together.  With ``factorize_first=True`` the means are
    held at the mean-field root and only the second moments are solved for.

    The returned ``residual`` is the largest equation residual divided by the
    total jump rate scale of that equation (see ``_rate_scale``); it is below
    ``1e-8`` on success.  Results with ``n < CLOSURE_MIN_N`` carry
    ``closure_unreliable=True`` and emit a warning.

    Raises
    ------
    ValidationError
        If ``gamma_up == kappa == 0`` (no unique steady state).
    ConvergenceError
        If Newton does not reach the residual bound.
    """
    p = params
    if p.gamma_up == 0 and p.kappa == 0:
        raise ValidationError("gamma_up", "gamma_up = kappa = 0 has no unique steady state")
    mf = steady_state(p)
    if mf.n == 0.0 and mf.m_up == 0.0:
        state = MomentState(0.0, 0.0, 0.0, 0.0, 0.0, residual=0.0, closure_unreliable=True)
        warnings.warn("no photons at steady state; closure unreliable", stacklevel=2)
        return state
    try:
        S = _lyapunov_covariance(mf.n, mf.m_up, p)
        x = np.array([mf.n, mf.m_up, S[0, 0], S[0, 1], S[1, 1]])
        if not np.all(np.isfinite(x)):
            raise ValueError
    except (ValueError, np.linalg.LinAlgError):
        x = np.array([mf.n, mf.m_up, mf.n, 0.0, 0.0])

    if factorize_first:
        x = _newton_fixed_means(x, p, rtol, max_iter)
    else:
        x = _newton(x, p, rtol, max_iter)
    F = central_rhs(x, p)
    if factorize_first:
        F[:2] = mean_field_rhs(MeanFieldState(x[0], x[1]), p)
    res = float(np.max(np.abs(F) / _rate_scale(x, p)))
    if not res < 1e-8:
        raise ConvergenceError(f"moment steady state did not converge (residual {res:.3g})")
    unreliable = bool(x[0] < CLOSURE_MIN_N)
    if unreliable:
        warnings.warn(
            f"<n> = {x[0]:.3g} is below threshold; moment closure unreliable", stacklevel=2)
    return MomentState.from_central(*map(float, x), residual=res, closure_unreliable=unreliable)


def _newton(x, p: ModelParams, rtol, max_iter):
    x = np.asarray(x, dtype=float).copy()
    for _ in range(max_iter):
        scale = _rate_scale(x, p)
        F = central_rhs(x, p) / scale
        J = central_jacobian(x, p) / scale[:, None]
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular moment Jacobian") from exc
        f0 = np.linalg.norm(F)
        t = 1.0
        while t > 1e-10:
            trial = x + t * step
            if trial[0] >= 0 and 0 <= trial[1] <= p.M and trial[2] >= 0 and trial[4] >= 0:
                if np.linalg.norm(central_rhs(trial, p) / scale) <= f0:
                    break
            t *= 0.5
        else:
            break
        x = trial
        if np.all(np.abs(t * step) <= rtol * np.maximum(np.abs(x), 1.0)):
            break
    return x


def _newton_fixed_means(x, p: ModelParams, rtol, max_iter):
    # the second-moment rows are linear in (var_n, cov, var_m) at fixed means
    x = np.asarray(x, dtype=float).copy()
    scale = _rate_scale(x, p)[2:]
    J = central_jacobian(x, p)[2:, 2:] / scale[:, None]
    F = central_rhs(x, p)[2:] / scale
    x[2:] += np.linalg.solve(J, -F)
    return x


def g2_zero(moments: MomentState, ordering: Ordering = "normal") -> float:
    """Equal-time second-order correlation.

    ``direct``: ``<n^2>/<n>^2``; ``normal``: ``(<n^2> - <n>)/<n>^2``.
    Computed from the variance to avoid cancellation.
    """
    n = moments.n
    if not n > 0:
        raise ValidationError("n", "g2 is undefined for <n> = 0")
    if ordering == "direct":
        return 1.0 + moments.var_n / (n * n)
    if ordering == "normal":
        return 1.0 + (moments.var_n - n) / (n * n)
    raise ValidationError("ordering", f"expected 'normal' or 'direct', got {ordering!r}")
