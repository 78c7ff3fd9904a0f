"""
Linearized dynamics of the photon-number correlation deviations and g2(tau).

The deviation vector ``g = (dg_n, dg_nm)`` obeys ``dg/dtau = A g`` with::

    A = [[-(kappa + G_M),                 G_n ],
         [        G_M,    -(G_up + G_down) - G_n]]

    G_M = B_abs (M - m) - B_em m,     G_n = B_abs n + B_em (n + 1)

evaluated at the steady state ``(n, m)``.  The photon correlation is
``g2(tau) = 1 + dg_n(tau) / n^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from ._io import csv_text, write_text
from .core import ModelParams, StiffnessError, ValidationError
from .meanfield import MeanFieldState
from .moments import MomentState

__all__ = [
    "CouplingMatrix",
    "EigenResult",
    "G2Curve",
    "coupling_matrix",
    "eigen",
    "eigen_approx",
    "initial_deviation",
    "g2_curve",
    "model_function",
    "model_coefficients",
    "CRITICAL_BAND",
]

Ordering = Literal["normal", "direct"]
Regime = Literal["underdamped", "critical", "overdamped"]

CRITICAL_BAND = 1e-12


@dataclass(frozen=True)
class CouplingMatrix:
    a11: float
    a12: float
    a21: float
    a22: float
    gamma_M: float = math.nan
    gamma_n: float = math.nan

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21


@dataclass(frozen=True)
class EigenResult:
    """Spectral data of the 2x2 system.

    ``lambda_real`` is the real part of the complex pair when underdamped and
    the slower (larger) of the two real eigenvalues otherwise; ``lambda_imag``
    is zero unless underdamped.  ``eigenvalues`` holds both roots.
    """

    gamma: float
    omega0_sq: float
    lambda_real: float
    lambda_imag: float
    regime: Regime
    eigenvalues: tuple[complex, complex]

    @property
    def tau_c(self) -> float:
        return 1.0 / abs(self.lambda_real) if self.lambda_real else math.inf


@dataclass(frozen=True)
class G2Curve:
    tau: np.ndarray
    g2: np.ndarray
    ordering: Ordering = "normal"
    stderr: np.ndarray | None = None

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        if tau.shape != g2.shape or tau.ndim != 1:
            raise ValidationError("tau", "tau and g2 must be 1-D arrays of equal length")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "g2", g2)
        if self.stderr is not None:
            se = np.asarray(self.stderr, dtype=float)
            if se.shape != g2.shape:
                raise ValidationError("stderr", "must match g2 in length")
            object.__setattr__(self, "stderr", se)

    def __len__(self):
        return len(self.tau)

    def to_csv(self, path: str | Path | None = None) -> str:
        if self.stderr is None:
            text = csv_text(("tau_ns", "g2"), zip(self.tau, self.g2))
        else:
            text = csv_text(("tau_ns", "g2", "stderr"), zip(self.tau, self.g2, self.stderr))
        return write_text(path, text)


def coupling_matrix(params: ModelParams, ss: MeanFieldState | MomentState) -> CouplingMatrix:
    """Assemble the coupling matrix at the steady state ``ss``.

    ``G_M`` is a difference of two terms of order ``M B_abs``; it is summed
    with :func:`math.fsum` so that no digits are lost before the cancellation.
    """
    p = params
    n, m = ss.n, ss.m_up
    GM = math.fsum((p.B_abs * p.M, -p.B_abs * m, -p.B_em * m))
    Gn = p.B_abs * n + p.B_em * (n + 1.0)
    return CouplingMatrix(
        a11=-p.kappa - GM,
        a12=Gn,
        a21=GM,
        a22=-(p.gamma_up + p.gamma_down) - Gn,
        gamma_M=GM,
        gamma_n=Gn,
    )


def _from_gamma_omega(gamma: float, omega0_sq: float) -> EigenResult:
    disc = gamma * gamma - omega0_sq
    if abs(disc) <= CRITICAL_BAND * gamma * gamma:
        lam = complex(-gamma)
        return EigenResult(gamma, omega0_sq, -gamma, 0.0, "critical", (lam, lam))
    if disc < 0:
        w = math.sqrt(-disc)
        return EigenResult(gamma, omega0_sq, -gamma, w, "underdamped",
                           (complex(-gamma, w), complex(-gamma, -w)))
    s = math.sqrt(disc)
    # the large-magnitude root is computed directly, the small one from the
    # product of roots to avoid cancellation in -gamma + s
    big = -gamma - s if gamma >= 0 else -gamma + s
    small = omega0_sq / big if big != 0 else 0.0
    slow, fast = (small, big) if small >= big else (big, small)
    return EigenResult(gamma, omega0_sq, slow, 0.0, "overdamped", (complex(slow), complex(fast)))


def eigen(matrix: CouplingMatrix) -> EigenResult:
    """Eigenvalues ``lambda = -gamma +- sqrt(gamma^2 - omega0^2)``.

    ``gamma = -trace/2`` and ``omega0^2 = det``.  The regime is ``critical``
    when ``|gamma^2 - omega0^2| <= 1e-12 gamma^2``.
    """
    return _from_gamma_omega(-0.5 * matrix.trace, matrix.det)


def eigen_approx(params: ModelParams) -> EigenResult:
    """Leading-order eigenvalues for ``gamma_down = 0`` and large ``M``.

    ``gamma = M G_up B_em / (2 kappa)`` and ``omega0^2 = M G_up B_em``.  Only
    meant for illustration; :func:`eigen` on the full matrix is the reference.
    """
    p = params
    if p.gamma_down != 0:
        warnings.warn("eigen_approx assumes gamma_down = 0", stacklevel=2)
    if not p.kappa > 0:
        raise ValidationError("kappa", "eigen_approx needs kappa > 0")
    w2 = p.M * p.gamma_up * p.B_em
    return _from_gamma_omega(w2 / (2.0 * p.kappa), w2)


def initial_deviation(moments: MomentState, ordering: Ordering = "normal") -> np.ndarray:
    """Deviation vector at ``tau = 0``.

    Direct ordering: ``(var n, cov(n, m))``.  Normal ordering subtracts ``<n>``
    from the first component.
    """
    if ordering == "direct":
        return np.array([moments.var_n, moments.cov])
    if ordering == "normal":
        return np.array([moments.var_n - moments.n, moments.cov])
    raise ValidationError("ordering", f"expected 'normal' or 'direct', got {ordering!r}")


def _closed_form(A: np.ndarray, g0: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """First component of ``expm(A tau) @ g0`` for a real 2x2 ``A``."""
    gamma = -0.5 * (A[0, 0] + A[1, 1])
    w2 = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    x0 = g0[0]
    v = (A @ g0)[0] + gamma * x0  # derivative at 0 plus gamma * x0
    disc = gamma * gamma - w2
    if abs(disc) <= CRITICAL_BAND * gamma * gamma:
        return (x0 + v * tau) * np.exp(-gamma * tau)
    if disc < 0:
        w = math.sqrt(-disc)
        return np.exp(-gamma * tau) * (x0 * np.cos(w * tau) + v * np.sin(w * tau) / w)
    s = math.sqrt(disc)
    # cosh/sinh written as exponentials so large s*tau cannot overflow
    e_plus = np.exp((-gamma + s) * tau)
    e_minus = np.exp((-gamma - s) * tau)
    return 0.5 * x0 * (e_plus + e_minus) + 0.5 * v * (e_plus - e_minus) / s


def g2_curve(
    params: ModelParams,
    moments: MomentState,
    tau_grid,
    ordering: Ordering = "normal",
    method: Literal["closed_form", "ode"] = "closed_form",
    rtol: float = 1e-13,
) -> G2Curve:
    """g2(tau) from the steady-state moments and the coupling matrix.

    Parameters
    ----------
    moments : MomentState
        Steady state; supplies both the matrix (through ``n``, ``m_up``) and
        the initial deviation vector.
    tau_grid : array_like
        Increasing delays in ns starting at 0.
    method : {"closed_form", "ode"}
        Analytic solution of the 2x2 linear system, or numerical integration
        with an 8th-order Runge-Kutta scheme at relative tolerance ``rtol``.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0 or tau[0] != 0 or np.any(np.diff(tau) <= 0):
        raise ValidationError("tau_grid", "must be increasing and start at 0")
    n = moments.n
    if not n > 0:
        raise ValidationError("n", "g2 is undefined for <n> = 0")
    A = coupling_matrix(params, moments).as_array()
    g0 = initial_deviation(moments, ordering)
    if method == "closed_form":
        dg = _closed_form(A, g0, tau)
    elif method == "ode":
        dg = _integrate_linear(A, g0, tau, rtol)
    else:
        raise ValidationError("method", f"unknown method {method!r}")
    return G2Curve(tau, 1.0 + dg / (n * n), ordering)


def _integrate_linear(A, g0, tau, rtol):
    if tau.size == 1:
        return np.array([g0[0]])
    atol = rtol * max(np.max(np.abs(g0)), 1e-300)
    sol = solve_ivp(lambda _t, y: A @ y, (0.0, tau[-1]), g0, method="DOP853",
                    t_eval=tau, rtol=rtol, atol=atol)
    if not sol.success:
        raise StiffnessError(sol.message)
    return sol.y[0]


def model_function(c1, c2, lambda_real, lambda_imag, tau):
    """``1 + exp(lambda_real tau) (c1 cos(lambda_imag tau) + c2 sin(lambda_imag tau))``."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 + np.exp(lambda_real * tau) * (
        c1 * np.cos(lambda_imag * tau) + c2 * np.sin(lambda_imag * tau))


def model_coefficients(
    params: ModelParams, moments: MomentState, ordering: Ordering = "normal"
) -> tuple[float, float, float, float]:
    """``(c1, c2, lambda_real, lambda_imag)`` of the damped-oscillation form.

    Valid in the underdamped regime, where :func:`model_function` with these
    values reproduces :func:`g2_curve` exactly.
    """
    A = coupling_matrix(params, moments).as_array()
    ev = eigen(coupling_matrix(params, moments))
    if ev.regime != "underdamped":
        raise ValidationError("regime", f"system is {ev.regime}, no oscillating solution")
    g0 = initial_deviation(moments, ordering)
    n2 = moments.n ** 2
    c1 = g0[0] / n2
    c2 = ((A @ g0)[0] / n2 - ev.lambda_real * c1) / ev.lambda_imag
    return c1, c2, ev.lambda_real, ev.lambda_imag
