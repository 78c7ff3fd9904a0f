"""
Least-squares fits of the damped-oscillation model to g2(tau) data and the
oscillation-frequency sweep over the steady-state photon number.

The model ``g2 = 1 + exp(l1 tau) (c1 cos(l2 tau) + c2 sin(l2 tau))`` is linear
in ``(c1, c2)``, so those are eliminated exactly at every trial ``(l1, l2)``
(variable projection) and only the two exponents are optimized.  Because the
data are also normalized before fitting, multiplying ``g2 - 1`` by a
visibility factor leaves the fitted exponents unchanged to rounding.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from ._io import csv_text, json_text, write_text
from .core import ConvergenceError, ModelParams, ValidationError
from .correlations import G2Curve, coupling_matrix, eigen
from .meanfield import pump_for_target_n
from .moments import g2_zero, moment_steady_state

__all__ = [
    "FitResult",
    "SweepRow",
    "SweepTable",
    "fit_g2",
    "initial_guess",
    "sweep_omega2",
    "apply_visibility",
]


@dataclass(frozen=True)
class FitResult:
    """Fitted damped-oscillation parameters.

    ``covariance`` is the 4x4 covariance of ``(c1, c2, lambda_real,
    lambda_imag)``, absolute when the curve carries standard errors and
    scaled by the reduced chi-square otherwise.  ``regime`` is
    ``"underdamped"`` for the oscillating model; for an ``"overdamped"``
    fit ``c1, c2`` are the amplitudes of the slow and fast exponentials and
    ``lambda_real`` is the slow rate.  ``flags`` lists anything unusual,
    e.g. ``"degenerate"`` for a constant curve.
    """

    c1: float
    c2: float
    lambda_real: float
    lambda_imag: float
    covariance: np.ndarray
    residual_norm: float
    regime: str = "underdamped"
    fast_rate: float = math.nan
    flags: tuple[str, ...] = ()
    n_points: int = 0

    @property
    def tau_c(self) -> float:
        return 1.0 / abs(self.lambda_real) if self.lambda_real != 0 else math.inf

    @property
    def omega2(self) -> float:
        return self.lambda_imag

    def predict(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if self.regime == "overdamped":
            return 1.0 + self.c1 * np.exp(self.lambda_real * tau) + \
                self.c2 * np.exp(self.fast_rate * tau)
        return 1.0 + np.exp(self.lambda_real * tau) * (
            self.c1 * np.cos(self.lambda_imag * tau) + self.c2 * np.sin(self.lambda_imag * tau))

    def to_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "lambda_real": self.lambda_real,
            "lambda_imag": self.lambda_imag,
            "tau_c": self.tau_c,
            "omega2": self.omega2,
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_norm": self.residual_norm,
            "regime": self.regime,
            "fast_rate": self.fast_rate,
            "flags": list(self.flags),
            "n_points": self.n_points,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        return write_text(path, json_text(self.to_dict()))


# --------------------------------------------------------------------------
# model pieces
# --------------------------------------------------------------------------

def _osc_basis(theta, tau):
    l1, l2 = theta
    e = np.exp(l1 * tau)
    return np.column_stack((e * np.cos(l2 * tau), e * np.sin(l2 * tau)))


def _exp_basis(theta, tau):
    r1, r2 = theta
    return np.column_stack((np.exp(r1 * tau), np.exp(r2 * tau)))


def _project(basis, theta, tau, y, w):
    """Best linear coefficients and weighted residual for fixed exponents."""
    A = basis(theta, tau) * w[:, None]
    c, *_ = np.linalg.lstsq(A, y * w, rcond=None)
    return c, A @ c - y * w


def _full_jacobian_osc(c, theta, tau):
    c1, c2 = c
    l1, l2 = theta
    e = np.exp(l1 * tau)
    cs, sn = np.cos(l2 * tau), np.sin(l2 * tau)
    f = e * (c1 * cs + c2 * sn)
    return np.column_stack((e * cs, e * sn, tau * f, tau * e * (-c1 * sn + c2 * cs)))


def _full_jacobian_exp(c, theta, tau):
    a, b = c
    r1, r2 = theta
    e1, e2 = np.exp(r1 * tau), np.exp(r2 * tau)
    return np.column_stack((e1, e2, a * tau * e1, b * tau * e2))


def _dominant_frequency(tau, y) -> float:
    # resample onto a uniform grid, zero-pad, pick the strongest nonzero bin
    n = max(len(tau), 64)
    grid = np.linspace(tau[0], tau[-1], n)
    yy = np.interp(grid, tau, y)
    yy = yy - yy.mean()
    spec = np.abs(np.fft.rfft(yy, 8 * n))
    freqs = np.fft.rfftfreq(8 * n, grid[1] - grid[0])
    if spec.size < 3:
        return 0.0
    k = 1 + int(np.argmax(spec[1:]))
    return 2.0 * math.pi * freqs[k]


def _envelope_rate(tau, y) -> float:
    a = np.abs(y)
    peaks = [i for i in range(1, len(a) - 1) if a[i] >= a[i - 1] and a[i] >= a[i + 1] and a[i] > 0]
    if a[0] > 0:
        peaks = [0] + peaks
    if len(peaks) >= 2:
        slope = np.polyfit(tau[peaks], np.log(a[peaks]), 1)[0]
        if slope < 0:
            return float(slope)
    # fall back to the time at which |y| first drops below a/e
    below = np.flatnonzero(a < a[0] / math.e)
    t_e = tau[below[0]] - tau[0] if below.size and tau[below[0]] > tau[0] else (tau[-1] - tau[0]) / 3
    return -1.0 / max(t_e, 1e-12)


def initial_guess(curve: G2Curve) -> tuple[float, float, float, float]:
    """Spectral starting point ``(c1, c2, lambda_real, lambda_imag)``.

    ``lambda_imag`` is the dominant nonzero frequency of the discrete
    Fourier transform of ``g2 - 1``, ``lambda_real`` the slope of a
    log-linear fit to the envelope peaks of ``|g2 - 1|``, ``c1 = g2(0) - 1``
    and ``c2 = 0``.
    """
    y = curve.g2 - 1.0
    return (float(y[0]), 0.0, _envelope_rate(curve.tau, y),
            _dominant_frequency(curve.tau, y))


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

def _solve_exponents(basis, theta0, bounds, tau, y, w, x_scale):
    def resid(theta):
        return _project(basis, theta, tau, y, w)[1]

    sol = least_squares(resid, theta0, bounds=bounds, method="trf", x_scale=x_scale,
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    return sol


def fit_g2(curve: G2Curve, guess: tuple | None = None, *,
           weighted: bool = True) -> FitResult:
    """Fit the damped-oscillation model to ``curve``.

    Parameters
    ----------
    curve : G2Curve
        At least 8 points.  When ``curve.stderr`` is present and
        ``weighted`` is true, residuals are weighted by ``1 / stderr``.
    guess : (c1, c2, lambda_real, lambda_imag), optional
        Starting point; by default :func:`initial_guess` plus a few
        frequency multiples of it, keeping the lowest cost.

    Returns
    -------
    FitResult
        With ``regime="overdamped"`` when the oscillating fit collapses to
        zero frequency and a two-exponential model fits better, and with
        the ``"degenerate"`` flag for a constant curve.

    Raises
    ------
    ValidationError
        Too few points.
    ConvergenceError
        If no start converges.
    """
    tau = np.asarray(curve.tau, dtype=float)
    y_raw = np.asarray(curve.g2, dtype=float) - 1.0
    npts = tau.size
    if npts < 8:
        raise ValidationError("curve", f"need at least 8 points, got {npts}")
    if weighted and curve.stderr is not None:
        se = np.asarray(curve.stderr, dtype=float)
        if np.any(~(se > 0)):
            raise ValidationError("stderr", "must be positive")
        w = 1.0 / se
    else:
        w = np.ones(npts)

    # normalize the amplitude; undone on the linear coefficients at the end
    amp = float(np.sqrt(np.mean((w * y_raw) ** 2)))
    if not amp > 0 or np.ptp(y_raw) <= 1e-14 * max(1.0, np.max(np.abs(curve.g2))):
        return _degenerate(curve, w)
    y = y_raw / amp
    span = tau[-1] - tau[0]

    if guess is None:
        g = initial_guess(curve)
        starts = [(g[2], g[3] * f) for f in (1.0, 0.5, 2.0)]
    else:
        g = guess
        starts = [(g[2], g[3])]
    bounds = ([-np.inf, 0.0], [0.0, np.inf])
    best = None
    for l1, l2 in starts:
        l1 = min(l1, -1e-12)
        l2 = max(l2, 0.0)
        scale = np.array([max(abs(l1), 1.0 / span), max(l2, abs(l1), 1.0 / span)])
        try:
            sol = _solve_exponents(_osc_basis, np.array([l1, l2]), bounds, tau, y, w, scale)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise ConvergenceError("g2 fit failed from every starting point")

    theta = best.x
    flags = [] if best.success else ["not-converged"]
    regime = "underdamped"
    basis, jac = _osc_basis, _full_jacobian_osc
    if theta[1] * span < 2 * math.pi or theta[1] < abs(theta[0]):
        # less than one visible period: the two-exponential model may fit better
        over = _fit_overdamped(tau, y, w, theta[0], span)
        if over is not None and over.cost <= best.cost:
            best, theta = over, over.x
            regime = "overdamped"
            basis, jac = _exp_basis, _full_jacobian_exp

    c, r = _project(basis, theta, tau, y, w)
    c = c * amp
    resid_norm = float(np.linalg.norm(r) * amp)
    J = jac(c, theta, tau) * w[:, None]
    dof = max(npts - 4, 1)
    try:
        cov = np.linalg.pinv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)
    if not (weighted and curve.stderr is not None):
        cov = cov * resid_norm ** 2 / dof
    if regime == "overdamped":
        l_slow, l_fast = (theta[0], theta[1]) if theta[0] >= theta[1] else (theta[1], theta[0])
        c_slow, c_fast = (c[0], c[1]) if theta[0] >= theta[1] else (c[1], c[0])
        return FitResult(float(c_slow), float(c_fast), float(l_slow), 0.0, cov, resid_norm,
                         regime, float(l_fast), tuple(flags), npts)
    return FitResult(float(c[0]), float(c[1]), float(theta[0]), float(theta[1]), cov,
                     resid_norm, regime, math.nan, tuple(flags), npts)


def _fit_overdamped(tau, y, w, l1, span):
    r1 = min(l1, -1.0 / span)
    best = None
    for r2 in (4 * r1, 10 * r1):
        try:
            sol = least_squares(lambda th: _project(_exp_basis, th, tau, y, w)[1],
                                np.array([r1, r2]), bounds=([-np.inf] * 2, [0.0, 0.0]),
                                method="trf", x_scale=np.abs([r1, r2]),
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    return best


def _degenerate(curve: G2Curve, w) -> FitResult:
    # a constant curve: the best pure decay with unresolvable rate
    tau = curve.tau
    y = curve.g2 - 1.0
    c1 = float(np.sum(w * w * y) / np.sum(w * w))
    resid = float(np.linalg.norm(w * (y - c1)))
    return FitResult(c1, 0.0, 0.0, 0.0, np.full((4, 4), np.nan), resid, "overdamped",
                     math.nan, ("degenerate",), tau.size)


def apply_visibility(curve: G2Curve, V: float) -> G2Curve:
    """Scale the correlation amplitude: ``g2 -> 1 + V (g2 - 1)``, ``0 < V <= 1``."""
    if not 0 < V <= 1:
        raise ValidationError("V", f"visibility must lie in (0, 1], got {V!r}")
    se = None if curve.stderr is None else V * curve.stderr
    return G2Curve(curve.tau, 1.0 + V * (curve.g2 - 1.0), curve.ordering, se)


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    n_infty: float
    gamma_up: float
    omega2: float
    lambda_real: float
    g2_zero: float
    regime: str = "underdamped"


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = [r.n_infty for r in self.rows]
        if any(b <= a for a, b in zip(n, n[1:])):
            raise ValidationError("n_list", "n_infty must be strictly increasing")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path: str | Path | None = None) -> str:
        header = ("n_infty", "gamma_up_GHz", "omega2_GHz", "lambda_real_GHz", "g2_zero")
        rows = [(r.n_infty, r.gamma_up, r.omega2, r.lambda_real, r.g2_zero) for r in self.rows]
        return write_text(path, csv_text(header, rows))


def sweep_omega2(params: ModelParams, n_list, ordering: str = "normal") -> SweepTable:
    """Eigenvalues and g2(0) along a list of target photon numbers.

    For each target the pump is set by :func:`pump_for_target_n`, the
    closed moment equations are solved numerically and the coupling matrix
    is diagonalized.  ``n_infty`` records the requested photon number.
    Overdamped rows have ``omega2 = 0``.
    """
    n_list = [float(x) for x in n_list]
    if not n_list or any(x <= 0 for x in n_list):
        raise ValidationError("n_list", "targets must be positive")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValidationError("n_list", "targets must be strictly increasing")
    rows = []
    for n in n_list:
        gu = pump_for_target_n(params, n)
        p = params.replace(gamma_up=gu)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mom = moment_steady_state(p)
        ev = eigen(coupling_matrix(p, mom))
        rows.append(SweepRow(n, gu, ev.lambda_imag, ev.lambda_real,
                             g2_zero(mom, ordering), ev.regime))
    return SweepTable(tuple(rows))
