"""
Exact small-system reference: the incoherent master equation as a Markov
jump process on ``(n, m)`` lattice states.

Five transition channels, each with its rate::

    loss          (n, m) -> (n-1, m)      kappa n
    pump          (n, m) -> (n, m+1)      G_up (M - m)
    nonradiative  (n, m) -> (n, m-1)      G_down m
    absorption    (n, m) -> (n-1, m+1)    B_abs n (M - m)
    emission      (n, m) -> (n+1, m-1)    B_em (n + 1) m

The module provides the sparse generator, its stationary distribution,
regression-theorem g2(tau), a Gillespie simulator and trajectory estimators
of g2 with jackknife errors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order

from ._io import csv_text, write_text
from .core import ConvergenceError, ModelParams, ValidationError
from .correlations import G2Curve

try:  # the jump loop is ~50x faster compiled; results are identical either way
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "CHANNELS",
    "Generator",
    "DistributionGrid",
    "Trajectory",
    "TruncationReport",
    "build_generator",
    "oracle_steady_state",
    "solve_oracle",
    "oracle_g2",
    "gillespie_simulate",
    "simulate_ensemble",
    "trajectory_g2",
    "trajectory_mean_n",
    "verify_truncation_identity",
    "default_burn_in",
    "MAX_STATES",
    "DIRECT_SOLVE_LIMIT",
]

Ordering = Literal["normal", "direct"]

CHANNELS = ("loss", "pump", "nonradiative", "absorption", "emission")
MAX_STATES = 4_000_000
DIRECT_SOLVE_LIMIT = 200_000
TAIL_TOL = 1e-10


def _molecule_count(params: ModelParams) -> int:
    M = params.M
    if not (float(M).is_integer() and M >= 1):
        raise ValidationError("M", f"the exact oracle needs an integer M >= 1, got {M!r}")
    return int(M)


# --------------------------------------------------------------------------
# generator and stationary distribution
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Generator:
    """Transition-rate matrix on the truncated lattice.

    ``Q[j, i]`` is the rate from state ``i`` to state ``j`` (``i != j``) and
    the diagonal holds minus the total exit rate, so ``dp/dt = Q p`` and
    columns sum to zero.  State ``(n, m)`` has index ``n * (M + 1) + m``.
    Emission out of ``n = n_max`` is dropped, which keeps ``Q`` a proper
    generator on the box; the tail-mass check of the steady state bounds
    the resulting error.
    """

    Q: sps.csc_matrix
    params: ModelParams
    M: int
    n_max: int
    reachable: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_max + 1, self.M + 1)

    @property
    def size(self) -> int:
        return (self.n_max + 1) * (self.M + 1)

    def index(self, n: int, m: int) -> int:
        return n * (self.M + 1) + m


def build_generator(params: ModelParams, n_max: int, max_states: int = MAX_STATES) -> Generator:
    """Sparse generator for ``0 <= n <= n_max``, ``0 <= m <= M``.

    Raises
    ------
    ValidationError
        If ``M`` is not an integer, ``n_max < 1`` or the state count exceeds
        ``max_states``.
    """
    M = _molecule_count(params)
    if not (int(n_max) == n_max and n_max >= 1):
        raise ValidationError("n_max", f"must be an integer >= 1, got {n_max!r}")
    n_max = int(n_max)
    size = (n_max + 1) * (M + 1)
    if size > max_states:
        raise ValidationError("n_max", f"{size} states exceed the cap of {max_states}")

    p = params
    n, m = np.divmod(np.arange(size), M + 1)
    nf, mf = n.astype(float), m.astype(float)
    idx = np.arange(size)
    stride = M + 1
    moves = [
        (p.kappa * nf, n > 0, -stride),
        (p.gamma_up * (M - mf), m < M, 1),
        (p.gamma_down * mf, m > 0, -1),
        (p.B_abs * nf * (M - mf), (n > 0) & (m < M), -stride + 1),
        (p.B_em * (nf + 1) * mf, (n < n_max) & (m > 0), stride - 1),
    ]
    rows, cols, vals = [], [], []
    exit_rate = np.zeros(size)
    for rate, allowed, shift in moves:
        sel = allowed & (rate > 0)
        src = idx[sel]
        rows.append(src + shift)
        cols.append(src)
        vals.append(rate[sel])
        exit_rate[sel] += rate[sel]
    rows.append(idx)
    cols.append(idx)
    vals.append(-exit_rate)
    Q = sps.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    # states reachable from the empty state (0, 0); the transposed matrix
    # has edges source -> target
    order = breadth_first_order(Q.T.tocsr(), 0, directed=True, return_predecessors=False)
    reachable = np.zeros(size, dtype=bool)
    reachable[order] = True
    return Generator(Q, params, M, n_max, reachable)


@dataclass(frozen=True)
class DistributionGrid:
    """Probability ``p[n, m]`` on the truncated lattice."""

    n_max: int
    M: int
    p: np.ndarray
    residual: float = math.nan

    @property
    def tail(self) -> float:
        return float(self.p[-1].sum())

    def expect(self, f) -> float:
        n = np.arange(self.n_max + 1, dtype=float)[:, None]
        m = np.arange(self.M + 1, dtype=float)[None, :]
        return float(np.sum(self.p * f(n, m)))

    def moments(self) -> dict[str, float]:
        """Raw moments up to third order."""
        e = self.expect
        return {
            "n": e(lambda n, m: n),
            "m_up": e(lambda n, m: m),
            "n2": e(lambda n, m: n * n),
            "nm": e(lambda n, m: n * m),
            "m2": e(lambda n, m: m * m),
            "nnm": e(lambda n, m: n * n * m),
            "nmm": e(lambda n, m: n * m * m),
        }

    def moment_state(self):
        from .moments import MomentState

        d = self.moments()
        n = np.arange(self.n_max + 1, dtype=float)[:, None]
        m = np.arange(self.M + 1, dtype=float)[None, :]
        vn = self.expect(lambda a, b: (a - d["n"]) ** 2)
        c = float(np.sum(self.p * (n - d["n"]) * (m - d["m_up"])))
        vm = self.expect(lambda a, b: (b - d["m_up"]) ** 2)
        return MomentState.from_central(d["n"], d["m_up"], vn, c, vm)

    def to_csv(self, path: str | Path | None = None) -> str:
        n, m = np.nonzero(self.p >= 0)
        rows = zip(n, m, self.p[n, m])
        return write_text(path, csv_text(("n", "m", "p"), rows))


def oracle_steady_state(gen: Generator) -> DistributionGrid:
    """Stationary distribution on the states reachable from ``(0, 0)``.

    One balance equation is replaced by the normalization; the system is
    factorized directly below ``DIRECT_SOLVE_LIMIT`` states and solved by
    ILU-preconditioned GMRES above.  Rounding-level negative entries are
    clipped.

    Raises
    ------
    ConvergenceError
        If the residual ``max |Q p|`` exceeds ``1e-12`` times the largest
        exit rate, or the solution has significantly negative entries.
    """
    sub = np.flatnonzero(gen.reachable)
    Q = gen.Q[sub][:, sub].tocsc()
    k = len(sub)
    A = Q.tolil()
    A[0, :] = np.ones(k)
    A = A.tocsc()
    b = np.zeros(k)
    b[0] = 1.0
    if k < DIRECT_SOLVE_LIMIT:
        x = spla.spsolve(A, b)
    else:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        pre = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=pre, rtol=1e-14, atol=0.0, restart=200, maxiter=2000)
        if info != 0:
            raise ConvergenceError(f"GMRES did not converge (info={info})")
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("steady-state solve produced non-finite values")
    if x.min() < -1e-10:
        raise ConvergenceError(f"steady state has negative probability {x.min():.3g}")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    scale = max(float(np.max(np.abs(Q.diagonal()))), 1e-300)
    res = float(np.max(np.abs(Q @ x)))
    if res > 1e-12 * scale:
        raise ConvergenceError(f"steady-state residual {res:.3g} too large")
    full = np.zeros(gen.size)
    full[sub] = x
    return DistributionGrid(gen.n_max, gen.M, full.reshape(gen.shape), residual=res)


def _initial_n_max(params: ModelParams) -> int:
    from .moments import moment_steady_state

    mean = var = math.nan
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mom = moment_steady_state(params)
        mean, var = mom.n, mom.var_n
    except Exception:
        pass
    if not (math.isfinite(mean) and math.isfinite(var) and var >= 0):
        mean, var = 0.0, 0.0
    # the closure can underestimate tails below threshold; use at least a
    # Poisson-like spread
    var = max(var, mean, 1.0)
    return max(8, math.ceil(mean + 12.0 * math.sqrt(var)))


def solve_oracle(
    params: ModelParams,
    n_max: int | None = None,
    max_states: int = MAX_STATES,
) -> tuple[Generator, DistributionGrid]:
    """Build the generator and steady state with automatic truncation.

    ``n_max`` starts at ``ceil(mean + 12 sqrt(var))`` from the moment
    closure and is doubled until the mass on the last photon row is below
    ``1e-10``.
    """
    n_max = _initial_n_max(params) if n_max is None else int(n_max)
    while True:
        gen = build_generator(params, n_max, max_states)
        dist = oracle_steady_state(gen)
        if dist.tail < TAIL_TOL:
            return gen, dist
        n_max *= 2
        if (n_max + 1) * (gen.M + 1) > max_states:
            raise ConvergenceError(
                f"tail mass {dist.tail:.3g} still above {TAIL_TOL} at the state cap")


# --------------------------------------------------------------------------
# regression-theorem g2
# --------------------------------------------------------------------------

def _weighted_start(dist: DistributionGrid, ordering: Ordering) -> np.ndarray:
    n = np.arange(dist.n_max + 1, dtype=float)[:, None]
    w = dist.p * n
    if ordering == "direct":
        return w.ravel()
    if ordering == "normal":
        # one photon removed by the detection: mass n p(n, m) moves to (n-1, m)
        shifted = np.zeros_like(w)
        shifted[:-1] = w[1:]
        return shifted.ravel()
    raise ValidationError("ordering", f"expected 'normal' or 'direct', got {ordering!r}")


def oracle_g2(
    gen: Generator,
    p_inf: DistributionGrid,
    tau_grid,
    ordering: Ordering = "normal",
) -> G2Curve:
    """Exact g2(tau) by propagating the photon-weighted stationary state.

    ``g2(tau) = sum_n n [exp(Q tau) w](n) / <n>^2`` with ``w = n p`` for direct
    ordering, and ``w(n-1, m) = n p(n, m)`` for normal ordering.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0 or tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ValidationError("tau_grid", "must be increasing and non-negative")
    w = _weighted_start(p_inf, ordering)
    nvec = np.repeat(np.arange(gen.n_max + 1, dtype=float), gen.M + 1)
    mean = float(nvec @ p_inf.p.ravel())
    if not mean > 0:
        raise ValidationError("n", "g2 is undefined for <n> = 0")
    Q = gen.Q
    steps = np.diff(tau)
    try:
        if tau.size > 1 and np.allclose(steps, steps[0], rtol=1e-12, atol=0):
            v0 = spla.expm_multiply(Q, w, start=0.0, stop=tau[0], num=2, endpoint=True)[-1] \
                if tau[0] > 0 else w
            out = spla.expm_multiply(Q, v0, start=0.0, stop=tau[-1] - tau[0],
                                     num=tau.size, endpoint=True)
        else:
            out = np.empty((tau.size, w.size))
            v = w if tau[0] == 0 else spla.expm_multiply(Q * tau[0], w)
            out[0] = v
            for i, dt in enumerate(steps, start=1):
                v = spla.expm_multiply(Q * dt, v)
                out[i] = v
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise ConvergenceError(f"propagation failed: {exc}") from exc
    g2 = (out @ nvec) / (mean * mean)
    return G2Curve(tau, g2, ordering)


# --------------------------------------------------------------------------
# Gillespie simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Jump times and post-jump states of one sample path.

    ``n0, m0`` is the state at ``t = 0`` and ``t_end`` the end of the
    simulated window; the state is constant between jumps.
    """

    times: np.ndarray
    n: np.ndarray
    m: np.ndarray
    channel: np.ndarray
    n0: int
    m0: int
    t_end: float

    def __len__(self):
        return len(self.times)

    def state_at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """``(n, m)`` at times ``t`` (right-continuous)."""
        i = np.searchsorted(self.times, t, side="right") - 1
        nn = np.where(i >= 0, self.n[np.maximum(i, 0)], self.n0)
        mm = np.where(i >= 0, self.m[np.maximum(i, 0)], self.m0)
        return nn, mm

    def time_integral_n(self, t0: float, t1: float) -> float:
        """Integral of ``n(t)`` over ``[t0, t1]``."""
        knots = np.concatenate(([t0], self.times[(self.times > t0) & (self.times < t1)], [t1]))
        vals, _ = self.state_at(knots[:-1])
        return float(np.sum(vals * np.diff(knots)))

    def to_csv(self, path: str | Path | None = None) -> str:
        names = np.array(CHANNELS)
        rows = [(0.0, self.n0, self.m0, "initial")]
        rows += list(zip(self.times, self.n, self.m, names[self.channel]))
        return write_text(path, csv_text(("t_ns", "n", "m", "channel"), rows))


@njit(cache=True)
def _ssa_kernel(n, m, t, t_end, M, rates, u, out_t, out_n, out_m, out_c):
    kappa, g_up, g_down, b_abs, b_em = rates[0], rates[1], rates[2], rates[3], rates[4]
    k = 0
    j = 0
    cap = out_t.shape[0]
    nu = u.shape[0]
    while k < cap and j + 1 < nu:
        r0 = kappa * n
        r1 = g_up * (M - m)
        r2 = g_down * m
        r3 = b_abs * n * (M - m)
        r4 = b_em * (n + 1) * m
        total = r0 + r1 + r2 + r3 + r4
        if total <= 0.0:
            return k, j, n, m, t_end, True
        t_new = t - math.log(1.0 - u[j]) / total
        if t_new >= t_end:
            return k, j + 2, n, m, t_end, True
        x = u[j + 1] * total
        j += 2
        if x < r0:
            c = 0
            n -= 1
        elif x < r0 + r1:
            c = 1
            m += 1
        elif x < r0 + r1 + r2:
            c = 2
            m -= 1
        elif x < r0 + r1 + r2 + r3:
            c = 3
            n -= 1
            m += 1
        else:
            c = 4
            n += 1
            m -= 1
        t = t_new
        out_t[k] = t
        out_n[k] = n
        out_m[k] = m
        out_c[k] = c
        k += 1
    return k, j, n, m, t, False


def gillespie_simulate(
    params: ModelParams,
    seed,
    t_end: float,
    initial: tuple[int, int] = (0, 0),
    block: int = 1 << 16,
) -> Trajectory:
    """Exact stochastic sample path up to ``t_end`` (ns).

    Waiting times are exponential with the total rate of the five channels;
    the channel is chosen in proportion to its rate.  Random numbers come
    from ``numpy.random.default_rng(seed)`` (``seed`` may be an int or a
    sequence such as ``(master_seed, index)``), so identical arguments give
    an identical trajectory.
    """
    M = _molecule_count(params)
    if not t_end > 0:
        raise ValidationError("t_end", "must be positive")
    n0, m0 = int(initial[0]), int(initial[1])
    if n0 < 0 or not 0 <= m0 <= M:
        raise ValidationError("initial", f"state {initial!r} outside the lattice")
    rng = np.random.default_rng(seed)
    rates = np.array([params.kappa, params.gamma_up, params.gamma_down,
                      params.B_abs, params.B_em], dtype=float)
    n, m, t = n0, m0, 0.0
    chunks = []
    done = False
    while not done:
        u = rng.random(2 * block)
        bt = np.empty(block)
        bn = np.empty(block, dtype=np.int64)
        bm = np.empty(block, dtype=np.int64)
        bc = np.empty(block, dtype=np.int8)
        k, _, n, m, t, done = _ssa_kernel(n, m, t, float(t_end), M, rates, u, bt, bn, bm, bc)
        chunks.append((bt[:k], bn[:k], bm[:k], bc[:k]))
    cat = [np.concatenate([c[i] for c in chunks]) for i in range(4)]
    return Trajectory(cat[0], cat[1], cat[2], cat[3], n0, m0, float(t_end))


def simulate_ensemble(
    params: ModelParams,
    n_traj: int,
    t_end: float,
    master_seed: int = 0,
    initial: tuple[int, int] = (0, 0),
) -> Iterable[Trajectory]:
    """Lazily yield ``n_traj`` independent trajectories.

    Trajectory ``i`` uses the stream ``(master_seed, i)``, so any subset can
    be regenerated independently and results merge deterministically.
    """
    for i in range(n_traj):
        yield gillespie_simulate(params, (master_seed, i), t_end, initial)


def default_burn_in(params: ModelParams, lambda_real: float | None = None) -> float:
    """``10 / min(|lambda_real|, kappa)``; ``lambda_real`` defaults to the
    slow eigenvalue of the coupling matrix at the moment steady state."""
    if lambda_real is None:
        from .correlations import coupling_matrix, eigen
        from .moments import moment_steady_state

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mom = moment_steady_state(params)
        lambda_real = eigen(coupling_matrix(params, mom)).lambda_real
    rates = [r for r in (abs(lambda_real), params.kappa) if r > 0]
    if not rates:
        raise ValidationError("kappa", "no relaxation scale for the burn-in")
    return 10.0 / min(rates)


# --------------------------------------------------------------------------
# trajectory estimators
# --------------------------------------------------------------------------

def _jackknife(blocks: np.ndarray, estimator) -> tuple[np.ndarray, np.ndarray]:
    """Estimate and standard error from per-block sufficient statistics.

    ``blocks`` has one row per block; ``estimator`` maps a sum of rows to
    the estimate.
    """
    total = blocks.sum(axis=0)
    est = estimator(total)
    k = blocks.shape[0]
    if k < 2:
        return est, np.full_like(np.atleast_1d(est), np.nan, dtype=float)
    loo = np.array([estimator(total - b) for b in blocks])
    mean_loo = loo.mean(axis=0)
    se = np.sqrt((k - 1) / k * np.sum((loo - mean_loo) ** 2, axis=0))
    return est, se


def _direct_stats(tr: Trajectory, tau: np.ndarray, bin_width: float, t0: float):
    # point samples of n on a grid; products at lags tau
    t_last = tr.t_end - tau[-1]
    if t_last <= t0:
        raise ValidationError("trajectories", "shorter than max(tau) + burn-in")
    s = np.arange(t0, t_last, bin_width)
    a, _ = tr.state_at(s)
    a = a.astype(float)
    prod = np.empty(tau.size)
    lag = np.empty(tau.size)
    for k, dt in enumerate(tau):
        b, _ = tr.state_at(s + dt)
        prod[k] = np.dot(a, b)
        lag[k] = b.sum()
    return np.concatenate(([s.size, a.sum()], lag, prod))


def _normal_stats(tr: Trajectory, tau: np.ndarray, t0: float):
    # photon number seen after each loss (detection) event
    t_last = tr.t_end - tau[-1]
    if t_last <= t0:
        raise ValidationError("trajectories", "shorter than max(tau) + burn-in")
    sel = (tr.channel == 0) & (tr.times >= t0) & (tr.times < t_last)
    te = tr.times[sel]
    cond = np.empty(tau.size)
    for k, dt in enumerate(tau):
        if dt == 0:
            cond[k] = tr.n[sel].sum()
        else:
            b, _ = tr.state_at(te + dt)
            cond[k] = b.sum()
    integral = tr.time_integral_n(t0, tr.t_end)
    return np.concatenate(([te.size, integral, tr.t_end - t0], cond))


def trajectory_g2(
    trajectories: Trajectory | Sequence[Trajectory] | Iterable[Trajectory],
    tau_grid,
    bin_width: float = 0.05,
    ordering: Ordering = "normal",
    burn_in: float = 0.0,
    n_blocks: int = 32,
) -> G2Curve:
    """g2(tau) estimated from sample paths, with jackknife standard errors.

    Direct ordering uses the product of point samples of ``n`` taken every
    ``bin_width`` ns, ``<n(t) n(t + tau)> / (<n(t)> <n(t + tau)>)``.  Normal
    ordering conditions on loss events, which is what a photon detector
    records: the mean photon number a delay ``tau`` after a loss, divided by
    the time-averaged photon number.

    Trajectories are pooled into ``n_blocks`` jackknife blocks in order.  A
    single trajectory is split into time blocks instead.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0 or tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ValidationError("tau_grid", "must be increasing and non-negative")
    if not bin_width > 0:
        raise ValidationError("bin_width", "must be positive")
    if isinstance(trajectories, Trajectory):
        trajectories = _split_in_time(trajectories, n_blocks, burn_in, tau[-1])
        burn_in = 0.0

    rows = []
    for tr in trajectories:
        if ordering == "direct":
            rows.append(_direct_stats(tr, tau, bin_width, burn_in))
        elif ordering == "normal":
            rows.append(_normal_stats(tr, tau, burn_in))
        else:
            raise ValidationError("ordering", f"expected 'normal' or 'direct', got {ordering!r}")
    if not rows:
        raise ValidationError("trajectories", "no data")
    stats = np.array(rows)
    groups = np.array_split(stats, min(n_blocks, len(stats)))
    blocks = np.array([g.sum(axis=0) for g in groups])
    nt = tau.size

    if ordering == "direct":
        def est(s):
            count, first = s[0], s[1]
            lag, prod = s[2:2 + nt], s[2 + nt:]
            return (prod / count) / ((first / count) * (lag / count))
    else:
        def est(s):
            events, integral, time = s[0], s[1], s[2]
            cond = s[3:]
            if events == 0:
                return np.full(nt, np.nan)
            return (cond / events) / (integral / time)

    if stats[:, 0].sum() == 0:
        raise ValidationError("trajectories", "no samples after burn-in")
    g2, se = _jackknife(blocks, est)
    return G2Curve(tau, g2, ordering, se)


def _split_in_time(tr: Trajectory, k: int, burn_in: float, tau_max: float) -> list[Trajectory]:
    span = tr.t_end - burn_in
    if span <= 0:
        raise ValidationError("trajectories", "shorter than the burn-in")
    edges = burn_in + span * np.arange(k + 1) / k
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        # each piece keeps the path up to b + tau_max so lags stay inside it
        hi = min(b + tau_max, tr.t_end)
        if hi - a <= tau_max:
            continue
        sel = (tr.times > a) & (tr.times <= hi)
        n0, m0 = tr.state_at(np.array([a]))
        piece = Trajectory(tr.times[sel] - a, tr.n[sel], tr.m[sel], tr.channel[sel],
                           int(n0[0]), int(m0[0]), hi - a)
        out.append(piece)
    return out


def trajectory_mean_n(
    trajectories: Trajectory | Iterable[Trajectory], burn_in: float = 0.0, n_blocks: int = 32
) -> tuple[float, float]:
    """Time-averaged photon number and its jackknife standard error.

    A single trajectory is split into ``n_blocks`` time blocks.
    """
    if isinstance(trajectories, Trajectory):
        tr = trajectories
        edges = burn_in + (tr.t_end - burn_in) * np.arange(n_blocks + 1) / n_blocks
        rows = [(tr.time_integral_n(a, b), b - a) for a, b in zip(edges[:-1], edges[1:])]
    else:
        rows = [(tr.time_integral_n(burn_in, tr.t_end), tr.t_end - burn_in)
                for tr in trajectories]
    stats = np.array(rows)
    groups = np.array_split(stats, min(n_blocks, len(stats)))
    blocks = np.array([g.sum(axis=0) for g in groups])
    est, se = _jackknife(blocks, lambda s: np.array([s[0] / s[1]]))
    return float(est[0]), float(se[0])


# --------------------------------------------------------------------------
# decomposition identities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationReport:
    """Residuals of the molecular decomposition identities and the closure.

    ``pair_excited`` compares ``sum p m (m-1)`` (two distinct molecules both
    excited, times ``M (M-1)``) with ``<m^2> - <m>``; ``pair_mixed`` compares
    ``sum p m (M-m)`` with ``M <m> - <m^2>``.  Both are exact identities for
    permutation-symmetric states and vanish to rounding.  ``closure_nmm`` and
    ``closure_nnm`` are the relative errors of the vanishing-third-cumulant
    expressions for ``<n m^2>`` and ``<n^2 m>``.
    """

    pair_excited: float
    pair_mixed: float
    closure_nmm: float
    closure_nnm: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_truncation_identity(p: DistributionGrid) -> TruncationReport:
    d = p.moments()
    M = p.M
    lhs1 = p.expect(lambda n, m: m * (m - 1))
    lhs2 = p.expect(lambda n, m: m * (M - m))
    rhs1 = d["m2"] - d["m_up"]
    rhs2 = M * d["m_up"] - d["m2"]
    scale = max(M * d["m_up"], 1e-300)
    n, m = d["n"], d["m_up"]
    nmm_cl = 2 * m * d["nm"] + n * d["m2"] - 2 * n * m * m
    nnm_cl = 2 * n * d["nm"] + m * d["n2"] - 2 * n * n * m
    rel = lambda a, b: abs(a - b) / abs(a) if a != 0 else abs(b)  # noqa: E731
    return TruncationReport(
        pair_excited=abs(lhs1 - rhs1) / scale,
        pair_mixed=abs(lhs2 - rhs2) / scale,
        closure_nmm=rel(d["nmm"], nmm_cl),
        closure_nnm=rel(d["nnm"], nnm_cl),
    )
