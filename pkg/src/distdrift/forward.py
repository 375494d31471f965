"""Monte Carlo simulation of the diffusion through its scale transform.

``Y = h(X)`` is driftless, so the scheme runs Euler-Maruyama on ``Y`` and
maps back with ``h^{-1}``. Only per-path summaries are kept in memory;
full trajectories are regenerated on demand from the counter-based RNG.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .errors import InconsistentEnsemble, OutOfRange, RangeExceeded, Unsupported
from .rng import normal_block

OK, CENSORED, RANGE = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_paths: int
    seed: int = 0
    t_max: float = 10.0
    interval: tuple = (0.0, 1.0)
    substeps: int = 1

    def __post_init__(self):
        if not 0 < self.dt <= 1e-2:
            raise ValueError("dt must lie in (0, 1e-2]")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.max_steps * self.substeps >= 2 ** 62:
            raise ValueError("t_max / dt does not fit in a 64-bit step count")
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError("interval must satisfy lo < hi")

    @property
    def max_steps(self):
        return int(math.ceil(self.t_max / self.dt - 1e-9))

    def coarsened(self, factor=2):
        """Same Brownian increments on a step ``factor`` times larger."""
        return SimConfig(self.dt * factor, self.n_paths, self.seed, self.t_max, self.interval,
                         self.substeps * factor)


# ---------------------------------------------------------------------------
# kernel

@njit(cache=True, inline="always")
def _lin(x, x_min, step, vals):
    n = vals.shape[0]
    s = (x - x_min) / step
    j = int(math.floor(s))
    if j < 0:
        return vals[0]
    if j >= n - 1:
        return vals[n - 1]
    t = s - j
    return vals[j] * (1.0 - t) + vals[j + 1] * t


@njit(cache=True, inline="always")
def _herm(j, t, step, h, hp):
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * h[j] + (t3 - 2 * t2 + t) * step * hp[j]
            + (-2 * t3 + 3 * t2) * h[j + 1] + (t3 - t2) * step * hp[j + 1])


@njit(cache=True, inline="always")
def _herm_d(j, t, step, h, hp):
    t2 = t * t
    return ((6 * t2 - 6 * t) * h[j] / step + (3 * t2 - 4 * t + 1) * hp[j]
            + (-6 * t2 + 6 * t) * h[j + 1] / step + (3 * t2 - 2 * t) * hp[j + 1])


@njit(cache=True)
def _h_at(x, x_min, step, h, hp):
    n = h.shape[0]
    j = min(max(int(math.floor((x - x_min) / step)), 0), n - 2)
    return _herm(j, (x - x_min) / step - j, step, h, hp)


@njit(cache=True)
def _invert(y, j, x_min, step, h, hp):
    """``(x, cell)`` with ``h(x) = y``; the cell search starts at ``j``."""
    n = h.shape[0]
    while j > 0 and y < h[j]:
        j -= 1
    while j < n - 2 and y > h[j + 1]:
        j += 1
    a, b = 0.0, 1.0
    d = h[j + 1] - h[j]
    t = (y - h[j]) / d if d > 0 else 0.5
    t = min(max(t, 0.0), 1.0)
    eps = 4e-16 * (abs(y) + abs(h[j + 1]))
    for _ in range(60):
        g = _herm(j, t, step, h, hp) - y
        if abs(g) <= eps:
            break
        if g > 0:
            b = t
        else:
            a = t
        dg = _herm_d(j, t, step, h, hp) * step
        tn = t - g / dg if dg > 0 else 0.5 * (a + b)
        if not (a <= tn <= b):
            tn = 0.5 * (a + b)
        if abs(tn - t) <= 1e-14:
            t = tn
            break
        t = tn
    return x_min + (j + t) * step, j


@njit(cache=True)
def _path(p, seed, x0, lo, hi, dt, m, max_steps, x_min, step, h, hp, sig, Sig,
          record, X, dM, dQ):
    """Simulate path ``p``; returns ``(n_steps, tau, side, theta, status)``."""
    if x0 <= lo or x0 >= hi:
        if record:
            X[0] = x0
        return 0, 0.0, -1 if x0 <= lo else 1, 0.0, OK
    sqdt = math.sqrt(dt)
    inv_sqm = 1.0 / math.sqrt(m)
    x = x0
    j = min(max(int(math.floor((x0 - x_min) / step)), 0), h.shape[0] - 2)
    y = _h_at(x0, x_min, step, h, hp)
    y_lo, y_hi = h[0], h[h.shape[0] - 1]
    if record:
        X[0] = x0
    blk = np.int64(-1)
    z0 = z1 = z2 = z3 = 0.0
    for i in range(max_steps):
        xi = 0.0
        for k in range(m):
            s = np.int64(i) * m + k
            b = s // 4
            if b != blk:
                z0, z1, z2, z3 = normal_block(seed, p, b)
                blk = b
            r = s % 4
            xi += z0 if r == 0 else (z1 if r == 1 else (z2 if r == 2 else z3))
        xi *= inv_sqm
        hpx = math.exp(-_lin(x, x_min, step, Sig))
        sx = _lin(x, x_min, step, sig)
        dy = hpx * sx * sqdt * xi
        yn = y + dy
        if yn < y_lo or yn > y_hi:
            return i, i * dt, 0, 0.0, RANGE
        xn, j = _invert(yn, j, x_min, step, h, hp)
        if xn < lo or xn > hi:
            bd = lo if xn < lo else hi
            theta = (bd - x) / (xn - x)
            if record:
                X[i + 1] = bd
                dM[i] = (_h_at(bd, x_min, step, h, hp) - y) / hpx
                dQ[i] = sx * sx * theta * dt
            return i + 1, (i + theta) * dt, -1 if bd == lo else 1, theta, OK
        if record:
            X[i + 1] = xn
            dM[i] = dy / hpx
            dQ[i] = sx * sx * dt
        x, y = xn, yn
    return max_steps, max_steps * dt, 0, 1.0, CENSORED


@njit(cache=True, parallel=True)
def _summaries(paths, seed, x0, lo, hi, dt, m, max_steps, x_min, step, h, hp, sig, Sig,
               n_out, tau, side, theta, status):
    dummy = np.empty(0)
    for q in prange(paths.shape[0]):
        n, t, s, th, st = _path(paths[q], seed, x0, lo, hi, dt, m, max_steps, x_min, step,
                                h, hp, sig, Sig, False, dummy, dummy, dummy)
        n_out[q] = n
        tau[q] = t
        side[q] = s
        theta[q] = th
        status[q] = st


@njit(cache=True, parallel=True)
def _trajectories(paths, offsets, seed, x0, lo, hi, dt, m, max_steps, x_min, step, h, hp,
                  sig, Sig, X, dM, dQ):
    for q in prange(paths.shape[0]):
        a, b = offsets[q], offsets[q + 1]
        _path(paths[q], seed, x0, lo, hi, dt, m, max_steps, x_min, step, h, hp, sig, Sig,
              True, X[a + q:b + q + 1], dM[a:b], dQ[a:b])


# ---------------------------------------------------------------------------
# ensembles

def _tables(scale):
    return (float(scale.grid[0]), scale.step, np.ascontiguousarray(scale.h),
            np.ascontiguousarray(scale.h_prime), np.ascontiguousarray(scale.sigma),
            np.ascontiguousarray(scale.Sigma))


@dataclass(eq=False)
class Chunk:
    """Trajectories of a block of paths, stored ragged.

    Path ``q`` owns increments ``dM[offsets[q]:offsets[q+1]]`` (same for
    ``dQ``) and states ``X[offsets[q]+q : offsets[q+1]+q+1]``.
    """

    paths: np.ndarray
    offsets: np.ndarray
    X: np.ndarray
    dM: np.ndarray
    dQ: np.ndarray

    @property
    def n_steps(self):
        return np.diff(self.offsets)

    def x_offsets(self):
        return self.offsets + np.arange(self.offsets.size)

    def path(self, q):
        a, b = self.offsets[q], self.offsets[q + 1]
        return self.X[a + q:b + q + 1], self.dM[a:b], self.dQ[a:b]


@dataclass(eq=False)
class PathEnsemble:
    """Per-path exit summaries plus everything needed to regenerate paths."""

    scale: object
    x0: float
    cfg: SimConfig
    tau: np.ndarray
    n_steps: np.ndarray
    exit_side: np.ndarray
    theta: np.ndarray
    status: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.tau.size

    @property
    def censored(self):
        return self.status == CENSORED

    @property
    def t_max(self):
        return self.cfg.max_steps * self.cfg.dt

    def iter_chunks(self, chunk_size=4096):
        lo, hi = self.cfg.interval
        tabs = _tables(self.scale)
        for start in range(0, self.n_paths, chunk_size):
            paths = np.arange(start, min(start + chunk_size, self.n_paths), dtype=np.int64)
            offsets = np.zeros(paths.size + 1, dtype=np.int64)
            np.cumsum(self.n_steps[paths], out=offsets[1:])
            total = int(offsets[-1])
            X = np.empty(total + paths.size)
            dM = np.empty(total)
            dQ = np.empty(total)
            _trajectories(paths, offsets, np.uint64(self.cfg.seed), self.x0, lo, hi, self.cfg.dt,
                          self.cfg.substeps, self.cfg.max_steps, *tabs, X, dM, dQ)
            yield Chunk(paths, offsets, X, dM, dQ)

    def states_at(self, t, chunk_size=4096):
        """``X`` at step ``round(t / dt)`` (stopped paths keep their last state)."""
        k = int(round(t / self.cfg.dt))
        out = np.empty(self.n_paths)
        for ch in self.iter_chunks(chunk_size):
            xo = ch.x_offsets()
            out[ch.paths] = ch.X[xo[:-1] + np.minimum(k, ch.n_steps)]
        return out

    def summary_rows(self):
        for i in range(self.n_paths):
            yield (i, float(self.tau[i]), int(self.exit_side[i]), int(self.status[i] == CENSORED),
                   int(self.n_steps[i]))


def simulate_paths(scale, x0, cfg):
    """Simulate ``cfg.n_paths`` paths of ``X`` from ``x0`` until exit or ``T_max``."""
    lo, hi = cfg.interval
    if not lo <= x0 <= hi:
        raise OutOfRange(f"x0={x0} outside [{lo}, {hi}]")
    if scale.grid[0] > lo or scale.grid[-1] < hi:
        raise OutOfRange("the scale table does not cover the simulation interval")
    n = cfg.n_paths
    paths = np.arange(n, dtype=np.int64)
    n_steps = np.empty(n, dtype=np.int64)
    tau = np.empty(n)
    side = np.empty(n, dtype=np.int64)
    theta = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    _summaries(paths, np.uint64(cfg.seed), float(x0), lo, hi, cfg.dt, cfg.substeps,
               cfg.max_steps, *_tables(scale), n_steps, tau, side, theta, status)
    bad = np.flatnonzero(status == RANGE)
    if bad.size:
        raise RangeExceeded(f"{bad.size} paths left the tabulated h-range; enlarge R", paths=bad)
    return PathEnsemble(scale, float(x0), cfg, tau, n_steps, side, theta, status)


def write_summary_csv(ens, path, header=()):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("path,tau,exit_side,censored,n_steps\n")
        for i, t, s, c, k in ens.summary_rows():
            fh.write(f"{i},{t!r},{s},{c},{k}\n")


def write_paths_csv(ens, path, header=(), max_rows=10_000_000):
    total = int(ens.n_steps.sum()) + ens.n_paths
    if total > max_rows:
        warnings.warn(f"full path dump has {total} rows", stacklevel=2)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("path,step,t,X,dM,dQ\n")
        for ch in ens.iter_chunks():
            for q, p in enumerate(ch.paths):
                X, dM, dQ = ch.path(q)
                for i in range(X.size):
                    m = dM[i] if i < dM.size else 0.0
                    d = dQ[i] if i < dQ.size else 0.0
                    fh.write(f"{p},{i},{i * ens.cfg.dt!r},{X[i]!r},{m!r},{d!r}\n")


# ---------------------------------------------------------------------------
# statistics

def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class ExitReport:
    mean: float
    se: float
    censored_fraction: float
    n_paths: int
    dt: float
    t_max: float
    degenerate: bool = False
    note: str = "mean of tau ^ T_max; censoring biases it downward"

    def to_dict(self):
        return dict(self.__dict__)


def exit_stats(ens):
    cens = ens.censored
    frac = float(cens.mean())
    if cens.all():
        return ExitReport(float("nan"), float("nan"), frac, ens.n_paths, ens.cfg.dt, ens.t_max, True,
                          "all paths censored")
    m, se = _mean_se(ens.tau)
    return ExitReport(m, se, frac, ens.n_paths, ens.cfg.dt, ens.t_max)


def _coupled(fine, coarse):
    return (coarse is not None and fine.cfg.seed == coarse.cfg.seed
            and fine.n_paths == coarse.n_paths and fine.x0 == coarse.x0
            and math.isclose(coarse.cfg.dt / coarse.cfg.substeps, fine.cfg.dt / fine.cfg.substeps))


def richardson(fine_vals, coarse_vals, ratio, order=0.5, paired=True):
    """Extrapolate per-path values of a scheme with error ``O(dt^order)``."""
    r = ratio ** order
    if paired:
        return _mean_se((r * np.asarray(fine_vals) - np.asarray(coarse_vals)) / (r - 1))
    mf, sf = _mean_se(fine_vals)
    mc, sc = _mean_se(coarse_vals)
    return (r * mf - mc) / (r - 1), math.hypot(r * sf, sc) / (r - 1)


@dataclass
class ComparisonReport:
    target: float
    mean: float
    se: float
    z: float
    extrapolated: bool
    paired: bool
    passed: bool
    levels: list
    note: str

    def to_dict(self):
        return dict(self.__dict__)


def compare_exit_to_gamma(ens, gamma_fn, x0, coarse=None):
    """z-score of the mean exit time against ``Gamma(x0)``.

    With a ``coarse`` ensemble (step ratio ``r``) the two means are
    Richardson-extrapolated assuming an ``O(sqrt(dt))`` monitoring bias.
    """
    target = float(gamma_fn(x0))
    levels = [exit_stats(ens).to_dict()]
    if coarse is None:
        m, se = _mean_se(ens.tau)
        extrap = paired = False
        note = "single dt level; O(sqrt(dt)) monitoring bias not removed"
    else:
        levels.append(exit_stats(coarse).to_dict())
        ratio = coarse.cfg.dt / ens.cfg.dt
        paired = _coupled(ens, coarse)
        m, se = richardson(ens.tau, coarse.tau, ratio, 0.5, paired)
        extrap = True
        note = f"Richardson over dt={coarse.cfg.dt:g},{ens.cfg.dt:g} (order 1/2)"
    z = (m - target) / se if se > 0 else float("inf")
    return ComparisonReport(target, m, se, z, extrap, paired, bool(abs(z) < 3), levels, note)


def exp_moment_exit_closed_form(gamma, a, b, x0, coeffs=None):
    """``E[exp(gamma tau)]`` for Brownian motion leaving ``(a, b)`` from ``x0``."""
    if coeffs is not None and not coeffs.is_brownian:
        raise Unsupported("closed form only holds for sigma = 1, beta = 0")
    if not a < x0 < b:
        raise OutOfRange(f"x0={x0} not in ({a}, {b})")
    if gamma >= math.pi ** 2 / (2 * (b - a) ** 2):
        return math.inf
    if gamma > 0:
        s = math.sqrt(gamma / 2)
        return math.cos((b + a - 2 * x0) * s) / math.cos((b - a) * s)
    s = math.sqrt(-gamma / 2)
    return math.cosh((b + a - 2 * x0) * s) / math.cosh((b - a) * s)


@dataclass
class MCEstimate:
    gamma: float
    horizon: float
    mean: float
    se: float
    mean_uncensored: float
    se_uncensored: float
    censored_fraction: float
    censored_mass: float
    n_paths: int
    note: str = "censored paths enter with tau ^ T; the estimate is a lower bound"

    def to_dict(self):
        return dict(self.__dict__)


def estimate_exp_moment(ens, gamma, horizon=None):
    """Monte Carlo ``E[exp(gamma (tau ^ H))]`` with censoring diagnostics."""
    H = ens.t_max if horizon is None else float(horizon)
    if H > ens.t_max + 1e-12:
        raise OutOfRange(f"horizon {H} exceeds the ensemble horizon {ens.t_max}")
    cens = ens.censored | (ens.tau > H)
    t = np.minimum(ens.tau, H)
    vals = np.exp(gamma * t)
    m, se = _mean_se(vals)
    mu, su = _mean_se(vals[~cens]) if (~cens).any() else (float("nan"), float("nan"))
    mass = float(vals[cens].sum() / vals.sum()) if vals.sum() > 0 else 0.0
    return MCEstimate(float(gamma), H, m, se, mu, su, float(cens.mean()), mass, ens.n_paths)


def horizon_scan(ens, gamma, horizons):
    return [estimate_exp_moment(ens, gamma, H) for H in horizons]


def bracket_ratio(ens, chunk_size=4096):
    """Per-path ``|sum dM^2 - sum dQ| / sum dQ`` (paths with at least one step)."""
    out = []
    for ch in ens.iter_chunks(chunk_size):
        n = ch.n_steps
        keep = n > 0
        idx = ch.offsets[:-1][keep]
        qv = np.add.reduceat(ch.dM ** 2, idx) if idx.size else np.empty(0)
        br = np.add.reduceat(ch.dQ, idx) if idx.size else np.empty(0)
        out.append(np.abs(qv - br) / br)
    return np.concatenate(out) if out else np.empty(0)


def martingale_sums(ens, chunk_size=4096):
    """Per-path ``sum dM``."""
    out = np.zeros(ens.n_paths)
    for ch in ens.iter_chunks(chunk_size):
        keep = ch.n_steps > 0
        idx = ch.offsets[:-1][keep]
        if idx.size:
            out[ch.paths[keep]] = np.add.reduceat(ch.dM, idx)
    return out


def check_inside(ens, chunk_size=4096):
    """Raise if any stored state lies outside the interval."""
    lo, hi = ens.cfg.interval
    for ch in ens.iter_chunks(chunk_size):
        if np.any(ch.X < lo - 1e-12) or np.any(ch.X > hi + 1e-12):
            raise InconsistentEnsemble("path state outside the interval before exit")
