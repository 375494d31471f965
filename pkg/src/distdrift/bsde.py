"""BSDE triples built from PDE solutions, with residual and norm-class checks.

Along a simulated path ``X`` with exit time ``tau`` the triple is
``Y_t = u(X_{t ^ tau})``, ``Z_t = u'(X_t) 1[t <= tau]`` and ``O = 0``; the
generator is ``f(t, y, z) = -F(X_t, y, z) / sigma^2(X_t)``.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CoefficientError, InconsistentEnsemble, OutOfHorizon


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    F: Callable
    sigma_fn: Callable

    def __call__(self, x, y, z):
        s = np.asarray(self.sigma_fn(x), dtype=float)
        return -np.asarray(self.F(x, y, z), dtype=float) / (s * s)


def generator_from_F(F, coeffs):
    probe = np.linspace(0.0, 1.0, 1025)
    if np.any(np.asarray(coeffs.sigma(probe)) <= 0):
        raise CoefficientError("sigma must be positive on [0, 1]")
    return GeneratorSpec(F, coeffs.sigma)


@dataclass(eq=False)
class TripleChunk:
    """``Y`` on every stored state, ``Z`` on every step before exit."""

    paths: np.ndarray
    offsets: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    dM: np.ndarray
    dQ: np.ndarray
    xi: np.ndarray
    step_states: np.ndarray  # mask of the pre-step states X_i, i < n, within X


@dataclass(eq=False)
class BsdeTriple:
    u: object
    ens: object
    chunk_size: int = 4096

    @property
    def Y0(self):
        return float(self.u(self.ens.x0))

    def iter_chunks(self):
        lo, hi = self.ens.cfg.interval
        u_lo, u_hi = float(self.u(lo)), float(self.u(hi))
        for ch in self.ens.iter_chunks(self.chunk_size):
            if np.any(ch.X < lo - 1e-12) or np.any(ch.X > hi + 1e-12):
                raise InconsistentEnsemble("path state outside the interval before exit")
            Y = self.u(ch.X)
            xo = ch.x_offsets()
            keep = np.ones(ch.X.size, dtype=bool)
            keep[xo[1:] - 1] = False
            Z = self.u.derivative(ch.X[keep])
            side = self.ens.exit_side[ch.paths]
            last = Y[xo[1:] - 1]
            xi = np.where(side < 0, u_lo, np.where(side > 0, u_hi, last))
            # the stored exit state is the boundary node itself
            Y[xo[1:] - 1] = xi
            yield TripleChunk(ch.paths, ch.offsets, ch.X, Y, Z, ch.dM, ch.dQ, xi, keep)

    def check_invariants(self):
        """Terminal consistency and the ``|Y| <= sup |u|`` bound."""
        sup_u = float(np.max(np.abs(self.u.u)))
        max_y = 0.0
        terminal = True
        for tc in self.iter_chunks():
            max_y = max(max_y, float(np.max(np.abs(tc.Y))))
            xo = tc.offsets + np.arange(tc.offsets.size)
            terminal &= bool(np.all(tc.Y[xo[1:] - 1] == tc.xi))
        return {"sup_u": sup_u, "max_abs_Y": max_y, "bounded": max_y <= sup_u * (1 + 1e-12) + 1e-15,
                "terminal_consistent": terminal, "orthogonal_part": "O = 0"}


def build_triple_from_pde(u, ens, chunk_size=4096):
    lo, hi = ens.cfg.interval
    if u.grid[0] > lo + 1e-12 or u.grid[-1] < hi - 1e-12:
        raise InconsistentEnsemble("u must be defined on the whole simulation interval")
    if not lo <= ens.x0 <= hi:
        raise InconsistentEnsemble("ensemble start point outside the interval")
    return BsdeTriple(u, ens, chunk_size)


def _step_values(tc, gen):
    mask = tc.step_states
    x = tc.X[mask]
    y = tc.Y[mask]
    z = tc.Z
    return x, y, z, gen(x, y, z)


@dataclass
class ResidualReport:
    checkpoints: list
    rms: list
    mean: list
    max_abs: list
    n_paths: int
    dt: float
    censored_fraction: float
    caveat: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def bsde_residual(triple, gen, ens=None, checkpoints=(0.0,)):
    """Discrete residual of the BSDE in its forward-integrated form.

    ``R(t) = Y_t - xi + sum_{t <= t_i < tau} (Z_i dM_i - f_i dQ_i)`` per path,
    summarized by its RMS over paths at each checkpoint.
    """
    ens = ens or triple.ens
    dt = ens.cfg.dt
    cps = [float(t) for t in checkpoints]
    for t in cps:
        if t < 0 or t > ens.t_max + 1e-12:
            raise OutOfHorizon(f"checkpoint {t} outside [0, {ens.t_max}]")
    starts = np.array([int(math.ceil(t / dt - 1e-9)) for t in cps], dtype=np.int64)
    R = np.empty((len(cps), ens.n_paths))
    for tc in triple.iter_chunks():
        _, _, z, f = _step_values(tc, gen)
        terms = z * tc.dM - f * tc.dQ
        C = np.concatenate([[0.0], np.cumsum(terms)])
        n = np.diff(tc.offsets)
        off = tc.offsets[:-1]
        xo = off + np.arange(n.size)
        for c, k0 in enumerate(starts):
            k = np.minimum(k0, n)
            tail = C[off + n] - C[off + k]
            R[c, tc.paths] = tc.Y[xo + k] - tc.xi + tail
    cens = float(ens.censored.mean())
    caveat = ""
    if cens > 0:
        caveat = (f"{cens:.3%} of paths censored at T_max; their terminal value is Y_T, "
                  "so the residual there only covers [t, T_max]")
    return ResidualReport(cps, [float(np.sqrt(np.mean(r * r))) for r in R],
                          [float(np.mean(r)) for r in R], [float(np.max(np.abs(r))) for r in R],
                          ens.n_paths, dt, cens, caveat)


def classify_growth(values, stable_tol=0.05, growth=1.25):
    """``"stable"``, ``"growing"`` or ``"inconclusive"`` for nested-horizon estimates."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        return "growing"
    scale = np.max(np.abs(v))
    if scale == 0 or np.all(np.abs(np.diff(v)) < stable_tol * np.abs(v[:-1])):
        return "stable"
    if np.all(v[1:] >= growth * v[:-1]) and np.all(v > 0):
        return "growing"
    return "inconclusive"


@dataclass
class NormReport:
    gamma: float
    horizons: list
    estimates: list
    se: list
    verdict: str
    n_paths: int

    def to_dict(self):
        return dict(self.__dict__)


def norm_class_estimate(triple, gamma, ens=None, horizons=None):
    """Monte Carlo ``E int_0^{tau ^ H} e^{gamma <M>_s} (Y^2 + Z^2) d<M>_s``.

    Evaluated at ``H = T/4, T/2, T`` (``T`` the ensemble horizon) unless
    ``horizons`` is given; the verdict compares the nested estimates.
    """
    ens = ens or triple.ens
    dt = ens.cfg.dt
    T = ens.t_max
    hs = [T / 4, T / 2, T] if horizons is None else [float(h) for h in horizons]
    for H in hs:
        if H <= 0 or H > T + 1e-12:
            raise OutOfHorizon(f"horizon {H} outside (0, {T}]")
    stops = np.array([int(math.ceil(H / dt - 1e-9)) for H in hs], dtype=np.int64)
    vals = np.zeros((len(hs), ens.n_paths))
    for tc in triple.iter_chunks():
        y = tc.Y[tc.step_states]
        n = np.diff(tc.offsets)
        off = tc.offsets[:-1]
        B = np.concatenate([[0.0], np.cumsum(tc.dQ)])
        # running bracket <M>_{t_i}, restarted on every path
        Q = B[:-1] - np.repeat(B[off], n)
        w = np.exp(gamma * Q) * (y * y + tc.Z * tc.Z) * tc.dQ
        C = np.concatenate([[0.0], np.cumsum(w)])
        for c, k in enumerate(stops):
            vals[c, tc.paths] = C[off + np.minimum(k, n)] - C[off]
    est = [float(v.mean()) for v in vals]
    se = [float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan") for v in vals]
    return NormReport(float(gamma), hs, est, se, classify_growth(est), ens.n_paths)
