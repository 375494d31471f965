"""Coefficient fields ``sigma``, ``beta`` and the derived scale objects.

The generator is ``L g = sigma^2/2 g'' + beta' g'`` with ``beta`` only
continuous. Everything downstream is expressed through

* ``Sigma(x) = 2 int_0^x beta'/sigma^2`` (exponent of the scale density),
* the scale function ``h`` with ``h(0) = 0`` and ``h' = exp(-Sigma)``,
* the function ``v`` solving ``L v = 1``, ``v(0) = v'(0) = 0``.

Only representations of ``beta`` for which the integral defining ``Sigma`` is
well defined without mollification are accepted: analytic callables shipped
with their derivative, constants, and piecewise-linear samples.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import (CoefficientError, OutOfRange, ScaleOverflow,
                     UnsupportedRepresentation)
from .quadrature import cumulative, gauss_panels

_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Analytic:
    fn: Callable
    deriv: Optional[Callable] = None
    name: str = "analytic"

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float) + 0.0 * np.asarray(x)

    def derivative(self, x):
        if self.deriv is None:
            raise UnsupportedRepresentation(f"{self.name}: no derivative supplied")
        return np.asarray(self.deriv(np.asarray(x, dtype=float)), dtype=float) + 0.0 * np.asarray(x)


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Samples joined by straight lines, constant outside the knot range."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise CoefficientError("piecewise-linear samples need matching 1-D knots/values (>= 2)")
        if np.any(np.diff(k) <= 0):
            raise CoefficientError("knots must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise CoefficientError("non-finite sample value")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values)

    def slopes(self):
        return np.diff(self.values) / np.diff(self.knots)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, self.knots.size - 2)
        inside = (x >= self.knots[0]) & (x < self.knots[-1])
        return np.where(inside, self.slopes()[j], 0.0)


_REPRESENTATIONS = (Const, Analytic, PiecewiseLinear)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """``sigma`` (strictly positive) and ``beta`` (continuous) on ``[-R, R]``."""

    sigma: object
    beta: object
    R: float = 2.0
    grid_step: float = 1.0 / 1024

    def __post_init__(self):
        for name in ("sigma", "beta"):
            rep = getattr(self, name)
            if not isinstance(rep, _REPRESENTATIONS):
                raise UnsupportedRepresentation(
                    f"{name}: {type(rep).__name__} has no interpolation/derivative rule; "
                    "use Const, Analytic or PiecewiseLinear")
        if isinstance(self.beta, Analytic) and self.beta.deriv is None:
            raise UnsupportedRepresentation("beta: analytic representation needs its derivative")
        if self.grid_step <= 0 or self.R <= 0:
            raise CoefficientError("R and grid_step must be positive")
        per_unit = 1.0 / self.grid_step
        if abs(per_unit - round(per_unit)) > 1e-9 * per_unit:
            raise CoefficientError("1/grid_step must be an integer so that 0 and 1 are grid nodes")
        if self.R < 1.0:
            raise CoefficientError("the grid must cover [0, 1]: need R >= 1")
        sig = self.sigma(self.grid())
        if isinstance(self.sigma, PiecewiseLinear):
            sig = np.concatenate([sig, self.sigma.values])
        if isinstance(self.sigma, Const):
            sig = np.array([self.sigma.value])
        if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
            raise CoefficientError("sigma must be strictly positive on the grid")

    @property
    def nodes_per_unit(self):
        return int(round(1.0 / self.grid_step))

    def grid(self):
        m = self.nodes_per_unit
        n = int(round(self.R * m))
        return np.arange(-n, n + 1) / m

    @property
    def is_brownian(self):
        """True for ``sigma = 1, beta' = 0`` (standard Brownian motion)."""
        return (isinstance(self.sigma, Const) and self.sigma.value == 1.0
                and isinstance(self.beta, Const))

    def with_step(self, grid_step):
        return replace(self, grid_step=grid_step)


@dataclass(frozen=True, eq=False)
class ScaleData:
    """Tabulated ``Sigma, h, h', v`` on a uniform grid (immutable).

    Partially built instances (``h`` or ``v`` still ``None``) are produced by
    the staged constructors below; :func:`build_scale` runs all stages.
    """

    grid: np.ndarray
    Sigma: np.ndarray
    sigma: np.ndarray
    sigma_fn: Callable
    h: Optional[np.ndarray] = None
    h_prime: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    v_prime: Optional[np.ndarray] = None
    coeffs: Optional[CoefficientField] = None
    sigma_linear_cells: bool = False
    info: dict = field(default_factory=dict)

    @property
    def step(self):
        return float(self.grid[1] - self.grid[0])

    def index_of(self, x, tol=1e-9):
        """Grid index of the node ``x``; ``None`` if ``x`` is not a node."""
        j = int(round((x - self.grid[0]) / self.step))
        if 0 <= j < self.grid.size and abs(self.grid[j] - x) <= tol * self.step:
            return j
        return None

    def Sigma_at(self, x):
        return np.interp(x, self.grid, self.Sigma)

    def h_at(self, x):
        x = np.asarray(x, dtype=float)
        j, t = self._cell(x)
        d = self.step
        h0, h1 = self.h[j], self.h[j + 1]
        p0, p1 = self.h_prime[j], self.h_prime[j + 1]
        t2, t3 = t * t, t * t * t
        return ((2 * t3 - 3 * t2 + 1) * h0 + (t3 - 2 * t2 + t) * d * p0
                + (-2 * t3 + 3 * t2) * h1 + (t3 - t2) * d * p1)

    def h_prime_at(self, x):
        return np.exp(-self.Sigma_at(x))

    def _cell(self, x):
        j = np.clip(np.floor((x - self.grid[0]) / self.step).astype(int), 0, self.grid.size - 2)
        return j, (x - self.grid[j]) / self.step

    def restrict(self, lo, hi):
        """Index slice of the nodes covering ``[lo, hi]`` (both must be nodes)."""
        i, j = self.index_of(lo), self.index_of(hi)
        if i is None or j is None or j <= i:
            raise OutOfRange(f"[{lo}, {hi}] endpoints must be grid nodes inside the table")
        return slice(i, j + 1)


def _breakpoints(coeffs, grid):
    extra = [r.knots for r in (coeffs.sigma, coeffs.beta) if isinstance(r, PiecewiseLinear)]
    if not extra:
        return grid, False
    k = np.concatenate(extra)
    k = k[(k > grid[0]) & (k < grid[-1])]
    if k.size:
        near = np.abs(k - grid[np.clip(np.rint((k - grid[0]) / (grid[1] - grid[0])).astype(int),
                                       0, grid.size - 1)])
        k = k[near > 1e-12]
    pts = np.unique(np.concatenate([grid, k]))
    return pts, k.size > 0


def _inv_sigma2_pieces(sigma, p0, p1):
    """``int_{p0}^{p1} sigma^-2`` per piece."""
    if isinstance(sigma, Const):
        return (p1 - p0) / sigma.value ** 2
    if isinstance(sigma, PiecewiseLinear):
        # exact for a linear sigma on the piece
        return (p1 - p0) / (sigma(p0) * sigma(p1))
    return gauss_panels(lambda x: 1.0 / sigma(x) ** 2, p0, p1)


def compute_sigma_fn(coeffs):
    """Tabulate ``Sigma`` on the grid of ``coeffs`` (first construction stage)."""
    grid = coeffs.grid()
    pts, off_grid = _breakpoints(coeffs, grid)
    p0, p1 = pts[:-1], pts[1:]
    beta, sigma = coeffs.beta, coeffs.sigma
    if isinstance(beta, Const):
        pieces = np.zeros_like(p0)
    elif isinstance(beta, PiecewiseLinear) or isinstance(sigma, Const):
        # beta' constant on the piece (or sigma constant): the integral is
        # delta(beta) times the mean of sigma^-2
        dbeta = beta(p1) - beta(p0)
        if isinstance(sigma, Const):
            pieces = 2.0 * dbeta / sigma.value ** 2
        elif isinstance(sigma, PiecewiseLinear):
            pieces = 2.0 * dbeta / (sigma(p0) * sigma(p1))
        else:
            pieces = 2.0 * dbeta * _inv_sigma2_pieces(sigma, p0, p1) / (p1 - p0)
    else:
        pieces = gauss_panels(lambda x: 2.0 * beta.derivative(x) / sigma(x) ** 2, p0, p1)
    zero = int(np.searchsorted(pts, 0.0))
    S = np.zeros_like(pts)
    S[zero + 1:] = np.cumsum(pieces[zero:])
    S[:zero] = -np.cumsum(pieces[:zero][::-1])[::-1]
    node = np.searchsorted(pts, grid)
    Sigma = S[node]
    bad = np.flatnonzero(np.abs(Sigma) > _EXP_LIMIT)
    if bad.size:
        raise ScaleOverflow(f"|Sigma| exceeds {_EXP_LIMIT} at x={grid[bad[0]]}", x=float(grid[bad[0]]))
    linear_cells = isinstance(sigma, Const) and not off_grid and not isinstance(beta, Analytic)
    return ScaleData(grid=grid, Sigma=Sigma, sigma=np.asarray(sigma(grid), dtype=float),
                     sigma_fn=sigma, coeffs=coeffs, sigma_linear_cells=linear_cells,
                     info={"breakpoints": pts, "Sigma_breakpoints": S})


def _exp_cell_integrals(S, dx):
    """Exact ``int exp(-Sigma)`` per cell when Sigma is linear on each cell."""
    d = S[1:] - S[:-1]
    small = np.abs(d) < 1e-8
    ratio = np.where(small, 1.0 - d / 2 + d * d / 6, -np.expm1(-d) / np.where(small, 1.0, d))
    return dx * np.exp(-S[:-1]) * ratio


def compute_scale(scale):
    """Add ``h`` and ``h' = exp(-Sigma)`` with ``h(0) = 0``."""
    hp = np.exp(-scale.Sigma)
    if not np.all(np.isfinite(hp)):
        j = int(np.flatnonzero(~np.isfinite(hp))[0])
        raise ScaleOverflow(f"exp(-Sigma) overflows at x={scale.grid[j]}", x=float(scale.grid[j]))
    zero = scale.index_of(0.0)
    if scale.sigma_linear_cells:
        cells = _exp_cell_integrals(scale.Sigma, scale.step)
        h = np.zeros_like(hp)
        h[zero + 1:] = np.cumsum(cells[zero:])
        h[:zero] = -np.cumsum(cells[:zero][::-1])[::-1]
    else:
        h = cumulative(hp, scale.step, zero)
    if np.any(np.diff(h) <= 0):
        raise ScaleOverflow("scale function is not strictly increasing (underflow of exp(-Sigma))")
    return replace(scale, h=h, h_prime=hp)


def compute_speed_v(coeffs, scale):
    """Add ``v`` with ``v' = exp(-Sigma) * 2 int_0^x sigma^-2`` and ``v(0) = 0``."""
    pts = scale.info["breakpoints"]
    pieces = 2.0 * _inv_sigma2_pieces(coeffs.sigma, pts[:-1], pts[1:])
    zero = int(np.searchsorted(pts, 0.0))
    S2 = np.zeros_like(pts)
    S2[zero + 1:] = np.cumsum(pieces[zero:])
    S2[:zero] = -np.cumsum(pieces[:zero][::-1])[::-1]
    S2 = S2[np.searchsorted(pts, scale.grid)]
    vp = np.exp(-scale.Sigma) * S2
    v = cumulative(vp, scale.step, scale.index_of(0.0))
    return replace(scale, v=v, v_prime=vp)


def build_scale(coeffs):
    scale = compute_sigma_fn(coeffs)
    scale = compute_scale(scale)
    return compute_speed_v(coeffs, scale)


def invert_scale(scale, y, tol=1e-12):
    """Return ``x`` with ``h(x) = y`` for the cubic-Hermite interpolant of ``h``."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < scale.h[0]) or np.any(y_arr > scale.h[-1]):
        raise OutOfRange(f"y outside [h(-R), h(R)] = [{scale.h[0]}, {scale.h[-1]}]")
    flat = np.atleast_1d(y_arr).ravel()
    j = np.clip(np.searchsorted(scale.h, flat, side="right") - 1, 0, scale.grid.size - 2)
    lo = scale.grid[j].copy()
    hi = scale.grid[j + 1].copy()
    x = lo + (flat - scale.h[j]) / (scale.h[j + 1] - scale.h[j]) * (hi - lo)
    for _ in range(60):
        r = scale.h_at(x) - flat
        if np.all(np.abs(r) <= tol * (1 + np.abs(flat))):
            break
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        slope = _hermite_slope(scale, x)
        step = x - r / slope
        x = np.where((step > lo) & (step < hi), step, 0.5 * (lo + hi))
    out = x.reshape(np.shape(y_arr))
    return float(out) if out.ndim == 0 else out


def _hermite_slope(scale, x):
    j, t = scale._cell(x)
    d = scale.step
    h0, h1 = scale.h[j], scale.h[j + 1]
    p0, p1 = scale.h_prime[j], scale.h_prime[j + 1]
    return ((6 * t * t - 6 * t) * h0 / d + (3 * t * t - 4 * t + 1) * p0
            + (-6 * t * t + 6 * t) * h1 / d + (3 * t * t - 2 * t) * p1)


CAVEAT = ("Diagnostic only: a truncated grid cannot prove v(-inf) = v(+inf) = +inf; "
          "the verdict states whether the tabulated values are consistent with it.")


@dataclass
class WellposednessReport:
    R: float
    v_minus_R: float
    v_plus_R: float
    radii: list
    v_left: list
    v_right: list
    threshold: float
    verdict: str
    caveat: str = CAVEAT

    def to_dict(self):
        return dict(self.__dict__)


def check_wellposedness(scale, threshold=10.0):
    """Inspect growth of ``v`` at ``+-R/4, +-R/2, +-R``."""
    R = float(scale.grid[-1])
    radii = [R / 4, R / 2, R]
    left = [float(np.interp(-r, scale.grid, scale.v)) for r in radii]
    right = [float(np.interp(r, scale.grid, scale.v)) for r in radii]
    growing = all(a < b for a, b in zip(left, left[1:])) and all(a < b for a, b in zip(right, right[1:]))
    if not growing:
        verdict = "inconsistent"
    elif min(left[-1], right[-1]) > threshold:
        verdict = "consistent"
    else:
        verdict = "inconclusive"
    return WellposednessReport(R=R, v_minus_R=left[-1], v_plus_R=right[-1], radii=radii,
                               v_left=left, v_right=right, threshold=threshold, verdict=verdict)


# ---------------------------------------------------------------------------
# named expressions usable from JSON descriptions

def _sigma_expr(eid, p):
    if eid == "one-plus-sin":
        a, b, k = p.get("a", 1.0), p.get("b", 0.5), p.get("k", 1.0)
        if abs(b) >= a:
            raise CoefficientError("one-plus-sin needs |b| < a")
        return Analytic(lambda x: a + b * np.sin(k * x), name=eid)
    if eid == "const":
        return Const(float(p["value"]))
    raise CoefficientError(f"unknown sigma expression id {eid!r}")


def _beta_expr(eid, p):
    if eid == "linear":
        c = float(p.get("slope", 1.0))
        return Analytic(lambda x: c * x, lambda x: c + 0.0 * x, name=eid)
    if eid == "sin":
        amp, k = float(p.get("amplitude", 1.0)), float(p.get("k", 1.0))
        return Analytic(lambda x: amp * np.sin(k * x), lambda x: amp * k * np.cos(k * x), name=eid)
    if eid == "zero":
        return Const(0.0)
    raise CoefficientError(f"unknown beta expression id {eid!r}")


def brownian_environment(seed, step, R, scale=1.0):
    """Piecewise-linear two-sided Brownian path with ``beta(0) = 0``."""
    rng = np.random.default_rng(seed)
    m = int(round(1.0 / step))
    n = int(round(R * m))
    knots = np.arange(-n, n + 1) / m
    incr = scale * np.sqrt(1.0 / m) * rng.standard_normal(2 * n)
    right = np.concatenate([[0.0], np.cumsum(incr[:n])])
    left = np.concatenate([[0.0], np.cumsum(incr[n:])])
    values = np.concatenate([left[:0:-1], right])
    return PiecewiseLinear(knots, values)


def _rep_from_dict(d, which, R, step):
    kind = d.get("kind")
    if kind == "const":
        return Const(float(d["value"]))
    if kind == "zero":
        return Const(0.0)
    if kind == "samples":
        if "x" not in d:
            raise UnsupportedRepresentation(f"{which}: samples need knot positions 'x'")
        return PiecewiseLinear(np.asarray(d["x"], float), np.asarray(d["values"], float))
    if kind == "expr-id":
        make = _sigma_expr if which == "sigma" else _beta_expr
        return make(d["id"], d.get("params", {}))
    if kind == "brownian-env" and which == "beta":
        return brownian_environment(int(d["seed"]), float(d.get("step", step)), R,
                                    float(d.get("scale", 1.0)))
    raise CoefficientError(f"{which}: unknown kind {kind!r}")


def field_from_dict(d):
    """Build a :class:`CoefficientField` from its JSON description."""
    R = float(d.get("R", 2.0))
    step = float(d.get("grid_step", 1.0 / 1024))
    sigma = _rep_from_dict(d["sigma"], "sigma", R, step)
    beta = _rep_from_dict(d["beta"], "beta", R, step)
    return CoefficientField(sigma=sigma, beta=beta, R=R, grid_step=step)
