"""Linear problems ``L u = l``: initial value, Dirichlet on [0, 1], Green kernel."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .coefficients import build_scale
from .errors import BadAnchor, OutOfRange
from .quadrature import cumulative, integrate


@dataclass(eq=False)
class GridFunction:
    """A C^1 function stored as nodal values and nodal derivatives.

    Evaluation between nodes uses the cubic Hermite interpolant of
    ``(u, u_prime)``.
    """

    grid: np.ndarray
    u: np.ndarray
    u_prime: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.grid, self.u, self.u_prime)

    def __call__(self, x):
        return self._spline(x)

    def derivative(self, x):
        return self._spline(x, 1)

    def restrict(self, lo, hi):
        m = (self.grid >= lo - 1e-12) & (self.grid <= hi + 1e-12)
        return GridFunction(self.grid[m], self.u[m], self.u_prime[m], dict(self.info))

    def to_csv(self, path, header=()):
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["x", "u", "u_prime"])
            for row in zip(self.grid, self.u, self.u_prime):
                w.writerow([repr(float(v)) for v in row])


def _nodal(fn, x):
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).astype(float)
    arr = np.asarray(fn, dtype=float)
    if arr.ndim == 0:
        return np.full(x.shape, float(arr))
    if arr.shape != x.shape:
        raise ValueError(f"nodal values have shape {arr.shape}, expected {x.shape}")
    return arr


def solve_linear_ivp(scale, l, a, x0, x1, interval=None):
    """Unique C^1 solution of ``L u = l`` with ``u(a) = x0``, ``u'(a) = x1``.

    ``u'(x) = e^{-S(x)} (2 int_a^x e^{S} l / sigma^2 + x1)`` with ``S`` the
    exponent re-anchored at ``a``; ``u`` follows by integrating ``u'``.
    """
    sl = scale.restrict(*interval) if interval is not None else slice(0, scale.grid.size)
    x = scale.grid[sl]
    k = scale.index_of(a)
    if k is None or not (sl.start <= k < sl.stop):
        raise BadAnchor(f"anchor {a} is not a grid node of the solve interval")
    k -= sl.start
    S = scale.Sigma[sl] - scale.Sigma[sl][k]
    w = 2.0 * np.exp(S) * _nodal(l, x) / scale.sigma[sl] ** 2
    up = np.exp(-S) * (cumulative(w, scale.step, k) + x1)
    u = x0 + cumulative(up, scale.step, k)
    return GridFunction(x, u, up)


def _unit(scale):
    sl = scale.restrict(0.0, 1.0)
    return sl, scale.grid[sl]


def _check_unit(*args):
    for a in args:
        a = np.asarray(a)
        if np.any(a < -1e-12) or np.any(a > 1 + 1e-12):
            raise OutOfRange("kernel arguments must lie in [0, 1]")


def _kernel_parts(scale, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_unit(x, y)
    h1 = scale.h[scale.index_of(1.0)]
    hx, hy = scale.h_at(x), scale.h_at(y)
    c = 2.0 * np.exp(scale.Sigma_at(y)) / np.asarray(scale.sigma_fn(y), dtype=float) ** 2
    return x, y, h1, hx, hy, c


def green_kernel(scale, x, y):
    """Green kernel of the Dirichlet problem on [0, 1] (broadcasts)."""
    x, y, h1, hx, hy, c = _kernel_parts(scale, x, y)
    return np.where(y <= x, c * (hx - hy), 0.0) - hx / h1 * c * (h1 - hy)


def green_kernel_dx(scale, x, y):
    """Partial derivative of :func:`green_kernel` in ``x``."""
    x, y, h1, hx, hy, c = _kernel_parts(scale, x, y)
    hpx = scale.h_prime_at(x)
    return np.where(y <= x, c * hpx, 0.0) - hpx / h1 * c * (h1 - hy)


def solve_linear_bvp(scale, g, A, B):
    """Solution of ``L u = g`` on [0, 1] with ``u(0) = A``, ``u(1) = B``.

    ``u = f + int_0^1 K(., y) g(y) dy``; the kernel integral is split at
    ``y = x`` and both halves are running integrals, so the whole solve is
    linear in the number of nodes.
    """
    sl, x = _unit(scale)
    h = scale.h[sl]
    hp = scale.h_prime[sl]
    h1 = h[-1]
    w = 2.0 * np.exp(scale.Sigma[sl]) * _nodal(g, x) / scale.sigma[sl] ** 2
    W = cumulative(w, scale.step)
    J = cumulative(w * h, scale.step)
    tail = h1 * W[-1] - J[-1]
    f = (B * h + A * (h1 - h)) / h1
    u = f + h * W - J - h / h1 * tail
    up = hp * ((B - A) / h1 + W - tail / h1)
    u[0], u[-1] = A, B
    return GridFunction(x, u, up)


def boundary_interpolant(scale, A, B):
    """The ``f`` part of the Dirichlet solution (zero forcing)."""
    sl, x = _unit(scale)
    h = scale.h[sl]
    h1 = h[-1]
    return GridFunction(x, (B * h + A * (h1 - h)) / h1, (B - A) * scale.h_prime[sl] / h1)


def kernel_bound(scale, min_points=2049):
    """``sup_x int_0^1 (|K(x,y)| + |d_x K(x,y)|) dy`` over grid nodes of [0, 1].

    ``K <= 0`` everywhere and ``d_x K`` changes sign only at ``y = x``, so
    both absolute integrals reduce to running integrals of
    ``c h`` and ``c (h(1) - h)`` with ``c = 2 e^Sigma / sigma^2``. The
    table is refined from its coefficients until [0, 1] holds at least
    ``min_points`` nodes.
    """
    while scale.coeffs is not None and scale.restrict(0.0, 1.0).stop - scale.restrict(0.0, 1.0).start < min_points:
        scale = build_scale(scale.coeffs.with_step(scale.step / 2))
    sl, x = _unit(scale)
    h = scale.h[sl]
    h1 = h[-1]
    c = 2.0 * np.exp(scale.Sigma[sl]) / scale.sigma[sl] ** 2
    C1 = cumulative(c * h, scale.step)
    G = cumulative(c * (h1 - h), scale.step)
    C2 = G[-1] - G
    total = ((h1 - h) * C1 + h * C2 + scale.h_prime[sl] * (C1 + C2)) / h1
    j = int(np.argmax(total))
    return float(total[j])


def gamma_function(scale):
    """``Gamma`` with ``L Gamma = -1``, ``Gamma(0) = Gamma(1) = 0`` (mean exit time)."""
    return solve_linear_bvp(scale, -1.0, 0.0, 0.0)


def kernel_table(scale, n=65):
    """Rows ``(x, y, K, d_x K)`` on an ``n x n`` grid of [0, 1], for plotting."""
    t = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(),
                            green_kernel(scale, X, Y).ravel(),
                            green_kernel_dx(scale, X, Y).ravel()])


def linear_ivp_slope(scale, g, A, B):
    """Initial slope ``u'(0)`` turning the IVP into the Dirichlet solution."""
    sl, x = _unit(scale)
    h = scale.h[sl]
    w = 2.0 * np.exp(scale.Sigma[sl]) * _nodal(g, x) / scale.sigma[sl] ** 2
    return (B - A - integrate(w * (h[-1] - h), scale.step)) / h[-1]
