"""Semilinear problems ``L u = F(x, u, u')`` with initial or Dirichlet data."""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import qmc

from .coefficients import (Analytic, CoefficientField, Const, PiecewiseLinear,
                           build_scale)
from .errors import (BadAnchor, ContractionNotGuaranteed, IllConditioned,
                     NoConvergence, OutOfRange)
from .linear import GridFunction, boundary_interpolant, kernel_bound, solve_linear_bvp
from .quadrature import cumulative


@dataclass(frozen=True)
class Initial:
    anchor: float
    x0: float
    x1: float


@dataclass(frozen=True)
class Boundary:
    A: float
    B: float


@dataclass(frozen=True)
class Hints:
    """User-declared constants; ``None`` means unknown."""

    k_y: Optional[float] = None
    k_z: Optional[float] = None
    a_mono: Optional[float] = None
    bound: Optional[float] = None


@dataclass(frozen=True, eq=False)
class SemilinearProblem:
    F: Callable
    interval: tuple = (0.0, 1.0)
    data: Union[Initial, Boundary] = Boundary(0.0, 0.0)
    hints: Hints = Hints()
    name: str = "custom"

    def __post_init__(self):
        a, b = self.interval
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        probe = np.linspace(a, b, 7)
        vals = np.asarray(self.F(probe, np.linspace(-1, 1, 7), np.linspace(1, -1, 7)))
        if vals.shape != probe.shape or not np.all(np.isfinite(vals)):
            raise ValueError("F must be vectorized and finite on the probe grid")

    @property
    def joint_lipschitz(self):
        h = self.hints
        if h.k_y is None or h.k_z is None:
            return None
        return max(h.k_y, h.k_z)


# ---------------------------------------------------------------------------
# built-in nonlinearities

def _linear_y(c=1.0):
    c = float(c)
    return (lambda x, y, z: c * y), Hints(abs(c), 0.0, c, None)


def _sin_y(c=1.0, d=0.0):
    c, d = float(c), float(d)
    return (lambda x, y, z: c * np.sin(y) + d), Hints(abs(c), 0.0, -abs(c), abs(c) + abs(d))


def _const(c=0.0):
    c = float(c)
    return (lambda x, y, z: c + 0.0 * y), Hints(0.0, 0.0, 0.0, abs(c))


def _affine(c0=0.0, cx=0.0, cy=0.0, cz=0.0):
    c0, cx, cy, cz = map(float, (c0, cx, cy, cz))
    bound = abs(c0) + abs(cx) if cy == 0 and cz == 0 else None
    return (lambda x, y, z: c0 + cx * x + cy * y + cz * z), Hints(abs(cy), abs(cz), cy, bound)


def _tanh_z(c=1.0, d=0.0):
    c, d = float(c), float(d)
    return (lambda x, y, z: c * np.tanh(z) + d + 0.0 * y), Hints(0.0, abs(c), 0.0, abs(c) + abs(d))


CATALOG = {
    "linear-y": _linear_y,
    "sin-y": _sin_y,
    "const": _const,
    "affine": _affine,
    "tanh-z": _tanh_z,
}


def catalog_problem(fid, params=None, interval=(0.0, 1.0), data=None, hints=None):
    if fid not in CATALOG:
        raise KeyError(f"unknown nonlinearity {fid!r}; known: {sorted(CATALOG)}")
    F, known = CATALOG[fid](**(params or {}))
    return SemilinearProblem(F=F, interval=tuple(interval), data=data or Boundary(0.0, 0.0),
                             hints=hints or known, name=fid)


# ---------------------------------------------------------------------------
# probe-based constants

def _probe_points(a, b, radius, n, seed):
    pts = qmc.Sobol(d=6, scramble=True, seed=seed).random(n)
    x = a + (b - a) * pts[:, 0]
    y1 = radius * (2 * pts[:, 1] - 1)
    z1 = radius * (2 * pts[:, 3] - 1)
    # half the pairs are wide, half are local (difference quotients near the
    # derivative)
    wide = np.arange(n) % 2 == 0
    y2 = np.where(wide, radius * (2 * pts[:, 2] - 1), y1 + 1e-4 * radius * (2 * pts[:, 5] - 1))
    z2 = np.where(wide, radius * (2 * pts[:, 4] - 1), z1 + 1e-4 * radius * (2 * pts[:, 5] - 1))
    return x, y1, y2, z1, z2


def estimate_constants(F, interval, radius=10.0, n=16384, seed=0):
    """Empirical constants of ``F`` on ``[a,b] x [-r,r]^2``."""
    x, y1, y2, z1, z2 = _probe_points(*interval, radius, n, seed)
    f11 = F(x, y1, z1)
    dy = y1 - y2
    dz = z1 - z2
    qy = (f11 - F(x, y2, z1)) / np.where(dy == 0, 1.0, dy)
    qz = np.abs(f11 - F(x, y1, z2)) / np.where(dz == 0, 1.0, np.abs(dz))
    qy = qy[dy != 0]
    qz = qz[dz != 0]
    return {
        "k_y": float(np.max(np.abs(qy))),
        "k_z": float(np.max(qz)),
        "a_mono": float(np.min(qy)),
        "sup_F": float(np.max(np.abs(f11))),
        "sup_F_y0_growth": float(np.max(np.abs(F(x, y1, 0.0 * y1)) / (1 + np.abs(y1)))),
    }


def _lipschitz(prob, interval=None):
    k = prob.joint_lipschitz
    if k is not None:
        return k
    est = estimate_constants(prob.F, interval or prob.interval)
    return max(est["k_y"], est["k_z"])


# ---------------------------------------------------------------------------
# initial value problem

def _weighted(du, dup, S, dist, lam):
    return float(np.max((np.abs(du) + np.abs(dup)) * np.exp(S - lam * dist)))


def _choose_lambda(k, sig2_inv, e_minus, e_plus, length):
    K = 2.0 * k  # the contraction estimate is written with K/2 as Lipschitz constant

    def C(lam):
        return K / lam * sig2_inv + K / lam ** 2 * e_minus * e_plus * sig2_inv

    lam = 1.0
    while C(lam) >= 0.5:
        lam *= 2.0
        if lam * length > 700.0:
            raise IllConditioned(f"weight exp(-lambda |x|) underflows for lambda={lam}")
    return lam, C(lam)


def _ivp_core(x, S, sig2, step, k, F, x0, x1, k_lip, tol, max_iter):
    """Fixed point of the integral map on one grid (anchor index ``k``)."""
    dist = np.abs(x - x[k])
    lam, C = _choose_lambda(k_lip, float(np.max(1.0 / sig2)), float(np.max(np.exp(-S))),
                            float(np.max(np.exp(S))), float(dist.max()))
    eS = np.exp(S)
    up = x1 / eS
    u = x0 + cumulative(up, step, k)
    ratios = []
    prev = None
    change = np.inf
    for it in range(1, max_iter + 1):
        W = cumulative(2.0 * eS * F(x, u, up) / sig2, step, k)
        up_new = (W + x1) / eS
        u_new = x0 + cumulative(up_new, step, k)
        du, dup = u_new - u, up_new - up
        u, up = u_new, up_new
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(up))):
            raise NoConvergence("Picard iterates blew up", residual=np.inf, x1=x1)
        change = max(np.max(np.abs(du)), np.max(np.abs(dup)))
        wn = _weighted(du, dup, S, dist, lam)
        if prev is not None and prev > 0 and wn > 1e-300:
            ratios.append(wn / prev)
        prev = wn
        size = max(np.max(np.abs(u)), np.max(np.abs(up)))
        if change < tol * (1.0 + size):
            info = {"iterations": it, "residual": float(change), "lambda": lam,
                    "contraction_bound": C, "weighted_ratios": ratios, "lipschitz": k_lip}
            return u, up, info
    raise NoConvergence(f"no convergence after {max_iter} iterations", residual=float(change), x1=x1)


def solve_semilinear_ivp(scale, prob, interval=None, tol=1e-10, max_iter=200, lipschitz=None):
    """Solve ``L u = F(x, u, u')``, ``u(a) = x0``, ``u'(a) = x1`` by Picard iteration.

    The solution lives on the nodes of ``interval`` (default: the problem
    interval). Convergence is monitored in the weighted norm
    ``sup (|f| + |f'|) exp(Sigma - lambda |x - a|)`` with ``lambda`` the
    smallest power of two giving a contraction factor below 1/2.
    """
    data = prob.data
    if not isinstance(data, Initial):
        raise TypeError("solve_semilinear_ivp needs Initial data")
    lo, hi = interval or prob.interval
    sl = scale.restrict(lo, hi)
    k = scale.index_of(data.anchor)
    if k is None or not (sl.start <= k < sl.stop):
        raise BadAnchor(f"anchor {data.anchor} is not a node of [{lo}, {hi}]")
    k -= sl.start
    x = scale.grid[sl]
    S = scale.Sigma[sl] - scale.Sigma[sl][k]
    k_lip = lipschitz if lipschitz is not None else _lipschitz(prob, (lo, hi))
    u, up, info = _ivp_core(x, S, scale.sigma[sl] ** 2, scale.step, k, prob.F,
                            data.x0, data.x1, k_lip, tol, max_iter)
    return GridFunction(x, u, up, info)


def strong_residual(scale, F, u, anchor=None):
    """Sup-norm defect of ``u`` in the integral form of ``L u = F(x, u, u')``."""
    sl = scale.restrict(u.grid[0], u.grid[-1])
    k = 0 if anchor is None else scale.index_of(anchor) - sl.start
    S = scale.Sigma[sl] - scale.Sigma[sl][k]
    W = cumulative(2.0 * np.exp(S) * F(u.grid, u.u, u.u_prime) / scale.sigma[sl] ** 2, scale.step, k)
    up = np.exp(-S) * (W + u.u_prime[k])
    r1 = np.max(np.abs(u.u_prime - up))
    r0 = np.max(np.abs(u.u - u.u[k] - cumulative(u.u_prime, scale.step, k)))
    return float(max(r0, r1))


# ---------------------------------------------------------------------------
# first-order system form

@dataclass(eq=False)
class SystemForm:
    """``u1' = e^{-Sigma} u2``, ``u2' = 2 e^Sigma / sigma^2 F(x, u1, e^{-Sigma} u2)``."""

    scale: object
    F: Callable
    a: float
    b: float
    A: Optional[float] = None
    B: Optional[float] = None

    def rhs(self, x, u1, u2):
        S = self.scale.Sigma_at(x)
        sig2 = np.asarray(self.scale.sigma_fn(x), dtype=float) ** 2
        z = np.exp(-S) * u2
        return np.exp(-S) * u2, 2.0 * np.exp(S) / sig2 * self.F(x, u1, z)

    def from_solution(self, u):
        return u.u, np.exp(self.scale.Sigma_at(u.grid)) * u.u_prime

    def residual(self, u):
        """Sup-norm defect of ``(u, e^Sigma u')`` in integrated system form."""
        u1, u2 = self.from_solution(u)
        f1, f2 = self.rhs(u.grid, u1, u2)
        step = u.grid[1] - u.grid[0]
        r1 = u1 - u1[0] - cumulative(f1, step)
        r2 = u2 - u2[0] - cumulative(f2, step)
        res = max(np.max(np.abs(r1)), np.max(np.abs(r2)))
        if self.A is not None:
            res = max(res, abs(u1[0] - self.A), abs(u1[-1] - self.B))
        return float(res)


def to_first_order_system(scale, prob):
    a, b = prob.interval
    A = B = None
    if isinstance(prob.data, Boundary):
        A, B = prob.data.A, prob.data.B
    return SystemForm(scale, prob.F, a, b, A, B)


# ---------------------------------------------------------------------------
# affine change of variables to [0, 1]

def _transport_rep(rep, a, L, power):
    if isinstance(rep, Const):
        return Const(rep.value / L ** power)
    if isinstance(rep, PiecewiseLinear):
        return PiecewiseLinear((rep.knots - a) / L, rep.values / L ** power)
    deriv = None
    if rep.deriv is not None:
        deriv = (lambda s, d=rep.deriv: d(a + L * s) / L ** (power - 1))
    return Analytic(lambda s, f=rep.fn: f(a + L * s) / L ** power, deriv, rep.name)


def transport_to_unit(scale, prob):
    """Map a problem on ``[a, b]`` to ``[0, 1]`` via ``x = a + (b - a) s``.

    ``sigma`` scales by ``1/(b-a)``, ``beta`` by ``1/(b-a)^2``, and
    ``F~(s, w, w') = F(a + (b-a) s, w, w'/(b-a))``; then ``L~ w (s) = L u (x)``.
    """
    coeffs = scale.coeffs
    if coeffs is None:
        raise ValueError("transport needs the coefficient field behind the table")
    a, b = prob.interval
    L = b - a
    if scale.index_of(a) is None or scale.index_of(b) is None:
        raise OutOfRange("interval endpoints must be grid nodes")
    s_lo, s_hi = (-coeffs.R - a) / L, (coeffs.R - a) / L
    step = coeffs.grid_step / L
    m = round(1.0 / step)
    R = max(1.0, min(-s_lo, s_hi))
    R = np.ceil(R * m) / m
    unit = CoefficientField(_transport_rep(coeffs.sigma, a, L, 1),
                            _transport_rep(coeffs.beta, a, L, 2), R=R, grid_step=1.0 / m)
    F = prob.F
    Ft = lambda s, w, wp: F(a + L * s, w, wp / L)
    h = prob.hints
    hints = Hints(h.k_y, None if h.k_z is None else h.k_z / L, h.a_mono, h.bound)
    data = prob.data
    if isinstance(data, Initial):
        data = Initial((data.anchor - a) / L, data.x0, data.x1 * L)
    return build_scale(unit), SemilinearProblem(Ft, (0.0, 1.0), data, hints, prob.name)


def transport_back(w, a, b):
    L = b - a
    return GridFunction(a + L * w.grid, w.u.copy(), w.u_prime / L, dict(w.info))


# ---------------------------------------------------------------------------
# shooting

@dataclass(eq=False)
class Solution:
    u: GridFunction
    x1: float
    phi_samples: np.ndarray = field(default=None, repr=False)


@dataclass(eq=False)
class NoRoot:
    phi_samples: np.ndarray


@dataclass(eq=False)
class ManyRoots:
    x1: list
    phi_samples: np.ndarray = field(default=None, repr=False)


class _Shooter:
    def __init__(self, scale, prob, tol):
        a, b = prob.interval
        self.sl = scale.restrict(a, b)
        self.x = scale.grid[self.sl]
        self.S = scale.Sigma[self.sl] - scale.Sigma[self.sl][0]
        self.sig2 = scale.sigma[self.sl] ** 2
        self.step = scale.step
        self.prob = prob
        self.k_lip = _lipschitz(prob)
        self.tol = tol
        self.samples = {}

    def solve(self, x1):
        try:
            u, up, info = _ivp_core(self.x, self.S, self.sig2, self.step, 0, self.prob.F,
                                    self.prob.data.A, x1, self.k_lip, self.tol, 200)
        except NoConvergence as exc:
            raise NoConvergence(f"IVP failed inside shooting at x1={x1}: {exc}",
                                residual=exc.residual, x1=x1) from exc
        return GridFunction(self.x, u, up, info)

    def phi(self, x1):
        x1 = float(x1)
        if x1 not in self.samples:
            self.samples[x1] = float(self.solve(x1).u[-1])
        return self.samples[x1]

    def table(self):
        keys = sorted(self.samples)
        return np.array([[k, self.samples[k]] for k in keys])


def _bisect(sh, lo, hi, glo, target, root_tol):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = sh.phi(mid) - target
        if abs(gm) < root_tol or mid in (lo, hi):
            return mid
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scan(sh, S, target, root_tol, n):
    xs = np.linspace(-S, S, n)
    g = np.array([sh.phi(v) - target for v in xs])
    zero = np.abs(g) < root_tol
    roots = [float(v) for v in xs[zero]]
    for i in range(n - 1):
        if not zero[i] and not zero[i + 1] and np.sign(g[i]) != np.sign(g[i + 1]):
            roots.append(float(_bisect(sh, xs[i], xs[i + 1], g[i], target, root_tol)))
    return sorted(roots)


def _refined(scale, a, b, min_points):
    while scale.coeffs is not None:
        sl = scale.restrict(a, b)
        if sl.stop - sl.start >= min_points:
            break
        scale = build_scale(scale.coeffs.with_step(scale.step / 2))
    return scale


def _subsample(u, grid):
    factor = round((grid[1] - grid[0]) / (u.grid[1] - u.grid[0]))
    if factor <= 1:
        return u
    return GridFunction(u.grid[::factor], u.u[::factor], u.u_prime[::factor], u.info)


def solve_bvp_shooting(scale, prob, root_tol=1e-8, max_slope=1e6, n_scan=256,
                       tol=1e-13, normalize=True, min_points=4097):
    """Dirichlet problem by shooting on the initial slope.

    ``Phi(x1) = u^{x1}(b)`` for the initial value solution with
    ``u(a) = A``, ``u'(a) = x1``. Returns :class:`Solution`,
    :class:`NoRoot` (bracket search up to ``|x1| <= max_slope`` failed) or
    :class:`ManyRoots` (at least two roots on the ``n_scan`` sample scan).

    The initial value problems run on a table refined until ``[a, b]`` holds
    ``min_points`` nodes, since ``|Phi|`` has to stay resolved for slopes of
    order ``max_slope``; the solution is returned on the nodes of ``scale``.
    """
    if not isinstance(prob.data, Boundary):
        raise TypeError("solve_bvp_shooting needs Boundary data")
    a, b = prob.interval
    if normalize and (a, b) != (0.0, 1.0):
        unit_scale, unit_prob = transport_to_unit(scale, prob)
        res = solve_bvp_shooting(unit_scale, unit_prob, root_tol, max_slope, n_scan, tol, False,
                                 min_points)
        L = b - a
        if isinstance(res, Solution):
            return Solution(transport_back(res.u, a, b), res.x1 / L, res.phi_samples)
        if isinstance(res, ManyRoots):
            return ManyRoots([r / L for r in res.x1], res.phi_samples)
        return res
    coarse = scale.grid[scale.restrict(a, b)]
    sh = _Shooter(_refined(scale, a, b, min_points), prob, tol)
    B = prob.data.B
    S = 1.0
    while True:
        glo, ghi = sh.phi(-S) - B, sh.phi(S) - B
        if abs(glo) < root_tol or abs(ghi) < root_tol or np.sign(glo) != np.sign(ghi):
            break
        if S >= max_slope:
            _scan(sh, S, B, root_tol, n_scan)
            return NoRoot(sh.table())
        S = min(2.0 * S, max_slope)
    roots = _scan(sh, S, B, root_tol, n_scan)
    if len(roots) >= 2:
        return ManyRoots(roots, sh.table())
    if not roots:
        roots = [_bisect(sh, -S, S, glo, B, root_tol)]
    x1 = roots[0]
    u = sh.solve(x1)
    if abs(u.u[-1] - B) >= root_tol:
        raise NoConvergence(f"bisection stalled at |Phi - B| = {abs(u.u[-1] - B):.3g}", x1=x1)
    u.u[-1] = B
    return Solution(_subsample(u, coarse), x1, sh.table())


def shooting_solution(scale, prob, x1, tol=1e-13, min_points=4097):
    """Initial value solution used by the shooting map for slope ``x1``."""
    a, b = prob.interval
    coarse = scale.grid[scale.restrict(a, b)]
    return _subsample(_Shooter(_refined(scale, a, b, min_points), prob, tol).solve(x1), coarse)


# ---------------------------------------------------------------------------
# kernel fixed point

def solve_bvp_picard(scale, prob, force=False, tol=1e-9, max_iter=500):
    """Fixed point of ``T u = f + int K F(y, u, u') dy`` on [0, 1].

    Requires the joint Lipschitz constant ``k`` of ``F`` to be below the
    inverse kernel bound unless ``force`` is set.
    """
    if tuple(prob.interval) != (0.0, 1.0):
        raise OutOfRange("the kernel fixed point is only available on [0, 1]")
    if not isinstance(prob.data, Boundary):
        raise TypeError("solve_bvp_picard needs Boundary data")
    k = _lipschitz(prob)
    bound = kernel_bound(scale)
    threshold = 1.0 / bound
    if k >= threshold and not force:
        raise ContractionNotGuaranteed(
            f"Lipschitz constant {k:.4g} >= 1/kernel_bound = {threshold:.4g}", k=k, threshold=threshold)
    A, B = prob.data.A, prob.data.B
    u = boundary_interpolant(scale, A, B)
    change = np.inf
    for it in range(1, max_iter + 1):
        nxt = solve_linear_bvp(scale, prob.F(u.grid, u.u, u.u_prime), A, B)
        change = max(np.max(np.abs(nxt.u - u.u)), np.max(np.abs(nxt.u_prime - u.u_prime)))
        u = nxt
        if not np.isfinite(change) or change > 1e100:
            break
        if change < tol:
            u.info.update(iterations=it, residual=float(change), lipschitz=k, kernel_bound=bound)
            return u
    raise NoConvergence(f"kernel fixed point did not converge (last change {change:.3g})",
                        residual=float(change))


# ---------------------------------------------------------------------------
# hypothesis diagnostics

EMPIRICAL = "empirical on probe set - not a proof"


@dataclass
class ConditionsReport:
    a_mono: float
    b_lipschitz_z: float
    k_lipschitz_y: float
    k_joint: float
    gamma: float
    monotone: bool
    bounded: bool
    linear_growth: bool
    lipschitz_z_global: bool
    lipschitz_joint_global: bool
    unique_monotone: bool
    route_a: bool
    route_b: bool
    route_c: Optional[bool]
    kernel_bound: Optional[float]
    uniqueness_class_gamma_nonpositive: bool
    hints_consistent: dict
    n_probes: int
    label: str = EMPIRICAL

    def to_dict(self):
        return dict(self.__dict__)


def check_uniqueness_conditions(prob, scale=None, radius=10.0, n_probes=16384, seed=0, slack=1e-9):
    """Probe ``F`` for monotonicity, Lipschitz constants and growth."""
    near = estimate_constants(prob.F, prob.interval, radius, n_probes, seed)
    far = estimate_constants(prob.F, prob.interval, 10 * radius, n_probes, seed + 1)
    a_mono = near["a_mono"]
    b = near["k_z"]
    k = max(near["k_y"], near["k_z"])
    tol = slack * (1 + abs(a_mono))
    monotone = a_mono >= -tol
    bounded = far["sup_F"] <= 1.5 * near["sup_F"] + 1e-12
    linear_growth = far["sup_F_y0_growth"] <= 2.0 * near["sup_F_y0_growth"] + 1e-12
    lip_z = far["k_z"] <= 1.5 * near["k_z"] + 1e-12
    lip_joint = max(far["k_y"], far["k_z"]) <= 1.5 * k + 1e-12
    gamma = b * b - 2.0 * a_mono
    kb = None
    route_c = None
    if scale is not None and tuple(prob.interval) == (0.0, 1.0):
        kb = kernel_bound(scale)
        route_c = bool(lip_joint and k < 1.0 / kb)
    hints = {}
    for name, est in (("k_y", near["k_y"]), ("k_z", near["k_z"]), ("bound", near["sup_F"])):
        declared = getattr(prob.hints, name)
        if declared is not None:
            hints[name] = bool(est <= declared * (1 + 1e-9) + 1e-12)
    if prob.hints.a_mono is not None:
        hints["a_mono"] = bool(a_mono >= prob.hints.a_mono - tol)
    return ConditionsReport(
        a_mono=a_mono, b_lipschitz_z=b, k_lipschitz_y=near["k_y"], k_joint=k, gamma=gamma,
        monotone=bool(monotone), bounded=bool(bounded), linear_growth=bool(linear_growth),
        lipschitz_z_global=bool(lip_z), lipschitz_joint_global=bool(lip_joint),
        unique_monotone=bool(monotone and lip_z),
        route_a=bool(linear_growth and monotone and lip_z),
        route_b=bool(bounded and lip_joint),
        route_c=route_c, kernel_bound=kb,
        uniqueness_class_gamma_nonpositive=bool(gamma <= tol and linear_growth and lip_z),
        hints_consistent=hints, n_probes=n_probes)
