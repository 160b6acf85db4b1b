"""Periodic orbits, expansion tests, local inverse branches and 1D unstable sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._newton import RESIDUAL_TOL, batched_newton
from .errors import (BranchDomainError, ConvergenceError, NotExpandingError,
                     PreconditionError, SingularMatrixError, SnapbackError)
from .maps import MapDefinition, iterate_with_jacobian

NEWTON_BUDGET = 50
DET_TOL = 1e-10
UNBOUNDED = 1e12
BASIN_PROBES = 64
BASIN_SAFETY = 0.9


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    points: np.ndarray
    period: int
    multiplier_matrix: np.ndarray
    expansion_margin: float
    basin_radius: float
    map: MapDefinition = field(repr=False)

    @property
    def multipliers(self) -> np.ndarray:
        return np.linalg.eigvals(self.multiplier_matrix)

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.multiplier_matrix, compute_uv=False)

    def repellor_path(self) -> np.ndarray:
        """Point path for the inverse branch of ``f^k`` fixing ``points[0]``."""
        k = self.period
        return np.array([self.points[0]] + [self.points[(k - i) % k] for i in range(1, k + 1)])

    def branch(self, radius: float, n_samples: int = 100) -> "InverseBranch":
        return branch_from_path(self.map, self.repellor_path(), radius, n_samples=n_samples)

    def distance(self, X) -> np.ndarray:
        """Distance from each row of ``X`` to the nearest orbit point."""
        X = np.atleast_2d(X)
        return np.min(np.stack([self.map.dist(X, q) for q in self.points]), axis=0)


# -- ball sampling ------------------------------------------------------------------

def ball_samples(m: MapDefinition, center, radius: float, n: int,
                 boundary: bool = False) -> np.ndarray:
    """Deterministic samples of the closed ball (or its boundary in 2D)."""
    c = np.asarray(center, dtype=float).reshape(-1)
    d = c.size
    if d == 1:
        pts = c + np.linspace(-radius, radius, n)[:, None]
    elif d == 2:
        k = np.arange(n)
        ang = k * math.pi * (3.0 - math.sqrt(5.0))
        rad = np.full(n, radius) if boundary else radius * np.sqrt((k + 0.5) / n)
        if boundary:
            ang = 2 * math.pi * k / n
        pts = c + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    else:
        rng = np.random.default_rng(0)
        v = rng.normal(size=(n, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        rr = np.ones(n) if boundary else rng.random(n) ** (1.0 / d)
        pts = c + radius * rr[:, None] * v
    return m.reduce(pts)


# -- inverse branches ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InverseBranch:
    """A local right inverse of ``f^power`` on ``B_radius(base_point)``.

    ``path`` lists the orbit the branch follows backwards: ``path[0]`` is the
    base point and ``f(path[i+1]) == path[i]``.  Evaluation runs Newton along
    each step, seeded by continuation from the recorded branch points.
    """

    map: MapDefinition = field(repr=False)
    path: np.ndarray
    radius: float
    contraction: float
    residual: float
    n_sub: int = 4
    min_contraction: float = 0.0

    @property
    def base_point(self) -> np.ndarray:
        return self.path[0]

    @property
    def branch_value(self) -> np.ndarray:
        return self.path[-1]

    @property
    def power(self) -> int:
        return len(self.path) - 1

    def solve(self, Y, strict: bool = True) -> np.ndarray:
        """Branch values for each row of ``Y``.  With ``strict=False`` rows
        outside the branch domain come back as NaN instead of raising."""
        return solve_chain(self.map, self.path, np.atleast_2d(Y), n_sub=self.n_sub,
                           strict=strict)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            return self.solve(y)
        return self.solve(y.reshape(1, -1))[0]


def solve_chain(m: MapDefinition, path: np.ndarray, Y: np.ndarray, n_sub: int = 4,
                det_tol: float = DET_TOL, strict: bool = True) -> np.ndarray:
    """Pull every row of ``Y`` back along ``path`` (see :class:`InverseBranch`)."""
    Z = np.array(Y, dtype=float)
    failed = np.zeros(len(Z), dtype=bool)
    for i in range(len(path) - 1):
        base, value = path[i], path[i + 1]
        sign0 = np.sign(np.linalg.det(m.jacobians(value[None])[0]))
        delta = m.diff(Z, base)
        W = np.tile(value, (Z.shape[0], 1))
        for s in np.linspace(0.0, 1.0, n_sub + 1)[1:]:
            T = m.reduce(base + s * delta)
            W, res, det = batched_newton(m, T, W, max_iter=30)
            bad = (res > RESIDUAL_TOL) | ~(np.sign(det) == sign0) | (np.abs(det) < det_tol)
            if not strict:
                failed |= bad
                W[failed] = value
                continue
            if np.any(bad):
                j = int(np.flatnonzero(bad)[0])
                raise BranchDomainError(
                    "inverse branch cannot be continued (critical set or no preimage)",
                    step=i, target=T[j].tolist(), residual=float(res[j]),
                    det=None if not np.isfinite(det[j]) else float(det[j]))
        Z = W
    Z[failed] = np.nan
    return Z


def _forward_jacobian(m: MapDefinition, Z: np.ndarray, power: int) -> np.ndarray:
    J = np.broadcast_to(np.eye(m.dimension), (Z.shape[0], m.dimension, m.dimension)).copy()
    X = Z
    for _ in range(power):
        J = m.jacobians(X) @ J
        X = m.eval(X)
    return J


def branch_from_path(m: MapDefinition, path, radius: float, n_samples: int = 100,
                     n_sub: int = 4, center=None) -> InverseBranch:
    """Build and verify a branch chain on the ball of ``radius`` about
    ``center`` (default ``path[0]``)."""
    path = np.atleast_2d(np.asarray(path, dtype=float))
    c = path[0] if center is None else np.asarray(center, dtype=float)
    Y = ball_samples(m, c, radius, n_samples)
    if m.dimension == 2:
        Y = np.vstack([Y, ball_samples(m, c, radius, max(8, n_samples // 4), boundary=True)])
    Z = solve_chain(m, path, Y, n_sub=n_sub)
    F = Z
    for _ in range(len(path) - 1):
        F = m.eval(F)
    residual = float(np.max(m.dist(F, Y)))
    J = _forward_jacobian(m, Z, len(path) - 1)
    sv = np.linalg.svd(J, compute_uv=False)
    lip = float(np.max(1.0 / sv[:, -1]))
    # pairwise check guards against a Jacobian bound taken on the wrong sheet
    dy = m.dist(Y[1:], Y[:-1])
    dz = m.dist(Z[1:], Z[:-1])
    ok = dy > 0
    if np.any(ok):
        lip = max(lip, float(np.max(dz[ok] / dy[ok])))
    return InverseBranch(m, path, float(radius), lip, residual, n_sub,
                         float(np.min(1.0 / sv[:, 0])))


def inverse_branch(m: MapDefinition, x, preimage_guess, radius: float,
                   n_samples: int = 100) -> InverseBranch:
    """Local inverse branch ``phi`` of ``f`` near ``x`` with ``phi(x) ~ preimage_guess``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a0 = np.atleast_1d(np.asarray(preimage_guess, dtype=float))
    a, res, det = batched_newton(m, x[None], a0[None], max_iter=NEWTON_BUDGET)
    if res[0] > RESIDUAL_TOL:
        raise ConvergenceError("preimage guess did not converge", guess=a0.tolist(),
                               residual=float(res[0]))
    if not abs(det[0]) > DET_TOL:
        raise BranchDomainError("preimage is a critical point", point=a[0].tolist())
    return branch_from_path(m, np.array([x, a[0]]), radius, n_samples=n_samples)


# -- periodic orbits ----------------------------------------------------------------

def find_periodic(m: MapDefinition, guess, k: int = 1, compute_basin: bool = True) -> PeriodicOrbit:
    """Newton iteration on ``f^k(x) - x``."""
    if k < 1:
        raise ValueError("period must be >= 1")
    x = m.reduce(np.atleast_1d(np.asarray(guess, dtype=float)).copy())
    d = m.dimension
    for _ in range(NEWTON_BUDGET + 1):
        y, J = iterate_with_jacobian(m, x, k)
        r = m.diff(y, x)
        if np.linalg.norm(r) < RESIDUAL_TOL:
            break
        A = J - np.eye(d)
        if abs(np.linalg.det(A)) < 1e-14:
            raise SingularMatrixError("singular Newton matrix Df^k - I", point=x.tolist(), period=k)
        x = m.reduce(x - np.linalg.solve(A, r))
        if not np.all(np.isfinite(x)):
            raise ConvergenceError("Newton iteration diverged", guess=np.atleast_1d(guess).tolist())
    else:
        raise ConvergenceError("no convergence within Newton budget",
                               guess=np.atleast_1d(guess).tolist(), period=k,
                               residual=float(np.linalg.norm(r)))
    pts = [x]
    for _ in range(k - 1):
        pts.append(m(pts[-1]))
    pts = np.array(pts)
    if k > 1:
        for i in range(k):
            for j in range(i + 1, k):
                if m.dist(pts[i], pts[j]) <= 1e-8:
                    raise ConvergenceError("converged to an orbit of lower period",
                                           point=x.tolist(), period=k)
    _, M = iterate_with_jacobian(m, x, k)
    smin = float(np.linalg.svd(M, compute_uv=False)[-1])
    orbit = PeriodicOrbit(pts, k, M, smin - 1.0, 0.0, m)
    if compute_basin and orbit.expansion_margin > 0:
        orbit = PeriodicOrbit(pts, k, M, smin - 1.0, basin_radius(m, orbit), m)
    return orbit


def is_expanding(orbit: PeriodicOrbit) -> tuple[bool, float]:
    """``(smallest singular value of Df^k > 1, that value minus 1)``."""
    margin = float(orbit.expansion_margin)
    return margin > 0, margin


def basin_radius(m: MapDefinition, orbit: PeriodicOrbit, r_max: float = 1.0,
                 probes: int = BASIN_PROBES, safety: float = BASIN_SAFETY) -> float:
    """Largest ``r = r_max / 2^j`` whose repellor branch maps ``B_r`` into
    ``B_{safety r}`` with sampled contraction below one."""
    if orbit.expansion_margin <= 0:
        raise NotExpandingError("orbit is not expanding", margin=orbit.expansion_margin)
    p = orbit.points[0]
    path = orbit.repellor_path()
    r = min(r_max, 0.999 * math.pi) if m.is_circle else r_max
    for _ in range(60):
        try:
            br = branch_from_path(m, path, r, n_samples=probes)
        except BranchDomainError:
            r *= 0.5
            continue
        Y = ball_samples(m, p, r, probes)
        if m.dimension > 1:
            Y = np.vstack([Y, ball_samples(m, p, r, probes, boundary=True)])
        Z = br.solve(Y)
        if br.contraction < 1.0 and np.max(m.dist(Z, p)) <= safety * r:
            return float(r)
        r *= 0.5
    raise SnapbackError("could not certify any basin radius", point=p.tolist())


# -- unstable sets in one dimension -------------------------------------------------------

@dataclass(frozen=True)
class ExtendedInterval:
    """Closed interval of the two-point compactified line."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("lower must not exceed upper")

    def distance(self, other: "ExtendedInterval") -> float:
        """Product metric of the compactified endpoints (via arctan)."""
        return max(abs(math.atan(self.lower) - math.atan(other.lower)),
                   abs(math.atan(self.upper) - math.atan(other.upper)))

    def contains(self, x, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol

    @property
    def boundary(self) -> list[float]:
        return [v for v in dict.fromkeys((self.lower, self.upper)) if math.isfinite(v)]

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


def _critical_points_1d(m: MapDefinition, a: float, b: float) -> list[float]:
    if "critical_points" in m.meta:
        return [c for c in m.meta["critical_points"] if a <= c <= b]
    lo, hi = max(a, -1e3), min(b, 1e3)
    if not lo < hi:
        return []
    xs = np.linspace(lo, hi, 4001)
    dfs = m.jacobians(xs[:, None])[:, 0, 0]
    out = []
    for i in np.flatnonzero(np.sign(dfs[:-1]) * np.sign(dfs[1:]) <= 0):
        g = lambda t: m.jacobians(np.array([[t]]))[0, 0, 0]
        if dfs[i] == 0:
            out.append(float(xs[i]))
        elif dfs[i + 1] != 0:
            out.append(brentq(g, xs[i], xs[i + 1], xtol=1e-15))
    return out


def _image_1d(m: MapDefinition, a: float, b: float) -> tuple[float, float]:
    probe = lambda v: math.copysign(UNBOUNDED, v) if math.isinf(v) else v
    cands = [probe(a), probe(b)] + _critical_points_1d(m, a, b)
    vals = m.eval(np.array(cands, dtype=float)[:, None])[:, 0]
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if lo < -UNBOUNDED or not math.isfinite(lo):
        lo = -math.inf
    if hi > UNBOUNDED or not math.isfinite(hi):
        hi = math.inf
    return lo, hi


def unstable_interval_1d(m: MapDefinition, p, budget: int = 200, radius: float | None = None,
                         tol: float = 1e-8) -> ExtendedInterval:
    """Closure of the union of ``f^n(B_r(p))``, ``n <= budget``."""
    if m.dimension != 1 or m.is_circle:
        raise PreconditionError("unstable_interval_1d needs a map of the real line", map=m.name)
    p = float(np.atleast_1d(p)[0])
    if radius is None:
        radius = find_periodic(m, [p], 1).basin_radius
        if radius <= 0:
            raise NotExpandingError("p is not a repellor", point=p)
    a, b = p - radius, p + radius
    for _ in range(budget):
        fa, fb = _image_1d(m, a, b)
        na, nb = min(a, fa), max(b, fb)
        same = lambda u, v: u == v or abs(u - v) < tol
        if same(na, a) and same(nb, b):
            a, b = na, nb
            break
        a, b = na, nb
    return ExtendedInterval(a, b)
