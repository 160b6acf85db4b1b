"""Homoclinic orbits to repellors: preimage trees, backward tails, fold tests.

Orbit indexing follows the convention ``f(x_{n+1}) = x_n``: applying ``f``
lowers the index.  In the arrays below that means ``segment[0]`` is the
point furthest back, ``f(segment[i]) == segment[i+1]`` and ``segment[-1]``
lies on the repellor; ``tail[0]`` is a preimage of ``segment[0]``,
``tail[1]`` a preimage of ``tail[0]`` and so on towards the repellor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ._newton import RESIDUAL_TOL, batched_newton
from .errors import NotFold, PreconditionError
from .maps import MapDefinition, TWO_PI
from .repellor import (ExtendedInterval, InverseBranch, PeriodicOrbit, branch_from_path,
                       find_periodic, unstable_interval_1d)

log = logging.getLogger(__name__)

CRITICAL_TOL = 1e-8
DEDUP_TOL = 1e-7
SEEDS_PER_DIM = 64
TAIL_MAX = 40
TAIL_BEAM = 8
# below this |det Df| a converged preimage is re-solved on the critical set
NEAR_CRITICAL = 1e-3


# -- small geometry helpers -------------------------------------------------------------

def dedupe(m: MapDefinition, X: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """Sorted representatives of ``X`` merged at ``tol`` (max norm)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return X.reshape(0, m.dimension)
    return X[_dedupe_index(m, X, tol)]


def _wrap_circle(m: MapDefinition, X: np.ndarray) -> np.ndarray:
    return np.mod(X, TWO_PI) if m.phase_space == "circle" else X


def _dedupe_index(m: MapDefinition, X: np.ndarray, tol: float, owner=None) -> np.ndarray:
    """Indices of one representative per ``tol``-cluster, sorted by (owner, X)."""
    Y = m.reduce(X)
    if owner is not None:
        Y = np.column_stack([owner.astype(float), Y])
    if m.is_circle:
        Y = np.where(Y == TWO_PI, 0.0, Y)
    # many seeds converge to the same root: drop repeats on a fine grid first
    _, cand = np.unique(np.floor(Y / (tol / 4)), axis=0, return_index=True)
    Y = Y[cand]
    box = None
    if m.is_circle:
        box = [TWO_PI] if owner is None else [float(owner.max()) + 2.0, TWO_PI]
    tree = cKDTree(Y, boxsize=box)
    pairs = tree.query_pairs(tol, p=np.inf, output_type="ndarray")
    n = Y.shape[0]
    if pairs.size:
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, label = connected_components(graph, directed=False)
        _, first = np.unique(label, return_index=True)
    else:
        first = np.arange(n)
    keys = Y[first]
    order = np.lexsort(keys.T[::-1])
    return cand[first[order]]


def region_grid(region: np.ndarray, per_dim: int) -> np.ndarray:
    region = np.asarray(region, dtype=float)
    axes = [lo + (np.arange(per_dim) + 0.5) * (hi - lo) / per_dim for lo, hi in region]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def in_region(m: MapDefinition, X: np.ndarray, region: np.ndarray, pad: float = 1e-9) -> np.ndarray:
    region = np.asarray(region, dtype=float)
    if m.is_circle and np.allclose(region[0], [0.0, TWO_PI]):
        return np.ones(X.shape[0], dtype=bool)
    return np.all((X >= region[:, 0] - pad) & (X <= region[:, 1] + pad), axis=-1)


def abs_det(m: MapDefinition, X: np.ndarray) -> np.ndarray:
    return np.abs(np.linalg.det(m.jacobians(np.atleast_2d(X))))


def _det_gradient(m: MapDefinition, X: np.ndarray, h: float = 1e-6) -> np.ndarray:
    X = np.atleast_2d(X)
    G = np.empty_like(X)
    for j in range(m.dimension):
        E = np.zeros(m.dimension)
        E[j] = h
        G[:, j] = (np.linalg.det(m.jacobians(X + E)) - np.linalg.det(m.jacobians(X - E))) / (2 * h)
    return G


def refine_to_critical(m: MapDefinition, x, max_iter: int = 30) -> np.ndarray:
    """Newton along the gradient of ``det Df`` onto the critical set."""
    c = np.array(x, dtype=float).reshape(1, -1)
    for _ in range(max_iter):
        det = np.linalg.det(m.jacobians(c))[0]
        if abs(det) < 1e-15:
            break
        g = _det_gradient(m, c)[0]
        gg = float(g @ g)
        if gg < 1e-24:
            break
        c = c - det * g / gg
    return c[0]


# -- preimages --------------------------------------------------------------------------

def preimage_candidates(m: MapDefinition, targets: np.ndarray, region=None,
                        seeds_per_dim: int = SEEDS_PER_DIM):
    """All preimages in ``region`` of every row of ``targets``.

    Returns ``(points, owner)`` with ``owner[i]`` the target row of
    ``points[i]``; duplicates per target are merged at ``DEDUP_TOL``.
    """
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    region = m.domain if region is None else np.asarray(region, dtype=float).reshape(m.dimension, 2)
    seeds = region_grid(region, seeds_per_dim)
    n, s = T.shape[0], seeds.shape[0]
    X0 = np.tile(seeds, (n, 1))
    TT = np.repeat(T, s, axis=0)
    owner = np.repeat(np.arange(n), s)
    span = float(np.max(region[:, 1] - region[:, 0]))
    X, res, det = batched_newton(m, TT, X0, max_step=span / 4)
    ok = (res <= RESIDUAL_TOL) & in_region(m, X, region) & m.in_domain(X)
    X, owner, det, TT = X[ok], owner[ok], det[ok], TT[ok]
    near = np.flatnonzero(np.abs(det) < NEAR_CRITICAL)
    for i in near:
        c = refine_to_critical(m, X[i])
        if (np.max(np.abs(m.diff(c, X[i]))) < 1e-3
                and m.dist(m(c), TT[i]) <= RESIDUAL_TOL):
            X[i] = m.reduce(c)
    if X.shape[0] == 0:
        return np.empty((0, m.dimension)), np.empty(0, dtype=int)
    keep = _dedupe_index(m, X, DEDUP_TOL, owner)
    return X[keep], owner[keep]


def preimages(m: MapDefinition, target, region=None, seeds_per_dim: int = SEEDS_PER_DIM) -> np.ndarray:
    P, _ = preimage_candidates(m, np.atleast_2d(target), region, seeds_per_dim)
    return P


@dataclass
class PreimageTree:
    """Levels of ``f^{-n}(gamma)``; level ``n`` holds points first reaching the
    repellor after exactly ``n`` steps.  ``parents[n][i]`` indexes level ``n-1``."""

    levels: list[np.ndarray]
    parents: list[np.ndarray]

    def segment(self, level: int, index: int) -> np.ndarray:
        pts = []
        for n in range(level, -1, -1):
            pts.append(self.levels[n][index])
            if n:
                index = self.parents[n][index]
        return np.array(pts)

    def all_points(self) -> np.ndarray:
        return np.vstack(self.levels)


def preimage_tree(m: MapDefinition, repellor: PeriodicOrbit, depth: int, region=None,
                  seeds_per_dim: int = SEEDS_PER_DIM) -> PreimageTree:
    levels = [np.array(repellor.points, dtype=float)]
    parents = [np.empty(0, dtype=int)]
    for _ in range(depth):
        prev = levels[-1]
        if prev.shape[0] == 0:
            levels.append(prev.copy())
            parents.append(np.empty(0, dtype=int))
            continue
        P, own = preimage_candidates(m, prev, region, seeds_per_dim)
        if P.shape[0]:
            keep = repellor.distance(P) > DEDUP_TOL
            P, own = P[keep], own[keep]
        levels.append(P)
        parents.append(own)
    return PreimageTree(levels, parents)


# -- backward tails ------------------------------------------------------------------------

def certify_tails(m: MapDefinition, repellor: PeriodicOrbit, X: np.ndarray,
                  max_len: int = TAIL_MAX, region=None, seeds_per_dim: int = SEEDS_PER_DIM,
                  beam: int = TAIL_BEAM) -> list[Optional[np.ndarray]]:
    """For each row find a preimage chain ending in the repellor's basin ball.

    A greedy pass (closest preimage to the repellor) runs for all rows at once;
    rows it fails on get a beam search.  Returns the chain (possibly empty if
    the point already sits in the ball) or ``None``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = repellor.basin_radius
    n = X.shape[0]
    tails: list[list[np.ndarray]] = [[] for _ in range(n)]
    done = repellor.distance(X) < r if n else np.zeros(0, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    cur = X.copy()
    for _ in range(max_len):
        active = np.flatnonzero(~done & ~failed)
        if active.size == 0:
            break
        P, own = preimage_candidates(m, cur[active], region, seeds_per_dim)
        regular = abs_det(m, P) > CRITICAL_TOL if P.shape[0] else np.zeros(0, bool)
        P, own = P[regular], own[regular]
        dist = repellor.distance(P) if P.shape[0] else np.zeros(0)
        best = np.full(active.size, -1)
        bestd = np.full(active.size, np.inf)
        if P.shape[0]:
            order = np.lexsort((dist, own))
            owners, first = np.unique(own[order], return_index=True)
            best[owners] = order[first]
            bestd[owners] = dist[order[first]]
        for k, row in enumerate(active):
            if best[k] < 0:
                failed[row] = True
                continue
            cur[row] = P[best[k]]
            tails[row].append(P[best[k]].copy())
            if bestd[k] < r:
                done[row] = True
    out: list[Optional[np.ndarray]] = []
    for i in range(n):
        if done[i]:
            out.append(np.array(tails[i]).reshape(-1, m.dimension))
        else:
            out.append(_beam_tail(m, repellor, X[i], max_len, region, seeds_per_dim, beam))
    return out


def _beam_tail(m, repellor, x, max_len, region, seeds_per_dim, beam):
    r = repellor.basin_radius
    frontier = [(x, [])]
    for _ in range(max_len):
        pts = np.array([f[0] for f in frontier])
        P, own = preimage_candidates(m, pts, region, seeds_per_dim)
        if P.shape[0] == 0:
            return None
        keep = abs_det(m, P) > CRITICAL_TOL
        P, own = P[keep], own[keep]
        if P.shape[0] == 0:
            return None
        dist = repellor.distance(P)
        order = np.argsort(dist, kind="stable")[:beam]
        frontier = [(P[i], frontier[own[i]][1] + [P[i]]) for i in order]
        if dist[order[0]] < r:
            return np.array(frontier[0][1]).reshape(-1, m.dimension)
    return None


# -- homoclinic orbits ---------------------------------------------------------------------

@dataclass(eq=False)
class HomoclinicOrbit:
    segment: np.ndarray
    tail: np.ndarray
    tail_branch: InverseBranch = field(repr=False)
    classification: str
    criticality: np.ndarray
    map: MapDefinition = field(repr=False)

    @property
    def point(self) -> np.ndarray:
        """The orbit point not on the repellor that starts the landing segment."""
        return self.segment[0]

    @property
    def min_abs_det(self) -> float:
        return float(np.min(self.criticality))

    @property
    def tail_contraction(self) -> float:
        return float(self.tail_branch.contraction)

    def extended_tail(self, extra: int = 10) -> np.ndarray:
        """Tail continued by the repellor branch for ``extra`` more points."""
        pts = [p for p in self.tail]
        last = self.tail[-1] if len(self.tail) else self.segment[0]
        for _ in range(extra):
            last = self.tail_branch(last)
            pts.append(last)
        return np.array(pts).reshape(-1, self.map.dimension)

    def as_dict(self) -> dict:
        return {
            "segment": self.segment.tolist(),
            "tail": self.tail.tolist(),
            "classification": self.classification,
            "min_abs_det": self.min_abs_det,
            "tail_contraction": self.tail_contraction,
        }


class SearchResult(list):
    """List of :class:`HomoclinicOrbit`; ``uncertified`` keeps landing points
    whose backward tail could not be certified at the configured length."""

    def __init__(self, orbits=(), uncertified=None):
        super().__init__(orbits)
        self.uncertified = [] if uncertified is None else uncertified


def _tail_branch(repellor: PeriodicOrbit, near: np.ndarray) -> InverseBranch:
    m = repellor.map
    k = repellor.period
    i = int(np.argmin([m.dist(near, q) for q in repellor.points]))
    path = np.array([repellor.points[(i - j) % k] for j in range(k + 1)])
    return branch_from_path(m, path, repellor.basin_radius, n_samples=32)


def _make_orbit(m, repellor, segment, tail, tol, branch_cache) -> HomoclinicOrbit:
    near = tail[-1] if len(tail) else segment[0]
    i = int(np.argmin([m.dist(near, q) for q in repellor.points]))
    if i not in branch_cache:
        branch_cache[i] = _tail_branch(repellor, repellor.points[i])
    br = branch_cache[i]
    pts = np.vstack([segment, tail]) if len(tail) else segment
    crit = abs_det(m, pts)
    cls = "Critical" if np.min(crit) < tol else "Regular"
    return HomoclinicOrbit(segment, tail, br, cls, crit, m)


def search_homoclinic(m: MapDefinition, repellor: PeriodicOrbit, depth: int, region=None,
                      seeds_per_dim: int = SEEDS_PER_DIM, tail_max: int = TAIL_MAX,
                      tol: float = CRITICAL_TOL, solve_region=None) -> SearchResult:
    """Points ``x`` in ``region`` with ``f^n(x)`` on the repellor, ``1 <= n <= depth``,
    that carry a certified backward tail.

    Preimages are solved over ``solve_region`` (default: the map's domain
    box); only the returned landing points are restricted to ``region``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if repellor.expansion_margin <= 0:
        raise PreconditionError("repellor is not expanding", margin=repellor.expansion_margin)
    region = m.domain if region is None else np.asarray(region, dtype=float).reshape(m.dimension, 2)
    tree = preimage_tree(m, repellor, depth, solve_region, seeds_per_dim)
    cand = []
    for n in range(1, depth + 1):
        L = tree.levels[n]
        if L.shape[0] == 0:
            continue
        for i in np.flatnonzero(in_region(m, L, region)):
            cand.append((n, i))
    if not cand:
        return SearchResult()
    starts = np.array([tree.levels[n][i] for n, i in cand])
    tails = certify_tails(m, repellor, starts, tail_max, solve_region, seeds_per_dim)
    orbits, uncertified = [], []
    cache: dict = {}
    for (n, i), tail in zip(cand, tails):
        seg = tree.segment(n, i)
        if tail is None:
            uncertified.append(seg[0])
            continue
        orbits.append(_make_orbit(m, repellor, seg, tail, tol, cache))
    if uncertified:
        log.warning("%d landing point(s) without a certified tail at length %d",
                    len(uncertified), tail_max)
    orbits.sort(key=lambda o: (len(o.segment), tuple(o.segment[0])))
    return SearchResult(orbits, uncertified)


def regular_orbit_exists(m: MapDefinition, repellor: PeriodicOrbit, depth: int, region=None,
                         seeds_per_dim: int = SEEDS_PER_DIM, tail_max: int = TAIL_MAX,
                         tol: float = CRITICAL_TOL) -> bool:
    """Early-exit form of :func:`search_homoclinic` for "some Regular orbit
    lands within ``depth`` steps"."""
    region = m.domain if region is None else np.asarray(region, dtype=float).reshape(m.dimension, 2)
    level = np.array(repellor.points, dtype=float)
    level = level[abs_det(m, level) > tol]
    for _ in range(depth):
        if level.shape[0] == 0:
            return False
        P, _ = preimage_candidates(m, level, None, seeds_per_dim)
        if P.shape[0] == 0:
            return False
        # critical points are dropped right away: their descendants cannot be Regular
        level = P[(repellor.distance(P) > DEDUP_TOL) & (abs_det(m, P) > tol)]
        cand = level[in_region(m, level, region)]
        if cand.shape[0] and any(t is not None for t in
                                 certify_tails(m, repellor, cand, tail_max, None, seeds_per_dim)):
            return True
    return False


def classify(orbit: HomoclinicOrbit, tol: float = CRITICAL_TOL) -> str:
    pts = orbit.extended_tail(5)
    crit = np.concatenate([orbit.criticality, abs_det(orbit.map, pts)]) if len(pts) else orbit.criticality
    return "Critical" if float(np.min(crit)) < tol else "Regular"


# -- fold certificates ------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldCertificate:
    point: np.ndarray
    det_value: float
    gradient_of_det: np.ndarray
    kernel_direction: np.ndarray
    cokernel_direction: np.ndarray
    quadratic_coefficient: float

    def as_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _orient(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def fold_test(m: MapDefinition, c, max_shift: float = 1e-4, h2: float = 1e-4) -> FoldCertificate:
    """Refine ``c`` onto ``{det Df = 0}`` and check the fold inequalities:
    ``|det| < 1e-8``, ``|grad det| > 1e-6`` and a nonzero quadratic term of the
    cokernel component along the kernel.  Raises :class:`NotFold` otherwise."""
    c0 = np.atleast_1d(np.asarray(c, dtype=float))
    cref = refine_to_critical(m, c0)
    failed = []
    shift = float(np.max(np.abs(m.diff(cref, c0))))
    if shift > max_shift:
        cref = c0
        failed.append("distance_to_critical_set")
    J = m.jacobians(cref[None])[0]
    det = float(np.linalg.det(J))
    grad = _det_gradient(m, cref[None])[0]
    U, _, Vt = np.linalg.svd(J)
    v = _orient(Vt[-1])
    u = _orient(U[:, -1])
    f0 = m.func(cref[None])[0]
    fp = m.func((cref + h2 * v)[None])[0]
    fm = m.func((cref - h2 * v)[None])[0]
    quad = float(u @ (m.diff(fp, f0) + m.diff(fm, f0)) / h2**2)
    if not abs(det) < 1e-8:
        failed.append("det_value")
    if not np.linalg.norm(grad) > 1e-6:
        failed.append("gradient_of_det")
    if not abs(quad) > 1e-6:
        failed.append("quadratic_coefficient")
    if failed:
        raise NotFold(f"not a fold point: {', '.join(failed)}", failed, point=cref.tolist(),
                      det_value=det, gradient_norm=float(np.linalg.norm(grad)),
                      quadratic_coefficient=quad)
    return FoldCertificate(cref, det, grad, v, u, quad)


# -- homoclinic classes and density ------------------------------------------------------------

def homoclinic_class_approx(m: MapDefinition, repellor: PeriodicOrbit, depth: int,
                            seeds_per_dim: int = SEEDS_PER_DIM, region=None) -> np.ndarray:
    """``f^{-n}(gamma)``, ``n <= depth``, restricted to points with a certified tail."""
    tree = preimage_tree(m, repellor, depth, region, seeds_per_dim)
    ok = [np.zeros(L.shape[0], dtype=bool) for L in tree.levels]
    ok[0][:] = True
    leaves = []
    for n in range(1, depth + 1):
        L = tree.levels[n]
        if L.shape[0] == 0:
            continue
        inside = repellor.distance(L) < repellor.basin_radius
        ok[n] |= inside
        has_child = np.zeros(L.shape[0], dtype=bool)
        if n < depth and tree.parents[n + 1].size:
            has_child[np.unique(tree.parents[n + 1])] = True
        leaves.extend((n, i) for i in np.flatnonzero(~inside & ~has_child))
    if leaves:
        pts = np.array([tree.levels[n][i] for n, i in leaves])
        tails = certify_tails(m, repellor, pts, region=region, seeds_per_dim=seeds_per_dim)
        for (n, i), t in zip(leaves, tails):
            ok[n][i] = t is not None
    for n in range(depth, 0, -1):
        if tree.parents[n].size:
            par = tree.parents[n][ok[n]]
            if n - 1 >= 1:
                ok[n - 1][par] = True
    cloud = np.vstack([L[k] for L, k in zip(tree.levels, ok)])
    return dedupe(m, cloud)


def density_check(cloud, reference, eps: float, m: MapDefinition | None = None) -> bool:
    """True iff every reference point has a cloud point within ``eps``."""
    return bool(np.max(nearest_distances(cloud, reference, m)) <= eps)


def nearest_distances(cloud, reference, m: MapDefinition | None = None) -> np.ndarray:
    C = np.asarray(cloud, dtype=float)
    R = np.asarray(reference, dtype=float)
    C = C[:, None] if C.ndim == 1 else C
    R = R[:, None] if R.ndim == 1 else R
    if m is not None and m.is_circle:
        ang = np.sort(np.mod(C[:, 0], TWO_PI))
        r = np.mod(R[:, 0], TWO_PI)
        ext = np.concatenate([ang[-1:] - TWO_PI, ang, ang[:1] + TWO_PI])
        j = np.searchsorted(ext, r)
        return np.minimum(np.abs(ext[j] - r), np.abs(r - ext[j - 1]))
    return cKDTree(C).query(R)[0]


# -- one-dimensional boundary lemma ---------------------------------------------------------------

@dataclass
class BoundaryReport:
    applicable: bool
    passed: bool
    interval: Optional[ExtendedInterval]
    boundary: list = field(default_factory=list)
    inconsistent: bool = False
    note: str = ""


def _boundary_status(m: MapDefinition, b: float, W: ExtendedInterval, tol: float) -> str:
    fb = float(m([b])[0])
    if abs(fb - b) < tol:
        return "fixed"
    if abs(float(m.iterate([b], 2)[0]) - b) < tol:
        return "period-2"
    crit = [c for c in m.meta.get("critical_points", []) if W.contains(c)]
    if any(abs(float(m([c])[0]) - b) < tol for c in crit):
        return "critical-value"
    return "other"


def boundary_preimage_check_1d(m: MapDefinition, p, depth: int = 8, tol: float = 1e-8) -> BoundaryReport:
    """No finite boundary point of ``W^u(p)`` may map onto ``p`` when ``p`` has
    no homoclinic orbit; also records each boundary point's dynamical status."""
    if m.dimension != 1 or m.is_circle:
        raise PreconditionError("boundary check needs a map of the real line", map=m.name)
    rep = find_periodic(m, np.atleast_1d(p), 1)
    found = search_homoclinic(m, rep, depth)
    if len(found):
        return BoundaryReport(False, False, None,
                              note=f"{len(found)} homoclinic orbit(s) found at depth {depth}")
    W = unstable_interval_1d(m, rep.points[0, 0], radius=rep.basin_radius)
    p0 = float(rep.points[0, 0])
    rows = []
    passed = True
    for b in W.boundary:
        fb = float(m([b])[0])
        hits = abs(fb - p0) < tol
        passed &= not hits
        rows.append({"point": b, "image": fb, "distance_to_p": abs(fb - p0),
                     "status": _boundary_status(m, b, W, tol)})
    for v in (W.lower, W.upper):
        if not np.isfinite(v):
            rows.append({"point": v, "image": None, "distance_to_p": None, "status": "infinite"})
    return BoundaryReport(True, bool(passed), W, rows, inconsistent=not passed)
