"""Horseshoe construction from a regular homoclinic orbit.

Two inverse branches of ``f^m`` are built on a small ball ``U`` near the
repellor: one follows the repellor itself, the other runs backwards along the
homoclinic loop.  Both map ``U`` strictly into itself with disjoint images, so
the invariant set they generate is conjugate to the full shift on two symbols.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (BranchDomainError, ConvergenceError, NotExpandingError,
                     PreconditionError)
from .homoclinic import HomoclinicOrbit
from .maps import MapDefinition
from .repellor import InverseBranch, PeriodicOrbit, ball_samples, branch_from_path

ItineraryWord = Union[str, Sequence[int]]

MAX_POWER = 64
RADIUS_FACTORS = (1.25, 1.5, 2.0)
MIN_SEPARATION = 0.05
INSIDE_MARGIN = 0.999


def letters(word: ItineraryWord) -> tuple[int, ...]:
    """Normalize ``"0110"`` or ``[0, 1, 1, 0]`` to a tuple of ints."""
    if isinstance(word, str):
        return tuple(int(ch) for ch in word)
    return tuple(int(a) for a in word)


@dataclass(frozen=True, eq=False)
class BranchSystem:
    map: MapDefinition = field(repr=False)
    power: int
    center: np.ndarray
    radius: float
    branches: tuple
    separation: float
    contraction: float
    min_contraction: float

    @property
    def alphabet(self) -> int:
        return len(self.branches)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def in_set(self, X) -> np.ndarray:
        return self.map.dist(np.atleast_2d(X), self.center) <= self.radius

    def forward(self, X) -> np.ndarray:
        return self.map.iterate(np.atleast_2d(X), self.power)

    def as_dict(self) -> dict:
        return {
            "power": self.power,
            "center": self.center.tolist(),
            "radius": self.radius,
            "separation": self.separation,
            "contraction": self.contraction,
            "min_contraction": self.min_contraction,
        }


def _images_inside(m: MapDefinition, center, radius, Z) -> bool:
    return bool(np.all(m.dist(Z, center) < INSIDE_MARGIN * radius))


def build_branch_system(m: MapDefinition, repellor: PeriodicOrbit, orbit: HomoclinicOrbit,
                        n_samples: int = 200) -> BranchSystem:
    """Pick the tail length ``J`` and the ball ``U`` giving a two-branch system.

    ``U`` is centered halfway between the repellor and the ``J``-th tail point,
    so the loop branch lands well inside it while symmetric preimages of the
    repellor stay outside.
    """
    if orbit.classification != "Regular":
        raise PreconditionError("a horseshoe needs a Regular homoclinic orbit",
                                classification=orbit.classification)
    if repellor.period != 1:
        raise PreconditionError("pass the k-th iterate for a period-k repellor",
                                period=repellor.period)
    p = repellor.points[0]
    rb = repellor.basin_radius
    seg = orbit.segment
    L = len(seg) - 1
    tail = orbit.extended_tail(extra=MAX_POWER)
    loop_head = seg[::-1]
    for J in range(1, MAX_POWER - L + 1):
        power = L + J
        tJ = tail[J - 1]
        d = float(m.dist(tJ[None], p)[0])
        if not 0 < d < rb:
            continue
        center = m.reduce((p + 0.5 * m.diff(tJ[None], p)[0])[None])[0]
        for s in RADIUS_FACTORS:
            R = s * d / 2
            if d / 2 + R > rb:
                continue
            rep_path = np.tile(p, (power + 1, 1))
            loop_path = np.vstack([loop_head, tail[:J]])
            try:
                b0 = branch_from_path(m, rep_path, R, n_samples=n_samples, center=center)
                b1 = branch_from_path(m, loop_path, R, n_samples=n_samples, center=center)
            except BranchDomainError:
                continue
            if max(b0.contraction, b1.contraction) >= 1:
                continue
            Y = _u_samples(m, center, R, n_samples)
            Z0, Z1 = b0.solve(Y), b1.solve(Y)
            if not (_images_inside(m, center, R, Z0) and _images_inside(m, center, R, Z1)):
                continue
            sep = _cloud_separation(m, Z0, Z1)
            if sep < MIN_SEPARATION * 2 * R:
                continue
            return BranchSystem(m, power, center, float(R), (b0, b1), sep,
                                max(b0.contraction, b1.contraction),
                                min(b0.min_contraction, b1.min_contraction))
    raise PreconditionError("no admissible branch system up to the maximum power",
                            max_power=MAX_POWER)


def _u_samples(m, center, R, n):
    Y = ball_samples(m, center, R, n)
    if m.dimension == 2:
        Y = np.vstack([Y, ball_samples(m, center, R, max(16, n // 4), boundary=True)])
    return Y


def _cloud_separation(m: MapDefinition, A: np.ndarray, B: np.ndarray) -> float:
    d, _ = _tree(m, B).query(_wrap(m, A))
    return float(np.min(d))


def _wrap(m: MapDefinition, X: np.ndarray) -> np.ndarray:
    return np.mod(X, 2 * np.pi) if m.phase_space == "circle" else X


def _tree(m: MapDefinition, X: np.ndarray) -> cKDTree:
    if m.phase_space == "circle":
        return cKDTree(_wrap(m, X), boxsize=2 * np.pi)
    return cKDTree(X)


# -- cylinders ----------------------------------------------------------------------

def cylinder_point(system: BranchSystem, word: ItineraryWord) -> np.ndarray:
    """``phi_{w1}(phi_{w2}(... phi_{wn}(center)))``."""
    return cylinder_point_from(system, word, system.center)


def cylinder_points(system: BranchSystem, depth: int) -> np.ndarray:
    """All cylinder points of words of length ``depth`` in lexicographic order."""
    P = system.center[None].copy()
    for _ in range(depth):
        P = np.vstack([b.solve(P) for b in system.branches])
    return P


def words(alphabet: int, depth: int) -> list[str]:
    return ["".join(map(str, w)) for w in itertools.product(range(alphabet), repeat=depth)]


@dataclass
class ConjugacyReport:
    depth: int
    max_residual: float
    bound: float
    failures: list
    cylinder_count: int
    expected_count: int

    @property
    def passed(self) -> bool:
        return not self.failures and self.cylinder_count == self.expected_count

    def as_dict(self) -> dict:
        return {**self.__dict__, "passed": self.passed}


def _count_distinct(m: MapDefinition, X: np.ndarray, tol: float) -> int:
    if len(X) < 2:
        return len(X)
    pairs = _tree(m, X).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return len(X)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(X), len(X)))
    return int(connected_components(g, directed=False)[0])


def verify_shift_conjugacy(system: BranchSystem, depth: int = 10,
                           tol: float = 1e-8) -> ConjugacyReport:
    """Check ``f^m(point(w)) == point(shift(w))`` for every word up to ``depth``."""
    m, A = system.map, system.alphabet
    bound = system.contraction ** depth * system.diameter
    failures = []
    worst = 0.0
    prev = system.center[None].copy()
    for n in range(1, depth + 1):
        P = np.vstack([b.solve(prev) for b in system.branches])
        res = m.dist(system.forward(P), prev[np.arange(len(P)) % len(prev)])
        worst = max(worst, float(np.max(res)))
        for i in np.flatnonzero(res >= tol + bound):
            failures.append({"word": _index_word(int(i), A, n), "residual": float(res[i])})
        prev = P
    resolve = 0.5 * system.separation * system.min_contraction ** (depth - 1)
    count = _count_distinct(m, prev, resolve)
    return ConjugacyReport(depth, worst, bound, failures, count, A ** depth)


def _index_word(i: int, alphabet: int, n: int) -> str:
    digits = []
    for _ in range(n):
        i, r = divmod(i, alphabet)
        digits.append(str(r))
    return "".join(reversed(digits))


# -- isolation ----------------------------------------------------------------------

@dataclass
class IsolationReport:
    samples: int
    escaped: int
    in_cylinders: int
    violations: list
    cylinder_points_retained: bool

    @property
    def passed(self) -> bool:
        return not self.violations and self.cylinder_points_retained

    def as_dict(self) -> dict:
        return {**self.__dict__, "passed": self.passed}


def _on_branch(system: BranchSystem, y: np.ndarray, z: np.ndarray, tol: float) -> np.ndarray:
    """Rows where ``y`` equals some branch applied to ``z``."""
    ok = np.zeros(len(y), dtype=bool)
    for b in system.branches:
        with np.errstate(invalid="ignore"):
            ok |= system.map.dist(b.solve(z, strict=False), y) < tol
    return ok


def verify_isolation(system: BranchSystem, depth: int = 6, n_samples: int = 1000,
                     seed: int = 0, tol: float = 1e-8) -> IsolationReport:
    """Sample ``U``; every sample must either follow the branches for ``depth``
    returns or leave ``U`` within ``depth * m`` iterations."""
    m = system.map
    rng = np.random.default_rng(seed)
    d = m.dimension
    if d == 1:
        Y = system.center + system.radius * rng.uniform(-1, 1, size=(n_samples, 1))
    else:
        v = rng.normal(size=(n_samples, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        Y = system.center + system.radius * rng.random(n_samples)[:, None] ** (1 / d) * v
    Y = m.reduce(Y)
    alive = np.ones(n_samples, dtype=bool)
    escaped = 0
    violations = []
    cur = Y.copy()
    for step in range(depth):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Z = system.forward(cur[idx])
        inside = system.in_set(Z)
        escaped += int(np.sum(~inside))
        alive[idx[~inside]] = False
        keep = idx[inside]
        if keep.size:
            good = _on_branch(system, cur[keep], Z[inside], tol)
            for i in keep[~good]:
                violations.append({"sample": Y[i].tolist(), "step": step})
            alive[keep[~good]] = False
            cur[keep] = Z[inside]
    P = cylinder_points(system, depth)
    retained = True
    for _ in range(depth):
        P = system.forward(P)
        retained &= bool(np.all(system.in_set(P)))
    return IsolationReport(n_samples, escaped, int(np.sum(alive)), violations, retained)


# -- expansion ----------------------------------------------------------------------

@dataclass
class ExpansionCertificate:
    C: float
    lam: float
    n_max: int
    min_log_growth: list

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def expansion_certificate(m: MapDefinition, cloud, n_max: int = 10, n_vectors: int = 8,
                          seed: int = 0) -> ExpansionCertificate:
    """Fit ``(C, lam)`` with ``|Df^n v| >= C lam^n |v|`` over ``cloud``.

    ``lam`` is the growth rate between ``n = 1`` and ``n = n_max`` of the worst
    case log-stretch; ``C`` is then the largest constant consistent with every
    sampled ``n``.
    """
    X = np.atleast_2d(np.asarray(cloud, dtype=float))
    d = m.dimension
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(n_vectors, d))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    W = np.broadcast_to(V.T, (len(X), d, n_vectors)).copy()
    logs = []
    for _ in range(n_max):
        W = m.jacobians(X) @ W
        X = m.eval(X)
        logs.append(float(np.min(np.log(np.linalg.norm(W, axis=1)))))
    if n_max == 1:
        log_lam = logs[0]
    else:
        log_lam = (logs[-1] - logs[0]) / (n_max - 1)
    if not log_lam > 1e-12:
        raise NotExpandingError("sampled derivative cocycle does not grow",
                                log_growth=logs)
    C = float(np.exp(min(L - (n + 1) * log_lam for n, L in enumerate(logs))))
    return ExpansionCertificate(C, float(np.exp(log_lam)), n_max, logs)


def check_expansion(m: MapDefinition, cert: ExpansionCertificate, cloud,
                    n_vectors: int = 8, seed: int = 1, rtol: float = 1e-5) -> bool:
    """A-posteriori test of a certificate on another sample set.  ``rtol``
    absorbs the difference between sampled and exact invariant-set points."""
    X = np.atleast_2d(np.asarray(cloud, dtype=float))
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(n_vectors, m.dimension))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    W = np.broadcast_to(V.T, (len(X), m.dimension, n_vectors)).copy()
    for n in range(1, cert.n_max + 1):
        W = m.jacobians(X) @ W
        X = m.eval(X)
        if np.min(np.linalg.norm(W, axis=1)) < (1 - rtol) * cert.C * cert.lam ** n:
            return False
    return True


# -- periodic points ----------------------------------------------------------------

def periodic_from_word(system: BranchSystem, word: ItineraryWord, tol: float = 1e-12,
                       max_iter: int = 500) -> np.ndarray:
    """Fixed point of ``phi_w`` (a periodic point of ``f^m`` with itinerary ``w``)."""
    w = letters(word)
    if not w:
        raise PreconditionError("empty itinerary")
    m = system.map
    x = system.center
    for _ in range(max_iter):
        y = cylinder_point_from(system, w, x)
        if m.dist(y[None], x)[0] < tol:
            x = y
            break
        x = y
    else:
        raise ConvergenceError("branch composition did not settle", word="".join(map(str, w)))
    res = m.dist(m.iterate(x[None], system.power * len(w)), x)[0]
    if res > 1e-9:
        raise ConvergenceError("periodic residual too large", residual=float(res))
    return x


def cylinder_point_from(system: BranchSystem, word: ItineraryWord, x) -> np.ndarray:
    for a in reversed(letters(word)):
        x = system.branches[a](x)
    return x
