"""Codimension-one crossings of a fold through the repellor, and the
one-dimensional dichotomy at the last parameter with a regular homoclinic orbit."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (ConvergenceError, HypothesisError, NotExpandingError,
                     PreconditionError)
from .homoclinic import (boundary_preimage_check_1d, fold_test, regular_orbit_exists,
                         search_homoclinic)
from .maps import ParametricFamily, iterate_with_jacobian
from .repellor import ExtendedInterval, find_periodic, unstable_interval_1d

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-9
DEFAULT_DEPTH = 8
SCAN_POINTS = 33
CRITICAL_SCAN = 2001
REFINE_STEPS = (1e-2, 5e-3, 2.5e-3)
CONTINUITY_FACTOR = 1.5

HAS_REGULAR = "HasRegularHomoclinic"
BOUNDARY = "Boundary"
NO_LOCAL = "NoLocalHomoclinic"


def _threads() -> int:
    return max(1, int(os.environ.get("SNAPBACK_THREADS", "4")))


# -- crossing functional --------------------------------------------------------------

def crossing_functional(family: ParametricFamily, mu: float, fold_point, chain_length: int = 2,
                        reach: float = 1.0) -> float:
    """Signed offset of the repellor from the critical value, measured in the
    fold's normal direction after pulling back along the chain.

    Positive means the repellor lies on the side the fold does not cover
    (no local preimage); zero means the critical point lands on the repellor.
    """
    if chain_length < 1:
        raise ValueError("chain_length must be >= 1")
    m = family.at(mu)
    cert = fold_test(m, fold_point)
    cover = math.copysign(1.0, cert.quadratic_coefficient) * cert.cokernel_direction
    v = m.eval(cert.point[None])[0]
    y, J = iterate_with_jacobian(m, v, chain_length - 1)
    disp = m.diff(y[None], family.fixed_point)[0]
    if np.linalg.norm(disp) > reach:
        raise PreconditionError("critical chain does not reach the repellor's neighborhood",
                                mu=mu, distance=float(np.linalg.norm(disp)))
    try:
        normal = np.linalg.solve(J.T, cover)
    except np.linalg.LinAlgError:
        raise PreconditionError("critical chain passes through the critical set", mu=mu)
    normal /= np.linalg.norm(normal)
    return float(normal @ disp)


@dataclass
class CrossingReport:
    mu: float
    functional_value: float
    side: str
    local_orbit_count: int
    classifications: list
    consistent: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _side(value: float) -> str:
    if abs(value) < BOUNDARY_TOL:
        return BOUNDARY
    return NO_LOCAL if value > 0 else HAS_REGULAR


def side_classify(family: ParametricFamily, mu: float, fold_point, region=None,
                  chain_length: int = 2) -> CrossingReport:
    """Sign of the crossing functional next to a direct search for orbits
    landing in ``region`` within ``chain_length`` steps.  The search count is
    authoritative; disagreement is flagged, not resolved."""
    value = crossing_functional(family, mu, fold_point, chain_length)
    c = np.atleast_1d(np.asarray(fold_point, dtype=float))
    if region is None:
        region = np.column_stack([c - 0.25, c + 0.25])
    m = family.at(mu)
    rep = find_periodic(m, family.fixed_point)
    found = search_homoclinic(m, rep, chain_length, region=region)
    side = _side(value)
    count = len(found)
    expected = {HAS_REGULAR: 2, BOUNDARY: 1, NO_LOCAL: 0}[side]
    if count != expected:
        log.warning("crossing functional (%s) disagrees with direct search (%d orbits) at mu=%g",
                    side, count, mu)
    return CrossingReport(float(mu), value, side, count,
                          [o.classification for o in found], count == expected)


# -- critical periodic points --------------------------------------------------------

def _critical_point(family: ParametricFamily, mu: float) -> np.ndarray:
    if family.critical_point is None:
        raise PreconditionError("family has no fold point", family=family.name)
    return np.atleast_1d(family.critical_point(mu)).astype(float)


def _displacements(family: ParametricFamily, mu: float, n_max: int) -> np.ndarray:
    m = family.at(mu)
    c = _critical_point(family, mu)
    x = c[None]
    out = np.empty(n_max)
    for n in range(n_max):
        x = m.eval(x)
        out[n] = m.diff(x, c)[0, 0]
    return out


def find_critical_periodic(family: ParametricFamily, bracket, n_max: int, tol: float = 1e-10,
                           grid_points: int = CRITICAL_SCAN):
    """Smallest ``n <= n_max`` and a ``mu`` in ``bracket`` where the fold point
    is ``n``-periodic.  Returns ``(mu, n, point)``."""
    if family.dimension != 1:
        raise PreconditionError("critical periodic scan needs a one-dimensional family",
                                family=family.name)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    lo, hi = map(float, bracket)
    grid = np.linspace(lo, hi, grid_points)
    table = np.array([_displacements(family, mu, n_max) for mu in grid])
    for n in range(1, n_max + 1):
        D = table[:, n - 1]
        g = lambda mu: _displacements(family, mu, n)[-1]
        hits = list(np.flatnonzero(D == 0))
        hits += [i for i in np.flatnonzero(np.sign(D[:-1]) * np.sign(D[1:]) < 0)]
        for i in sorted(set(hits)):
            if D[i] == 0:
                mu = float(grid[i])
            else:
                mu = brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200)
            if abs(g(mu)) < tol:
                return mu, n, _critical_point(family, mu)
    best = np.min(np.abs(table), axis=0)
    raise ConvergenceError("no critical periodic point found", bracket=[lo, hi], n_max=n_max,
                           min_displacement=best.tolist())


# -- unstable interval tracking ------------------------------------------------------

def _w_at(family: ParametricFamily, mu: float) -> ExtendedInterval:
    m = family.at(mu)
    rep = find_periodic(m, family.fixed_point)
    if rep.expansion_margin <= 0:
        raise NotExpandingError("repellor lost along the family", mu=float(mu),
                                margin=rep.expansion_margin)
    return unstable_interval_1d(m, rep.points[0, 0], radius=rep.basin_radius)


def track_unstable_interval(family: ParametricFamily, grid, threads: Optional[int] = None):
    """``W(mu)`` on ``grid`` and the largest jump between neighbors.

    Returns ``(track, modulus)`` with ``track`` a list of ``(mu, interval)``.
    """
    if family.dimension != 1:
        raise PreconditionError("unstable interval tracking needs a one-dimensional family",
                                family=family.name)
    grid = [float(mu) for mu in grid]
    workers = min(len(grid), threads or _threads()) or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            W = list(ex.map(lambda mu: _w_at(family, mu), grid))
    else:
        W = [_w_at(family, mu) for mu in grid]
    modulus = max((a.distance(b) for a, b in zip(W, W[1:])), default=0.0)
    return list(zip(grid, W)), modulus


# -- locating mu0 ---------------------------------------------------------------------

def _domain_region(family: ParametricFamily, mu: float):
    m = family.at(mu)
    box = m.domain.copy()
    if family.dimension == 1:
        try:
            W = _w_at(family, mu)
            box[0, 0] = max(box[0, 0], W.lower)
            box[0, 1] = min(box[0, 1], W.upper)
        except (NotExpandingError, ConvergenceError):
            pass
    return box


def has_regular_orbit(family: ParametricFamily, mu: float, depth: int = DEFAULT_DEPTH) -> bool:
    m = family.at(mu)
    rep = find_periodic(m, family.fixed_point)
    if rep.expansion_margin <= 0:
        return False
    return regular_orbit_exists(m, rep, depth, region=_domain_region(family, mu))


@dataclass
class Mu0Result:
    mu0: float
    bracket: tuple
    tol: float
    depth: int
    orientation: str
    monotone: bool
    scan: list = field(repr=False)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def locate_mu0(family: ParametricFamily, bracket, tol: float = 1e-9,
               depth: int = DEFAULT_DEPTH) -> Mu0Result:
    """Bisect the boolean "a Regular orbit lands within ``depth`` steps".

    Either orientation is accepted (homoclinic at the lower or at the upper
    end).  A coarse pre-scan detects families where existence switches more
    than once; bisection then runs on the first switch and ``monotone`` is
    False.
    """
    a, b = sorted(map(float, bracket))
    pa, pb = has_regular_orbit(family, a, depth), has_regular_orbit(family, b, depth)
    if pa == pb:
        raise HypothesisError("bracket ends agree on regular homoclinic existence",
                              bracket=[a, b], has_regular=pa)
    grid = np.linspace(a, b, SCAN_POINTS)
    flags = [pa] + [has_regular_orbit(family, mu, depth) for mu in grid[1:-1]] + [pb]
    switches = [i for i in range(len(flags) - 1) if flags[i] != flags[i + 1]]
    monotone = len(switches) == 1
    if not monotone:
        log.warning("regular homoclinic existence switches %d times in %s", len(switches), [a, b])
    lo, hi = float(grid[switches[0]]), float(grid[switches[0] + 1])
    left = flags[switches[0]]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_regular_orbit(family, mid, depth) == left:
            lo = mid
        else:
            hi = mid
    orientation = "homoclinic-below" if pa else "homoclinic-above"
    scan = [[float(mu), bool(f)] for mu, f in zip(grid, flags)]
    return Mu0Result(0.5 * (lo + hi), (a, b), tol, depth, orientation, monotone, scan)


# -- dichotomy ------------------------------------------------------------------------

@dataclass
class BifurcationReport:
    mu0: float
    mu_star: float
    dichotomy: Optional[str]
    violation: bool
    continuous: bool
    moduli: list
    w_track: list
    evidence: dict
    known_mu0_consistent: Optional[bool] = None

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["w_track"] = [[mu, w.as_dict()] for mu, w in self.w_track]
        return d


def _snap_to_critical_landing(family: ParametricFamily, mu0: float, depth: int,
                              width: float) -> float:
    """Parameter near ``mu0`` where the fold point lands exactly on the repellor."""
    lo = max(family.parameter_range[0], mu0 - width)
    hi = min(family.parameter_range[1], mu0 + width)
    p = float(np.asarray(family.fixed_point).reshape(-1)[0])

    def g(mu, n):
        m = family.at(mu)
        return float(m.iterate(_critical_point(family, mu)[None], n)[0, 0]) - p

    for n in range(1, depth + 1):
        if g(mu0, n) == 0:
            return mu0
        glo, ghi = g(lo, n), g(hi, n)
        if glo * ghi < 0:
            return float(brentq(lambda mu: g(mu, n), lo, hi, xtol=1e-15, rtol=1e-15))
    return mu0


def dichotomy_report(family: ParametricFamily, mu0: float, tol: float = 1e-9,
                     depth: int = DEFAULT_DEPTH) -> BifurcationReport:
    """Decide which of the two one-dimensional cases holds at ``mu0``: the
    unstable interval jumps, or only critical homoclinic orbits exist there."""
    if family.dimension != 1:
        raise PreconditionError("the dichotomy holds for one-dimensional families only; "
                                "use the example2d verification for planar maps",
                                family=family.name, dimension=family.dimension)
    lo_r, hi_r = family.parameter_range
    w = max(100 * tol, 1e-6)
    below, above = max(lo_r, mu0 - w), min(hi_r, mu0 + w)
    pb, pa = has_regular_orbit(family, below, depth), has_regular_orbit(family, above, depth)
    if pb == pa:
        raise PreconditionError("no change of regular homoclinic existence across mu0",
                                mu0=mu0, has_regular=pb)
    mu_star = _snap_to_critical_landing(family, mu0, depth, w)

    m = family.at(mu_star)
    rep = find_periodic(m, family.fixed_point)
    found = search_homoclinic(m, rep, depth, region=_domain_region(family, mu_star))
    critical = [o for o in found if o.classification == "Critical"]
    regular = [o for o in found if o.classification == "Regular"]

    moduli, track = [], []
    for h in REFINE_STEPS:
        grid = [mu for mu in mu_star + h * np.arange(-4, 5) if lo_r <= mu <= hi_r]
        tr, mod = track_unstable_interval(family, grid)
        moduli.append(mod)
        track = tr
    continuous = all(prev >= CONTINUITY_FACTOR * nxt for prev, nxt in zip(moduli, moduli[1:]))

    cases = []
    if not continuous:
        cases.append("W_Discontinuous")
    if critical and not regular:
        cases.append("CriticalHomoclinicOnly")
    dichotomy = cases[0] if cases else None

    quiet = below if not pb else above
    check = boundary_preimage_check_1d(family.at(quiet), family.fixed_point, depth)
    evidence = {
        "critical_orbits": [o.as_dict() for o in critical[:8]],
        "critical_count": len(critical),
        "regular_count": len(regular),
        "depth": depth,
        "cases": cases,
        "boundary_check": {"mu": quiet, "applicable": check.applicable,
                           "passed": check.passed, "boundary": check.boundary},
    }
    known = family.known_mu0
    consistent = None if known is None else abs(mu0 - known) <= max(10 * tol, 1e-12)
    return BifurcationReport(float(mu0), float(mu_star), dichotomy, dichotomy is None,
                             continuous, moduli, track, evidence, consistent)
