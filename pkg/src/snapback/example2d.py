"""A planar family whose unstable set does not move while a regular
homoclinic orbit appears.

``f_mu = R o F_mu`` on the unit disk.  ``R`` is a polar product of a radial
map ``g`` (repelling at 0, attracting at 1) and a circle diffeomorphism ``j``
with a wandering arc ``I`` around angle 0.  ``F_mu`` folds the cap
``A = {x > 3/4}`` back over the disk, and its far end ``(1, 0)`` is sent to
``(-mu, 0)``, so the fixed point ``p = 0`` acquires a preimage in ``A``
exactly when ``mu > 0``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BPoly
from scipy.optimize import brentq

from .homoclinic import search_homoclinic
from .maps import MapDefinition, plateau, plateau_prime
from .repellor import find_periodic

SQRT3 = math.sqrt(3.0)
FOLD_X = 0.75
LEFT_X = 0.5
CAP_WIDTH = 0.25


def _wrap(theta):
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class Example2DConfig:
    beta: float = 1.0              # log-multiplier of j at its fixed angles
    fold_curvature: float = 8.0    # -psi''(3/4)
    damping: float = 0.05          # y-factor on the far part of the cap
    damping_width: float = 0.1     # x-length over which the cap damping switches on
    smoothing_inner: float = 0.075
    smoothing_radius: float = 0.15
    arc: tuple = (-math.pi / 3, math.pi / 3)

    # -- radial and circle factors --------------------------------------------------

    @staticmethod
    def g(rho):
        return 2 * rho / (1 + rho)

    @staticmethod
    def g_prime(rho):
        return 2 / (1 + rho) ** 2

    @staticmethod
    def g_inv(rho):
        return rho / (2 - rho)

    def _mobius(self, theta, b):
        th = np.asarray(theta, dtype=float)
        N, D = np.sin(th / 2), SQRT3 * np.cos(th / 2)
        N1, D1 = N - b * D, D - b * N
        return N, D, N1, D1

    def j(self, theta):
        """Circle map conjugate to ``u -> u - beta`` on ``tanh(u) = tan(theta/2)/sqrt(3)``."""
        _, _, N1, D1 = self._mobius(theta, math.tanh(self.beta))
        return _wrap(2 * np.arctan2(SQRT3 * N1, D1))

    def j_inv(self, theta):
        _, _, N1, D1 = self._mobius(theta, -math.tanh(self.beta))
        return _wrap(2 * np.arctan2(SQRT3 * N1, D1))

    def j_prime(self, theta):
        b = math.tanh(self.beta)
        th = np.asarray(theta, dtype=float)
        _, _, N1, D1 = self._mobius(th, b)
        Nt, Dt = np.cos(th / 2) / 2, -SQRT3 * np.sin(th / 2) / 2
        N1t, D1t = Nt - b * Dt, Dt - b * Nt
        return 2 * SQRT3 * (N1t * D1 - N1 * D1t) / (3 * N1**2 + D1**2)

    # -- R: polar product, linear near the origin ----------------------------------

    def _blend(self, rho):
        return plateau(rho, self.smoothing_inner, self.smoothing_radius)

    def _blend_prime(self, rho):
        return plateau_prime(rho, self.smoothing_inner, self.smoothing_radius)

    def _radial(self, rho):
        b = self._blend(rho)
        return 2 * rho * b + self.g(rho) * (1 - b)

    def _radial_prime(self, rho):
        b, db = self._blend(rho), self._blend_prime(rho)
        return 2 * b + self.g_prime(rho) * (1 - b) + db * (2 * rho - self.g(rho))

    def _twist(self, theta):
        return _wrap(self.j(theta) - theta)

    def R(self, Z):
        Z = np.atleast_2d(Z)
        rho = np.hypot(Z[:, 0], Z[:, 1])
        th = np.arctan2(Z[:, 1], Z[:, 0])
        r1 = self._radial(rho)
        t1 = th + (1 - self._blend(rho)) * self._twist(th)
        out = np.column_stack([r1 * np.cos(t1), r1 * np.sin(t1)])
        return np.where((rho < self.smoothing_inner)[:, None], 2 * Z, out)

    def R_jacobian(self, Z):
        Z = np.atleast_2d(Z)
        rho = np.hypot(Z[:, 0], Z[:, 1])
        safe = np.where(rho > 0, rho, 1.0)
        th = np.arctan2(Z[:, 1], Z[:, 0])
        b, db = self._blend(rho), self._blend_prime(rho)
        delta = self._twist(th)
        r1 = self._radial(rho)
        t1 = th + (1 - b) * delta
        e0 = np.column_stack([np.cos(th), np.sin(th)])
        p0 = np.column_stack([-np.sin(th), np.cos(th)])
        e1 = np.column_stack([np.cos(t1), np.sin(t1)])
        p1 = np.column_stack([-np.sin(t1), np.cos(t1)])
        dt_dth = 1 + (1 - b) * (self.j_prime(th) - 1)
        dt_drho = -db * delta
        outer = lambda u, v: u[:, :, None] * v[:, None, :]
        J = (self._radial_prime(rho)[:, None, None] * outer(e1, e0)
             + (r1 * dt_dth / safe)[:, None, None] * outer(p1, p0)
             + (r1 * dt_drho)[:, None, None] * outer(p1, e0))
        lin = np.broadcast_to(2 * np.eye(2), J.shape)
        return np.where((rho < self.smoothing_inner)[:, None, None], lin, J)

    def R_inv_polar(self, Z):
        """Inverse of ``R`` where it is the pure polar product (radius >= g(r2))."""
        Z = np.atleast_2d(Z)
        rho = np.hypot(Z[:, 0], Z[:, 1])
        th = self.j_inv(np.arctan2(Z[:, 1], Z[:, 0]))
        r0 = self.g_inv(rho)
        return np.column_stack([r0 * np.cos(th), r0 * np.sin(th)])

    def R_inv(self, z) -> np.ndarray:
        """Inverse of ``R`` at one point, including the blended core."""
        z = np.asarray(z, dtype=float)
        rho1 = float(np.hypot(*z))
        if rho1 >= self.g(self.smoothing_radius):
            return self.R_inv_polar(z)[0]
        if rho1 < 2 * self.smoothing_inner:
            return z / 2
        rho = brentq(lambda r: self._radial(r) - rho1, self.smoothing_inner, self.smoothing_radius,
                     xtol=1e-15)
        s = 1 - float(self._blend(rho))
        t1 = math.atan2(z[1], z[0])
        th = brentq(lambda t: t + s * float(self._twist(t)) - t1, t1 - 2 * np.pi, t1 + 2 * np.pi,
                    xtol=1e-15)
        return np.array([rho * math.cos(th), rho * math.sin(th)])

    # -- F: the fold ----------------------------------------------------------------

    @cached_property
    def _psi_mid(self) -> BPoly:
        return BPoly.from_derivatives([LEFT_X, FOLD_X],
                                      [[LEFT_X, 1.0, 0.0], [FOLD_X, 0.0, -self.fold_curvature]])

    @cached_property
    def _psi_mid_prime(self) -> BPoly:
        return self._psi_mid.derivative()

    def _cap_coeff(self, mu):
        # chosen so that psi(1) = -mu exactly
        base = FOLD_X - 0.5 * self.fold_curvature * CAP_WIDTH**2
        return -mu - base

    def psi(self, x, mu: float):
        x = np.asarray(x, dtype=float)
        h = x - FOLD_X
        cap = FOLD_X - 0.5 * self.fold_curvature * h**2 + self._cap_coeff(mu) * (h / CAP_WIDTH) ** 3
        mid = self._psi_mid(np.clip(x, LEFT_X, FOLD_X))
        return np.where(x <= LEFT_X, x, np.where(x <= FOLD_X, mid, cap))

    def psi_prime(self, x, mu: float):
        x = np.asarray(x, dtype=float)
        h = x - FOLD_X
        cap = -self.fold_curvature * h + 3 * self._cap_coeff(mu) * h**2 / CAP_WIDTH**3
        mid = self._psi_mid_prime(np.clip(x, LEFT_X, FOLD_X))
        return np.where(x <= LEFT_X, 1.0, np.where(x <= FOLD_X, mid, cap))

    def _chord(self, x, mu):
        """Ratio of chord half-lengths at ``psi(x)`` and ``x``, with its derivative."""
        xs = np.clip(x, -0.99, 0.99)
        ps, dps = self.psi(xs, mu), self.psi_prime(xs, mu)
        a, c = np.sqrt(1 - ps**2), np.sqrt(1 - xs**2)
        k = a / c
        dk = (-ps * dps / a) / c + a * xs / c**3
        return k, dk

    def eta(self, x, mu: float = 0.0):
        return self._eta(np.asarray(x, dtype=float), mu)[0]

    def _eta(self, x, mu):
        k, dk = self._chord(x, mu)
        t = x - FOLD_X
        w = 1 - plateau(t, 0.0, self.damping_width)
        dw = -plateau_prime(t, 0.0, self.damping_width)
        cap = k * (1 - w) + self.damping * w
        dcap = dk * (1 - w) + (self.damping - k) * dw
        val = np.where(x <= LEFT_X, 1.0, np.where(x <= FOLD_X, k, cap))
        der = np.where(x <= LEFT_X, 0.0, np.where(x <= FOLD_X, dk, dcap))
        return val, der

    def F(self, Z, mu: float):
        Z = np.atleast_2d(Z)
        e, _ = self._eta(Z[:, 0], mu)
        return np.column_stack([self.psi(Z[:, 0], mu), e * Z[:, 1]])

    def F_jacobian(self, Z, mu: float):
        Z = np.atleast_2d(Z)
        e, de = self._eta(Z[:, 0], mu)
        J = np.zeros((Z.shape[0], 2, 2))
        J[:, 0, 0] = self.psi_prime(Z[:, 0], mu)
        J[:, 1, 0] = de * Z[:, 1]
        J[:, 1, 1] = e
        return J

    def F_inv_left(self, w, mu: float = 0.0):
        """Preimage of ``w`` under ``F`` with ``x <= 3/4``, or None."""
        wx, wy = float(w[0]), float(w[1])
        if wx <= LEFT_X:
            return np.array([wx, wy])
        if wx > FOLD_X:
            return None
        if wx == FOLD_X:
            x = FOLD_X
        else:
            x = brentq(lambda t: float(self.psi(t, mu)) - wx, LEFT_X, FOLD_X, xtol=1e-15)
        return np.array([x, wy / float(self.eta(x, mu))])

    # -- the family -----------------------------------------------------------------

    def map(self, mu: float) -> MapDefinition:
        mu = float(mu)
        return MapDefinition(
            name="example2d", dimension=2, phase_space="plane",
            func=lambda X: self.R(self.F(X, mu)),
            jac=lambda X: self.R_jacobian(self.F(X, mu)) @ self.F_jacobian(X, mu),
            domain=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
            contains=lambda X: np.hypot(X[:, 0], X[:, 1]) < 1.0,
            params=(mu,),
            meta={"critical_line_x": FOLD_X},
        )

    def homoclinic_x(self, mu: float) -> float:
        """The root of ``psi_mu`` in the cap (requires ``mu > 0``)."""
        return brentq(lambda x: float(self.psi(x, mu)), FOLD_X, 1.0, xtol=1e-15)


# -- verifications --------------------------------------------------------------------

@dataclass
class WanderingReport:
    passed: bool
    horizon: int
    min_gap: float
    first_overlap: int | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def verify_wandering(config: Example2DConfig, horizon: int = 50, margin: float = 1e-9) -> WanderingReport:
    """``j^n(I)`` must miss ``I`` for ``1 <= n <= horizon``.

    ``j`` preserves orientation and fixes ``+-2pi/3``, so the arc between them
    containing ``I`` is invariant and ``j^n(I)`` is the interval spanned by the
    images of the endpoints.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a, b = config.arc
    ja, jb = a, b
    min_gap = math.inf
    for n in range(1, horizon + 1):
        ja, jb = float(config.j(ja)), float(config.j(jb))
        gap = max(a - jb, ja - b)
        min_gap = min(min_gap, gap)
        if gap <= margin:
            return WanderingReport(False, horizon, min_gap, n)
    return WanderingReport(True, horizon, min_gap, None)


def in_cap(Z) -> np.ndarray:
    Z = np.atleast_2d(Z)
    return (Z[:, 0] > FOLD_X) & (np.hypot(Z[:, 0], Z[:, 1]) < 1.0)


def unstable_membership(config: Example2DConfig, mu: float, point, depth: int) -> bool:
    """True iff ``point`` avoids ``R^n(A)`` for ``1 <= n <= depth``.

    Pulls back under ``R``; once the radius is at most 3/4 no further pullback
    can enter ``A``.  The answer does not depend on ``mu``.
    """
    return bool(_membership(config, np.atleast_2d(np.asarray(point, dtype=float)), depth)[0])


def _membership(config: Example2DConfig, P: np.ndarray, depth: int) -> np.ndarray:
    bits = np.ones(P.shape[0], dtype=bool)
    live = np.hypot(P[:, 0], P[:, 1]) > FOLD_X
    Q = P.copy()
    for _ in range(depth):
        if not np.any(live):
            break
        Q[live] = config.R_inv_polar(Q[live])
        hit = live & in_cap(Q)
        bits[hit] = False
        live &= ~hit & (np.hypot(Q[:, 0], Q[:, 1]) > FOLD_X)
    return bits


def certify_membership_by_chain(config: Example2DConfig, mu: float, point,
                                max_steps: int = 40) -> bool:
    """Independent check: build a backward orbit with ``F``'s left branch and
    ``R^{-1}`` until it enters the linear core around ``p``."""
    z = np.asarray(point, dtype=float)
    for _ in range(max_steps):
        if np.hypot(*z) < config.smoothing_inner:
            return True
        w = config.F_inv_left(config.R_inv(z), mu)
        if w is None:
            return False
        z = w
    return bool(np.hypot(*z) < config.smoothing_inner)


def disk_samples(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.random(n))
    t = rng.uniform(-np.pi, np.pi, n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


@dataclass
class MembershipFingerprint:
    mu: float
    depth: int
    seed: int
    sample_points: np.ndarray = field(repr=False)
    bits: np.ndarray = field(repr=False)

    @property
    def hex(self) -> str:
        return np.packbits(self.bits.astype(np.uint8)).tobytes().hex()

    @property
    def sha256(self) -> str:
        return hashlib.sha256(bytes.fromhex(self.hex)).hexdigest()

    def as_dict(self) -> dict:
        return {"mu": self.mu, "depth": self.depth, "seed": self.seed,
                "n_samples": int(self.bits.size), "members": int(self.bits.sum()),
                "hex": self.hex, "sha256": self.sha256}


def wu_fingerprint(config: Example2DConfig, mu: float, n_samples: int = 2048, depth: int = 10,
                   seed: int = 7, points=None) -> MembershipFingerprint:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    P = disk_samples(n_samples, seed) if points is None else np.atleast_2d(np.asarray(points, float))
    return MembershipFingerprint(float(mu), depth, seed, P, _membership(config, P, depth))


@dataclass
class FamilyCase:
    mu: float
    orbit_count: int
    classifications: list
    homoclinic_x: float | None = None
    psi_residual: float | None = None
    landing_residual: float | None = None
    tail_length: int | None = None
    pinned_exact: bool | None = None
    passed: bool = False

    def as_dict(self) -> dict:
        return dict(self.__dict__)


CAP_REGION = np.array([[0.76, 1.0], [-0.05, 0.05]])


def verify_family_bifurcation(config: Example2DConfig, mu_list, depth: int = 1,
                              region=CAP_REGION) -> list[FamilyCase]:
    """Search the cap near the x-axis for orbits landing on ``p``: none for
    ``mu <= 0``, one Regular orbit through ``(x*, 0)`` for ``mu > 0``."""
    out = []
    for mu in map(float, mu_list):
        m = config.map(mu)
        rep = find_periodic(m, [0.0, 0.0])
        found = search_homoclinic(m, rep, depth, region=region)
        case = FamilyCase(mu, len(found), [o.classification for o in found])
        if mu < 0:
            case.passed = len(found) == 0
        elif mu == 0:
            case.pinned_exact = bool(np.all(m.eval(np.array([[1.0, 0.0]])) == 0.0))
            case.passed = case.pinned_exact and len(found) == 0
        else:
            xs = config.homoclinic_x(mu)
            case.homoclinic_x = xs
            case.psi_residual = abs(float(config.psi(xs, mu)))
            if len(found) == 1:
                o = found[0]
                case.landing_residual = float(np.linalg.norm(m.eval(o.point[None])[0]))
                case.tail_length = len(o.tail)
                case.passed = (o.classification == "Regular"
                               and abs(o.point[0] - xs) < 1e-8 and abs(o.point[1]) < 1e-8
                               and case.psi_residual < 1e-10 and case.landing_residual < 1e-10)
        out.append(case)
    return out
