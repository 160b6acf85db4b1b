"""Map abstraction, Jacobians, bump deformations and the built-in catalog.

Maps act on arrays of points: ``func`` takes shape ``(n, d)`` and returns
``(n, d)``; an analytic ``jac`` returns ``(n, d, d)``.  Calling a
:class:`MapDefinition` on a single point of shape ``(d,)`` works too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import PreconditionError, SnapbackError

TWO_PI = 2.0 * np.pi
FD_STEP = 1e-6

PHASE_SPACES = ("real-line", "plane", "circle")


@dataclass(frozen=True, eq=False)
class MapDefinition:
    """A smooth endomorphism of R, R^2 or the circle.

    ``domain`` is a ``(d, 2)`` box used as the default search region;
    ``contains`` optionally restricts the phase domain further (e.g. an open
    disk).  Instances are immutable and safe to share between threads.
    """

    name: str
    dimension: int
    phase_space: str
    func: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = FD_STEP
    domain: Optional[np.ndarray] = None
    contains: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.phase_space not in PHASE_SPACES:
            raise ValueError(f"unknown phase space {self.phase_space!r}")
        if self.phase_space != "plane" and self.dimension != 1:
            raise ValueError("only d=1 on the line/circle")
        if self.domain is None:
            if self.phase_space == "circle":
                dom = np.array([[0.0, TWO_PI]])
            else:
                dom = np.tile([-10.0, 10.0], (self.dimension, 1))
            object.__setattr__(self, "domain", dom)
        else:
            object.__setattr__(self, "domain", np.asarray(self.domain, dtype=float).reshape(self.dimension, 2))

    @property
    def jacobian_mode(self) -> str:
        return "analytic" if self.jac is not None else f"finite-difference(h={self.fd_step:g})"

    @property
    def is_circle(self) -> bool:
        return self.phase_space == "circle"

    # -- phase-space geometry -------------------------------------------------
    def reduce(self, X: np.ndarray) -> np.ndarray:
        if self.is_circle:
            return np.mod(X, TWO_PI)
        return X

    def diff(self, A, B) -> np.ndarray:
        """``A - B`` taken in the phase space (shortest arc on the circle)."""
        D = np.asarray(A, dtype=float) - np.asarray(B, dtype=float)
        if self.is_circle:
            D = np.mod(D + np.pi, TWO_PI) - np.pi
        return D

    def dist(self, A, B) -> np.ndarray:
        return np.linalg.norm(np.atleast_1d(self.diff(A, B)), axis=-1)

    def in_domain(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        ok = np.all(np.isfinite(X), axis=-1)
        if self.contains is not None:
            ok &= self.contains(X)
        return ok

    # -- evaluation -----------------------------------------------------------
    def eval(self, X: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on ``(n, d)`` arrays."""
        return self.reduce(self.func(np.asarray(X, dtype=float)))

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 2:
            return self.eval(arr)
        return self.eval(arr.reshape(1, self.dimension))[0]

    def iterate(self, x, n: int):
        y = np.asarray(x, dtype=float)
        for _ in range(n):
            y = self(y)
        return y

    def jacobians(self, X: np.ndarray) -> np.ndarray:
        """``(n, d, d)`` Jacobians at the rows of ``X``."""
        X = np.asarray(X, dtype=float)
        if self.jac is not None:
            return np.asarray(self.jac(X), dtype=float)
        return finite_difference_jacobians(self, X, self.fd_step)


def finite_difference_jacobians(m: MapDefinition, X: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Fourth-order central differences with step ``h``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    J = np.empty((n, d, d))
    for j in range(d):
        E = np.zeros(d)
        E[j] = h
        near = m.diff(m.func(X + E), m.func(X - E))
        far = m.diff(m.func(X + 2 * E), m.func(X - 2 * E))
        J[:, :, j] = (8 * near - far) / (12 * h)
    return J


def jacobian(m: MapDefinition, x) -> np.ndarray:
    """Jacobian matrix at a single point; analytic if available."""
    x = np.asarray(x, dtype=float).reshape(1, m.dimension)
    J = m.jacobians(x)[0]
    if not np.all(np.isfinite(J)):
        raise SnapbackError("non-finite Jacobian entries: point outside evaluation domain",
                            point=x[0].tolist(), map=m.name)
    return J


def iterate_with_jacobian(m: MapDefinition, x, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``f^n(x)`` and ``Df^n_x`` by the chain rule."""
    y = np.asarray(x, dtype=float).reshape(1, m.dimension)
    J = np.eye(m.dimension)
    for _ in range(n):
        J = m.jacobians(y)[0] @ J
        y = m.eval(y)
    return y[0], J


# -- bump deformations ----------------------------------------------------------

def plateau(t, r1: float, r2: float) -> np.ndarray:
    """C^2 plateau: 1 on [0, r1], 0 on [r2, inf), quintic smoothstep between."""
    t = np.asarray(t, dtype=float)
    s = np.clip((t - r1) / (r2 - r1), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def plateau_prime(t, r1: float, r2: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = np.clip((t - r1) / (r2 - r1), 0.0, 1.0)
    return -30.0 * s**2 * (1.0 - s) ** 2 / (r2 - r1)


@dataclass(frozen=True)
class BumpDeformation:
    center: np.ndarray
    inner_radius: float
    outer_radius: float
    direction: np.ndarray
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        v = np.atleast_1d(np.asarray(self.direction, dtype=float))
        nv = np.linalg.norm(v)
        if nv == 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", v / nv)


def deform(base: MapDefinition, bump: BumpDeformation,
           protected: Sequence[tuple] = ()) -> MapDefinition:
    """Add ``amplitude * rho(|y - center|) * direction`` to ``base``.

    ``protected`` is a list of ``(point, radius)`` neighborhoods (typically a
    repellor and its basin ball) that the bump support must not touch.
    """
    if not 0 < bump.inner_radius < bump.outer_radius:
        raise ValueError("need 0 < inner_radius < outer_radius")
    d = base.dimension
    if bump.center.size != d or bump.direction.size != d:
        raise ValueError("center/direction dimension mismatch")
    for point, radius in protected:
        gap = float(base.dist(bump.center, np.asarray(point, dtype=float)))
        if gap < bump.outer_radius + radius:
            raise PreconditionError("bump support overlaps a protected repellor neighborhood",
                                    point=np.atleast_1d(point).tolist(), radius=radius, gap=gap)
    c, e, mu = bump.center, bump.direction, bump.amplitude
    r1, r2 = bump.inner_radius, bump.outer_radius

    def func(X):
        D = base.diff(X, c)
        t = np.linalg.norm(D, axis=-1)
        return base.func(X) + mu * plateau(t, r1, r2)[:, None] * e

    def jac(X):
        D = base.diff(X, c)
        t = np.linalg.norm(D, axis=-1)
        safe = np.where(t > 0, t, 1.0)
        grad = (plateau_prime(t, r1, r2) / safe)[:, None] * D
        return base.jacobians(X) + mu * e[None, :, None] * grad[:, None, :]

    return MapDefinition(
        name=f"{base.name}+bump", dimension=d, phase_space=base.phase_space,
        func=func, jac=jac, domain=base.domain, contains=base.contains,
        params=base.params + (float(mu),), meta=dict(base.meta),
    )


# -- built-in maps ----------------------------------------------------------------

def logistic(mu: float) -> MapDefinition:
    mu = float(mu)
    return MapDefinition(
        name="logistic", dimension=1, phase_space="real-line",
        func=lambda X: 4.0 * mu * X * (1.0 - X),
        jac=lambda X: (4.0 * mu * (1.0 - 2.0 * X))[:, :, None],
        domain=np.array([[-0.25, 1.25]]), params=(mu,),
        meta={"critical_points": [0.5]},
    )


def doubling() -> MapDefinition:
    return MapDefinition(
        name="doubling", dimension=1, phase_space="circle",
        func=lambda X: 2.0 * X,
        jac=lambda X: np.full((X.shape[0], 1, 1), 2.0),
    )


def fold_normal(d: int) -> MapDefinition:
    d = int(d)
    if d < 1:
        raise ValueError("fold_normal needs d >= 1")

    def func(X):
        Y = X.copy()
        Y[:, -1] = X[:, -1] ** 2
        return Y

    def jac(X):
        J = np.broadcast_to(np.eye(d), (X.shape[0], d, d)).copy()
        J[:, -1, -1] = 2.0 * X[:, -1]
        return J

    return MapDefinition(name="fold_normal", dimension=d,
                         phase_space="real-line" if d == 1 else "plane",
                         func=func, jac=jac, domain=np.tile([-2.0, 2.0], (d, 1)), params=(d,))


def linear(a: float) -> MapDefinition:
    """x -> a x on the line."""
    a = float(a)
    return MapDefinition(name="linear", dimension=1, phase_space="real-line",
                         func=lambda X: a * X,
                         jac=lambda X: np.full((X.shape[0], 1, 1), a), params=(a,))


def _example2d(mu: float) -> MapDefinition:
    from .example2d import Example2DConfig

    return Example2DConfig().map(mu)


_BUILTINS: dict[str, tuple[int, Callable[..., MapDefinition]]] = {
    "logistic": (1, logistic),
    "doubling": (0, doubling),
    "fold_normal": (1, fold_normal),
    "example2d": (1, _example2d),
    "linear": (1, linear),
}


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)


def make_builtin(name: str, params: Sequence[float] = ()) -> MapDefinition:
    try:
        nparams, ctor = _BUILTINS[name]
    except KeyError:
        raise SnapbackError(f"unknown map {name!r}", known=builtin_names()) from None
    params = list(params)
    if len(params) != nparams:
        raise SnapbackError(f"map {name!r} takes {nparams} parameter(s), got {len(params)}",
                            map=name, params=params)
    return ctor(*params)


# -- parametric families -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParametricFamily:
    """A continuous one-parameter family ``mu -> f_mu`` with a common fixed
    repellor ``fixed_point``."""

    name: str
    parameter_range: tuple[float, float]
    at_: Callable[[float], MapDefinition]
    fixed_point: np.ndarray
    continuity_step: float = 1e-3
    critical_point: Optional[Callable[[float], np.ndarray]] = None
    known_mu0: Optional[float] = None

    def at(self, mu: float) -> MapDefinition:
        lo, hi = self.parameter_range
        if not lo <= mu <= hi:
            raise SnapbackError(f"mu={mu} outside parameter range {self.parameter_range}",
                                family=self.name, mu=mu)
        return self.at_(float(mu))

    @property
    def dimension(self) -> int:
        return int(np.asarray(self.fixed_point).size)


def logistic_family() -> ParametricFamily:
    return ParametricFamily("logistic", (0.3, 1.5), logistic, np.array([0.0]),
                            critical_point=lambda mu: np.array([0.5]), known_mu0=1.0)


def linear_family() -> ParametricFamily:
    """x -> 2 mu x."""
    return ParametricFamily("linear", (0.6, 4.0), lambda mu: linear(2.0 * mu), np.array([0.0]))


def frozen_family(base: str, params: Sequence[float], parameter_range=(0.0, 2.0)) -> ParametricFamily:
    m = make_builtin(base, params)
    fp = np.zeros(m.dimension)
    cp = m.meta.get("critical_points")
    return ParametricFamily(f"frozen:{base}", tuple(parameter_range), lambda mu: m, fp,
                            critical_point=(lambda mu: np.array(cp[:1])) if cp else None)


def example2d_family() -> ParametricFamily:
    from .example2d import Example2DConfig

    cfg = Example2DConfig()
    return ParametricFamily("example2d", (-0.1, 0.1), cfg.map, np.zeros(2),
                            critical_point=lambda mu: np.array([0.75, 0.0]))


_FAMILIES = {
    "logistic": logistic_family,
    "linear": linear_family,
    "example2d": example2d_family,
}


def make_family(name: str) -> ParametricFamily:
    """Built-in families; ``frozen:<map>:<p1>,<p2>`` freezes a map for all mu."""
    if name.startswith("frozen:"):
        _, base, *rest = name.split(":")
        params = [float(v) for v in rest[0].split(",")] if rest and rest[0] else []
        return frozen_family(base, params)
    try:
        return _FAMILIES[name]()
    except KeyError:
        raise SnapbackError(f"unknown family {name!r}", known=sorted(_FAMILIES)) from None
