"""Closed sets with closed-form projections, and reflections through them.

Every set works on a single point (shape ``(n,)``) or a batch of points
(shape ``(m, n)``); projections act along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import DimensionMismatch, EmptyIntersection, MultiValuedProjection
from .space import norm, point

# default absolute membership tolerance
MEMBERSHIP_TOL = 1e-10


def _as_array(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise DimensionMismatch(f"point of dimension {x.shape[-1]} used with a set in R^{dim}")
    return x


class ClosedSet:
    """Base class; subclasses implement ``_project`` and the dict round trip."""

    kind: ClassVar[str] = ""
    convex: ClassVar[bool] = True
    dim: int

    def project(self, x):
        return self._project(_as_array(x, self.dim))

    def _project(self, x):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ScaledSphere(ClosedSet):
    """The sphere {x : |x| = rho} centred at the origin."""

    dim: int
    rho: float = 1.0

    kind: ClassVar[str] = "ScaledSphere"
    convex: ClassVar[bool] = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"sphere radius must be positive, got {self.rho}")

    def _project(self, x):
        n = norm(x)
        if np.any(n == 0):
            raise MultiValuedProjection("projection onto a sphere is multi-valued at the origin")
        return self.rho * x / np.expand_dims(n, -1)

    def reflect_closed_form(self, x):
        """(2 rho / |x| - 1) x, the same map as ``2 P x - x``."""
        x = _as_array(x, self.dim)
        n = norm(x)
        if np.any(n == 0):
            raise MultiValuedProjection("projection onto a sphere is multi-valued at the origin")
        return (2.0 * self.rho / np.expand_dims(n, -1) - 1.0) * x

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "rho": self.rho}


@dataclass(frozen=True)
class UnitSphere(ScaledSphere):
    rho: float = field(default=1.0, init=False)

    kind: ClassVar[str] = "UnitSphere"

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class Line(ClosedSet):
    """L_lambda = {t e_1 + lambda e_2 : t real}; needs dim >= 2."""

    dim: int
    lam: float = 0.0

    kind: ClassVar[str] = "Line"

    def __post_init__(self):
        if self.dim < 2:
            raise DimensionMismatch("Line needs dimension at least 2")
        if not self.lam >= 0:
            raise ValueError(f"Line offset lambda must be >= 0, got {self.lam}")

    def _project(self, x):
        y = np.zeros_like(x)
        y[..., 0] = x[..., 0]
        y[..., 1] = self.lam
        return y

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "lam": self.lam}


@dataclass(frozen=True, eq=False)
class AffineSubspace(ClosedSet):
    """base + span(directions); ``directions`` rows must be orthonormal."""

    base: np.ndarray
    directions: np.ndarray

    kind: ClassVar[str] = "AffineSubspace"

    def __post_init__(self):
        base = point(self.base)
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float)).reshape(-1, base.size)
        gram = dirs @ dirs.T
        if dirs.shape[0] and not np.allclose(gram, np.eye(dirs.shape[0]), rtol=0, atol=1e-12):
            raise ValueError("affine subspace directions must be orthonormal")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "directions", dirs)

    @property
    def dim(self):
        return self.base.size

    def _project(self, x):
        d = x - self.base
        coeff = d @ self.directions.T
        return self.base + coeff @ self.directions

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.tolist(),
                "directions": self.directions.tolist()}


@dataclass(frozen=True, eq=False)
class Halfspace(ClosedSet):
    """{x : <normal, x> <= offset} with a unit normal."""

    normal: np.ndarray
    offset: float = 0.0

    kind: ClassVar[str] = "Halfspace"

    def __post_init__(self):
        a = point(self.normal)
        if abs(float(norm(a)) - 1.0) > 1e-12:
            raise ValueError("halfspace normal must have unit norm")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.size

    def _project(self, x):
        excess = np.maximum(x @ self.normal - self.offset, 0.0)
        return x - np.expand_dims(excess, -1) * self.normal

    def to_dict(self):
        return {"kind": self.kind, "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class ClosedBall(ClosedSet):
    center: np.ndarray
    radius: float

    kind: ClassVar[str] = "ClosedBall"

    def __post_init__(self):
        object.__setattr__(self, "center", point(self.center))
        if not self.radius >= 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def _project(self, x):
        d = x - self.center
        n = norm(d)
        scale = np.where(n > self.radius, self.radius / np.where(n > 0, n, 1.0), 1.0)
        return self.center + np.expand_dims(scale, -1) * d

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box(ClosedSet):
    lower: np.ndarray
    upper: np.ndarray

    kind: ClassVar[str] = "Box"

    def __post_init__(self):
        lo, hi = point(self.lower), point(self.upper)
        if lo.size != hi.size:
            raise DimensionMismatch("box bounds have different dimensions")
        if np.any(lo > hi):
            raise ValueError("box needs lower <= upper coordinatewise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def _project(self, x):
        return np.clip(x, self.lower, self.upper)

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


_KINDS = {
    "UnitSphere": lambda d: UnitSphere(int(d["dim"])),
    "ScaledSphere": lambda d: ScaledSphere(int(d["dim"]), float(d["rho"])),
    "Line": lambda d: Line(int(d["dim"]), float(d.get("lam", 0.0))),
    "AffineSubspace": lambda d: AffineSubspace(d["base"], d["directions"]),
    "Halfspace": lambda d: Halfspace(d["normal"], d.get("offset", 0.0)),
    "ClosedBall": lambda d: ClosedBall(d["center"], d["radius"]),
    "Box": lambda d: Box(d["lower"], d["upper"]),
}


def set_from_dict(d: dict) -> ClosedSet:
    """Inverse of ``ClosedSet.to_dict``."""
    try:
        build = _KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown set kind {d.get('kind')!r}") from None
    return build(d)


def project(s: ClosedSet, x):
    """Nearest point of ``s`` to ``x``."""
    return s.project(x)


def reflect(s: ClosedSet, x):
    """R_s x = 2 P_s x - x."""
    x = np.asarray(x, dtype=float)
    return 2.0 * s.project(x) - x


def distance(s: ClosedSet, x):
    x = np.asarray(x, dtype=float)
    return norm(x - s.project(x))


def contains(s: ClosedSet, x, tol: float = MEMBERSHIP_TOL):
    """True where the distance from ``x`` to ``s`` is at most ``tol``.

    The center of a sphere has a well-defined distance (rho) even though the
    projection there is not unique.
    """
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    x = _as_array(x, s.dim)
    if isinstance(s, ScaledSphere):
        return np.abs(norm(x) - s.rho) <= tol
    return distance(s, x) <= tol


def intersection_points_sphere_line(lam: float, dim: int = 2) -> list:
    """Points of S cap L_lambda for 0 <= lambda <= 1."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam > 1:
        raise EmptyIntersection(f"unit sphere and L_{lam:g} do not meet (lambda > 1)")
    if lam == 1:
        p = np.zeros(dim)
        p[1] = 1.0
        return [p]
    t = np.sqrt(1.0 - lam * lam)
    pts = []
    for sgn in (1.0, -1.0):
        p = np.zeros(dim)
        p[0] = sgn * t
        p[1] = lam
        pts.append(p)
    return pts
