"""Douglas-Rachford operator, its three-parameter family, and iteration.

Step functions accept a single point or a batch of points (rows).
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MultiValuedProjection
from .sets import ClosedSet, Line, UnitSphere, contains, project, reflect
from .space import Ball, SamplerConfig, norm, point, sample_annulus

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FamilyParams:
    """Weights (s1, s2, s3) of s1 I + (1-s1)(s2 I + (1-s2) R_B)(s3 I + (1-s3) R_A)."""

    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        for name in ("s1", "s2", "s3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def as_tuple(self):
        return (self.s1, self.s2, self.s3)


DR = FamilyParams(0.5, 0.0, 0.0)
VN = FamilyParams(0.0, 0.5, 0.5)


def _reflect_staged(s, x, stage):
    try:
        return reflect(s, x)
    except MultiValuedProjection as exc:
        raise MultiValuedProjection(str(exc), stage=stage) from None


def _project_staged(s, x, stage):
    try:
        return project(s, x)
    except MultiValuedProjection as exc:
        raise MultiValuedProjection(str(exc), stage=stage) from None


def dr_step(A: ClosedSet, B: ClosedSet, x):
    """T_{A,B} x = (x + R_B R_A x) / 2."""
    x = np.asarray(x, dtype=float)
    ra = _reflect_staged(A, x, "inner")
    return (x + _reflect_staged(B, ra, "outer")) / 2.0


def family_step(p: FamilyParams, A: ClosedSet, B: ClosedSet, x):
    """Evaluate the parametric operator T^{s1,s2,s3}_{A,B} at ``x``.

    ``s = 1`` in a factor skips the corresponding reflection entirely, so
    e.g. ``s1 = 1`` is the identity even at points where R_A is undefined.
    """
    x = np.asarray(x, dtype=float)
    if p.s1 == 1.0:
        return x.copy()
    y = x if p.s3 == 1.0 else p.s3 * x + (1.0 - p.s3) * _reflect_staged(A, x, "inner")
    z = y if p.s2 == 1.0 else p.s2 * y + (1.0 - p.s2) * _reflect_staged(B, y, "outer")
    return p.s1 * x + (1.0 - p.s1) * z


def vn_step(C: ClosedSet, x):
    """P_C P_S x (alternating projections, sphere first)."""
    x = np.asarray(x, dtype=float)
    s = UnitSphere(x.shape[-1])
    return _project_staged(C, _project_staged(s, x, "inner"), "outer")


class StopReason(enum.Enum):
    MAX_ITER = "MaxIter"
    CONVERGED = "Converged"
    PROJECTION_UNDEFINED = "ProjectionUndefined"


@dataclass
class IterationTrace:
    points: np.ndarray
    stop_reason: StopReason
    conv_tol: float | None = None
    error: str | None = None

    @property
    def last(self) -> np.ndarray:
        return self.points[-1]

    @property
    def steps(self) -> np.ndarray:
        """|x_{k+1} - x_k| for consecutive iterates."""
        return norm(np.diff(self.points, axis=0))

    def replay_error(self, step: Callable) -> float:
        """Largest |step(x_k) - x_{k+1}| over the trace."""
        if len(self.points) < 2:
            return 0.0
        return float(np.max(norm(step(self.points[:-1]) - self.points[1:])))

    def to_csv(self, fh, header_lines=()):
        """One row per iterate: n, coordinates, |x_{n+1} - x_n| (blank on the last row)."""
        for line in header_lines:
            fh.write(f"# {line}\n")
        dim = self.points.shape[1]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + [f"x{i + 1}" for i in range(dim)] + ["step_norm"])
        steps = self.steps
        for n, x in enumerate(self.points):
            row = [n] + [f"{v:.17g}" for v in x]
            row.append(f"{steps[n]:.17g}" if n < len(steps) else "")
            w.writerow(row)


def iterate(step: Callable, x0, max_n: int, conv_tol: float = 0.0) -> IterationTrace:
    """Run x_{k+1} = step(x_k) until max_n steps or |x_{k+1} - x_k| <= conv_tol."""
    if max_n < 1:
        raise ValueError("max_n must be positive")
    x = point(x0)
    pts = np.empty((max_n + 1, x.size))
    pts[0] = x
    for k in range(max_n):
        try:
            nxt = step(x)
        except MultiValuedProjection as exc:
            return IterationTrace(pts[:k + 1].copy(), StopReason.PROJECTION_UNDEFINED,
                                  conv_tol, str(exc))
        pts[k + 1] = nxt
        # hand-rolled norm: this loop dominates trajectory runtimes
        d = nxt - x
        if np.sqrt(d @ d) <= conv_tol:
            return IterationTrace(pts[:k + 2].copy(), StopReason.CONVERGED, conv_tol)
        x = nxt
    return IterationTrace(pts, StopReason.MAX_ITER, conv_tol)


def is_fixed_point(A: ClosedSet, B: ClosedSet, x, tol: float = 1e-10) -> bool:
    """P_A x lies within ``tol`` of both A and B.

    Every fixed point of T_{A,B} passes this test and every point of A ∩ B
    is fixed, but off A the converse can fail: with A = S and p in S ∩ B,
    every x = t p (t > 0) passes while only t = 1 is fixed (e.g. B = L_0,
    x = (2, 0) maps to (1, 0)).  The exact condition is P_B R_A x = P_A x,
    see :func:`is_fixed_point_exact`.
    """
    pa = _project_staged(A, np.asarray(x, dtype=float), "inner")
    return bool(contains(A, pa, tol) and contains(B, pa, tol))


def is_fixed_point_exact(A: ClosedSet, B: ClosedSet, x, tol: float = 1e-10) -> bool:
    """T_{A,B} x = x up to ``tol``, tested as |P_B R_A x - P_A x| <= tol."""
    x = np.asarray(x, dtype=float)
    pa = _project_staged(A, x, "inner")
    pb = _project_staged(B, 2.0 * pa - x, "outer")
    return bool(norm(pb - pa) <= tol)


def is_fixed_point_batch(A, B, X, tol=1e-10):
    pa = project(A, np.asarray(X, dtype=float))
    return contains(A, pa, tol) & contains(B, pa, tol)


class SignClass(enum.Enum):
    PLUS = "Plus"
    MINUS = "Minus"
    ZERO = "Zero"


def sign_class(x, tol: float = 0.0) -> SignClass:
    """Side of the hyperplane <x, e_1> = 0, with a zero band of half-width ``tol``."""
    c = float(np.asarray(x, dtype=float)[0])
    if c > tol:
        return SignClass.PLUS
    if c < -tol:
        return SignClass.MINUS
    return SignClass.ZERO


def _sign_codes(X, tol):
    c = X[:, 0]
    return np.where(c > tol, 1, np.where(c < -tol, -1, 0))


@dataclass
class SignInvarianceReport:
    lam: float
    samples: int
    violations: list = field(default_factory=list)
    zero_starts: int = 0
    zero_max_abs: float = 0.0
    zero_tol: float = 1e-12

    @property
    def ok(self) -> bool:
        return not self.violations and self.zero_max_abs <= self.zero_tol


def check_sign_invariance(lam: float, cfg: SamplerConfig, dim: int = 2,
                          radius: float = 5.0, hole: float = 0.01,
                          tol: float = 0.0) -> SignInvarianceReport:
    """Check that T_{S,L_lambda} keeps H+, H- and H0 invariant.

    Samples come from B[0, radius] minus B(0, hole).  A second batch of
    starts has first coordinate exactly zero and must map to points with
    |<Tx, e_1>| <= 1e-12.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    S, L = UnitSphere(dim), Line(dim, lam)
    X = sample_annulus(Ball(np.zeros(dim), radius), hole, cfg)
    TX = dr_step(S, L, X)
    before, after = _sign_codes(X, tol), _sign_codes(TX, tol)
    bad = np.flatnonzero(before != after)
    report = SignInvarianceReport(lam, X.shape[0])
    for i in bad:
        report.violations.append({"x": X[i].tolist(), "Tx": TX[i].tolist()})

    Z = sample_annulus(Ball(np.zeros(dim), radius), hole, cfg.child(1))
    Z[:, 0] = 0.0
    Z = Z[norm(Z) > 0]
    TZ = dr_step(S, L, Z)
    report.zero_starts = Z.shape[0]
    report.zero_max_abs = float(np.max(np.abs(TZ[:, 0]))) if Z.shape[0] else 0.0
    if report.violations:
        log.warning("sign invariance: %d violations for lambda=%g", len(bad), lam)
    return report
