"""Smoothing of Lipschitz maps into contractions, and the three pipelines.

A map F with Lipschitz constant L is pulled toward an anchor point theta,

    G x = (1 - gamma) F x + gamma theta,   gamma = 1 - alpha / L,

so that G has Lipschitz constant alpha.  The pipelines build F from the
sphere operators (via :mod:`feasops.kirszbraun`), smooth it with theta = x0,
and measure both how far G is from the original operator and how fast
iterates of G coalesce on the ball B[x0, r].
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FeasopsError, PreconditionError
from .kirszbraun import build_F, build_F1
from .lipschitz import dr_bound, family_bound, sphere_projection_bound
from .operators import DR, FamilyParams, family_step, vn_step
from .sets import ClosedSet, UnitSphere, contains
from .space import (Ball, SamplerConfig, diam_estimate, norm, point, sample_ball,
                    sample_annulus, sample_sphere)

log = logging.getLogger(__name__)

DECAY_SLACK = 1e-6
APPROX_SLACK = 1e-6
EXTENSION_SLACK = 1e-3
MEMBERSHIP_TOL = 1e-10


@dataclass
class SmoothingPlan:
    """Parameters of a smoothing pipeline; ``theta`` defaults to ``x0``."""

    beta: float
    alpha: float
    r: float
    x0: np.ndarray
    theta: np.ndarray | None = None
    family: FamilyParams = DR
    n_max: int = 60

    def __post_init__(self):
        self.x0 = point(self.x0)
        self.theta = self.x0.copy() if self.theta is None else point(self.theta)

    def gamma(self, L: float) -> float:
        return 1.0 - self.alpha / L

    def to_dict(self):
        return {"beta": self.beta, "alpha": self.alpha, "r": self.r, "x0": self.x0.tolist(),
                "theta": self.theta.tolist(), "family": list(self.family.as_tuple()),
                "n_max": self.n_max}


class Smoothed:
    """G = (1 - gamma) F + gamma theta."""

    def __init__(self, F, gamma: float, theta):
        self.F = F
        self.gamma = gamma
        self.theta = point(theta)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if self.gamma == 1.0:
            return np.broadcast_to(self.theta, X.shape).copy()
        return (1.0 - self.gamma) * self.F(X) + self.gamma * self.theta


def smooth(F, L: float, plan: SmoothingPlan) -> Smoothed:
    """Contract ``F`` (Lipschitz constant ``L``) to Lipschitz constant ``plan.alpha``."""
    if not L > 0:
        raise ValueError("Lipschitz constant must be positive")
    if plan.alpha > L:
        raise ValueError(f"alpha = {plan.alpha:g} exceeds the Lipschitz constant {L:g}")
    if plan.alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return Smoothed(F, plan.gamma(L), plan.theta)


def verify_decay(G, region: Ball, alpha: float, r: float, n_max: int,
                 cfg: SamplerConfig, boundary_count: int | None = None,
                 extra_points=None) -> list:
    """sup over sampled pairs of |G^n x - G^n y| for n = 1..n_max, against 2 r alpha^n.

    Points are uniform in ``region`` plus a boundary share on its sphere.
    If ``G`` fails part way, the rows computed so far are returned.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    boundary_count = max(1, cfg.count // 4) if boundary_count is None else boundary_count
    pts = [sample_ball(region, cfg.child(1))]
    if boundary_count:
        pts.append(sample_sphere(region.center, region.radius, cfg.child(2, boundary_count)))
    if extra_points is not None:
        pts.append(np.atleast_2d(extra_points))
    X = np.vstack(pts)
    rows = []
    for n in range(1, n_max + 1):
        try:
            X = G(X)
        except FeasopsError as exc:
            log.warning("verify_decay aborted at n=%d: %s", n, exc)
            break
        rows.append((n, diam_estimate(X), 2.0 * r * alpha ** n))
    return rows


@dataclass
class ErgodicReport:
    kind: str
    approx_sup: float
    approx_bound: float
    approx_slack: float
    decay_sups: list
    L: float
    gamma: float
    n_max: int
    seeds: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        approx_ok = self.approx_sup <= self.approx_bound + self.approx_slack
        decay_ok = (len(self.decay_sups) == self.n_max
                    and all(s <= b + DECAY_SLACK for _, s, b in self.decay_sups))
        return bool(approx_ok and decay_ok)

    def to_dict(self):
        d = asdict(self)
        d["decay_sups"] = [list(row) for row in self.decay_sups]
        d["pass"] = self.passed
        return d

    def write_json(self, fh, config=None):
        d = self.to_dict()
        if config is not None:
            d = {"config": config, **d}
        json.dump(d, fh, indent=2, default=_json_default)
        fh.write("\n")

    def write_decay_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "observed", "bound"])
        for n, s, b in self.decay_sups:
            w.writerow([n, f"{s:.17g}", f"{b:.17g}"])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _fmt(v):
    return f"{v:.6g}"


def plan_violations(kind: str, plan: SmoothingPlan, C: ClosedSet | None = None) -> list:
    """Hypotheses of the chosen pipeline that ``plan`` (and ``C``) fail.

    ``kind`` is ``"dr"``, ``"family"`` or ``"vn"``.  Each entry names the
    inequality and the values of both sides.
    """
    out = []
    beta, alpha, r = plan.beta, plan.alpha, plan.r
    if not 0.0 <= beta < 1.0:
        return [f"0 ≤ β < 1: β = {_fmt(beta)}"]
    if not alpha > 0:
        out.append(f"α > 0: α = {_fmt(alpha)}")
    if kind == "dr":
        need_r, cap = 2.0 / (1.0 - beta), dr_bound(beta).value
        if r < need_r:
            out.append(f"r ≥ 2/(1−β): {_fmt(r)} < {_fmt(need_r)}")
        if alpha > cap:
            out.append(f"α ≤ 1/(1−β): {_fmt(alpha)} > {_fmt(cap)}")
    elif kind == "family":
        kappa = family_bound(plan.family, beta).value
        if r < 2.0 * kappa:
            out.append(f"r ≥ 2κ: {_fmt(r)} < {_fmt(2.0 * kappa)}")
        if alpha > kappa:
            out.append(f"α ≤ κ: {_fmt(alpha)} > {_fmt(kappa)}")
    elif kind == "vn":
        cap = sphere_projection_bound(beta).value
        if r < 2.0:
            out.append(f"r ≥ 2: {_fmt(r)} < 2")
        if alpha > cap:
            out.append(f"α ≤ 1/(1−β): {_fmt(alpha)} > {_fmt(cap)}")
    else:
        raise ValueError(f"unknown pipeline kind {kind!r}")
    x0 = plan.x0
    if abs(float(norm(x0)) - 1.0) > MEMBERSHIP_TOL:
        out.append(f"x0 ∈ S: |x0| = {float(norm(x0)):.17g}")
    if C is not None:
        if C.dim != x0.size:
            out.append(f"dim C = dim x0: {C.dim} ≠ {x0.size}")
        else:
            if not C.convex:
                out.append(f"C convex: {C.kind} is not convex")
            if not bool(contains(C, x0, MEMBERSHIP_TOL)):
                out.append("x0 ∈ C: distance "
                           f"{float(norm(C.project(x0) - x0)):.3g} > {MEMBERSHIP_TOL:g}")
    if float(norm(plan.theta - x0)) > r:
        out.append(f"θ ∈ B[x0, r]: |θ − x0| = {_fmt(float(norm(plan.theta - x0)))} > {_fmt(r)}")
    return out


@dataclass
class PipelineCounts:
    """Sample sizes used by a pipeline run."""

    approx: int = 10_000
    approx_inner: int = 200
    inclusion: int = 2000
    inclusion_inner: int = 200
    decay: int = 400
    decay_boundary: int = 100
    anchors: int | None = None


def default_anchor_count(dim: int) -> int:
    """Initial anchors for the inner extension; boundary refinement adds more on demand."""
    return 512


def _region_samples(plan, cfg, n_ball, n_inner, cut, exclude_inner):
    """Uniform ball samples plus samples concentrated near the excised ball."""
    ball = Ball(plan.x0, plan.r)
    dim = plan.x0.size
    if exclude_inner:
        parts = [sample_annulus(ball, cut, cfg.child(1, n_ball)),
                 sample_sphere(np.zeros(dim), cut, cfg.child(2, n_inner))]
    else:
        parts = [sample_ball(ball, cfg.child(1, n_ball)),
                 sample_ball(Ball(np.zeros(dim), cut), cfg.child(2, n_inner)),
                 sample_sphere(np.zeros(dim), cut, cfg.child(3, n_inner))]
    edge = sample_sphere(plan.x0, plan.r, cfg.child(4, n_inner))
    parts.append(edge[norm(edge) >= cut] if exclude_inner else edge)
    X = np.vstack(parts)
    return X[norm(X) > 0]


def _run(kind: str, C: ClosedSet, plan: SmoothingPlan, cfg: SamplerConfig,
         counts: PipelineCounts | None) -> ErgodicReport:
    counts = counts or PipelineCounts()
    violations = plan_violations(kind, plan, C)
    if violations:
        raise PreconditionError(violations)
    dim = plan.x0.size
    S = UnitSphere(dim)
    cut = 1.0 - plan.beta
    n_anchors = counts.anchors or default_anchor_count(dim)
    region = Ball(plan.x0, plan.r)

    if kind == "vn":
        L = sphere_projection_bound(plan.beta).value

        def T(X):
            return vn_step(C, X)

        F = build_F1(C, plan.beta, plan.x0, plan.r, cfg.child(100), n_anchors=n_anchors)
    else:
        p = DR if kind == "dr" else plan.family
        L = dr_bound(plan.beta).value if kind == "dr" else family_bound(p, plan.beta).value

        def T(X):
            return family_step(p, S, C, X)

        F = build_F(C, plan.beta, p, cfg.child(100), region, n_anchors=n_anchors, L=L)

    checks = {}
    Xi = _region_samples(plan, cfg.child(101), counts.inclusion, counts.inclusion_inner,
                         cut, exclude_inner=False)
    FXi = F(Xi)
    checks["inclusion_sup"] = float(np.max(norm(FXi - plan.x0)))
    checks["inclusion_bound"] = plan.r
    checks["inclusion_ok"] = checks["inclusion_sup"] <= plan.r + EXTENSION_SLACK

    G = smooth(F, L, plan)
    gamma = G.gamma
    Gx0 = G(plan.x0)
    checks["fixed_point_residual"] = float(norm(Gx0 - plan.x0))

    exclude = kind != "vn"
    Xa = _region_samples(plan, cfg.child(102), counts.approx, counts.approx_inner,
                         cut, exclude_inner=exclude)
    approx_sup = float(np.max(norm(G(Xa) - T(Xa))))
    approx_bound = 2.0 * plan.r * gamma
    # interior points are evaluated through the extension
    approx_slack = APPROX_SLACK if exclude else EXTENSION_SLACK

    if kind == "vn":
        Xd = sample_ball(region, cfg.child(104, 10_000))
        Xd = Xd[norm(Xd) > 0]
        dist = norm(T(Xd) - T(plan.x0[None, :]))
        checks["dist_less_2_sup"] = float(dist.max())
        checks["dist_less_2_ok"] = bool(dist.max() <= 2.0 + 1e-12)

    decay = verify_decay(G, region, plan.alpha, plan.r, plan.n_max,
                         cfg.child(103, counts.decay), boundary_count=counts.decay_boundary,
                         extra_points=plan.x0)
    checks["extension_solves"] = F.extension.solves
    checks["extension_worst_h"] = float(F.extension.worst_h)
    report = ErgodicReport(
        kind=kind, approx_sup=approx_sup, approx_bound=approx_bound,
        approx_slack=approx_slack, decay_sups=decay, L=L, gamma=gamma, n_max=plan.n_max,
        seeds={"root": cfg.seed}, counts=asdict(counts) | {"anchors": n_anchors},
        checks=checks)
    log.info("%s pipeline: approx %.6g / %.6g, pass=%s", kind, approx_sup, approx_bound,
             report.passed)
    return report


def run_pipeline_dr(C: ClosedSet, plan: SmoothingPlan, cfg: SamplerConfig,
                    counts: PipelineCounts | None = None) -> ErgodicReport:
    """Smoothed Douglas-Rachford operator T_{S,C}: L = 1/(1-beta), theta = x0."""
    return _run("dr", C, plan, cfg, counts)


def run_pipeline_family(C: ClosedSet, plan: SmoothingPlan, cfg: SamplerConfig,
                        counts: PipelineCounts | None = None) -> ErgodicReport:
    """As :func:`run_pipeline_dr` for T^{s}_{S,C} with L = kappa(s, beta).

    With the DR preset this reproduces :func:`run_pipeline_dr` exactly.
    """
    return _run("family", C, plan, cfg, counts)


def run_pipeline_vn(C: ClosedSet, plan: SmoothingPlan, cfg: SamplerConfig,
                    counts: PipelineCounts | None = None) -> ErgodicReport:
    """Smoothed von Neumann operator P_C P_S; only r >= 2 is required."""
    return _run("vn", C, plan, cfg, counts)
