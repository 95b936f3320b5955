"""Pointwise Lipschitz extension from a finite sample.

Given anchors a_i with values v_i and a constant L, the extension at a
query x is the deepest point of the ball intersection

    min_y  h(y) = max_i ( |y - v_i| - L |x - a_i| ).

Kirszbraun's theorem guarantees min h <= 0 whenever the sample itself is
L-Lipschitz, so the minimizer satisfies every ball constraint.  The convex
problem is solved by a subgradient method with Polyak-type steps toward a
moving target level, then polished with SLSQP on the epigraph form.
"""

from __future__ import annotations

import csv
import logging
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .errors import InfeasibleExtension, SampleConsistencyError
from .lipschitz import family_bound, sphere_projection_bound
from .operators import FamilyParams, family_step, vn_step
from .sets import ClosedSet, Halfspace, UnitSphere
from .space import Ball, SamplerConfig, norm, point, sample_annulus, sample_sphere

log = logging.getLogger(__name__)

CONSISTENCY_SLACK = 1e-9
MIN_ANCHOR_GAP = 1e-12


@dataclass
class MinimaxSettings:
    max_iter: int = 400
    tol: float = 1e-6
    polish: bool = True
    polish_iter: int = 200
    # balls handed to the solver first; others join only if violated
    working_set: int = 64


@dataclass
class MinimaxResult:
    point: np.ndarray
    value: float
    iterations: int


def _h(y, centers, radii):
    g = norm(centers - y) - radii
    i = int(np.argmax(g))
    return float(g[i]), i


def _subgradient(centers, radii, y0, max_iter, project=None, delta=None):
    """Level-targeted Polyak subgradient method on h; returns (best y, best h, iterations).

    ``delta`` is the initial gap between the best value and the target level.
    """
    y = y0.copy()
    d = norm(centers - y)
    g = d - radii
    i = int(np.argmax(g))
    h = float(g[i])
    best_h, best_y = h, y.copy()
    if delta is None:
        delta = max(0.5 * float(d.max()), 1e-3)
    k = 0
    for k in range(max_iter):
        if d[i] == 0.0:
            # y sits on the center of the active ball: subgradient 0, optimal
            break
        target = best_h - delta
        y = y - (h - target) / d[i] * (y - centers[i])
        if project is not None:
            y = project(y)
        d = norm(centers - y)
        g = d - radii
        i = int(np.argmax(g))
        h = float(g[i])
        delta *= 1.5 if h <= target + 0.5 * delta else 0.7
        if h < best_h:
            best_h, best_y = h, y.copy()
        if delta < 1e-14 * (1.0 + abs(best_h)):
            break
    return best_y, best_h, k + 1


def _polish(centers, radii, y, h, maxiter, extra_cons=()):
    """SLSQP on min t s.t. |y - c_i| - r_i <= t, started from (y, h)."""
    n = y.size

    def cons_fun(z):
        return z[n] + radii - norm(centers - z[:n])

    def cons_jac(z):
        diff = z[:n] - centers
        d = norm(diff)
        d = np.where(d > 0, d, 1.0)
        jac = np.empty((centers.shape[0], n + 1))
        jac[:, :n] = -diff / d[:, None]
        jac[:, n] = 1.0
        return jac

    z0 = np.append(y, h)
    cons = [{"type": "ineq", "fun": cons_fun, "jac": cons_jac}, *extra_cons]
    res = minimize(lambda z: z[n], z0, jac=lambda z: np.eye(n + 1)[n], method="SLSQP",
                   constraints=cons, options={"maxiter": maxiter, "ftol": 1e-15})
    return res.x[:n]


def solve_minimax(centers, radii, settings: MinimaxSettings | None = None,
                  project=None, extra_cons=(), y0=None) -> MinimaxResult:
    """Deepest point of the ball family {B[c_i, r_i]}, i.e. argmin max_i(|y-c_i| - r_i).

    Starts at the centroid of the centers unless a warm start ``y0`` is given.  ``project`` (a map onto a convex
    set) turns the method into projected subgradient; ``extra_cons`` are
    passed through to the SLSQP polish.  Returns the best iterate found.
    """
    settings = settings or MinimaxSettings()
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if centers.shape[0] == 0:
        raise ValueError("solve_minimax needs at least one ball")
    if centers.shape[0] != radii.size:
        raise ValueError("one radius per center is required")
    if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(radii))):
        raise ValueError("non-finite ball data")
    delta = None
    if y0 is None:
        y0 = centers.mean(axis=0)
    else:
        # a warm start is close: size the first target by its current gap
        y0 = np.asarray(y0, dtype=float)
        delta = max(abs(_h(y0, centers, radii)[0]), 1e-9)
    if project is not None:
        y0 = project(y0)
    if centers.shape[0] == 1:
        y0 = centers[0].copy() if project is None else project(centers[0])
        return MinimaxResult(y0, _h(y0, centers, radii)[0], 0)
    y, h, its = _subgradient(centers, radii, y0, settings.max_iter, project, delta)
    if settings.polish and (project is None or extra_cons):
        # polish against the nearly active balls first, then all of them if needed
        gaps = norm(centers - y) - radii
        near = gaps >= h - max(0.5, 10.0 * abs(h))
        for subset in (near, None):
            c_sub = centers if subset is None else centers[subset]
            r_sub = radii if subset is None else radii[subset]
            cand = _polish(c_sub, r_sub, y, h, settings.polish_iter, extra_cons)
            if project is not None:
                cand = project(cand)
            if not np.all(np.isfinite(cand)):
                continue
            hc, _ = _h(cand, centers, radii)
            if hc < h:
                y, h = cand, hc
                break
            if subset is None or near.all():
                break
    return MinimaxResult(y, h, its)


@dataclass
class LipschitzSample:
    """Finite restriction data: ``values[i]`` is the image of ``anchors[i]``."""

    anchors: np.ndarray
    values: np.ndarray
    L: float

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.anchors.shape[0] != self.values.shape[0]:
            raise ValueError("anchors and values must have the same length")
        if not self.L > 0:
            raise ValueError("Lipschitz constant must be positive")

    def __len__(self):
        return self.anchors.shape[0]

    def worst_pair(self, chunk: int = 1024):
        """(ratio excess, i, j) for the pair maximizing |v_i-v_j| - L|a_i-a_j|."""
        A, V = self.anchors, self.values
        worst = (-np.inf, -1, -1)
        for s in range(0, len(self), chunk):
            da = cdist(A[s:s + chunk], A)
            dv = cdist(V[s:s + chunk], V)
            excess = dv - self.L * da
            np.fill_diagonal(excess[:, s:s + chunk], -np.inf)
            k = int(np.argmax(excess))
            i, j = divmod(k, len(self))
            if excess[i, j] > worst[0]:
                worst = (float(excess[i, j]), s + i, j)
        return worst

    def check_consistency(self, slack: float = CONSISTENCY_SLACK):
        """Raise :class:`SampleConsistencyError` on the worst violating pair."""
        if len(self) < 2:
            return
        excess, i, j = self.worst_pair()
        if excess > slack:
            a_i, a_j = self.anchors[i], self.anchors[j]
            ratio = float(norm(self.values[i] - self.values[j]) / norm(a_i - a_j))
            raise SampleConsistencyError(
                f"anchors {a_i.tolist()} and {a_j.tolist()} have value ratio {ratio:.6g} "
                f"> L = {self.L:.6g}", pair=(a_i, a_j), ratio=ratio)

    def min_anchor_gap(self) -> float:
        if len(self) < 2:
            return np.inf
        best = np.inf
        for s in range(0, len(self), 1024):
            d = cdist(self.anchors[s:s + 1024], self.anchors)
            np.fill_diagonal(d[:, s:s + 1024], np.inf)
            best = min(best, float(d.min()))
        return best

    def to_rows(self):
        """Flat table rows: anchor coords, value coords, L."""
        na, nv = self.anchors.shape[1], self.values.shape[1]
        header = [f"a{i + 1}" for i in range(na)] + [f"v{i + 1}" for i in range(nv)] + ["L"]
        rows = [[f"{c:.17g}" for c in np.concatenate([a, v])] + [f"{self.L:.17g}"]
                for a, v in zip(self.anchors, self.values)]
        return header, rows

    def write_csv(self, fh):
        header, rows = self.to_rows()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    @classmethod
    def read_csv(cls, fh):
        lines = [ln for ln in fh if not ln.startswith("#")]
        r = csv.reader(lines)
        header = next(r)
        na = sum(1 for h in header if h.startswith("a"))
        nv = sum(1 for h in header if h.startswith("v"))
        data = np.array([[float(v) for v in row] for row in r if row])
        return cls(data[:, :na], data[:, na:na + nv], float(data[0, -1]))


BOUNDARY_ROUNDS = 60
BOUNDARY_SLACK = 1e-11
# a boundary violation eps at a query a distance d from the sphere raises a
# difference quotient by at most eps / d, so the slack scales with d
BOUNDARY_REL_SLACK = 1e-6


@dataclass
class SphereBoundary:
    """A sphere of radius ``radius`` on which the extended map ``f`` is known exactly.

    Used to constrain queries inside the sphere against the whole sphere
    rather than a finite subset: a segment from an inside point to an
    outside point crosses the sphere once, so this is what keeps pairs that
    straddle it within the constant.  ``mask`` optionally restricts the part
    of the sphere that counts.
    """

    radius: float
    f: object
    mask: object = None
    starts: int = 3
    probes: int = 24
    precision: float = 1e-3

    def _ok(self, a):
        return self.mask is None or bool(self.mask(a[None, :])[0])

    def worst(self, q, v, L, sample):
        """Local maximizers of |v - f(a)| - L|q - a| over the boundary, best first."""
        rho = self.radius
        A = sample.anchors
        on = np.abs(norm(A) - rho) <= 1e-12 * max(rho, 1.0)
        if not on.any():
            return np.empty((0, q.size)), np.empty(0)
        A, V = A[on], sample.values[on]
        psi = norm(V - v) - L * norm(A - q)
        top = np.argsort(-psi)[:self.starts]
        seeds = [A[i] for i in top]
        nq = float(norm(q))
        if nq > 0:
            seeds.append(rho * q / nq)

        C = np.array(seeds)
        psi_c = self._psi(C, q, v, L)
        rng = np.random.Generator(np.random.Philox(key=0))
        dim = q.size
        # curvature of the objective grows like L / dist(q, sphere), so the
        # search can stop at a width relative to that distance
        gap = abs(rho - nq)
        w_min = max(self.precision * gap, 1e-11 * rho)
        w = np.full(C.shape[0], 0.05 * rho)
        for _ in range(200):
            live = w > w_min
            if not live.any():
                break
            Cl = C[live]
            # random tangent offsets of length w around each live center
            t = rng.standard_normal((Cl.shape[0], self.probes, dim))
            t -= np.einsum("skd,sd->sk", t, Cl)[..., None] * Cl[:, None, :] / rho ** 2
            t *= (w[live, None] / np.maximum(norm(t), 1e-300))[..., None]
            P = Cl[:, None, :] + t
            P *= (rho / norm(P))[..., None]
            vals = self._psi(P.reshape(-1, dim), q, v, L).reshape(P.shape[:2])
            k = np.argmax(vals, axis=1)
            best = vals[np.arange(len(k)), k]
            better = best > psi_c[live]
            idx = np.flatnonzero(live)
            C[idx[better]] = P[better, k[better]]
            psi_c[idx[better]] = best[better]
            w[idx[~better]] *= 0.5
        order = np.argsort(-psi_c)
        keep = [i for i in order if self._ok(C[i])]
        return C[keep], psi_c[keep]

    def _psi(self, A, q, v, L):
        return norm(self.f(A) - v) - L * norm(A - q)


class ExtensionMap:
    """Lazy Kirszbraun extension of a :class:`LipschitzSample`.

    With ``memoize`` on, each evaluated query is appended to the sample so
    that repeated and later queries stay mutually consistent.  A
    ``boundary`` makes inner queries respect the map on a whole sphere (see
    :class:`SphereBoundary`).  Evaluations are serialized by a lock since
    either mechanism may append to the sample.
    """

    def __init__(self, sample: LipschitzSample, settings: MinimaxSettings | None = None,
                 range_set: ClosedSet | None = None, memoize: bool = True,
                 boundary: SphereBoundary | None = None):
        self.sample = sample
        self.boundary = boundary
        self.settings = settings or MinimaxSettings()
        self.range_set = range_set
        self.memoize = memoize
        self._index = {a.tobytes(): i for i, a in enumerate(sample.anchors)}
        # solves read the sample and may append to it, so they hold this lock
        self._lock = threading.RLock()
        self.solves = 0
        self.worst_h = -np.inf

    @property
    def L(self):
        return self.sample.L

    def _range_constraint(self):
        rs = self.range_set
        if isinstance(rs, Halfspace):
            return [{"type": "ineq",
                     "fun": lambda z: rs.offset - z[:rs.dim] @ rs.normal,
                     "jac": lambda z: np.append(-rs.normal, 0.0)}]
        from .sets import ClosedBall
        if isinstance(rs, ClosedBall):
            def fun(z):
                return rs.radius - norm(z[:rs.dim] - rs.center)

            def jac(z):
                d = z[:rs.dim] - rs.center
                n = norm(d)
                g = -d / n if n > 0 else np.zeros_like(d)
                return np.append(g, 0.0)
            return [{"type": "ineq", "fun": fun, "jac": jac}]
        return []

    def _solve_working_set(self, radii, project=None, extra_cons=(), y0=None):
        """Solve on the nearest anchors, adding violated balls until none remain."""
        V = self.sample.values
        k = self.settings.working_set
        if len(radii) <= k:
            idx = np.arange(len(radii))
        else:
            idx = np.sort(np.argpartition(radii, k)[:k])
        while True:
            res = solve_minimax(V[idx], radii[idx], self.settings, project, extra_cons, y0)
            y0 = res.point
            g = norm(V - res.point) - radii
            worst = float(g.max())
            outside = np.setdiff1d(np.flatnonzero(g > res.value + 1e-12), idx)
            if outside.size == 0:
                return MinimaxResult(res.point, worst, res.iterations)
            add = outside[np.argsort(-g[outside])[:k]]
            idx = np.union1d(idx, add)

    def solve(self, x) -> MinimaxResult:
        """Solve at ``x``; with a boundary, also against every point of that sphere.

        Each round solves on the current anchors, then searches the boundary
        sphere for the most violated constraint and adds it as an exact anchor.
        """
        x = point(x)
        res = self._solve_fixed(x)
        b = self.boundary
        if b is None:
            return res
        slack = max(BOUNDARY_SLACK, BOUNDARY_REL_SLACK * abs(b.radius - float(norm(x))))
        for _ in range(BOUNDARY_ROUNDS):
            A, psi = b.worst(x, res.point, self.L, self.sample)
            bad = psi > res.value + slack
            if not bad.any():
                top = float(psi[0]) if psi.size else -np.inf
                return MinimaxResult(res.point, max(res.value, top), res.iterations)
            A = A[bad]
            for a, v in zip(A, b.f(A)):
                self._append(a, v)
            res = self._solve_fixed(x, res.point)
        log.warning("boundary refinement hit %d rounds at %s", BOUNDARY_ROUNDS, x.tolist())
        return res

    def _append(self, a, v):
        with self._lock:
            key = a.tobytes()
            if key not in self._index:
                s = self.sample
                self._index[key] = len(s)
                s.anchors = np.vstack([s.anchors, a])
                s.values = np.vstack([s.values, v])

    def _solve_fixed(self, x, y0=None) -> MinimaxResult:
        radii = self.L * norm(self.sample.anchors - x)
        res = self._solve_working_set(radii, y0=y0)
        if self.range_set is not None:
            y = self.range_set.project(res.point)
            h, _ = _h(y, self.sample.values, radii)
            if h > self.settings.tol:
                log.debug("range projection broke feasibility (h=%g); re-solving", h)
                res = self._solve_working_set(radii, self.range_set.project,
                                              self._range_constraint(), y)
                y = self.range_set.project(res.point)
                h, _ = _h(y, self.sample.values, radii)
            res = MinimaxResult(y, h, res.iterations)
        return res

    def extend(self, x) -> np.ndarray:
        x = point(x)
        with self._lock:
            return self._extend_locked(x)

    def _extend_locked(self, x):
        key = x.tobytes()
        i = self._index.get(key)
        if i is not None:
            return self.sample.values[i].copy()
        res = self.solve(x)
        self.solves += 1
        self.worst_h = max(self.worst_h, res.value)
        if not res.value <= self.settings.tol:
            raise InfeasibleExtension(
                f"minimax value {res.value:.3g} > {self.settings.tol:g} at {x.tolist()}",
                achieved=res.value)
        if self.memoize:
            self._append(x, res.point)
        return res.point.copy()

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return self.extend(X)
        return np.array([self.extend(x) for x in X])


def extend(e: ExtensionMap, x) -> np.ndarray:
    return e.extend(x)


class PiecewiseExtension:
    """``inside`` on the open ball B(0, cut), ``outside`` elsewhere.

    ``outside`` is a batch-capable closed-form operator; ``inside`` is the
    extension map.  Points with |x| >= cut are evaluated by ``outside``
    through the identical code path, so results there are bitwise equal.
    """

    def __init__(self, outside, inside: ExtensionMap, cut: float):
        self.outside = outside
        self.inside = inside
        self.cut = cut

    @property
    def extension(self) -> ExtensionMap:
        return self.inside

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        out = np.empty_like(X2)
        n = norm(X2)
        far = n >= self.cut
        if far.any():
            out[far] = self.outside(X2[far])
        for i in np.flatnonzero(~far):
            out[i] = self.inside.extend(X2[i])
        return out[0] if single else out


def _split(total, parts):
    return [total // parts + (1 if i < total % parts else 0) for i in range(parts)]


def build_F(C: ClosedSet, beta: float, p: FamilyParams, cfg: SamplerConfig, region: Ball,
            n_anchors: int = 512, settings: MinimaxSettings | None = None,
            range_set: ClosedSet | None = None, anchor_filter=None,
            L: float | None = None) -> PiecewiseExtension:
    """Lipschitz operator equal to T^{p}_{S,C} off B(0, 1 - beta).

    Anchors: half on the sphere of radius 1 - beta, half in
    ``region`` minus B(0, 1 - beta).  The extension constant defaults to
    ``family_bound(p, beta)``.  ``anchor_filter`` (a boolean mask function on
    anchor rows) restricts the anchors, e.g. to a closed halfspace.
    """
    dim = region.dim
    S = UnitSphere(dim)
    cut = 1.0 - beta
    L = family_bound(p, beta).value if L is None else L

    def T(X):
        return family_step(p, S, C, X)

    n_sphere, n_shell = _split(n_anchors, 2)
    anchors = np.vstack([
        sample_sphere(np.zeros(dim), cut, cfg.child(11, n_sphere)),
        sample_annulus(region, cut, cfg.child(12, n_shell)),
    ])
    if anchor_filter is not None:
        anchors = anchors[anchor_filter(anchors)]
    sample = LipschitzSample(anchors, T(anchors), L)
    sample.check_consistency()
    boundary = SphereBoundary(cut, T, anchor_filter)
    ext = ExtensionMap(sample, settings, range_set=range_set, boundary=boundary)
    return PiecewiseExtension(T, ext, cut)


def build_F1(C: ClosedSet, beta: float, x0, r: float, cfg: SamplerConfig,
             n_anchors: int = 512, settings: MinimaxSettings | None = None
             ) -> PiecewiseExtension:
    """P_C P_S off B(0, 1 - beta); inside, an extension of P_C P_S restricted to (1-beta)S.

    Lipschitz constant 1/(1 - beta); extension values are confined to B[x0, r].
    """
    x0 = point(x0)
    if r < 2:
        raise ValueError(f"build_F1 needs r >= 2, got {r}")
    if abs(float(norm(x0)) - 1.0) > 1e-10 or float(norm(C.project(x0) - x0)) > 1e-10:
        raise ValueError("x0 must lie in the intersection of S and C")
    cut = 1.0 - beta
    L = sphere_projection_bound(beta).value

    def T(X):
        return vn_step(C, X)

    anchors = sample_sphere(np.zeros(x0.size), cut, cfg.child(21, n_anchors))
    sample = LipschitzSample(anchors, T(anchors), L)
    sample.check_consistency()
    from .sets import ClosedBall
    ext = ExtensionMap(sample, settings, range_set=ClosedBall(x0, r),
                       boundary=SphereBoundary(cut, T))
    return PiecewiseExtension(T, ext, cut)
