"""Closed-form Lipschitz bounds and an empirical Lipschitz estimator.

The closed forms cover the sphere reflection and projection away from the
origin, the Douglas-Rachford operator T_{S,C}, and the three-parameter
family.  :func:`empirical_lipschitz` estimates sup |f(x)-f(y)|/|x-y| from
random pairs, nearby pairs and (optionally) tangential pairs on a sphere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BoundUndefined, FeasopsError
from .operators import DR, FamilyParams
from .space import SamplerConfig, norm, random_directions

log = logging.getLogger(__name__)

# pairs closer than this are ignored by the estimator
MIN_PAIR_DISTANCE = 1e-12
TANGENTIAL_ANGLE = 1e-4


@dataclass(frozen=True)
class LipschitzBound:
    value: float
    provenance: str
    region: str


@dataclass
class EmpiricalEstimate:
    sup_ratio: float
    argmax_pair: tuple
    pairs_tested: int
    seed: int
    failures: int = 0

    def recomputed_ratio(self, f: Callable) -> float:
        x, y = (np.atleast_2d(p) for p in self.argmax_pair)
        return float(norm(f(x) - f(y))[0] / norm(x - y)[0])


def _check_beta(beta):
    if not 0.0 <= beta < 1.0:
        raise BoundUndefined(f"bound needs 0 <= beta < 1, got beta={beta}")


def _annulus(beta):
    return f"H \\ B(0, {1.0 - beta:.17g})"


def sphere_reflection_bound(beta: float) -> LipschitzBound:
    """(1 + beta) / (1 - beta): Lipschitz bound of R_S off B(0, 1 - beta)."""
    _check_beta(beta)
    return LipschitzBound((1.0 + beta) / (1.0 - beta), "sphere reflection", _annulus(beta))


def sphere_projection_bound(beta: float) -> LipschitzBound:
    """1 / (1 - beta): Lipschitz bound of P_S off B(0, 1 - beta)."""
    _check_beta(beta)
    return LipschitzBound(1.0 / (1.0 - beta), "sphere projection", _annulus(beta))


def projection_pair_bound(x, y) -> float:
    """max(1/|x|, 1/|y|), the pairwise constant for x/|x| - y/|y|."""
    nx, ny = float(norm(x)), float(norm(y))
    if nx == 0 or ny == 0:
        raise ValueError("projection_pair_bound needs nonzero points")
    return max(1.0 / nx, 1.0 / ny)


def dr_bound(beta: float) -> LipschitzBound:
    """1 / (1 - beta): bound for T_{S,C}, C convex, off B(0, 1 - beta)."""
    _check_beta(beta)
    return LipschitzBound(1.0 / (1.0 - beta), "Douglas-Rachford T_{S,C}", _annulus(beta))


def identity_weight(p: FamilyParams) -> float:
    """s1 + (1-s1)(s2+s3) + (1-s1)(1-s2)s3, the weight kappa treats as non-expansive."""
    s1, s2, s3 = p.as_tuple()
    return s1 + (1.0 - s1) * (s2 + s3) + (1.0 - s1) * (1.0 - s2) * s3


def stated_coefficients(p: FamilyParams) -> tuple:
    """Weights of I, R_S, R_C and R_C R_S in the stated expansion of T^{s}.

    They do not sum to 1; see :func:`expansion_coefficients`.
    """
    s1, s2, s3 = p.as_tuple()
    return (s1 + (1.0 - s1) * (s2 + s3),
            (1.0 - s1) * s2 * (1.0 - s3),
            (1.0 - s1) * (1.0 - s2) * s3,
            (1.0 - s1) * s2 * s3)


def expansion_coefficients(p: FamilyParams) -> tuple:
    """Weights of x, R_S x, R_C(.) and R_C(R_S .) obtained by expanding T^{s} directly.

    T x = a x + b R_S x + (1-s1)(1-s2) R_C(s3 x + (1-s3) R_S x), with
    a = s1 + (1-s1) s2 s3 and b = (1-s1) s2 (1-s3).  The weights returned are
    (a, b, (1-s1)(1-s2) s3, (1-s1)(1-s2)(1-s3)); they sum to one.
    """
    s1, s2, s3 = p.as_tuple()
    return (s1 + (1.0 - s1) * s2 * s3,
            (1.0 - s1) * s2 * (1.0 - s3),
            (1.0 - s1) * (1.0 - s2) * s3,
            (1.0 - s1) * (1.0 - s2) * (1.0 - s3))


def family_bound(p: FamilyParams, beta: float) -> LipschitzBound:
    """kappa(p, beta) = (1 + beta - 2 c beta) / (1 - beta), c = :func:`identity_weight`.

    Evaluated as (1 + (1 - 2c) beta) / (1 - beta) so that the DR preset
    (c = 1/2) reproduces :func:`dr_bound` bit for bit.  This closed form is not
    a valid bound in general; :func:`family_bound_composed` is derived from the
    composition itself.
    """
    _check_beta(beta)
    c = identity_weight(p)
    value = (1.0 + (1.0 - 2.0 * c) * beta) / (1.0 - beta)
    return LipschitzBound(value, f"family kappa{p.as_tuple()}", _annulus(beta))


def family_bound_composed(p: FamilyParams, beta: float) -> LipschitzBound:
    """s1 + (1-s1)(s3 + (1-s3)(1+beta)/(1-beta)), bounding T^{s}_{S,C} for convex C.

    Follows from Lip(R_C) <= 1 and Lip(R_S) <= (1+beta)/(1-beta) applied
    factor by factor.
    """
    rho = sphere_reflection_bound(beta).value
    s1, _, s3 = p.as_tuple()
    value = s1 + (1.0 - s1) * (s3 + (1.0 - s3) * rho)
    return LipschitzBound(value, f"family composed{p.as_tuple()}", _annulus(beta))


def _safe_eval(f, X):
    """Evaluate f on rows of X, falling back to row-by-row on failure."""
    try:
        Y = np.asarray(f(X), dtype=float)
        return Y, np.ones(X.shape[0], dtype=bool)
    except FeasopsError:
        pass
    ok = np.ones(X.shape[0], dtype=bool)
    rows = []
    for i, x in enumerate(X):
        try:
            rows.append(np.asarray(f(x[None, :]), dtype=float)[0])
        except FeasopsError:
            ok[i] = False
            rows.append(np.full(X.shape[1], np.nan))
    return np.array(rows), ok


def tangential_pairs(radius: float, dim: int, cfg: SamplerConfig,
                     angle: float = TANGENTIAL_ANGLE, center=None):
    """Pairs (rho u, rho Rot(angle) u) on the sphere of the given radius."""
    rng = cfg.rng()
    u = random_directions(rng, cfg.count, dim)
    v = random_directions(rng, cfg.count, dim)
    v -= np.sum(u * v, axis=1)[:, None] * u
    vn = norm(v)
    keep = vn > 1e-8
    u, v = u[keep], v[keep] / vn[keep][:, None]
    w = np.cos(angle) * u + np.sin(angle) * v
    X, Y = radius * u, radius * w
    if center is not None:
        X, Y = X + center, Y + center
    return X, Y


def near_pairs(domain, cfg: SamplerConfig, scales=(1e-6, 1e-1)):
    """Pairs (x, x + d) with |d| log-uniform in ``scales``, both inside the domain."""
    rng = cfg.rng()
    X = domain.sample(cfg.child(0))
    dirs = random_directions(rng, X.shape[0], X.shape[1])
    lo, hi = np.log(scales[0]), np.log(scales[1])
    steps = np.exp(rng.uniform(lo, hi, X.shape[0]))
    Y = X + dirs * steps[:, None]
    keep = domain.contains(Y)
    return X[keep], Y[keep]


def pair_ratios(f: Callable, X, Y):
    """Ratios |f(x)-f(y)|/|x-y| for row-aligned pairs; NaN where skipped."""
    FX, okx = _safe_eval(f, X)
    FY, oky = _safe_eval(f, Y)
    dx = norm(X - Y)
    ok = okx & oky & (dx >= MIN_PAIR_DISTANCE)
    ratios = np.full(X.shape[0], np.nan)
    ratios[ok] = norm(FX[ok] - FY[ok]) / dx[ok]
    failures = int(np.sum(~okx) + np.sum(~oky))
    return ratios, failures


def empirical_lipschitz(f: Callable, domain, cfg: SamplerConfig,
                        tangential_radius: float | None = None,
                        tangential_count: int = 2000,
                        near_fraction: float = 0.5) -> EmpiricalEstimate:
    """Estimate the Lipschitz constant of ``f`` over ``domain``.

    ``cfg.count`` pairs are tested: a ``near_fraction`` share are nearby
    pairs and the rest are independent uniform pairs.  If
    ``tangential_radius`` is given, tangential pairs at that radius around
    the origin are added.  The result is a max over pairs, so it does not
    depend on how the pairs are split into batches.
    """
    n_near = int(cfg.count * near_fraction)
    n_far = cfg.count - n_near
    chunks = []
    if n_far:
        X = domain.sample(cfg.child(1, n_far))
        Y = domain.sample(cfg.child(2, n_far))
        chunks.append((X, Y))
    if n_near:
        chunks.append(near_pairs(domain, cfg.child(3, n_near)))
    if tangential_radius is not None:
        chunks.append(tangential_pairs(tangential_radius, domain.dim,
                                       cfg.child(4, tangential_count)))
    best, best_pair, tested, failures = -np.inf, None, 0, 0
    for X, Y in chunks:
        r, nf = pair_ratios(f, X, Y)
        failures += nf
        valid = ~np.isnan(r)
        tested += int(valid.sum())
        if valid.any():
            i = int(np.nanargmax(r))
            if r[i] > best:
                best, best_pair = float(r[i]), (X[i].copy(), Y[i].copy())
    if best_pair is None:
        raise ValueError("no valid pairs were evaluated")
    if failures:
        log.info("empirical_lipschitz: %d evaluations failed and were skipped", failures)
    return EmpiricalEstimate(best, best_pair, tested, cfg.seed, failures)


@dataclass
class CounterexampleReport:
    max_ratio: float
    pair: tuple
    pairs_tested: int


def exchanged_order_counterexample(cfg: SamplerConfig, dim: int = 2,
                                   radius: float = 1e-4) -> CounterexampleReport:
    """Large difference quotients of T_{C,S} with C = L_0 near the origin.

    R_C keeps |x| unchanged for this line, so inputs near the origin are
    fed to R_S near its singularity.  Report only; nothing is asserted.
    """
    from .operators import dr_step
    from .sets import Line, UnitSphere

    C, S = Line(dim, 0.0), UnitSphere(dim)

    def T(X):
        return dr_step(C, S, X)

    X, Y = tangential_pairs(radius, dim, cfg)
    r, _ = pair_ratios(T, X, Y)
    i = int(np.nanargmax(r))
    return CounterexampleReport(float(r[i]), (X[i], Y[i]), int(np.sum(~np.isnan(r))))
