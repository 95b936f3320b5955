"""Euclidean primitives, balls and seeded sampling.

Points are plain 1-D ``numpy`` float arrays; batches of points are 2-D
arrays with one point per row.  Everything here is a pure function of its
inputs, and every random draw goes through :class:`SamplerConfig` so that
a seed fully determines the sample sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyRegion

# minimum acceptance rate tolerated by rejection sampling
MIN_ACCEPTANCE = 1e-6


def point(coords) -> np.ndarray:
    """Validate ``coords`` and return them as a float point."""
    x = np.array(coords, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DimensionMismatch(f"a point must be a non-empty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"point has non-finite coordinates: {x}")
    return x


def basis(dim: int, i: int) -> np.ndarray:
    """Standard basis vector e_i (zero-based index) in R^dim."""
    e = np.zeros(dim)
    e[i] = 1.0
    return e


def _check_dims(x, y):
    if np.shape(x)[-1] != np.shape(y)[-1]:
        raise DimensionMismatch(f"dimension mismatch: {np.shape(x)[-1]} vs {np.shape(y)[-1]}")


def inner(x, y):
    """Euclidean inner product along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(x, y)
    return np.sum(x * y, axis=-1)


def norm(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.einsum("...i,...i->...", x, x))


def diam_estimate(points, chunk: int = 2048) -> float:
    """Largest pairwise distance of a finite point set.

    This is a lower bound on the diameter of any set containing the points.
    Memory use is bounded by processing rows in chunks.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0 or pts.size == 0:
        raise ValueError("diam_estimate needs at least one point")
    best = 0.0
    for start in range(0, pts.shape[0], chunk):
        block = pts[start:start + chunk]
        # squared distances via differences (not the Gram trick) to keep exact zeros
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        best = max(best, float(np.sqrt(d2.max())))
    return best


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", point(self.center))
        if not self.radius >= 0:
            raise ValueError(f"ball radius must be nonnegative, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, x, tol: float = 0.0):
        d = norm(np.asarray(x, dtype=float) - self.center)
        if self.closed:
            return d <= self.radius + tol
        return d < self.radius + tol

    def sample(self, cfg: SamplerConfig) -> np.ndarray:
        return sample_ball(self, cfg)


@dataclass(frozen=True)
class Shell:
    """Points of ``outer`` whose distance from the origin is at least ``inner_radius``.

    This is the region B[c, R] minus the open ball B(0, inner_radius).
    """

    outer: Ball
    inner_radius: float

    @property
    def dim(self) -> int:
        return self.outer.dim

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        return self.outer.contains(x, tol) & (norm(x) >= self.inner_radius - tol)

    def sample(self, cfg: SamplerConfig) -> np.ndarray:
        return sample_annulus(self.outer, self.inner_radius, cfg)


@dataclass(frozen=True)
class SamplerConfig:
    """Seed and sample count for a reproducible draw.

    The generator is Philox (counter based), keyed by the seed; derived
    streams for sub-tasks come from :meth:`child`, so adding a new consumer
    never shifts the numbers seen by an existing one.
    """

    seed: int = 0
    count: int = 1000

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"sample count must be positive, got {self.count}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, tag: int, count: int | None = None) -> SamplerConfig:
        state = np.random.SeedSequence([self.seed, tag]).generate_state(1, dtype=np.uint64)
        return SamplerConfig(int(state[0]), self.count if count is None else count)

    def with_count(self, count: int) -> SamplerConfig:
        return SamplerConfig(self.seed, count)


def random_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Uniform unit vectors (normalized Gaussians)."""
    g = rng.standard_normal((count, dim))
    n = norm(g)
    # a zero Gaussian draw has probability zero; redraw defensively
    while np.any(n == 0):
        bad = n == 0
        g[bad] = rng.standard_normal((int(bad.sum()), dim))
        n = norm(g)
    return g / n[:, None]


def _ball_points(rng, ball: Ball, count: int) -> np.ndarray:
    u = random_directions(rng, count, ball.dim)
    radii = ball.radius * rng.random(count) ** (1.0 / ball.dim)
    offsets = u * radii[:, None]
    # rounding can push |offset| a hair above the radius
    lengths = norm(offsets)
    over = lengths > ball.radius
    if np.any(over):
        offsets[over] *= (ball.radius / lengths[over])[:, None]
    return ball.center + offsets


def sample_ball(ball: Ball, cfg: SamplerConfig) -> np.ndarray:
    """``cfg.count`` points uniformly distributed in ``ball``."""
    if not ball.radius > 0:
        raise ValueError("sample_ball needs a positive radius")
    return _ball_points(cfg.rng(), ball, cfg.count)


def sample_sphere(center, radius: float, cfg: SamplerConfig) -> np.ndarray:
    """``cfg.count`` points uniformly distributed on the sphere of given radius."""
    center = point(center)
    u = random_directions(cfg.rng(), cfg.count, center.size)
    return center + radius * u


def sample_annulus(outer: Ball, inner_radius: float, cfg: SamplerConfig,
                   batch: int = 65536) -> np.ndarray:
    """Uniform points of ``outer`` with norm at least ``inner_radius``.

    Rejection sampling from :func:`sample_ball`.  Raises :class:`EmptyRegion`
    when the region is empty or the acceptance rate drops below 1e-6.
    """
    if not outer.radius > 0:
        raise ValueError("sample_annulus needs a positive outer radius")
    reach = float(norm(outer.center)) + outer.radius
    if reach < inner_radius:
        raise EmptyRegion(
            f"B[c,{outer.radius:g}] lies inside B(0,{inner_radius:g}): farthest norm {reach:g}")
    rng = cfg.rng()
    kept = []
    n_kept = 0
    drawn = 0
    while n_kept < cfg.count:
        pts = _ball_points(rng, outer, batch)
        drawn += batch
        ok = pts[norm(pts) >= inner_radius]
        kept.append(ok)
        n_kept += ok.shape[0]
        if drawn >= 1_000_000 and n_kept / drawn < MIN_ACCEPTANCE:
            raise EmptyRegion(
                f"acceptance rate {n_kept / drawn:.3g} below {MIN_ACCEPTANCE:g}")
    return np.concatenate(kept)[:cfg.count]
