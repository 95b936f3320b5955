import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from feasops.errors import DimensionMismatch, EmptyIntersection, MultiValuedProjection
from feasops.sets import (AffineSubspace, Box, ClosedBall, Halfspace, Line, ScaledSphere,
                          UnitSphere, contains, distance, intersection_points_sphere_line,
                          project, reflect, set_from_dict)
from feasops.space import SamplerConfig, norm, sample_ball, Ball

coord = st.floats(-10, 10, allow_nan=False)


def catalog(dim=2):
    rng = np.random.default_rng(dim)
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return [
        UnitSphere(dim),
        ScaledSphere(dim, 0.5),
        Line(dim, 0.5),
        AffineSubspace(rng.normal(size=dim), Q[:, :1].T),
        Halfspace(Q[:, 0], 0.3),
        ClosedBall(rng.normal(size=dim), 1.5),
        Box(-np.ones(dim), np.arange(1, dim + 1, dtype=float)),
    ]


CONVEX = [s for s in catalog() if s.convex]


def members(s, count=100, seed=0):
    """Points of s: projections of random points."""
    X = sample_ball(Ball(np.zeros(s.dim), 6.0), SamplerConfig(seed, count))
    return s.project(X)


def test_projection_examples():
    assert np.allclose(project(UnitSphere(2), [3, 4]), [0.6, 0.8])
    assert np.array_equal(project(Line(2, 0.5), [3, 4]), [3, 0.5])
    with pytest.raises(MultiValuedProjection):
        project(UnitSphere(2), [0, 0])


def test_reflection_examples():
    assert np.allclose(reflect(UnitSphere(2), [2, 0]), [0, 0])
    assert np.allclose(reflect(UnitSphere(2), [0.5, 0]), [1.5, 0])
    assert np.allclose(reflect(Line(2, 0.0), [-1.8, -2.4]), [-1.8, 2.4])


def test_contains_examples():
    assert contains(UnitSphere(2), [0.6, 0.8], 1e-12)
    assert contains(Line(2, 0.5), [7, 0.5], 1e-12)
    assert not contains(ClosedBall([0, 0], 1), [1.1, 0], 0.05)
    assert not contains(UnitSphere(2), [0.0, 0.0], 0.5)


def test_intersection_points():
    assert np.allclose(intersection_points_sphere_line(0.0), [[1, 0], [-1, 0]])
    pts = intersection_points_sphere_line(0.5)
    for p in pts:
        assert contains(UnitSphere(2), p) and contains(Line(2, 0.5), p)
    assert np.allclose(sorted(p[0] for p in pts), [-np.sqrt(0.75), np.sqrt(0.75)])
    assert np.allclose(intersection_points_sphere_line(1.0), [[0, 1]])
    assert np.allclose(intersection_points_sphere_line(0.5, dim=4)[0], [np.sqrt(0.75), .5, 0, 0])
    with pytest.raises(EmptyIntersection):
        intersection_points_sphere_line(1.5)


@pytest.mark.parametrize("s", catalog(2) + catalog(3), ids=lambda s: f"{s.kind}{s.dim}")
def test_projection_is_member_and_nearest(s):
    X = sample_ball(Ball(np.zeros(s.dim), 5.0), SamplerConfig(1, 50))
    P = s.project(X)
    assert np.all(contains(s, P, 1e-10))
    Z = members(s, 100, seed=2)
    for x, p in zip(X, P):
        assert norm(x - p) <= norm(x - Z).min() + 1e-10


@pytest.mark.parametrize("s", catalog(2) + catalog(3), ids=lambda s: f"{s.kind}{s.dim}")
def test_idempotence_and_involution(s):
    X = sample_ball(Ball(np.zeros(s.dim), 5.0), SamplerConfig(3, 200))
    P = s.project(X)
    assert np.allclose(s.project(P), P, atol=1e-10, rtol=0)
    assert np.allclose(reflect(s, P), P, atol=1e-9, rtol=0)


@pytest.mark.parametrize("s", CONVEX, ids=lambda s: s.kind)
@given(arrays(float, 2, elements=coord), arrays(float, 2, elements=coord))
def test_firm_nonexpansive(s, x, y):
    px, py = s.project(x), s.project(y)
    lhs = norm(px - py) ** 2 + norm((x - px) - (y - py)) ** 2
    assert lhs <= norm(x - y) ** 2 + 1e-9
    assert norm(reflect(s, x) - reflect(s, y)) <= norm(x - y) + 1e-9


def test_convexity_flags():
    kinds = {s.kind: s.convex for s in catalog()}
    assert not kinds["UnitSphere"] and not kinds["ScaledSphere"]
    assert all(v for k, v in kinds.items() if "Sphere" not in k)


def test_sphere_reflection_closed_form():
    s = ScaledSphere(3, 2.0)
    X = sample_ball(Ball(np.zeros(3), 4.0), SamplerConfig(5, 100))
    assert np.allclose(s.reflect_closed_form(X), reflect(s, X), atol=1e-12)


def test_descriptor_validation():
    with pytest.raises(ValueError):
        Halfspace([1.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        AffineSubspace([0, 0, 0], [[1, 0, 0], [1, 1e-3, 0]])
    with pytest.raises(ValueError):
        Box([1, 0], [0, 1])
    with pytest.raises(ValueError):
        ScaledSphere(2, 0.0)
    with pytest.raises(ValueError):
        Line(2, -0.1)
    with pytest.raises(DimensionMismatch):
        UnitSphere(2).project([1.0, 2.0, 3.0])


@pytest.mark.parametrize("s", catalog(3), ids=lambda s: s.kind)
def test_dict_round_trip(s):
    t = set_from_dict(s.to_dict())
    X = sample_ball(Ball(np.zeros(3), 3.0), SamplerConfig(9, 20))
    assert np.array_equal(t.project(X), s.project(X))
    with pytest.raises(ValueError):
        set_from_dict({"kind": "Nope"})


def test_distance():
    assert distance(UnitSphere(2), [3, 4]) == pytest.approx(4.0)
    assert distance(Halfspace([1.0, 0.0], 1.0), [3, 4]) == pytest.approx(2.0)
