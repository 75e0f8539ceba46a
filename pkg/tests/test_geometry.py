import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from stretchlab.errors import AxisPointError
from stretchlab.geometry import (
    CylPoint,
    CylVec,
    adjugate,
    angle_diff,
    det3,
    from_cylindrical,
    matmul,
    rotation_z,
    to_cylindrical,
    vector_from_cylindrical,
    vector_to_cylindrical,
)

from conftest import random_off_axis

finite = st.floats(-10, 10, allow_nan=False)


def test_basis_examples():
    assert vector_to_cylindrical([1.0, 0, 0], [1.0, 0, 0]) == CylVec(1.0, 0.0, 0.0)
    c = vector_to_cylindrical([0, 1.0, 0], [1.0, 0, 0])
    assert np.allclose(c, (0.0, -1.0, 0.0))


def test_point_round_trip_example():
    p = np.array([0.3, -0.4, 2.0])
    q = to_cylindrical(p)
    assert q.r == pytest.approx(0.5)
    assert np.allclose(from_cylindrical(q), p, atol=1e-15)


def test_vector_conversion_on_axis_raises():
    with pytest.raises(AxisPointError):
        vector_to_cylindrical([0, 0, 3.0], [1.0, 0, 0])
    with pytest.raises(AxisPointError):
        vector_from_cylindrical([0, 0, 0.0], CylVec(1.0, 0, 0))


def test_point_conversion_allows_axis():
    q = to_cylindrical([0, 0, 1.0])
    assert q.r == 0 and q.z == 1.0


def test_round_trips_1000_points(rng):
    p = random_off_axis(rng, 1000)
    v = rng.uniform(-1, 1, (1000, 3))
    assert np.abs(from_cylindrical(to_cylindrical(p)) - p).max() <= 1e-12
    w = vector_to_cylindrical(p, v)
    assert np.abs(vector_from_cylindrical(p, w) - v).max() <= 1e-12
    assert np.abs(w.norm() - np.linalg.norm(v, axis=-1)).max() <= 1e-12


def test_unreduced_theta_round_trip():
    q = CylPoint(0.5, 7 * np.pi + 0.3, 0.0)
    back = to_cylindrical(from_cylindrical(q))
    assert abs(angle_diff(back.theta, q.theta)) < 1e-12
    assert back.r == pytest.approx(0.5)


@given(st.tuples(finite, finite, finite).filter(lambda p: np.hypot(p[0], p[1]) > 1e-3),
       st.tuples(finite, finite, finite))
def test_vector_round_trip_property(p, v):
    w = vector_to_cylindrical(np.array(p), np.array(v))
    assert np.allclose(vector_from_cylindrical(np.array(p), w), v, atol=1e-12, rtol=0)


def test_adjugate_examples():
    assert np.array_equal(adjugate(np.eye(3)), np.eye(3))
    assert np.allclose(adjugate(np.diag([2.0, 0.5, 1.0])), np.diag([0.5, 2.0, 1.0]))
    assert np.array_equal(adjugate(2 * np.eye(3)), 4 * np.eye(3))


def test_adjugate_singular_input():
    a = np.array([[1.0, 2, 3], [2, 4, 6], [0, 1, 1]])
    assert det3(a) == 0
    assert np.allclose(a @ adjugate(a), 0)


def test_adjugate_identity_1000_random(rng):
    a = rng.uniform(-1, 1, (1000, 3, 3))
    lhs = matmul(a, adjugate(a))
    rhs = det3(a)[:, None, None] * np.eye(3)
    assert np.abs(lhs - rhs).max() <= 1e-12


@given(arrays(float, (3, 3), elements=st.floats(-5, 5)))
def test_adjugate_is_inverse_times_det(a):
    assert np.allclose(a @ adjugate(a), det3(a) * np.eye(3), atol=1e-10)
    assert np.allclose(adjugate(a) @ a, det3(a) * np.eye(3), atol=1e-10)


def test_det_examples(rng):
    assert det3(np.eye(3)) == 1
    assert det3(rotation_z(0.7)) == pytest.approx(1.0, abs=1e-15)
    assert det3(np.diag([2.0, 3.0, 4.0])) == 24
    a = rng.normal(size=(50, 3, 3))
    assert np.allclose(det3(a), np.linalg.det(a))


def test_angle_diff_range():
    d = angle_diff(np.linspace(-20, 20, 101), 0.0)
    assert np.all(d >= -np.pi) and np.all(d < np.pi)
