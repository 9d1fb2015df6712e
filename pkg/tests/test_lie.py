import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad_vec

from se23_iekf import lie
from se23_iekf.errors import CutLocusError, NumericError

from oracles import expm_se23, expm_so3, random_pose, random_rotation

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)
vec9 = arrays(np.float64, 9, elements=finite)


def _inside_cut_locus(phi, margin=1e-3):
    n = np.linalg.norm(phi)
    if n > np.pi - margin:
        phi = phi / n * (n % (np.pi - margin))
    return phi


@given(vec3)
def test_so3_wedge_vee_roundtrip(phi):
    K = lie.so3_wedge(phi)
    assert np.allclose(K, -K.T)
    assert np.array_equal(lie.so3_vee(K), phi)


@given(vec9)
def test_se23_wedge_vee_roundtrip(xi):
    assert np.array_equal(lie.se23_vee(lie.se23_wedge(xi)), xi)


@given(vec3)
def test_exp_so3_matches_expm(phi):
    assert np.allclose(lie.exp_so3(phi), expm_so3(phi), atol=1e-12)


@given(vec9)
def test_exp_se23_matches_expm(xi):
    assert np.allclose(lie.exp_se23(xi), expm_se23(xi), atol=1e-10 * (1 + np.abs(xi).max()))


@given(vec3)
def test_so3_exp_log_roundtrip(phi):
    phi = _inside_cut_locus(phi)
    assert np.linalg.norm(lie.log_so3(lie.exp_so3(phi)) - phi) <= 1e-9


@given(vec9)
def test_se23_exp_log_roundtrip(xi):
    xi = xi.copy()
    xi[:3] = _inside_cut_locus(xi[:3])
    assert np.linalg.norm(lie.log_se23(lie.exp_se23(xi)) - xi) <= 1e-9


@pytest.mark.parametrize("angle", [0.0, 1e-12, 1e-8, 0.999e-6, 1.001e-6, 1e-4, 1.0, np.pi - 1e-5])
def test_small_and_large_angle_branches(angle, rng):
    axis = rng.standard_normal(3)
    phi = angle * axis / np.linalg.norm(axis)
    assert np.allclose(lie.exp_so3(phi), expm_so3(phi), atol=1e-14)
    Jl = lie.so3_left_jacobian(phi)
    assert np.allclose(Jl @ lie.so3_left_jacobian_inv(phi), np.eye(3), atol=1e-10)
    if angle < np.pi - 1e-3:
        assert np.linalg.norm(lie.log_so3(lie.exp_so3(phi)) - phi) <= 1e-9


def test_left_jacobian_and_double_integral_match_quadrature(rng):
    # J = int_0^1 exp(s phi^) ds,  N = int_0^1 int_0^s exp(t phi^) dt ds = int_0^1 (1 - t) exp(t phi^) dt
    for _ in range(5):
        phi = rng.standard_normal(3) * 1.5
        J, _ = quad_vec(lambda s: expm_so3(s * phi), 0, 1, epsabs=1e-13)
        N, _ = quad_vec(lambda t: (1 - t) * expm_so3(t * phi), 0, 1, epsabs=1e-13)
        assert np.allclose(lie.so3_left_jacobian(phi), J, atol=1e-11)
        assert np.allclose(lie.so3_double_integral(phi), N, atol=1e-11)


def test_log_rejects_cut_locus():
    C = lie.exp_so3(np.array([np.pi, 0.0, 0.0]))
    with pytest.raises(CutLocusError):
        lie.log_so3(C)
    # close to but clear of pi is fine
    phi = np.array([0.0, np.pi - 1e-4, 0.0])
    assert np.allclose(lie.log_so3(lie.exp_so3(phi)), phi, atol=1e-9)


def test_log_rejects_nonfinite():
    with pytest.raises(NumericError):
        lie.log_so3(np.full((3, 3), np.nan))


def test_roundtrip_thousand_random_poses(rng):
    xi = rng.standard_normal((1000, 9)) * 3
    theta = rng.uniform(0, 3.0, 1000)
    axis = rng.standard_normal((1000, 3))
    xi[:, :3] = axis / np.linalg.norm(axis, axis=1, keepdims=True) * theta[:, None]
    err = np.linalg.norm(lie.log_se23(lie.exp_se23(xi)) - xi, axis=1)
    assert err.max() <= 1e-9


def test_inverse_compose_identity(rng):
    X = np.stack([random_pose(rng) for _ in range(20)])
    I = lie.compose(X, lie.inverse(X))
    assert np.allclose(I, np.eye(5), atol=1e-12)
    assert np.allclose(lie.inverse(X), np.linalg.inv(X), atol=1e-12)
    assert np.allclose(lie.left_error(X, X), np.eye(5), atol=1e-12)


def test_parts_roundtrip(rng):
    X = random_pose(rng)
    C, v, r = lie.se23_parts(X)
    assert np.array_equal(lie.se23_from_parts(C, v, r), X)
    assert lie.is_extended_pose(X)


def test_batched_exp_matches_loop(rng):
    xi = rng.standard_normal((4, 7, 9))
    batched = lie.exp_se23(xi)
    for idx in np.ndindex(4, 7):
        assert np.allclose(batched[idx], lie.exp_se23(xi[idx]), atol=1e-15)


def test_project_to_so3(rng):
    C = random_rotation(rng) + 1e-6 * rng.standard_normal((3, 3))
    assert not lie.is_rotation(C)
    P = lie.project_to_so3(C)
    assert lie.orthonormality_defect(P) < 1e-14
    assert np.linalg.det(P) > 0
    assert np.linalg.norm(P - C) < 1e-5
