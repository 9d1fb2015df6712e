"""SO(3) and SE_2(3) algebra on plain numpy arrays.

Every function accepts leading batch dimensions: a rotation is ``(..., 3, 3)``,
an extended pose is ``(..., 5, 5)`` laid out as

    [[C, v, r],
     [0, 1, 0],
     [0, 0, 1]]

and a tangent vector is ``(..., 9)`` ordered (theta, v, r).
"""
from __future__ import annotations

import numpy as np

from .errors import CutLocusError, NumericError

SMALL_ANGLE = 1e-6
CUT_LOCUS_TOL = 1e-7
ORTHO_TOL = 1e-9


def so3_wedge(phi):
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(phi.shape[:-1] + (3, 3))
    x, y, z = phi[..., 0], phi[..., 1], phi[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def so3_vee(K):
    K = np.asarray(K, dtype=float)
    return np.stack([K[..., 2, 1], K[..., 0, 2], K[..., 1, 0]], axis=-1)


def se23_wedge(xi):
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (5, 5))
    out[..., :3, :3] = so3_wedge(xi[..., 0:3])
    out[..., :3, 3] = xi[..., 3:6]
    out[..., :3, 4] = xi[..., 6:9]
    return out


def se23_vee(M):
    M = np.asarray(M, dtype=float)
    return np.concatenate([so3_vee(M[..., :3, :3]), M[..., :3, 3], M[..., :3, 4]], axis=-1)


def _angle(phi):
    return np.linalg.norm(phi, axis=-1)[..., None, None]


def _series(theta, small, exact, taylor):
    """Evaluate ``exact(theta)`` with a Taylor fallback below ``SMALL_ANGLE``."""
    safe = np.where(small, 1.0, theta)
    return np.where(small, taylor(theta), exact(safe))


def _rodrigues(phi, c1, c2):
    """Return ``I + a(theta) K + b(theta) K^2`` for coefficient pairs (exact, taylor)."""
    phi = np.asarray(phi, dtype=float)
    K = so3_wedge(phi)
    theta = _angle(phi)
    small = theta < SMALL_ANGLE
    a = _series(theta, small, *c1)
    b = _series(theta, small, *c2)
    return a, b, K


def exp_so3(phi):
    """Rodrigues formula."""
    a, b, K = _rodrigues(
        phi,
        (lambda t: np.sin(t) / t, lambda t: 1.0 - t**2 / 6.0),
        (lambda t: (1.0 - np.cos(t)) / t**2, lambda t: 0.5 - t**2 / 24.0),
    )
    return np.eye(3) + a * K + b * (K @ K)


def so3_left_jacobian(phi):
    a, b, K = _rodrigues(
        phi,
        (lambda t: (1.0 - np.cos(t)) / t**2, lambda t: 0.5 - t**2 / 24.0),
        (lambda t: (t - np.sin(t)) / t**3, lambda t: 1.0 / 6.0 - t**2 / 120.0),
    )
    return np.eye(3) + a * K + b * (K @ K)


def so3_left_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    K = so3_wedge(phi)
    theta = _angle(phi)
    small = theta < SMALL_ANGLE
    b = _series(
        theta,
        small,
        lambda t: (1.0 - 0.5 * t / np.tan(0.5 * t)) / t**2,
        lambda t: 1.0 / 12.0 + t**2 / 720.0,
    )
    return np.eye(3) - 0.5 * K + b * (K @ K)


def so3_double_integral(phi):
    """``N(phi) = int_0^1 (1 - s) exp_so3(s phi) ds``.

    Used for the position increment under a constant body-frame specific force.
    """
    a, b, K = _rodrigues(
        phi,
        (lambda t: (t - np.sin(t)) / t**3, lambda t: 1.0 / 6.0 - t**2 / 120.0),
        (lambda t: (0.5 * t**2 + np.cos(t) - 1.0) / t**4, lambda t: 1.0 / 24.0 - t**2 / 720.0),
    )
    return 0.5 * np.eye(3) + a * K + b * (K @ K)


def log_so3(C):
    """Principal logarithm of a rotation matrix, returned as a rotation vector.

    Raises
    ------
    CutLocusError
        If the rotation angle is within ``CUT_LOCUS_TOL`` of pi.
    """
    C = np.asarray(C, dtype=float)
    if not np.all(np.isfinite(C)):
        raise NumericError("log_so3: non-finite rotation matrix")
    skew = so3_vee(C - np.swapaxes(C, -1, -2))  # 2 sin(theta) axis
    cos = 0.5 * (np.trace(C, axis1=-2, axis2=-1) - 1.0)
    sin = 0.5 * np.linalg.norm(skew, axis=-1)
    theta = np.arctan2(sin, cos)
    if np.any(np.pi - theta < CUT_LOCUS_TOL):
        raise CutLocusError("logarithm near cut locus: rotation angle is within 1e-7 of pi")
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    factor = np.where(small, 0.5 + theta**2 / 12.0, 0.5 * safe / np.sin(safe))
    return factor[..., None] * skew


def se23_from_parts(C, v, r):
    C = np.asarray(C, dtype=float)
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    batch = np.broadcast_shapes(C.shape[:-2], v.shape[:-1], r.shape[:-1])
    X = np.zeros(batch + (5, 5))
    X[..., :3, :3] = C
    X[..., :3, 3] = v
    X[..., :3, 4] = r
    X[..., 3, 3] = 1.0
    X[..., 4, 4] = 1.0
    return X


def se23_parts(X):
    """Split an extended pose into views ``(C, v, r)``."""
    return X[..., :3, :3], X[..., :3, 3], X[..., :3, 4]


def se23_identity(batch=()):
    return np.broadcast_to(np.eye(5), tuple(batch) + (5, 5)).copy()


def exp_se23(xi):
    xi = np.asarray(xi, dtype=float)
    phi = xi[..., 0:3]
    J = so3_left_jacobian(phi)
    v = np.einsum("...ij,...j->...i", J, xi[..., 3:6])
    r = np.einsum("...ij,...j->...i", J, xi[..., 6:9])
    return se23_from_parts(exp_so3(phi), v, r)


def log_se23(X):
    C, v, r = se23_parts(np.asarray(X, dtype=float))
    phi = log_so3(C)
    Jinv = so3_left_jacobian_inv(phi)
    return np.concatenate(
        [
            phi,
            np.einsum("...ij,...j->...i", Jinv, v),
            np.einsum("...ij,...j->...i", Jinv, r),
        ],
        axis=-1,
    )


def compose(X1, X2):
    return np.asarray(X1, dtype=float) @ np.asarray(X2, dtype=float)


def inverse(X):
    """Closed-form inverse ``(C^T, -C^T v, -C^T r)``."""
    C, v, r = se23_parts(np.asarray(X, dtype=float))
    Ct = np.swapaxes(C, -1, -2)
    return se23_from_parts(
        Ct,
        -np.einsum("...ij,...j->...i", Ct, v),
        -np.einsum("...ij,...j->...i", Ct, r),
    )


def left_error(X_true, X_est):
    """Left-invariant error ``X_true^{-1} X_est``."""
    return compose(inverse(X_true), X_est)


def orthonormality_defect(C):
    C = np.asarray(C, dtype=float)
    return np.linalg.norm(np.swapaxes(C, -1, -2) @ C - np.eye(3), axis=(-2, -1))


def project_to_so3(C):
    """Nearest rotation in the Frobenius sense (polar decomposition)."""
    U, _, Vt = np.linalg.svd(np.asarray(C, dtype=float))
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.zeros(d.shape + (3, 3))
    D[..., 0, 0] = 1.0
    D[..., 1, 1] = 1.0
    D[..., 2, 2] = d
    return U @ D @ Vt


def is_rotation(C, tol=ORTHO_TOL):
    C = np.asarray(C, dtype=float)
    return bool(
        np.all(orthonormality_defect(C) <= tol) and np.all(np.abs(np.linalg.det(C) - 1.0) <= tol)
    )


def is_extended_pose(X, tol=ORTHO_TOL):
    X = np.asarray(X, dtype=float)
    if X.shape[-2:] != (5, 5):
        return False
    bottom = np.zeros((2, 5))
    bottom[0, 3] = bottom[1, 4] = 1.0
    return bool(np.all(np.abs(X[..., 3:, :] - bottom) <= tol)) and is_rotation(X[..., :3, :3], tol)
