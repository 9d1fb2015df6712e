"""Left-invariant EKF on SE_2(3) and the multiplicative EKF baseline.

Both filters carry a 9x9 covariance over the error ordered (theta, v, r).

IEKF error: ``X^{-1} X_hat = exp(xi^)`` (left-invariant).

MEKF error: ``C^T C_hat = exp(theta^)`` for attitude (the same body-frame
rotation error as the IEKF), ``v - v_hat`` and ``r - r_hat`` for velocity and
position.  Under this convention the measurement Jacobian has the
``+C_hat (r_b)^x`` attitude column and the velocity row of the process
Jacobian is ``+C_hat (u2)^x``.

All functions accept leading batch dimensions on states and inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import lie
from .errors import ConfigError, NumericError, SingularInnovationError
from .models import GRAVITY, NoiseModel, ReceiverGeometry, integrate_imu

IEKF = "IEKF"
MEKF = "MEKF"
MAX_COND = 1e12


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray  # (..., 5, 5)
    cov: np.ndarray  # (..., 9, 9)
    t: float = 0.0


class LinearizedProcess(NamedTuple):
    A: np.ndarray
    L: np.ndarray


class LinearizedMeasurement(NamedTuple):
    H: np.ndarray
    M: np.ndarray
    R: np.ndarray


def _mT(A):
    return np.swapaxes(A, -1, -2)


def _mv(A, x):
    return np.einsum("...ij,...j->...i", A, x)


def _symmetrize(P):
    return 0.5 * (P + _mT(P))


# --------------------------------------------------------------------------- process


def iekf_process_jacobians(gyro, accel) -> LinearizedProcess:
    """Continuous-time Jacobians of the left-invariant error; no state argument."""
    gyro = np.asarray(gyro, dtype=float)
    accel = np.asarray(accel, dtype=float)
    batch = np.broadcast_shapes(gyro.shape[:-1], accel.shape[:-1])
    W = lie.so3_wedge(gyro)
    A = np.zeros(batch + (9, 9))
    A[..., 0:3, 0:3] = -W
    A[..., 3:6, 0:3] = -lie.so3_wedge(accel)
    A[..., 3:6, 3:6] = -W
    A[..., 6:9, 3:6] = np.eye(3)
    A[..., 6:9, 6:9] = -W
    L = np.zeros((9, 9))
    L[0:3, 0:3] = -np.eye(3)
    L[3:6, 3:6] = -np.eye(3)
    return LinearizedProcess(A, L)


def mekf_process_jacobians(gyro, accel, C_est) -> LinearizedProcess:
    C_est = np.asarray(C_est, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    batch = np.broadcast_shapes(gyro.shape[:-1], np.shape(accel)[:-1], C_est.shape[:-2])
    A = np.zeros(batch + (9, 9))
    A[..., 0:3, 0:3] = -lie.so3_wedge(gyro)
    A[..., 3:6, 0:3] = C_est @ lie.so3_wedge(accel)
    A[..., 6:9, 3:6] = np.eye(3)
    L = np.zeros(batch + (9, 9))
    L[..., 0:3, 0:3] = -np.eye(3)
    L[..., 3:6, 3:6] = -C_est
    return LinearizedProcess(A, L)


def discretize(lin: LinearizedProcess, Q, dt):
    """Van Loan discretization of ``d xi/dt = A xi + L w``, ``w`` with PSD ``Q``.

    ``Q`` is the 6x6 gyro/accel PSD; the position rows of ``L`` see no noise.
    Returns ``(A_d, Q_d)``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A, L = lin
    Qt = np.zeros((9, 9))
    Qt[:6, :6] = Q
    Qc = L @ Qt @ _mT(L)
    batch = np.broadcast_shapes(A.shape[:-2], Qc.shape[:-2])
    block = np.zeros(batch + (18, 18))
    block[..., :9, :9] = -A
    block[..., :9, 9:] = Qc
    block[..., 9:, 9:] = _mT(A)
    E = scipy.linalg.expm(block * dt)
    if not np.all(np.isfinite(E)):
        raise NumericError("non-finite matrix exponential in process discretization")
    A_d = _mT(E[..., 9:, 9:])
    Q_d = _symmetrize(A_d @ E[..., :9, 9:])
    return A_d, Q_d


def predict(state: FilterState, gyro, accel, noise: NoiseModel, dt, variant=IEKF, gravity=GRAVITY):
    """Propagate mean and covariance over ``dt`` with a held IMU sample."""
    if variant == IEKF:
        lin = iekf_process_jacobians(gyro, accel)
    elif variant == MEKF:
        lin = mekf_process_jacobians(gyro, accel, state.mean[..., :3, :3])
    else:
        raise ValueError(f"unknown variant {variant!r}")
    A_d, Q_d = discretize(lin, noise.Q, dt)
    mean = integrate_imu(state.mean, gyro, accel, dt, gravity)
    P = _symmetrize(A_d @ state.cov @ _mT(A_d) + Q_d)
    return FilterState(mean, P, state.t + dt)


# --------------------------------------------------------------------------- measurement


def joint_noise(noise: NoiseModel, receivers=2):
    """Covariance of ``(n1, n2 - n1)``, or ``R1`` alone for one receiver."""
    if receivers == 1:
        return noise.R1.copy()
    R = np.zeros((6, 6))
    R[:3, :3] = noise.R1
    R[:3, 3:] = -noise.R1
    R[3:, :3] = -noise.R1
    R[3:, 3:] = noise.R1 + noise.R2
    return R


def _check_receivers(geom, receivers):
    if receivers not in (1, 2):
        raise ConfigError(f"receivers must be 1 or 2, got {receivers}")
    if receivers == 2 and np.linalg.norm(geom.baseline) == 0.0:
        raise ConfigError("two-receiver mode needs a nonzero baseline between the receivers")


def iekf_meas_jacobians(geom: ReceiverGeometry, X_pred, noise: NoiseModel, receivers=2):
    """``H`` is a constant of the geometry; only ``M`` depends on the prediction."""
    _check_receivers(geom, receivers)
    Ct = _mT(np.asarray(X_pred, dtype=float)[..., :3, :3])
    H = np.zeros((3 * receivers, 9))
    H[0:3, 0:3] = lie.so3_wedge(geom.lever1)
    H[0:3, 6:9] = -np.eye(3)
    M = np.zeros(Ct.shape[:-2] + (3 * receivers, 3 * receivers))
    M[..., 0:3, 0:3] = Ct
    if receivers == 2:
        H[3:6, 0:3] = lie.so3_wedge(geom.baseline)
        M[..., 3:6, 3:6] = Ct
    return LinearizedMeasurement(H, M, joint_noise(noise, receivers))


def iekf_innovation(X_pred, y1, yrel, geom: ReceiverGeometry):
    """Left-invariant innovation; pass ``yrel=None`` for a single receiver."""
    C, _, r = lie.se23_parts(np.asarray(X_pred, dtype=float))
    Ct = _mT(C)
    z1 = _mv(Ct, np.asarray(y1) - r) - geom.lever1
    if yrel is None:
        return z1
    z2 = _mv(Ct, np.asarray(yrel)) - geom.baseline
    return np.concatenate([z1, z2], axis=-1)


def mekf_meas_jacobians(geom: ReceiverGeometry, C_pred, noise: NoiseModel, receivers=2):
    _check_receivers(geom, receivers)
    C_pred = np.asarray(C_pred, dtype=float)
    H = np.zeros(C_pred.shape[:-2] + (3 * receivers, 9))
    H[..., 0:3, 0:3] = C_pred @ lie.so3_wedge(geom.lever1)
    H[..., 0:3, 6:9] = np.eye(3)
    if receivers == 2:
        H[..., 3:6, 0:3] = C_pred @ lie.so3_wedge(geom.baseline)
    M = np.eye(3 * receivers)
    return LinearizedMeasurement(H, M, joint_noise(noise, receivers))


def mekf_innovation(X_pred, y1, yrel, geom: ReceiverGeometry):
    C, _, r = lie.se23_parts(np.asarray(X_pred, dtype=float))
    dy1 = np.asarray(y1) - _mv(C, geom.lever1) - r
    if yrel is None:
        return dy1
    dy2 = np.asarray(yrel) - _mv(C, geom.baseline)
    return np.concatenate([dy1, dy2], axis=-1)


def correct(state: FilterState, lin: LinearizedMeasurement, z, variant=IEKF):
    """Kalman update with Joseph-form covariance.

    Returns ``(state, nis)``.
    """
    H, M, R = lin
    P = state.cov
    z = np.asarray(z, dtype=float)
    MRM = M @ R @ _mT(M)
    S = _symmetrize(H @ P @ _mT(H) + MRM)
    if np.any(~np.isfinite(S)) or np.any(np.linalg.cond(S) > MAX_COND):
        raise SingularInnovationError("innovation covariance is singular or ill-conditioned")
    PHt = P @ _mT(H)
    K = _mT(np.linalg.solve(S, _mT(PHt)))
    Sinv_z = np.linalg.solve(S, z[..., None])[..., 0]
    nis = np.einsum("...i,...i->...", z, Sinv_z)
    dx = _mv(K, z)

    IKH = np.eye(9) - K @ H
    P_new = _symmetrize(IKH @ P @ _mT(IKH) + K @ MRM @ _mT(K))

    if variant == IEKF:
        mean = state.mean @ lie.exp_se23(-dx)
    elif variant == MEKF:
        C, v, r = lie.se23_parts(state.mean)
        mean = lie.se23_from_parts(C @ lie.exp_so3(-dx[..., 0:3]), v + dx[..., 3:6], r + dx[..., 6:9])
    else:
        raise ValueError(f"unknown variant {variant!r}")
    mean = reorthonormalize(mean)
    return FilterState(mean, P_new, state.t), nis


def reorthonormalize(X):
    """Project attitude blocks back onto SO(3) where they drifted past 1e-9."""
    C = X[..., :3, :3]
    bad = lie.orthonormality_defect(C) > lie.ORTHO_TOL
    if not np.any(bad):
        return X
    X = X.copy()
    X[..., :3, :3] = np.where(bad[..., None, None], lie.project_to_so3(C), C)
    return X


# --------------------------------------------------------------------------- filter objects


class _Filter:
    variant: str

    def __init__(self, geometry: ReceiverGeometry, noise: NoiseModel, receivers=2, gravity=GRAVITY):
        _check_receivers(geometry, receivers)
        self.geometry = geometry
        self.noise = noise
        self.receivers = receivers
        self.gravity = np.asarray(gravity, dtype=float)

    @property
    def name(self) -> str:
        return f"{self.variant}{self.receivers}"

    @property
    def n_z(self) -> int:
        return 3 * self.receivers

    def predict(self, state, gyro, accel, dt):
        return predict(state, gyro, accel, self.noise, dt, self.variant, self.gravity)

    def correct(self, state, y1, yrel=None):
        if self.receivers == 1:
            yrel = None
        elif yrel is None:
            raise ValueError(f"{self.name} needs a relative position fix")
        lin, z = self.linearize(state.mean, y1, yrel)
        return correct(state, lin, z, self.variant)


class InvariantEKF(_Filter):
    variant = IEKF

    def linearize(self, X_pred, y1, yrel):
        lin = iekf_meas_jacobians(self.geometry, X_pred, self.noise, self.receivers)
        return lin, iekf_innovation(X_pred, y1, yrel, self.geometry)


class MultiplicativeEKF(_Filter):
    variant = MEKF

    def linearize(self, X_pred, y1, yrel):
        lin = mekf_meas_jacobians(self.geometry, X_pred[..., :3, :3], self.noise, self.receivers)
        return lin, mekf_innovation(X_pred, y1, yrel, self.geometry)


FILTER_NAMES = ("IEKF2", "MEKF2", "IEKF1", "MEKF1")


def make_filter(name: str, geometry: ReceiverGeometry, noise: NoiseModel, gravity=GRAVITY):
    """Build a filter from a name such as ``"IEKF2"`` or ``"MEKF2"``."""
    if name not in FILTER_NAMES:
        raise ConfigError(f"unknown filter {name!r}; choose from {', '.join(FILTER_NAMES)}")
    cls = InvariantEKF if name.startswith(IEKF) else MultiplicativeEKF
    return cls(geometry, noise, receivers=int(name[-1]), gravity=gravity)
