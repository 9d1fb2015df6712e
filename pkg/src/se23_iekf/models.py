"""Rigid-body kinematics, IMU and position-receiver models, and a trajectory simulator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import lie
from .errors import ConfigError

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True)
class PositionFix:
    t: float
    receiver_id: int
    y: np.ndarray

    def __post_init__(self):
        if self.receiver_id not in (1, 2):
            raise ValueError(f"receiver_id must be 1 or 2, got {self.receiver_id}")


@dataclass(frozen=True)
class ReceiverGeometry:
    """Lever arms (body frame, metres) from the IMU point to each receiver."""

    lever1: np.ndarray
    lever2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lever1", np.asarray(self.lever1, dtype=float).reshape(3))
        object.__setattr__(self, "lever2", np.asarray(self.lever2, dtype=float).reshape(3))

    @property
    def baseline(self) -> np.ndarray:
        return self.lever2 - self.lever1

    @classmethod
    def along_x(cls, spacing: float) -> "ReceiverGeometry":
        """Receivers at +spacing/2 and -spacing/2 on the body x-axis."""
        return cls(np.array([0.5 * spacing, 0.0, 0.0]), np.array([-0.5 * spacing, 0.0, 0.0]))


def _check_spd(name, M):
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ConfigError(f"{name}: expected a 3x3 matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{name}: non-finite entries")
    if np.max(np.abs(M - M.T)) > 1e-12:
        raise ConfigError(f"{name}: not symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0.0:
        raise ConfigError(f"{name}: not positive definite")
    return M


@dataclass(frozen=True)
class NoiseModel:
    """Gyro/accel PSDs and receiver position covariances."""

    Q_omega: np.ndarray
    Q_accel: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    def __post_init__(self):
        for name in ("Q_omega", "Q_accel", "R1", "R2"):
            object.__setattr__(self, name, _check_spd(name, getattr(self, name)))

    @property
    def Q(self) -> np.ndarray:
        """6x6 process PSD ``blockdiag(Q_omega, Q_accel)``."""
        Q = np.zeros((6, 6))
        Q[:3, :3] = self.Q_omega
        Q[3:, 3:] = self.Q_accel
        return Q

    @classmethod
    def from_diagonals(cls, gyro_psd, accel_psd, r1, r2) -> "NoiseModel":
        return cls(np.diag(gyro_psd), np.diag(accel_psd), np.diag(r1), np.diag(r2))


# Values identified from static IMU data and mocap comparison on the UWB rig.
EXPERIMENT_GYRO_PSD = (np.array([2.0, 2.0, 1.8]) ** 2 * 1e-4).tolist()
EXPERIMENT_ACCEL_PSD = (np.array([1.7, 1.5, 2.4]) ** 2 * 1e-2).tolist()
EXPERIMENT_R1 = (np.array([1.3, 1.1, 1.9]) ** 2 * 1e-2).tolist()
EXPERIMENT_R2 = (np.array([1.9, 1.6, 2.6]) ** 2 * 1e-2).tolist()
EXPERIMENT_BASELINE = 1.80


def experiment_noise() -> NoiseModel:
    return NoiseModel.from_diagonals(
        EXPERIMENT_GYRO_PSD, EXPERIMENT_ACCEL_PSD, EXPERIMENT_R1, EXPERIMENT_R2
    )


# --------------------------------------------------------------------------- kinematics


def process_rate(X, u: ImuSample, gravity=GRAVITY):
    """Deterministic part of the SE_2(3) kinematics, ``F(X, u)``.

    The two bottom rows are zero: ``F`` is the time derivative of a group element.
    """
    C, v, _ = lie.se23_parts(np.asarray(X, dtype=float))
    F = np.zeros(np.shape(X))
    F[..., :3, :3] = C @ lie.so3_wedge(u.gyro)
    F[..., :3, 3] = np.einsum("...ij,...j->...i", C, np.asarray(u.accel, dtype=float)) + gravity
    F[..., :3, 4] = v
    return F


def group_affine_residual(X1, X2, u: ImuSample, rate=process_rate) -> float:
    I = np.eye(5)
    R = rate(X1 @ X2, u) - X1 @ rate(X2, u) - rate(X1, u) @ X2 + X1 @ rate(I, u) @ X2
    return float(np.linalg.norm(R))


def integrate_imu(X, gyro, accel, dt, gravity=GRAVITY):
    """Propagate ``X`` over ``dt`` holding the IMU sample constant.

    Closed-form solution of the kinematics for a constant body rate and specific
    force; exact for piecewise-constant inputs.
    """
    gyro = np.asarray(gyro, dtype=float)
    accel = np.asarray(accel, dtype=float)
    C, v, r = lie.se23_parts(np.asarray(X, dtype=float))
    phi = gyro * dt
    dv = np.einsum("...ij,...j->...i", C @ lie.so3_left_jacobian(phi), accel) * dt
    dr = np.einsum("...ij,...j->...i", C @ lie.so3_double_integral(phi), accel) * dt**2
    return lie.se23_from_parts(
        C @ lie.exp_so3(phi),
        v + dv + gravity * dt,
        r + v * dt + dr + 0.5 * gravity * dt**2,
    )


def specific_force(C, accel_a, gravity=GRAVITY):
    """Accelerometer reading ``C^T (a - g)`` for inertial acceleration ``a``."""
    return np.einsum("...ji,...j->...i", np.asarray(C, dtype=float), np.asarray(accel_a) - gravity)


def imu_from_truth(C, omega_b, accel_a, gravity=GRAVITY, t=0.0) -> ImuSample:
    """Noiseless gyro and accelerometer readings."""
    return ImuSample(t, np.asarray(omega_b, dtype=float).copy(), specific_force(C, accel_a, gravity))


def synthesize_fixes(X_true, geom: ReceiverGeometry, noise: NoiseModel | None = None, rng=None):
    """Receiver position fixes and their difference.

    With ``rng`` given, independent Gaussian noise with covariances ``R1`` and
    ``R2`` is added to the two fixes; the relative fix inherits ``n2 - n1``.
    """
    C, _, r = lie.se23_parts(np.asarray(X_true, dtype=float))
    y1 = r + np.einsum("...ij,j->...i", C, geom.lever1)
    y2 = r + np.einsum("...ij,j->...i", C, geom.lever2)
    if rng is not None:
        if noise is None:
            raise ValueError("noise model required when sampling noise")
        batch = np.shape(r)[:-1]
        y1 = y1 + rng.multivariate_normal(np.zeros(3), noise.R1, size=batch or None)
        y2 = y2 + rng.multivariate_normal(np.zeros(3), noise.R2, size=batch or None)
    return y1, y2, y2 - y1


# --------------------------------------------------------------------------- trajectory


def _rot(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(np.shape(angle) + (3, 3))
    i, j = {0: (1, 2), 1: (2, 0), 2: (0, 1)}[axis]
    out[..., axis, axis] = 1.0
    out[..., i, i] = c
    out[..., j, j] = c
    out[..., i, j] = -s
    out[..., j, i] = s
    return out


def _drot(axis, angle):
    """Derivative of ``_rot(axis, angle)`` with respect to the angle."""
    return _rot(axis, angle) @ lie.so3_wedge(np.eye(3)[axis])


@dataclass(frozen=True)
class TrajectoryConfig:
    """Sinusoidal test trajectory.

    Position axis ``i`` is ``position0[i] + pos_amplitude[i] * sin(2 pi pos_frequency[i] t + pos_phase[i])``;
    attitude is ZYX Euler (roll, pitch, yaw) built the same way around ``euler0``.
    """

    duration: float = 50.0
    imu_rate: float = 250.0
    fix_rate: float = 15.0
    pos_amplitude: tuple = (2.0, 2.0, 1.5)
    pos_frequency: tuple = (0.25, 0.35, 0.5)
    pos_phase: tuple = (0.0, 1.0, 2.0)
    att_amplitude: tuple = (0.5, 0.5, 0.6)
    att_frequency: tuple = (0.3, 0.25, 0.2)
    att_phase: tuple = (0.5, 1.5, 0.0)
    position0: tuple = (0.0, 0.0, 0.0)
    euler0: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("duration", "imu_rate", "fix_rate"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name}: must be positive, got {value}")
        for name in (
            "pos_amplitude", "pos_frequency", "pos_phase", "att_amplitude",
            "att_frequency", "att_phase", "position0", "euler0",
        ):
            value = tuple(float(x) for x in getattr(self, name))
            if len(value) != 3:
                raise ConfigError(f"{name}: expected 3 values, got {len(value)}")
            object.__setattr__(self, name, value)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration * self.imu_rate))


class Trajectory:
    """Analytic pose, rates and IMU readings for a :class:`TrajectoryConfig`."""

    def __init__(self, cfg: TrajectoryConfig, gravity=GRAVITY):
        self.cfg = cfg
        self.gravity = np.asarray(gravity, dtype=float)
        self._pw = 2 * np.pi * np.asarray(cfg.pos_frequency)
        self._aw = 2 * np.pi * np.asarray(cfg.att_frequency)

    def _sin(self, t, amp, w, phase, order):
        arg = np.multiply.outer(np.asarray(t, dtype=float), w) + np.asarray(phase)
        # d^n/dt^n sin(w t + p) = w^n sin(w t + p + n pi/2)
        return np.asarray(amp) * w**order * np.sin(arg + order * np.pi / 2)

    def position(self, t):
        c = self.cfg
        return np.asarray(c.position0) + self._sin(t, c.pos_amplitude, self._pw, c.pos_phase, 0)

    def velocity(self, t):
        c = self.cfg
        return self._sin(t, c.pos_amplitude, self._pw, c.pos_phase, 1)

    def acceleration(self, t):
        c = self.cfg
        return self._sin(t, c.pos_amplitude, self._pw, c.pos_phase, 2)

    def euler(self, t):
        c = self.cfg
        return np.asarray(c.euler0) + self._sin(t, c.att_amplitude, self._aw, c.att_phase, 0)

    def attitude(self, t):
        e = self.euler(t)
        return _rot(2, e[..., 2]) @ _rot(1, e[..., 1]) @ _rot(0, e[..., 0])

    def angular_velocity(self, t):
        """Body-frame angular velocity, ``vee(C^T dC/dt)``."""
        c = self.cfg
        e = self.euler(t)
        de = self._sin(t, c.att_amplitude, self._aw, c.att_phase, 1)
        Rz, Ry, Rx = _rot(2, e[..., 2]), _rot(1, e[..., 1]), _rot(0, e[..., 0])
        Cdot = (
            _drot(2, e[..., 2]) @ Ry @ Rx * de[..., 2, None, None]
            + Rz @ _drot(1, e[..., 1]) @ Rx * de[..., 1, None, None]
            + Rz @ Ry @ _drot(0, e[..., 0]) * de[..., 0, None, None]
        )
        return lie.so3_vee(np.swapaxes(Rz @ Ry @ Rx, -1, -2) @ Cdot)

    def pose(self, t):
        return lie.se23_from_parts(self.attitude(t), self.velocity(t), self.position(t))

    def imu(self, t):
        """Noiseless (gyro, accel) evaluated at times ``t``."""
        return self.angular_velocity(t), specific_force(self.attitude(t), self.acceleration(t), self.gravity)


class ImuStream(NamedTuple):
    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray

    def __len__(self):
        return len(self.t)

    def samples(self) -> Iterator[ImuSample]:
        for k in range(len(self.t)):
            yield ImuSample(float(self.t[k]), self.gyro[k], self.accel[k])


def imu_grid(cfg: TrajectoryConfig) -> np.ndarray:
    return np.arange(cfg.n_steps + 1) / cfg.imu_rate


def simulate_trajectory(cfg: TrajectoryConfig, gravity=GRAVITY):
    """Ground truth on the IMU grid and the matching noiseless IMU stream.

    Returns ``(truth, imu)`` with ``truth`` of shape ``(K + 1, 5, 5)`` at
    ``t_k = k / imu_rate`` and ``K`` IMU samples.  Sample ``k`` is the constant
    (gyro, accel) pair whose zero-order hold over ``[t_k, t_{k+1}]`` reproduces
    the true attitude and velocity increments exactly, i.e. the delta-angle /
    delta-velocity output of a strapdown IMU expressed as rates.  It differs
    from the instantaneous reading at the step midpoint by O(dt^2).
    """
    traj = Trajectory(cfg, gravity)
    t = imu_grid(cfg)
    truth = traj.pose(t)
    return truth, increments_to_imu(truth, 1.0 / cfg.imu_rate, gravity)


def increments_to_imu(truth, dt, gravity=GRAVITY) -> ImuStream:
    """Invert :func:`integrate_imu` step by step for a pose sequence."""
    C, v, _ = lie.se23_parts(truth)
    phi = lie.log_so3(np.swapaxes(C[:-1], -1, -2) @ C[1:])
    dv = v[1:] - v[:-1] - gravity * dt
    gain = C[:-1] @ lie.so3_left_jacobian(phi) * dt
    accel = np.linalg.solve(gain, dv[..., None])[..., 0]
    t = np.arange(len(truth) - 1) * dt
    return ImuStream(t, phi / dt, accel)
