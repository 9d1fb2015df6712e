"""Monte Carlo evaluation: RMSE, percentile bands, average NIS and spacing sweeps.

Trials are simulated independently from per-trial seeds and then filtered as a
stack, so a batch of N trials costs one vectorized pass per filter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.special

from . import lie
from .errors import EstimationError
from .filters import FilterState, make_filter
from .models import (
    GRAVITY,
    NoiseModel,
    ReceiverGeometry,
    TrajectoryConfig,
    simulate_trajectory,
    synthesize_fixes,
)

METRICS = ("attitude", "velocity", "position")
DEFAULT_FILTERS = ("IEKF2", "MEKF2", "IEKF1")

# Per-sample IMU noise standard deviations of the simulation study.
SIM_GYRO_STD = 0.0012
SIM_ACCEL_STD = 0.0025
SIM_R = (np.array([1.3, 1.1, 1.9]) ** 2 * 1e-2).tolist()


def simulation_noise(imu_rate=250.0) -> NoiseModel:
    """Noise model of the simulation study.

    The per-sample IMU variances are converted to PSDs (variance x dt) so the
    same model drives both the simulator and the filters.
    """
    dt = 1.0 / imu_rate
    return NoiseModel.from_diagonals(
        [SIM_GYRO_STD**2 * dt] * 3, [SIM_ACCEL_STD**2 * dt] * 3, SIM_R, SIM_R
    )


@dataclass(frozen=True)
class SimConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    noise: NoiseModel = field(default_factory=simulation_noise)
    geometry: ReceiverGeometry = field(default_factory=lambda: ReceiverGeometry.along_x(1.8))
    p0_diag: tuple = tuple([(np.pi / 3) ** 2] * 3 + [0.1**2] * 6)
    attitude_offset: tuple = (np.pi / 3, np.pi / 3, np.pi / 3)
    sample_initial: bool = True
    imu_noise: bool = True
    fix_noise: bool = True

    def with_spacing(self, spacing: float) -> "SimConfig":
        from dataclasses import replace

        return replace(self, geometry=ReceiverGeometry.along_x(spacing))

    @property
    def P0(self) -> np.ndarray:
        return np.diag(self.p0_diag)


@dataclass
class TrialResult:
    times: np.ndarray
    attitude_error: np.ndarray
    velocity_error: np.ndarray
    position_error: np.ndarray
    nis_times: np.ndarray
    nis: np.ndarray
    dof: int

    @property
    def rmse(self) -> dict:
        return {
            "attitude": rmse(self.attitude_error),
            "velocity": rmse(self.velocity_error),
            "position": rmse(self.position_error),
        }


# --------------------------------------------------------------------------- metrics


def attitude_error(C_true, C_est):
    """Rotation vector of ``C_true^T C_est``."""
    return lie.log_so3(np.swapaxes(np.asarray(C_true), -1, -2) @ np.asarray(C_est))


def rmse(series):
    """Root mean square over time of an error series.

    A ``(T, 3)`` series is reduced to vector norms first; a ``(T,)`` series is
    taken as norms already.
    """
    e = np.asarray(series, dtype=float)
    sq = np.sum(e**2, axis=-1) if e.ndim == 2 else e**2
    return float(np.sqrt(np.mean(sq)))


def percent_difference(value, reference):
    return 100.0 * (value - reference) / reference


def chi2_quantile(dof: int, p: float) -> float:
    """Inverse chi-square CDF by bracketed root finding on the incomplete gamma."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    a = 0.5 * dof
    f = lambda x: scipy.special.gammainc(a, 0.5 * x) - p
    hi = max(1.0, float(dof))
    while f(hi) < 0.0:
        hi *= 2.0
    return scipy.optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-14, maxiter=500)


@dataclass
class AnisResult:
    times: np.ndarray
    normalized: np.ndarray
    lower: float
    upper: float
    n_trials: int
    dof: int

    @property
    def in_band(self) -> np.ndarray:
        return (self.normalized >= self.lower) & (self.normalized <= self.upper)

    def entry_time(self, fraction=0.9):
        return consistency_entry_time(self.times, self.in_band, fraction)


def average_nis(trials: Sequence[TrialResult], confidence=0.95) -> AnisResult:
    """Average NIS over trials, normalized by the measurement dimension.

    The band is the two-sided chi-square interval with ``N * n_z`` degrees of
    freedom, divided by ``N * n_z``.
    """
    if not trials:
        raise ValueError("average_nis needs at least one trial")
    dof = trials[0].dof
    times = trials[0].nis_times
    for tr in trials:
        if tr.dof != dof or tr.nis.shape != times.shape or not np.array_equal(tr.nis_times, times):
            raise ValueError("trials do not share the same epoch grid and measurement dimension")
    nis = np.stack([tr.nis for tr in trials])
    n = len(trials)
    total = n * dof
    alpha = 1.0 - confidence
    return AnisResult(
        times=times,
        normalized=nis.mean(axis=0) / dof,
        lower=chi2_quantile(total, alpha / 2) / total,
        upper=chi2_quantile(total, 1 - alpha / 2) / total,
        n_trials=n,
        dof=dof,
    )


def consistency_entry_time(times, in_band, fraction=0.9):
    """First in-band epoch after which at least ``fraction`` of epochs stay in band."""
    in_band = np.asarray(in_band, dtype=bool)
    remaining = np.cumsum(in_band[::-1])[::-1] / np.arange(len(in_band), 0, -1)
    ok = np.flatnonzero(in_band & (remaining >= fraction))
    return float(times[ok[0]]) if len(ok) else None


# --------------------------------------------------------------------------- simulation


@dataclass
class SimBatch:
    """Sensor data for a stack of trials sharing one trajectory."""

    times: np.ndarray  # (K+1,)
    truth: np.ndarray  # (K+1, 5, 5)
    gyro: np.ndarray  # (N, K, 3)
    accel: np.ndarray  # (N, K, 3)
    fix_steps: np.ndarray  # (E,) indices into times
    y1: np.ndarray  # (N, E, 3)
    yrel: np.ndarray  # (N, E, 3)
    X0: np.ndarray  # (N, 5, 5)
    P0: np.ndarray  # (9, 9)

    @property
    def n_trials(self) -> int:
        return self.gyro.shape[0]


def trial_seeds(master_seed: int, n: int):
    return np.random.SeedSequence(master_seed).spawn(n)


def fix_steps(cfg: TrajectoryConfig) -> np.ndarray:
    """Correction epochs at ``fix_rate`` snapped to the nearest IMU step."""
    n_epochs = int(math.floor(cfg.duration * cfg.fix_rate + 1e-9))
    steps = np.round(np.arange(1, n_epochs + 1) * cfg.imu_rate / cfg.fix_rate).astype(int)
    return np.unique(steps[(steps >= 1) & (steps <= cfg.n_steps)])


def simulate_batch(cfg: SimConfig, seeds) -> SimBatch:
    truth, imu = simulate_trajectory(cfg.trajectory)
    times = np.arange(len(truth)) / cfg.trajectory.imu_rate
    dt = 1.0 / cfg.trajectory.imu_rate
    steps = fix_steps(cfg.trajectory)
    K, E = len(imu), len(steps)
    imu_chol = np.linalg.cholesky(cfg.noise.Q / dt)
    r1_chol = np.linalg.cholesky(cfg.noise.R1)
    r2_chol = np.linalg.cholesky(cfg.noise.R2)
    p0_std = np.sqrt(np.asarray(cfg.p0_diag))

    C0, v0, r0 = lie.se23_parts(truth[0])
    C0_hat = C0 @ lie.exp_so3(np.asarray(cfg.attitude_offset, dtype=float))
    y1_clean, _, yrel_clean = synthesize_fixes(truth[steps], cfg.geometry)

    gyro, accel, y1, yrel, X0 = [], [], [], [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        init = rng.standard_normal(6) * p0_std[3:]
        w = rng.standard_normal((K, 6)) @ imu_chol.T
        n = rng.standard_normal((E, 2, 3))
        if not cfg.sample_initial:
            init = np.zeros(6)
        if not cfg.imu_noise:
            w = np.zeros_like(w)
        if not cfg.fix_noise:
            n = np.zeros_like(n)
        n1 = n[:, 0] @ r1_chol.T
        n2 = n[:, 1] @ r2_chol.T
        gyro.append(imu.gyro + w[:, :3])
        accel.append(imu.accel + w[:, 3:])
        y1.append(y1_clean + n1)
        yrel.append(yrel_clean + n2 - n1)
        X0.append(lie.se23_from_parts(C0_hat, v0 + init[:3], r0 + init[3:]))
    return SimBatch(
        times=times,
        truth=truth,
        gyro=np.stack(gyro),
        accel=np.stack(accel),
        fix_steps=steps,
        y1=np.stack(y1),
        yrel=np.stack(yrel),
        X0=np.stack(X0),
        P0=cfg.P0,
    )


def run_filter(batch: SimBatch, cfg: SimConfig, name: str) -> list[TrialResult]:
    """Run one filter over every trial of ``batch``."""
    filt = make_filter(name, cfg.geometry, cfg.noise, GRAVITY)
    N = batch.n_trials
    K = batch.gyro.shape[1]
    dt = 1.0 / cfg.trajectory.imu_rate
    state = FilterState(batch.X0.copy(), np.broadcast_to(batch.P0, (N, 9, 9)).copy(), 0.0)

    err = np.empty((3, K + 1, N))
    nis = np.empty((len(batch.fix_steps), N))
    epoch_of_step = {int(s): e for e, s in enumerate(batch.fix_steps)}

    def record(k, X):
        C_t, v_t, r_t = lie.se23_parts(batch.truth[k])
        C, v, r = lie.se23_parts(X)
        err[0, k] = np.linalg.norm(attitude_error(C_t, C), axis=-1)
        err[1, k] = np.linalg.norm(v - v_t, axis=-1)
        err[2, k] = np.linalg.norm(r - r_t, axis=-1)

    record(0, state.mean)
    for k in range(K):
        state = filt.predict(state, batch.gyro[:, k], batch.accel[:, k], dt)
        e = epoch_of_step.get(k + 1)
        if e is not None:
            state, nis[e] = filt.correct(state, batch.y1[:, e], batch.yrel[:, e])
        record(k + 1, state.mean)

    nis_times = batch.times[batch.fix_steps]
    return [
        TrialResult(
            times=batch.times,
            attitude_error=err[0, :, i].copy(),
            velocity_error=err[1, :, i].copy(),
            position_error=err[2, :, i].copy(),
            nis_times=nis_times,
            nis=nis[:, i].copy(),
            dof=filt.n_z,
        )
        for i in range(N)
    ]


def run_batch(cfg: SimConfig, seeds, filters=DEFAULT_FILTERS) -> dict[str, list[TrialResult]]:
    batch = simulate_batch(cfg, seeds)
    out = {}
    for name in filters:
        try:
            out[name] = run_filter(batch, cfg, name)
        except EstimationError as exc:
            raise type(exc)(f"{name}: {exc}") from exc
    return out


def run_trial(seed, filters=DEFAULT_FILTERS, cfg: SimConfig | None = None) -> dict[str, TrialResult]:
    """Simulate and filter one trial; deterministic in ``seed``."""
    cfg = cfg or SimConfig()
    try:
        res = run_batch(cfg, [seed], filters)
    except EstimationError as exc:
        raise type(exc)(f"trial seed {seed}: {exc}") from exc
    return {name: trials[0] for name, trials in res.items()}


def run_montecarlo(cfg: SimConfig, n_trials=100, master_seed=0, filters=DEFAULT_FILTERS):
    return run_batch(cfg, trial_seeds(master_seed, n_trials), filters)


# --------------------------------------------------------------------------- summaries


@dataclass
class MetricSummary:
    mean: float
    p2_5: float
    p97_5: float


@dataclass
class BatchSummary:
    rmse: dict  # filter -> metric -> MetricSummary
    anis: dict  # filter -> AnisResult
    entry_time: dict  # filter -> float | None
    n_trials: int
    per_trial_rmse: dict = field(default_factory=dict)  # filter -> metric -> (N,)


def summarize(results: dict[str, list[TrialResult]]) -> BatchSummary:
    if not results or any(len(v) == 0 for v in results.values()):
        raise ValueError("cannot summarize an empty batch")
    rm, anis, entry, per = {}, {}, {}, {}
    for name, trials in results.items():
        per[name] = {m: np.array([tr.rmse[m] for tr in trials]) for m in METRICS}
        rm[name] = {
            m: MetricSummary(
                float(np.mean(x)),
                float(np.percentile(x, 2.5)),
                float(np.percentile(x, 97.5)),
            )
            for m, x in per[name].items()
        }
        anis[name] = average_nis(trials)
        entry[name] = anis[name].entry_time()
    n = len(next(iter(results.values())))
    return BatchSummary(rm, anis, entry, n, per)


def spacing_sweep(
    spacings, cfg: SimConfig, n_trials=100, master_seed=0, filters=DEFAULT_FILTERS
) -> dict[float, BatchSummary]:
    """Repeat the Monte Carlo battery with the receivers ``spacing`` apart on body x.

    Every spacing reuses the same trial seeds.
    """
    if any(s <= 0 for s in spacings):
        raise ValueError("spacings must be positive")
    return {
        float(s): summarize(run_montecarlo(cfg.with_spacing(s), n_trials, master_seed, filters))
        for s in spacings
    }


def spacing_table(sweep: dict[float, BatchSummary], reference="IEKF2"):
    """Rows of (spacing, filter, metric, mean RMSE, percent difference vs reference)."""
    rows = []
    for s, summary in sweep.items():
        for name, metrics in summary.rmse.items():
            for m, stat in metrics.items():
                ref = summary.rmse[reference][m].mean if reference in summary.rmse else float("nan")
                rows.append((s, name, m, stat.mean, percent_difference(stat.mean, ref)))
    return rows
