"""Dataset bundles: CSV streams plus a JSON manifest, generation and replay.

Bundle layout (one directory)::

    manifest.json   format version, rates, geometry, noise, seed, initial estimate
    imu.csv         t,gx,gy,gz,ax,ay,az
    fixes.csv       t,receiver_id,x,y,z
    truth.csv       t,c11..c33 (row-major DCM),vx,vy,vz,x,y,z   (optional)

IMU row ``k`` is held constant from its timestamp to the next row's.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lie
from .config import RunConfig, dump_config
from .errors import DataError
from .evaluation import attitude_error, rmse
from .filters import FilterState, make_filter
from .models import GRAVITY, ImuStream, ReceiverGeometry, NoiseModel, Trajectory, simulate_trajectory

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PAIR_TOLERANCE = 1e-3
RATE_TOLERANCE = 0.01

IMU_HEADER = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
FIX_HEADER = ["t", "receiver_id", "x", "y", "z"]
TRUTH_HEADER = ["t"] + [f"c{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["vx", "vy", "vz", "x", "y", "z"]


def fmt(x) -> str:
    """Shortest repr that round-trips a float64."""
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def read_csv(path, header):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"{path}: missing file") from None
    if not rows or rows[0] != header:
        raise DataError(f"{path}: expected header {','.join(header)}")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size and data.shape[1] != len(header):
        raise DataError(f"{path}: rows must have {len(header)} columns")
    return data.reshape(-1, len(header))


@dataclass
class DatasetBundle:
    imu: ImuStream
    fix_t: np.ndarray
    fix_id: np.ndarray
    fix_y: np.ndarray
    manifest: dict
    truth_t: np.ndarray | None = None
    truth: np.ndarray | None = None  # (K, 5, 5)

    @property
    def geometry(self) -> ReceiverGeometry:
        g = self.manifest["geometry"]
        return ReceiverGeometry(g["lever1"], g["lever2"])

    @property
    def noise(self) -> NoiseModel:
        n = self.manifest["noise"]
        return NoiseModel.from_diagonals(n["gyro_psd"], n["accel_psd"], n["r1"], n["r2"])

    def initial_state(self) -> FilterState:
        init = self.manifest["initial_estimate"]
        C = np.asarray(init["C"], dtype=float).reshape(3, 3)
        X0 = lie.se23_from_parts(C, init["v"], init["r"])
        return FilterState(X0, np.diag(init["p0_diag"]), float(self.imu.t[0]))

    def epochs(self, receivers=2):
        """Correction epochs as ``(t, y1, y2 or None)``.

        Receiver-1 and receiver-2 rows within 1 ms form one epoch; two-receiver
        filters reject a receiver-1 row without a partner.
        """
        r1 = np.flatnonzero(self.fix_id == 1)
        r2 = np.flatnonzero(self.fix_id == 2)
        t2 = self.fix_t[r2]
        out = []
        for i in r1:
            t = self.fix_t[i]
            j = np.searchsorted(t2, t - PAIR_TOLERANCE)
            partner = None
            if j < len(t2) and abs(t2[j] - t) <= PAIR_TOLERANCE:
                partner = self.fix_y[r2[j]]
            if receivers == 2 and partner is None:
                raise DataError(f"missing paired receiver-2 fix at t={t:.6f}")
            out.append((t, self.fix_y[i], partner))
        return out


# --------------------------------------------------------------------------- generation


def generate_dataset(cfg: RunConfig, out) -> DatasetBundle:
    """Write a synthetic bundle using the ``dataset`` section of ``cfg``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    traj_cfg = cfg.dataset_trajectory()
    noise_cfg = cfg.dataset.noise
    noise = noise_cfg.model()
    geom = cfg.geometry.model()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    dt = 1.0 / traj_cfg.imu_rate

    truth, imu = simulate_trajectory(traj_cfg)
    K = len(imu)
    w = rng.standard_normal((K, 6)) @ np.linalg.cholesky(noise.Q / dt).T
    gyro = imu.gyro + w[:, :3]
    accel = imu.accel + w[:, 3:]
    imu_t = imu.t

    n_fix = int(np.floor(traj_cfg.duration * traj_cfg.fix_rate + 1e-9))
    fix_times = np.arange(1, n_fix + 1) / traj_cfg.fix_rate
    fix_times = fix_times[fix_times < imu_t[-1]]
    X_fix = Trajectory(traj_cfg).pose(fix_times)
    C, _, r = lie.se23_parts(X_fix)
    n1 = rng.standard_normal((len(fix_times), 3)) @ np.linalg.cholesky(noise.R1).T
    n2 = rng.standard_normal((len(fix_times), 3)) @ np.linalg.cholesky(noise.R2).T
    y1 = r + C @ geom.lever1 + n1
    y2 = r + C @ geom.lever2 + n2

    C0, v0, r0 = lie.se23_parts(truth[0])
    init = np.zeros(6)
    if cfg.init.sample_initial:
        init = rng.standard_normal(6) * np.sqrt(cfg.init.p0_diag[3:])
    C0_hat = C0 @ lie.exp_so3(np.asarray(cfg.init.attitude_offset))

    manifest = {
        "format_version": FORMAT_VERSION,
        "imu_rate": traj_cfg.imu_rate,
        "fix_rate": traj_cfg.fix_rate,
        "duration": traj_cfg.duration,
        "seed": cfg.seed,
        "gravity": GRAVITY.tolist(),
        "geometry": {"lever1": geom.lever1.tolist(), "lever2": geom.lever2.tolist()},
        "noise": dump_config(cfg)["dataset"]["noise"],
        "initial_estimate": {
            "C": C0_hat.reshape(-1).tolist(),
            "v": (v0 + init[:3]).tolist(),
            "r": (r0 + init[3:]).tolist(),
            "p0_diag": list(cfg.init.p0_diag),
        },
        "files": {"imu": "imu.csv", "fixes": "fixes.csv", "truth": "truth.csv"},
        "config": dump_config(cfg),
    }
    fixes = []
    for k, t in enumerate(fix_times):
        fixes.append([fmt(t), 1, *y1[k]])
        fixes.append([fmt(t), 2, *y2[k]])

    write_csv(out / "imu.csv", IMU_HEADER, np.column_stack([imu_t, gyro, accel]))
    write_csv(out / "fixes.csv", FIX_HEADER, fixes)
    write_csv(out / "truth.csv", TRUTH_HEADER, _truth_rows(imu_t, truth[:-1]))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return load_bundle(out)


def _truth_rows(t, X):
    C, v, r = lie.se23_parts(X)
    return np.column_stack([t, C.reshape(len(t), 9), v, r])


# --------------------------------------------------------------------------- loading


def load_bundle(path) -> DatasetBundle:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{path}: missing manifest.json") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path / 'manifest.json'}:{exc.lineno}: {exc.msg}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported dataset format version {version!r}")
    for key in ("imu_rate", "fix_rate", "geometry", "noise", "initial_estimate"):
        if key not in manifest:
            raise DataError(f"{path}: manifest lacks {key!r}")
    files = manifest.get("files", {})

    imu = read_csv(path / files.get("imu", "imu.csv"), IMU_HEADER)
    fixes = read_csv(path / files.get("fixes", "fixes.csv"), FIX_HEADER)
    if len(imu) < 2:
        raise DataError(f"{path}: need at least two IMU rows")
    if np.any(np.diff(imu[:, 0]) <= 0):
        k = int(np.flatnonzero(np.diff(imu[:, 0]) <= 0)[0]) + 1
        raise DataError(f"imu.csv: timestamp regression at row {k + 1}")
    if np.any(np.diff(fixes[:, 0]) < 0):
        k = int(np.flatnonzero(np.diff(fixes[:, 0]) < 0)[0]) + 1
        raise DataError(f"fixes.csv: timestamp regression at row {k + 1}")
    ids = fixes[:, 1]
    if not np.all(np.isin(ids, (1, 2))):
        raise DataError("fixes.csv: receiver_id must be 1 or 2")

    _check_rate(np.median(np.diff(imu[:, 0])), manifest["imu_rate"], "imu")
    r1_t = fixes[ids == 1, 0]
    if len(r1_t) > 1:
        _check_rate(np.median(np.diff(r1_t)), manifest["fix_rate"], "fix")

    bundle = DatasetBundle(
        imu=ImuStream(imu[:, 0], imu[:, 1:4], imu[:, 4:7]),
        fix_t=fixes[:, 0],
        fix_id=ids.astype(int),
        fix_y=fixes[:, 2:5],
        manifest=manifest,
    )
    truth_file = path / files.get("truth", "truth.csv")
    if truth_file.exists():
        tr = read_csv(truth_file, TRUTH_HEADER)
        bundle.truth_t = tr[:, 0]
        bundle.truth = lie.se23_from_parts(tr[:, 1:10].reshape(-1, 3, 3), tr[:, 10:13], tr[:, 13:16])
    return bundle


def _check_rate(period, rate, name):
    if abs(1.0 / period - rate) > RATE_TOLERANCE * rate:
        raise DataError(f"{name} stream rate {1.0 / period:.3f} Hz does not match manifest {rate} Hz")


# --------------------------------------------------------------------------- replay


@dataclass
class ReplayResult:
    times: np.ndarray
    poses: np.ndarray  # (K, 5, 5) estimate at each IMU timestamp
    nis_times: np.ndarray
    nis: np.ndarray
    dof: int
    errors: dict = field(default_factory=dict)  # metric -> (K,) error norms
    rmse: dict = field(default_factory=dict)


def replay(bundle: DatasetBundle, filters=("IEKF2",)) -> dict[str, ReplayResult]:
    """Run each filter through the bundle: predict on every IMU row, correct on every epoch."""
    gravity = np.asarray(bundle.manifest.get("gravity", GRAVITY), dtype=float)
    out = {}
    for name in filters:
        filt = make_filter(name, bundle.geometry, bundle.noise, gravity)
        out[name] = _replay_one(bundle, filt)
    return out


def _replay_one(bundle, filt) -> ReplayResult:
    imu = bundle.imu
    epochs = bundle.epochs(filt.receivers)
    start = imu.t[0]
    skipped = sum(1 for e in epochs if e[0] <= start)
    if skipped:
        log.warning("%s: ignoring %d fix epochs at or before the first IMU row", filt.name, skipped)
    epochs = [e for e in epochs if e[0] > start]
    state = bundle.initial_state()
    K = len(imu)
    poses = np.empty((K, 5, 5))
    poses[0] = state.mean
    nis_t, nis = [], []
    e = 0
    for k in range(K - 1):
        t, t_next = imu.t[k], imu.t[k + 1]
        while e < len(epochs) and epochs[e][0] <= t_next:
            te, y1, y2 = epochs[e]
            if te > t:
                state = filt.predict(state, imu.gyro[k], imu.accel[k], te - t)
                t = te
            yrel = None if y2 is None else y2 - y1
            state, eps = filt.correct(state, y1, yrel)
            nis_t.append(te)
            nis.append(float(eps))
            e += 1
        if t_next > t:
            state = filt.predict(state, imu.gyro[k], imu.accel[k], t_next - t)
        poses[k + 1] = state.mean
    result = ReplayResult(imu.t.copy(), poses, np.array(nis_t), np.array(nis), filt.n_z)
    if bundle.truth is not None:
        result.errors, result.rmse = trace_errors(bundle, poses)
    return result


def trace_errors(bundle: DatasetBundle, poses):
    """Error norms and RMSE of a pose trace against the bundle's ground truth."""
    if len(bundle.truth_t) != len(bundle.imu.t) or np.any(bundle.truth_t != bundle.imu.t):
        raise DataError("truth.csv timestamps must match imu.csv rows")
    C_t, v_t, r_t = lie.se23_parts(bundle.truth)
    C, v, r = lie.se23_parts(poses)
    errors = {
        "attitude": np.linalg.norm(attitude_error(C_t, C), axis=-1),
        "velocity": np.linalg.norm(v - v_t, axis=-1),
        "position": np.linalg.norm(r - r_t, axis=-1),
    }
    return errors, {m: rmse(e) for m, e in errors.items()}
