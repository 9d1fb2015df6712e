import json
import shutil

import numpy as np
import pytest

from se23_iekf.config import config_from_dict
from se23_iekf.dataset import (
    FIX_HEADER,
    IMU_HEADER,
    generate_dataset,
    load_bundle,
    read_csv,
    replay,
    trace_errors,
    write_csv,
)
from se23_iekf.errors import DataError
from se23_iekf.evaluation import attitude_error, rmse
from se23_iekf import lie


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    cfg = config_from_dict({"dataset": {"duration": 10.0}, "seed": 4})
    generate_dataset(cfg, out)
    return out


@pytest.fixture(scope="module")
def replayed(bundle_dir):
    return replay(load_bundle(bundle_dir), ("IEKF2", "IEKF1"))


def _copy(bundle_dir, tmp_path):
    dst = tmp_path / "b"
    shutil.copytree(bundle_dir, dst)
    return dst


def test_bundle_sizes(bundle_dir):
    b = load_bundle(bundle_dir)
    assert len(b.imu) == 2500
    n1, n2 = np.sum(b.fix_id == 1), np.sum(b.fix_id == 2)
    assert n1 == n2 and 165 <= n1 <= 171
    assert b.truth.shape == (2500, 5, 5)


def test_manifest_noise_is_rig_noise(bundle_dir):
    m = json.loads((bundle_dir / "manifest.json").read_text())
    assert m["noise"]["gyro_psd"] == pytest.approx([2.0**2 * 1e-4, 2.0**2 * 1e-4, 1.8**2 * 1e-4])
    assert m["noise"]["accel_psd"] == pytest.approx([1.7**2 * 1e-2, 1.5**2 * 1e-2, 2.4**2 * 1e-2])
    assert m["noise"]["r1"] == pytest.approx([1.3**2 * 1e-2, 1.1**2 * 1e-2, 1.9**2 * 1e-2])
    assert m["noise"]["r2"] == pytest.approx([1.9**2 * 1e-2, 1.6**2 * 1e-2, 2.6**2 * 1e-2])
    assert np.linalg.norm(np.subtract(m["geometry"]["lever2"], m["geometry"]["lever1"])) == pytest.approx(1.80)
    assert m["imu_rate"] == 250.0 and m["fix_rate"] == 17.0
    assert m["config"]["seed"] == 4


def test_fix_pairing(bundle_dir):
    b = load_bundle(bundle_dir)
    epochs = b.epochs(2)
    assert len(epochs) == np.sum(b.fix_id == 1)
    for t, y1, y2 in epochs[:20]:
        rows = np.flatnonzero((np.abs(b.fix_t - t) <= 1e-3) & (b.fix_id == 2))
        assert len(rows) == 1 and np.array_equal(y2, b.fix_y[rows[0]])


def test_replay_smoke_and_accuracy(replayed, bundle_dir):
    b = load_bundle(bundle_dir)
    res = replayed["IEKF2"]
    assert np.all(np.isfinite(res.poses)) and np.all(np.isfinite(res.nis))
    assert len(res.nis) == np.sum(b.fix_id == 1)
    floor = np.sqrt(np.trace(b.noise.R1))
    assert res.rmse["position"] < 3 * floor
    assert all(lie.is_rotation(C, 1e-9) for C in res.poses[::50, :3, :3])


def test_replay_rmse_matches_evaluation_bitwise(replayed, bundle_dir):
    b = load_bundle(bundle_dir)
    res = replayed["IEKF2"]
    C_t, v_t, r_t = lie.se23_parts(b.truth)
    C, v, r = lie.se23_parts(res.poses)
    assert res.rmse["attitude"] == rmse(np.linalg.norm(attitude_error(C_t, C), axis=-1))
    assert res.rmse["velocity"] == rmse(np.linalg.norm(v - v_t, axis=-1))
    assert res.rmse["position"] == rmse(np.linalg.norm(r - r_t, axis=-1))
    assert trace_errors(b, res.poses)[1] == res.rmse


def test_receiver2_removed_gates_modes(bundle_dir, tmp_path):
    d = _copy(bundle_dir, tmp_path)
    fixes = read_csv(d / "fixes.csv", FIX_HEADER)
    keep = fixes[fixes[:, 1] == 1]
    write_csv(d / "fixes.csv", FIX_HEADER, [[r[0], 1, *r[2:]] for r in keep])
    b = load_bundle(d)
    with pytest.raises(DataError, match="receiver-2"):
        replay(b, ("IEKF2",))
    out = replay(b, ("IEKF1",))["IEKF1"]
    assert np.all(np.isfinite(out.poses))


def test_timestamp_regression_rejected(bundle_dir, tmp_path):
    d = _copy(bundle_dir, tmp_path)
    imu = read_csv(d / "imu.csv", IMU_HEADER)
    imu[10, 0], imu[11, 0] = imu[11, 0], imu[10, 0]
    write_csv(d / "imu.csv", IMU_HEADER, imu)
    with pytest.raises(DataError, match="regression"):
        load_bundle(d)


def test_unknown_version_rejected(bundle_dir, tmp_path):
    d = _copy(bundle_dir, tmp_path)
    m = json.loads((d / "manifest.json").read_text())
    m["format_version"] = 99
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(DataError, match="version"):
        load_bundle(d)


def test_rate_mismatch_rejected(bundle_dir, tmp_path):
    d = _copy(bundle_dir, tmp_path)
    m = json.loads((d / "manifest.json").read_text())
    m["imu_rate"] = 200.0
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(DataError, match="rate"):
        load_bundle(d)


def test_bad_header_rejected(bundle_dir, tmp_path):
    d = _copy(bundle_dir, tmp_path)
    text = (d / "fixes.csv").read_text().replace("receiver_id", "rx", 1)
    (d / "fixes.csv").write_text(text)
    with pytest.raises(DataError, match="header"):
        load_bundle(d)


def test_missing_truth_means_no_rmse(bundle_dir, tmp_path):
    d = _copy(bundle_dir, tmp_path)
    (d / "truth.csv").unlink()
    res = replay(load_bundle(d), ("IEKF1",))["IEKF1"]
    assert res.rmse == {}


def test_generation_is_deterministic(tmp_path):
    cfg = config_from_dict({"dataset": {"duration": 1.0}, "seed": 9})
    generate_dataset(cfg, tmp_path / "a")
    generate_dataset(cfg, tmp_path / "b")
    for name in ("imu.csv", "fixes.csv", "truth.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
