import csv
import json

import numpy as np
import pytest

from glovehand.cli import main
from glovehand.se3 import rotation_angle_between, rotation_from_quat, rodrigues_exp


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen-data", "--wavelets", "3", "--amplitude-deg", "10", "--seed", "2", "--out", str(out),
                 "--no-plots"]) == 0
    return out


def test_gen_data_outputs(data_dir):
    header, rows = read_csv(data_dir / "glove_trace.csv")
    assert header == ["t_s"] + [f"jm{i:02d}" for i in range(1, 12)]
    assert rows.shape[1] == 12
    header, truth = read_csv(data_dir / "intent_truth.csv")
    assert header[0] == "t_s" and truth.shape[0] == rows.shape[0]
    assert not (data_dir / "glove_trace.png").exists()


def test_gen_data_deterministic(tmp_path, data_dir):
    assert main(["gen-data", "--wavelets", "3", "--amplitude-deg", "10", "--seed", "2", "--out", str(tmp_path),
                 "--no-plots"]) == 0
    assert (tmp_path / "glove_trace.csv").read_bytes() == (data_dir / "glove_trace.csv").read_bytes()


def test_gen_data_rigid_and_pca(tmp_path):
    assert main(["gen-data", "--kind", "rigid", "--duration-s", "5", "--out", str(tmp_path)]) == 0
    assert main(["pca", "--trace", str(tmp_path / "glove_trace.csv"), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "pca.csv")
    assert header[:4] == ["component", "eigenvalue_deg2", "explained_ratio", "cumulative_ratio"]
    assert rows[5, 3] >= 0.95
    assert (tmp_path / "pca.png").stat().st_size > 0


def test_intent_command(tmp_path, data_dir):
    assert main(["intent", "--trace", str(data_dir / "glove_trace.csv"), "--truth",
                 str(data_dir / "intent_truth.csv"), "--rotation-only", "--out", str(tmp_path)]) == 0
    _, est = read_csv(tmp_path / "intent.csv")
    _, truth = read_csv(data_dir / "intent_truth.csv")
    # the estimate starts from zero while the truth carries the wavelet's initial value
    gap = (est[:, 3] - est[0, 3]) - (truth[:, 3] - truth[0, 3])
    # 0.02 deg encoder noise on eleven channels, no drift
    assert np.max(np.abs(gap)) < np.deg2rad(0.25)
    header, poses = read_csv(tmp_path / "goal_poses.csv")
    assert header == ["t_s", "qw", "qx", "qy", "qz", "px", "py", "pz"]
    assert (tmp_path / "intent.png").exists()


def test_simulate_fixed_goal(tmp_path):
    assert main(["simulate", "--goal-rot-z-deg", "10", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "trajectory.csv")
    qi = header.index("qw")
    start = rotation_from_quat(rows[0, qi:qi + 4])
    final = rotation_from_quat(rows[-1, qi:qi + 4])
    err = rotation_angle_between(final, rodrigues_exp(np.deg2rad([0, 0, 10])) @ start)
    assert np.rad2deg(err) < 0.5
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["converged"] is True
    assert (tmp_path / "trajectory.png").exists()


def test_train_predict(tmp_path, data_dir):
    out = tmp_path
    assert main(["train", "--trace", str(data_dir / "glove_trace.csv"), "--rotation-only", "--epochs", "5",
                 "--hidden-size", "4", "--out", str(out), "--no-plots"]) == 0
    header, loss = read_csv(out / "loss_z.csv")
    assert header == ["epoch", "train_mse_deg2", "val_mse_deg2"]
    assert loss.shape[0] == 6
    assert main(["predict", "--model", f"z={out / 'model_z.json'}", "--trace", str(data_dir / "glove_trace.csv"),
                 "--truth", str(data_dir / "intent_truth.csv"), "--out", str(out), "--no-plots"]) == 0
    header, pred = read_csv(out / "prediction_z.csv")
    assert header == ["t_s", "intent_deg", "predicted_deg", "t_target_s"]
    np.testing.assert_allclose(pred[:, 3] - pred[:, 0], 10 * 0.06, atol=1e-9)
    with open(out / "lag_report.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["axis", "lag_samples", "lag_s", "lag_vs_truth_samples", "lag_vs_truth_s"]
    assert rows[1][0] == "z"


def test_config_file_and_flag_precedence(tmp_path, data_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 3, "hidden_size": 3}))
    assert main(["train", "--trace", str(data_dir / "glove_trace.csv"), "--config", str(cfg),
                 "--out", str(tmp_path / "a"), "--no-plots"]) == 0
    assert read_csv(tmp_path / "a" / "loss_z.csv")[1].shape[0] == 4
    assert main(["train", "--trace", str(data_dir / "glove_trace.csv"), "--config", str(cfg), "--epochs", "2",
                 "--out", str(tmp_path / "b"), "--no-plots"]) == 0
    assert read_csv(tmp_path / "b" / "loss_z.csv")[1].shape[0] == 3
    model = json.loads((tmp_path / "b" / "model_z.json").read_text())
    assert model["hidden_size"] == 3


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text(json.dumps({"plant": {"bogus": 1}}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert main(["simulate", "--goal-rot-z-deg", "ten", "--out", str(tmp_path)]) == 1
    assert main([]) == 1
    assert main(["predict", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_input_errors(tmp_path):
    assert main(["intent", "--trace", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,jm01\n0,1\n")
    assert main(["intent", "--trace", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--goal-rot-z-deg", "120", "--out", str(tmp_path)]) == 2


def test_nonconvergence_exit(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"controller": {"max_steps": 2}}))
    assert main(["simulate", "--goal-rot-z-deg", "10", "--config", str(cfg), "--out", str(tmp_path),
                 "--no-plots"]) == 3
    diag = json.loads((tmp_path / "diagnostic.json").read_text())
    assert diag["outer_steps"] == 2
    assert diag["final_error_deg"] > 0.5
