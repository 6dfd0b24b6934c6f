import json
from pathlib import Path

import numpy as np
import pytest

from spflab.cli import main

CYCLE3 = """
[run]
seed = 7

[mdp]
n_states = 3
n_actions = 1
gamma = 0.9
transition = [0.0,1.0,0.0, 0.0,0.0,1.0, 1.0,0.0,0.0]
reward = [0.0, 0.0, 0.0]
initial_dist = [1.0, 0.0, 0.0]
embedding = [[0.0],[1.0],[2.0]]

[analysis]
n_steps = 200

[dtft]
n_freq = 16
tol = 1e-11
"""

LCM6 = """
[mdp]
n_states = 5
n_actions = 1
gamma = 0.9
transition = [
  0.0,1.0,0.0,0.0,0.0,
  1.0,0.0,0.0,0.0,0.0,
  0.0,0.0,0.0,1.0,0.0,
  0.0,0.0,0.0,0.0,1.0,
  0.0,0.0,1.0,0.0,0.0,
]
reward = [0.0,0.0,0.0,0.0,0.0]
initial_dist = [0.3, 0.1, 0.4, 0.1, 0.1]

[analysis]
n_steps = 300
"""

SINGLE = """
[mdp]
n_states = 1
n_actions = 1
gamma = 0.5
transition = [1.0]
reward = [0.0]
initial_dist = [1.0]
embedding = [[1.0]]

[dtft]
n_freq = 4
tol = 1e-12
"""

TRAIN = """
[run]
seed = 3

[train]
env = "cycle_walk"
total_steps = {steps}
pretrain_collect = 40
pretrain_steps = 10
batch_size = 16
buffer_capacity = 400
eval_interval = 60
eval_episodes = 2
log_interval = 30
episode_horizon = 30
n_freq = 12
k_lo = 3
k_hi = 2
encoder_blocks = 1
encoder_growth = 4
predictor_hidden = 8
proj_hidden = 8
proj_dim = 4
agent_hidden = 8
lr_q = 0.0
target_interval = 40
cycle_period = 3

[recover]
period = 3
gamma = 0.9
n_freq = 128
k_max = 5
n_goals = 12
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestAnalyzeMdp:
    def test_cycle_reports_period_three(self, tmp_path):
        cfg = write(tmp_path, "c.toml", CYCLE3)
        assert main(["analyze-mdp", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        report = json.loads((tmp_path / "o" / "period_report.json").read_text())
        assert report["global_period"] == 3
        assert report["eigen_counts"] == [3]
        assert report["empirical_period"] == 3
        assert (tmp_path / "o" / "distribution_evolution.csv").exists()
        assert (tmp_path / "o" / "distribution_evolution.svg").exists()

    def test_lcm_blocks_give_six(self, tmp_path):
        cfg = write(tmp_path, "c.toml", LCM6)
        assert main(["analyze-mdp", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        report = json.loads((tmp_path / "o" / "period_report.json").read_text())
        assert report["class_periods"] == [2, 3]
        assert report["global_period"] == 6
        assert report["empirical_period"] == 6

    def test_malformed_toml_exits_2_without_files(self, tmp_path):
        cfg = write(tmp_path, "bad.toml", "[mdp\nn_states = 3")
        out = tmp_path / "o"
        assert main(["analyze-mdp", "--config", str(cfg), "--out", str(out)]) == 2
        assert not out.exists()

    def test_bad_field_reports_path(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.toml", CYCLE3.replace("gamma = 0.9", "gamma = 2.0"))
        assert main(["analyze-mdp", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "gamma" in capsys.readouterr().err

    def test_missing_key_reports_path(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.toml", CYCLE3.replace("n_actions = 1", ""))
        assert main(["analyze-mdp", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "mdp.n_actions" in capsys.readouterr().err


class TestSolveDtft:
    def test_single_state_value_in_csv(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SINGLE)
        out = tmp_path / "o"
        assert main(["solve-dtft", "--config", str(cfg), "--out", str(out)]) == 0
        rows = (out / "dtft_field.csv").read_text().strip().splitlines()
        assert rows[0] == "state,action,bin,dim,re,im"
        first = rows[1].split(",")
        assert abs(float(first[4]) - 2.0) < 1e-9
        convergence = json.loads((out / "convergence.json").read_text())
        assert convergence["converged"] is True

    def test_nonconverged_flag_and_exit_code(self, tmp_path):
        cfg = write(tmp_path, "c.toml", SINGLE.replace("tol = 1e-12",
                                                       "tol = 1e-12\nmax_iter = 1"))
        out = tmp_path / "o"
        assert main(["solve-dtft", "--config", str(cfg), "--out", str(out)]) == 3
        convergence = json.loads((out / "convergence.json").read_text())
        assert convergence["converged"] is False

    def test_cycle_matches_rollout_oracle(self, tmp_path):
        from spflab.dtft import dtft_of_sequence

        cfg = write(tmp_path, "c.toml", CYCLE3)
        out = tmp_path / "o"
        assert main(["solve-dtft", "--config", str(cfg), "--out", str(out)]) == 0
        data = np.genfromtxt(out / "dtft_field.csv", delimiter=",", names=True)
        state0 = data[data["state"] == 0]
        seq = np.array([[(1 + n) % 3] for n in range(600)], dtype=float)
        oracle = dtft_of_sequence(seq, 0.9, 16).values[:, 0]
        got = state0["re"] + 1j * state0["im"]
        assert np.abs(got - oracle).max() < 1e-8


class TestVerifyBounds:
    def test_verdicts(self, tmp_path):
        cfg = write(tmp_path, "b.toml", """
[bounds]
n_time_domain = 6
n_freq_domain = 4
degrees = [1, 2]
include_uncertified = true
""")
        out = tmp_path / "o"
        assert main(["verify-bounds", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "bounds.csv").read_text().strip().splitlines()
        assert lines[0] == "instance_id,theorem,lhs,rhs,slack,verdict"
        verdicts = [line.split(",")[-1] for line in lines[1:]]
        assert verdicts.count("inapplicable") >= 1
        assert all(v in ("holds", "inapplicable") for v in verdicts)
        time_rows = [l for l in lines[1:] if l.split(",")[1] == "time_domain"]
        assert len(time_rows) == 6
        for line in time_rows:
            assert float(line.split(",")[4]) >= 0  # slack


class TestTrain:
    def test_zero_steps_header_only(self, tmp_path):
        cfg = write(tmp_path, "t.toml", TRAIN.format(steps=0))
        out = tmp_path / "o"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines == ["step,L_pred,raw_lo_term,mid_term,raw_hi_term,episodic_return"]
        assert (out / "checkpoint_final.json").exists()
        assert (out / "checkpoint_final.bin").exists()

    def test_short_run_emits_metrics_and_curve(self, tmp_path):
        cfg = write(tmp_path, "t.toml", TRAIN.format(steps=120))
        out = tmp_path / "o"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 4  # header + steps 30, 60, 90, 120
        assert (out / "learning_curve.svg").exists()
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert "metrics.csv" in manifest["emitted_files"]
        assert manifest["extras"]["smooth_window"] >= 1

    def test_resume_continues_without_discontinuity(self, tmp_path):
        cfg_full = write(tmp_path, "full.toml", TRAIN.format(steps=240))
        out_full = tmp_path / "full"
        assert main(["train", "--config", str(cfg_full), "--out", str(out_full)]) == 0

        cfg_half = write(tmp_path, "half.toml", TRAIN.format(steps=120))
        out_half = tmp_path / "half"
        assert main(["train", "--config", str(cfg_half), "--out", str(out_half)]) == 0
        cfg_resume = write(tmp_path, "resume.toml", TRAIN.format(steps=240))
        out_resume = tmp_path / "resume"
        assert main([
            "train", "--config", str(cfg_resume), "--out", str(out_resume),
            "--resume", str(out_half / "checkpoint_final"),
        ]) == 0

        def rows_by_step(path):
            out = {}
            for line in (path / "metrics.csv").read_text().strip().splitlines()[1:]:
                cells = line.split(",")
                out[int(cells[0])] = cells[1:5]
            return out

        full = rows_by_step(out_full)
        resumed = rows_by_step(out_resume)
        spliced = {step: cells for step, cells in resumed.items() if step > 120}
        assert spliced
        for step, cells in spliced.items():
            for a, b in zip(cells, full[step]):
                assert abs(float(a) - float(b)) <= 1e-9 * max(1.0, abs(float(b)))


class TestRecover:
    def test_exact_field_recovery(self, tmp_path):
        cfg = write(tmp_path, "r.toml", TRAIN.format(steps=0))
        out = tmp_path / "o"
        assert main(["recover", "--config", str(cfg), "--out", str(out),
                     "--checkpoint", "exact"]) == 0
        data = np.genfromtxt(out / "recovery.csv", delimiter=",", names=True)
        assert data["abs_err"].max() <= 0.9**128 / 0.1 + 1e-8
        assert (out / "recovery.svg").exists()

    def test_aliasing_warning_lands_in_manifest(self, tmp_path):
        text = TRAIN.format(steps=0).replace("n_freq = 128", "n_freq = 4")
        text = text.replace("k_max = 5", "k_max = 6")
        cfg = write(tmp_path, "r.toml", text)
        out = tmp_path / "o"
        assert main(["recover", "--config", str(cfg), "--out", str(out),
                     "--checkpoint", "exact"]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert any("alias" in w for w in manifest["warnings"])

    def test_learned_checkpoint_trend(self, tmp_path):
        cfg = write(tmp_path, "t.toml", TRAIN.format(steps=600).replace(
            "n_freq = 12", "n_freq = 16").replace("k_lo = 3", "k_lo = 4"))
        out_train = tmp_path / "train"
        assert main(["train", "--config", str(cfg), "--out", str(out_train)]) == 0
        recover_cfg = write(tmp_path, "r.toml", """
[recover]
period = 3
gamma = 0.99
n_freq = 16
k_max = 3
n_goals = 9
imag_tol = 10.0
""")
        out = tmp_path / "rec"
        code = main(["recover", "--config", str(recover_cfg), "--out", str(out),
                     "--checkpoint", str(out_train / "checkpoint_final")])
        assert code == 0
        data = np.genfromtxt(out / "recovery.csv", delimiter=",", names=True)
        assert data.shape[0] == 27


class TestReproducibility:
    @pytest.mark.parametrize("command, config, files", [
        ("analyze-mdp", CYCLE3, ("period_report.json", "distribution_evolution.csv")),
        ("solve-dtft", CYCLE3, ("dtft_field.csv", "convergence.json")),
        ("train", TRAIN.format(steps=90), ("metrics.csv", "checkpoint_final.bin")),
    ])
    def test_byte_identical_reruns(self, tmp_path, command, config, files):
        cfg = write(tmp_path, "c.toml", config)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main([command, "--config", str(cfg), "--out", str(out_a)]) == 0
        assert main([command, "--config", str(cfg), "--out", str(out_b)]) == 0
        for name in files:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_svg_output_is_deterministic(self, tmp_path):
        cfg = write(tmp_path, "c.toml", CYCLE3)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["analyze-mdp", "--config", str(cfg), "--out", str(out)]) == 0
        assert ((out_a / "distribution_evolution.svg").read_bytes()
                == (out_b / "distribution_evolution.svg").read_bytes())
