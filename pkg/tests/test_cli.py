import json
import subprocess
import sys
import time

import pytest

from memctrl import cli
from memctrl.nn import TrainingError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


def data_rows(path):
    return [ln for ln in open(path) if not ln.startswith("#")][1:]


def test_gradcheck_passes_quickly(capsys, tmp_path):
    t0 = time.perf_counter()
    code, out, _ = run(capsys, "gradcheck", "--out", tmp_path)
    assert code == 0 and time.perf_counter() - t0 < 10.0
    res = last_json(out)
    assert res["max_rel_error"] < 1e-4
    assert any(name.startswith("lstm") for name in res["cases"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "memctrl", "gradcheck", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "max_rel_error" in proc.stdout


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["train"], ["train", "--algo", "ppo"],
                                  ["compare", "--jobs", "0"]])
def test_usage_errors_exit_2(capsys, tmp_path, argv):
    code, _, err = run(capsys, *argv, *(["--out", tmp_path] if argv[:1] == ["compare"] else []))
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1][len("error: "):])["exit"] == 2


def test_bad_config_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[trainer]\nnope = 1\n")
    assert run(capsys, "gradcheck", "--config", bad)[0] == 2
    assert run(capsys, "gradcheck", "--config", tmp_path / "missing.cfg")[0] == 2


def test_missing_checkpoint_exit_2(capsys, tmp_path):
    assert run(capsys, "eval", "--controller", tmp_path / "none.json", "--out", tmp_path)[0] == 2


def test_runtime_failure_exit_1_with_diagnostics(capsys, tmp_path, tiny_cfg_path, monkeypatch):
    def boom(algo, cfg):
        raise TrainingError("diverged", {"episode": 2})
    monkeypatch.setattr(cli.ex, "train_rl", boom)
    code, _, err = run(capsys, "train", "--algo", "fmc-ddpg", "--config", tiny_cfg_path,
                       "--out", tmp_path)
    assert code == 1 and "diverged" in err
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["diagnostics"] == {"episode": 2}


def test_compare_writes_six_row_table(capsys, tmp_path, tiny_cfg_path):
    code, out, _ = run(capsys, "compare", "--config", tiny_cfg_path, "--seed", 0, "--out", tmp_path)
    assert code == 0
    rows = data_rows(tmp_path / "table.csv")
    assert sorted(r.split(",")[0] for r in rows) == sorted(
        ["fmc-ddpg", "fmc-dqn", "fmc-sac", "lstm-open", "lstm-closed", "pi"])
    assert len(data_rows(tmp_path / "baselines.csv")) == 3
    for name in ("config.cfg", "ranking.txt", "plateau.csv", "pid_tuning.csv",
                 "rewards_fmc-ddpg.csv", "traces/pi.csv", "checkpoints/fmc-sac.json"):
        assert (tmp_path / name).exists(), name
    assert set(last_json(out)["avg_error"]) == {r.split(",")[0] for r in rows}


def test_compare_jobs_do_not_change_results(capsys, tmp_path, tiny_cfg_path):
    run(capsys, "compare", "--config", tiny_cfg_path, "--out", tmp_path / "a")
    run(capsys, "compare", "--config", tiny_cfg_path, "--out", tmp_path / "b", "--jobs", 2)
    assert (tmp_path / "a/table.csv").read_bytes() == (tmp_path / "b/table.csv").read_bytes()


@pytest.mark.parametrize("algo", ["fmc-ddpg", "fmc-dqn", "fmc-sac", "baseline-sac", "lstm-inverse"])
def test_train_is_bitwise_reproducible(capsys, tmp_path, tiny_cfg_path, algo):
    outs = []
    for d in ("a", "b"):
        code, _, _ = run(capsys, "train", "--algo", algo, "--config", tiny_cfg_path,
                         "--out", tmp_path / d)
        assert code == 0
        outs.append(tmp_path / d)
    names = sorted(p.name for p in outs[0].iterdir())
    assert "checkpoint.json" in names and "config.cfg" in names
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n


def test_eval_modes(capsys, tmp_path, tiny_cfg_path):
    run(capsys, "train", "--algo", "lstm-inverse", "--config", tiny_cfg_path, "--out", tmp_path / "l")
    ck = tmp_path / "l" / "checkpoint.json"
    for mode in ("open", "closed"):
        code, out, _ = run(capsys, "eval", "--controller", ck, "--mode", mode,
                           "--config", tiny_cfg_path, "--out", tmp_path / mode)
        assert code == 0 and last_json(out)["controller"] == f"lstm-{mode}"
        assert len(data_rows(tmp_path / mode / f"trace_lstm-{mode}.csv")) == 41
    run(capsys, "train", "--algo", "fmc-dqn", "--config", tiny_cfg_path, "--out", tmp_path / "q")
    code, _, _ = run(capsys, "eval", "--controller", tmp_path / "q" / "checkpoint.json",
                     "--mode", "open", "--config", tiny_cfg_path, "--out", tmp_path / "x")
    assert code == 2
    code, out, _ = run(capsys, "eval", "--controller", tmp_path / "q" / "checkpoint.json",
                       "--config", tiny_cfg_path, "--out", tmp_path / "y")
    assert code == 0 and last_json(out)["controller"] == "fmc-dqn"


def test_gen_data_feeds_training(capsys, tmp_path, tiny_cfg_path):
    code, out, _ = run(capsys, "gen-data", "--size", 300, "--config", tiny_cfg_path,
                       "--out", tmp_path / "d")
    assert code == 0 and last_json(out)["samples"] == 300
    code, out, _ = run(capsys, "train", "--algo", "lstm-inverse", "--data",
                       tmp_path / "d" / "dataset.csv", "--config", tiny_cfg_path,
                       "--out", tmp_path / "t")
    assert code == 0 and "val_mse" in last_json(out)
    assert run(capsys, "gen-data", "--size", 1, "--out", tmp_path / "e")[0] == 2


def test_tune_pid(capsys, tmp_path, tiny_cfg_path):
    code, out, _ = run(capsys, "tune-pid", "--config", tiny_cfg_path, "--out", tmp_path)
    assert code == 0 and set(last_json(out)["gains"]) >= {"kp", "ki", "kd"}
    assert len(data_rows(tmp_path / "pid_tuning.csv")) == 25


def test_default_output_dir_uses_env_root(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    assert run(capsys, "gradcheck", "--seed", 4)[0] == 0
    assert (tmp_path / "gradcheck-seed4").is_dir()
