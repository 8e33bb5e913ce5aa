import json

import numpy as np
import pytest

from cart.cli import main, read_csv


def _run(args, capsys):
    rc = main(args)
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_run_writes_artifacts(tmp_path, capsys):
    rc, out, _ = _run(["run", "nonlinear_small", "--runs", "2", "--out", str(tmp_path)], capsys)
    assert rc == 0
    assert "success 1.000" in out
    for f in ("metrics.json", "trajectories/run_000.csv", "trajectories/run_001.csv", "trajectories.png",
              "min_h.png"):
        assert (tmp_path / f).is_file()
    prov, rows = read_csv(tmp_path / "trajectories/run_000.csv")
    assert rows[0] == ["t", "agent", "p0", "p1", "v0", "v1", "u0", "u1", "min_h"]
    assert prov["scenarios"]["nonlinear_small"]["sim"]["seed"] == 0
    assert len(rows) == 1 + 101


def test_invalid_config_exit_code_names_invariant(tmp_path, capsys):
    rc, _, err = _run(["run", "nonlinear_small", "--set", "safety.r_sen=0.05", "--out", str(tmp_path)], capsys)
    assert rc == 2
    assert "SafetyConfig invariant" in err and "r_sen" in err


def test_missing_file_exit_code(tmp_path, capsys):
    rc, _, _ = _run(["run", str(tmp_path / "absent.toml")], capsys)
    assert rc == 2


def test_override_reflected_in_metadata(tmp_path, capsys):
    rc, _, _ = _run(["run", "nonlinear_small", "--set", "disturbance.d_bar=0.02", "--runs", "1", "--no-plots",
                     "--out", str(tmp_path)], capsys)
    assert rc == 0
    meta = json.loads((tmp_path / "metrics.json").read_text())
    assert meta["provenance"]["overrides"][0] == "disturbance.d_bar=0.02"
    assert meta["provenance"]["scenarios"]["nonlinear_small"]["disturbance"]["d_bar"] == 0.02


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CART_OUTPUT_DIR", str(tmp_path / "env"))
    rc, _, _ = _run(["run", "nonlinear_small", "--runs", "1", "--no-plots"], capsys)
    assert rc == 0 and (tmp_path / "env" / "metrics.json").is_file()


def test_runtime_failure_exit_code(tmp_path, capsys, monkeypatch):
    from cart import sim
    from cart.errors import PlannerFailure

    def boom(*a, **k):
        raise PlannerFailure("no feasible plan")

    monkeypatch.setattr(sim, "run_scenario", boom)
    rc, _, err = _run(["run", "nonlinear_small", "--runs", "1", "--out", str(tmp_path)], capsys)
    assert rc == 3 and "no feasible plan" in err


def test_reproduce_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(["reproduce", "nonlinear_small", "--runs", "2", "--no-plots", "--out", str(a)], capsys)[0] == 0
    assert _run(["reproduce", "nonlinear_small", "--runs", "2", "--no-plots", "--out", str(b)], capsys)[0] == 0
    ta = (a / "nonlinear_small" / "table.csv").read_text()
    assert ta == (b / "nonlinear_small" / "table.csv").read_text()
    _, rows = read_csv(a / "nonlinear_small" / "table.csv")
    assert [r[0] for r in rows[1:]] == ["learned", "safety-filter"]
    assert float(rows[2][1]) == 1.0


@pytest.mark.parametrize("key", ["gradients", "kkt"])
def test_verify_suites_pass(key, capsys):
    rc, out, _ = _run(["verify", key], capsys)
    assert rc == 0 and out.startswith("PASS")


def test_verify_envelope_emits_data(tmp_path, capsys):
    rc, out, _ = _run(["verify", "envelope", "--out", str(tmp_path)], capsys)
    assert rc == 0
    prov, rows = read_csv(tmp_path / "envelope" / "envelope.csv")
    assert rows[0] == ["t", "mean_s", "s_bound", "exceed_prob", "prob_bound", "sigma"]
    vals = np.array(rows[1:], dtype=float)
    assert np.all(vals[:, 1] <= 1.1 * vals[:, 2])
    assert (tmp_path / "envelope" / "envelope.png").is_file()


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for word in ("run", "reproduce", "verify", "--workers"):
        assert word in out
