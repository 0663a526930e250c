import json

import pytest

from dpdropout.cli import main

ACCT = ["--iterations", "1439", "--sampling-ratio", "0.0695", "--delta", "1e-4"]


def test_calibrate_json(capsys):
    assert main(["calibrate", "--method", "zcdp", "--epsilon", "1", *ACCT]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["total"]["eps"] == pytest.approx(1.0, rel=1e-6)
    assert out["total"]["delta"] == pytest.approx(1e-4)
    assert out["sigma"] > 0 and out["rho_total"] > 0


def test_calibrate_forward_from_sigma(capsys):
    assert main(["calibrate", "--method", "ac", "--sigma", "50", *ACCT]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sigma"] == 50 and out["rho_total"] is None


def test_epsilon_and_sigma_conflict(capsys):
    with pytest.raises(SystemExit) as info:
        main(["calibrate", "--method", "ac", "--epsilon", "1", "--sigma", "2", *ACCT])
    assert info.value.code == 2


def test_domain_error_exit_one(capsys):
    assert main(["calibrate", "--method", "ac", "--epsilon", "1", "--iterations", "10",
                 "--sampling-ratio", "1.5"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("dpdropout calibrate:") and err.count("\n") == 1


def test_sweep_csv(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--epsilon-list", "1,0.5,10", "--out", str(out), *ACCT]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "eps,sigma_ac,sigma_zcdp"
    assert [float(l.split(",")[0]) for l in lines[1:]] == [0.5, 1.0, 10.0]


@pytest.fixture
def small_config(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("method = zcdp\nepsilon = 1.0\nhidden_units = 8\nepochs = 2\n")
    return cfg


def test_report(small_config, capsys):
    assert main(["report", "--config", str(small_config)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["method"] == "zcdp" and rep["eps_tot"] == pytest.approx(1.0, rel=1e-6)


def test_train_then_evaluate(small_config, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["train", "--config", str(small_config), "--seed", "3", "--runs", "2", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "seed 3:" in text and "seed 4:" in text and "over 2 runs" in text
    for name in ("seed3_trace.csv", "seed3_report.json", "seed3.ckpt", "seed4.ckpt"):
        assert (out / name).exists()
    acc_line = text.splitlines()[0].split()[-1]
    assert main(["evaluate", "--checkpoint", str(out / "seed3.ckpt")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(float(acc_line), abs=1e-4)


def test_evaluate_missing_checkpoint(tmp_path, capsys):
    assert main(["evaluate", "--checkpoint", str(tmp_path / "nope.ckpt")]) == 1


def test_console_script_entry_point():
    from importlib.metadata import entry_points
    eps = entry_points(group="console_scripts")
    assert any(e.name == "dpdropout" and e.value == "dpdropout.cli:main" for e in eps)
