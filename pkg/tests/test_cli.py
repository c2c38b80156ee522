import subprocess
import sys

import pytest
import yaml

from yatt import cli

TINY = {
    "seed": 3,
    "model": {"kind": "attention", "epochs": 2, "encoder": {"h1": 6, "h2": 4}},
    "forest": {"n_trees": 3},
    "greedy": {"pool": ["ADNI", "MinSur"]},
    "synth": {"locations": 10, "years": 3, "genotypes": 20, "trials": 2},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "run.yaml").write_text(yaml.safe_dump(TINY))
    cfg = str(d / "run.yaml")
    assert cli.main(["generate-data", "--config", cfg, "--out", str(d / "data")]) == 0
    assert cli.main(["cluster", "--config", cfg, "--correlation", str(d / "data/correlation.csv"),
                     "--out", str(d / "cl")]) == 0
    assert cli.main(["prepare", "--config", cfg, "--data-dir", str(d / "data"),
                     "--assignment", str(d / "cl/assignment.csv"), "--out", str(d / "prep")]) == 0
    assert cli.main(["train", "--config", cfg, "--split", str(d / "prep"), "--out", str(d / "tr")]) == 0
    return d, cfg


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_pipeline_outputs(workdir, capsys):
    d, cfg = workdir
    assert (d / "tr/model.ckpt").exists() and (d / "tr/history.csv").exists()
    resolved = yaml.safe_load((d / "tr/config.resolved.yaml").read_text())
    assert resolved["command"] == "train" and resolved["seed"] == 3
    assert run("evaluate", "--config", cfg, "--split", d / "prep", "--checkpoint", d / "tr/model.ckpt",
               "--out", d / "ev") == 0
    for name in ("metrics.csv", "yearwise.csv", "heatmap.csv"):
        assert (d / "ev" / name).read_text().startswith("# schema: ")
    assert run("attention-export", "--config", cfg, "--split", d / "prep", "--checkpoint", d / "tr/model.ckpt",
               "--out", d / "ev") == 0
    assert (d / "ev/attention_dist.csv").exists()
    assert run("baseline", "--config", cfg, "--split", d / "prep", "--out", d / "bl") == 0
    assert "lasso,test" in (d / "bl/baseline_metrics.csv").read_text()


def test_prepare_reports_weekly_length(workdir, capsys):
    d, cfg = workdir
    assert run("prepare", "--config", cfg, "--data-dir", d / "data", "--out", d / "prep2",
               "--granularity", "weekly") == 0
    assert "T_x=30" in capsys.readouterr().out


def test_train_evaluate_repeatable(workdir):
    d, cfg = workdir
    for tag in ("a", "b"):
        assert run("train", "--config", cfg, "--split", d / "prep", "--out", d / f"tr_{tag}") == 0
        assert run("evaluate", "--config", cfg, "--split", d / "prep", "--checkpoint", d / f"tr_{tag}/model.ckpt",
                   "--out", d / f"ev_{tag}") == 0
    assert (d / "tr_a/model.ckpt").read_bytes() == (d / "tr_b/model.ckpt").read_bytes()
    assert (d / "ev_a/metrics.csv").read_bytes() == (d / "ev_b/metrics.csv").read_bytes()


def test_greedy_metric_flag(workdir):
    d, cfg = workdir
    assert run("greedy", "--config", cfg, "--split", d / "prep", "--out", d / "g1", "--epochs", "1") == 0
    assert run("greedy", "--config", cfg, "--split", d / "prep", "--out", d / "g2", "--epochs", "1",
               "--select-on-test") == 0
    v = (d / "g1/greedy_trace.csv").read_text().splitlines()
    t = (d / "g2/greedy_trace.csv").read_text().splitlines()
    assert "validation RMSE" in v[0] and v[2].endswith(",validation,all")
    assert "test RMSE" in t[0] and t[2].endswith(",test,all")


def test_flags_override_config(workdir):
    d, cfg = workdir
    assert run("train", "--config", cfg, "--split", d / "prep", "--out", d / "tr_s", "--kind", "stacked",
               "--epochs", "1") == 0
    resolved = yaml.safe_load((d / "tr_s/config.resolved.yaml").read_text())
    assert resolved["model"]["kind"] == "stacked" and resolved["model"]["epochs"] == 1


def test_exit_codes(workdir, tmp_path):
    d, cfg = workdir
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\nmodle: {}\n")
    assert run("train", "--config", bad, "--split", d / "prep", "--out", tmp_path / "x") == 1
    bad.write_text("model: {colour: red}\n")
    assert run("train", "--config", bad, "--split", d / "prep", "--out", tmp_path / "x") == 1
    assert run("train", "--config", cfg, "--out", tmp_path / "x") == 1
    assert run("train", "--config", cfg, "--split", tmp_path / "nowhere", "--out", tmp_path / "x") == 2
    with pytest.raises(SystemExit) as err:
        run("train", "--bogus")
    assert err.value.code == 1
    perf = tmp_path / "perf.csv"
    perf.write_text("record_id,year\n")
    assert run("prepare", "--performance", perf, "--weather", d / "data/weather.csv", "--out", tmp_path / "p") == 2
    assert run("attention-export", "--config", cfg, "--split", d / "prep", "--checkpoint", d / "tr_s/model.ckpt",
               "--out", tmp_path / "x") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_code(workdir, tmp_path):
    d, cfg = workdir
    conf = dict(TINY, model={"kind": "stacked", "epochs": 2, "learning_rate": 1e308, "encoder": {"h1": 4, "h2": 3}})
    p = tmp_path / "huge.yaml"
    p.write_text(yaml.safe_dump(conf))
    assert run("train", "--config", p, "--split", d / "prep", "--out", tmp_path / "x") == 3


def test_inputs_not_modified(workdir):
    d, cfg = workdir
    before = (d / "data/performance.csv").read_bytes()
    run("prepare", "--config", cfg, "--data-dir", d / "data", "--out", d / "prep3")
    assert (d / "data/performance.csv").read_bytes() == before


def test_example_config_is_valid():
    from pathlib import Path

    rc = cli.load_config(Path(__file__).resolve().parents[1] / "configs" / "example.yaml")
    assert rc.model_config(30).encoder.input_dim == 9


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "yatt.cli", "train", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 1 and "--split is required" in res.stderr
