import json

import numpy as np
import pytest
import yaml

from multipass_seeding.cli import build_parser, main, run_config


def _gen(tmp_path, *extra):
    out = tmp_path / "data"
    rc = main(["gen", "--gen", "default", "--k", "3", "--n", "150", "--seed", "4",
               "--out", str(out), *extra])
    assert rc == 0
    return out


def test_gen_writes_datasets(tmp_path):
    out = _gen(tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["datasets"]) == 30
    first = manifest["datasets"][0]
    X = np.loadtxt(out / first["path"], delimiter=",")
    labels = np.loadtxt(out / f"{first['id']}.labels.csv", dtype=int)
    assert X.shape == (150, 2) and labels.shape == (150,)
    assert (out / f"{first['id']}.mixture.json").exists()
    assert first["k"] == 3


def test_kmeans_from_data_with_sidecar(tmp_path):
    out = _gen(tmp_path)
    files = sorted(str(p) for p in out.glob("spherical-00[01]-00.csv"))
    res = tmp_path / "run"
    rc = main(["kmeans", "--data", *files, "--methods", "EON,EGD-EGC", "--repeats", "2",
               "--out", str(res)])
    assert rc == 0
    report = json.loads((res / "report.json").read_text())
    assert report["methods"] == ["EON", "EGD-EGC"]
    assert len(report["datasets"]) == 2
    for name in ("timings.json", "runs.jsonl", "summary.csv", "config.json"):
        assert (res / name).exists()
    assert len((res / "runs.jsonl").read_text().splitlines()) == 8


def test_report_reproduces_run(tmp_path, capsys):
    res = tmp_path / "run"
    assert main(["gmm", "--gen", "grid", "--n", "300", "--methods", "EGD,GGD", "--repeats", "1",
                 "--seed", "2", "--out", str(res)]) == 0
    again = tmp_path / "again"
    assert main(["report", str(res), "--out", str(again)]) == 0
    assert (res / "report.json").read_bytes() == (again / "report.json").read_bytes()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({
        "methods": ["EGD"], "repeats": 3, "seed": 1,
        "datasets": [{"id": "p", "path": "p.csv", "k": 2}],
    }))
    (tmp_path / "p.csv").write_text("0,0\n0,1\n5,5\n5,6\n")
    args = build_parser().parse_args(["kmeans", "--config", str(cfg), "--repeats", "5",
                                      "--pool-rule", "fixed:3"])
    config = run_config(args, "kmeans")
    assert config["repeats"] == 5 and config["pool_rule"] == "fixed:3"
    assert config["datasets"][0]["path"] == str(tmp_path / "p.csv")
    assert main(["kmeans", "--config", str(cfg)]) == 0


def test_cli_errors(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("0,0\n0,1\n5,5\n5,6\n")
    data = str(tmp_path / "p.csv")
    assert main(["kmeans", "--data", data, "--k", "2", "--methods", "AGL"]) == 2
    assert "gmm task" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["kmeans", "--data", data, "--methods", "EGD"])  # no --k, no sidecar
    with pytest.raises(SystemExit):
        main(["kmeans", "--data", data, "--k", "2", "--pool-rule", "cubic"])
    with pytest.raises(SystemExit):
        main(["kmeans", "--data", data, "--gen", "grid", "--k", "2"])
    assert main(["kmeans", "--data", str(tmp_path / "missing.csv"), "--k", "2",
                 "--methods", "EGD"]) == 2


def test_stdout_report(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("0,0\n0,1\n5,5\n5,6\n")
    assert main(["kmeans", "--data", str(tmp_path / "p.csv"), "--k", "2", "--methods", "EGD",
                 "--repeats", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["better"] == "lower"
    # plain CSV input is min-max normalized: y spans 6, so each pair sits 1/12 off its mean
    assert report["mean_objective"][0][0] == pytest.approx(4 / 144)
