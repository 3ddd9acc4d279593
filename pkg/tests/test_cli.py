import json

import pytest

from congestion.cli import main

SYNTH = {"synth": {"intersections_per_city": [40, 20, 60, 50], "rows": 1500, "streets_per_city": 30}}


def run(*argv):
    return main([str(a) for a in argv])


def manifest(d, command):
    return json.loads((d / f"{command}.manifest.json").read_text())


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SYNTH))
    out = root / "data"
    assert run("synth", "--config", cfg, "--out-dir", out, "--seed", 5) == 0
    return root, cfg, out


def side(out):
    return ["--data", out / "data.csv", "--weather", out / "weather.csv", "--geo", out / "geo.csv"]


def test_synth_is_reproducible(synth_dir, tmp_path):
    _, cfg, out = synth_dir
    assert run("synth", "--config", cfg, "--out-dir", tmp_path, "--seed", 5) == 0
    a, b = manifest(out, "synth"), manifest(tmp_path, "synth")
    assert a == b
    assert set(a["outputs"]) == {"data.csv", "weather.csv", "geo.csv"}
    assert a["seed"] == 5 and set(a["versions"]) == {"congestion", "numpy", "scipy", "python"}


def test_train_records_default_hyperparameters(synth_dir, tmp_path):
    _, _, out = synth_dir
    assert run("train", *side(out), "--out-dir", tmp_path, "--model", "gbt", "--param", "n_estimators=100") == 0
    m = manifest(tmp_path, "train")
    art = json.loads((tmp_path / "model.json").read_text())
    for doc in (art["params"], m["config"]["model"]["params"] | art["params"]):
        assert (doc["n_estimators"], doc["max_depth"], doc["learning_rate"]) == (100, 3, 0.1)
    assert m["inputs"]["data"]["name"] == "data.csv" and len(m["inputs"]["data"]["sha256"]) == 64
    assert "model.json" in m["outputs"]


def test_train_predict_importance(synth_dir, tmp_path):
    _, _, out = synth_dir
    assert run("train", *side(out), "--out-dir", tmp_path, "--param", "n_estimators=10") == 0
    art = tmp_path / "model.json"
    assert run("predict", "--data", out / "data.csv", "--artifact", art, "--out-dir", tmp_path) == 0
    lines = (tmp_path / "predictions.csv").read_text().strip().split("\n")
    assert lines[0] == "row_id,prediction" and len(lines) == 1501
    assert run("importance", "--artifact", art, "--out-dir", tmp_path) == 0
    rows = (tmp_path / "importance.csv").read_text().strip().split("\n")[1:]
    assert sum(float(r.split(",")[1]) for r in rows) == pytest.approx(1.0)


def test_evaluate_and_report(synth_dir, tmp_path):
    _, _, out = synth_dir
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"family": "gbt", "params": {"n_estimators": 5}}}))
    assert run("evaluate", *side(out), "--config", cfg, "--out-dir", tmp_path, "--folds", 3,
               "--families", "l2,gbt", "--threads", 2) == 0
    rep = json.loads((tmp_path / "eval.json").read_text())
    assert [r["configuration"] for r in rep["rows"]] == ["l2", "gbt"]
    assert all(len(r["folds"]) == 3 for r in rep["rows"])
    assert "durbin_watson" in rep["diagnostics"]
    assert run("report", "--eval", tmp_path / "eval.json", "--out-dir", tmp_path) == 0
    assert (tmp_path / "report.csv").read_text().startswith("configuration,mode,MSE,MAE,Max Error\n")
    m = manifest(tmp_path, "evaluate")
    assert m["config"]["eval"]["k"] == 3  # the flag wins over the default


def test_holdout_mode(synth_dir, tmp_path):
    _, _, out = synth_dir
    assert run("evaluate", *side(out), "--out-dir", tmp_path, "--mode", "holdout", "--families", "huber") == 0
    rep = json.loads((tmp_path / "eval.json").read_text())
    assert rep["rows"][0]["mode"] == "holdout"


def test_flags_override_config(synth_dir, tmp_path):
    _, _, out = synth_dir
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "busy": {"threshold_minutes": 10.0}}))
    assert run("busy", "--data", out / "data.csv", "--config", cfg, "--threshold", 25, "--seed", 2,
               "--out-dir", tmp_path) == 0
    m = manifest(tmp_path, "busy")
    assert m["config"]["busy"]["threshold_minutes"] == 25.0 and m["seed"] == 2
    assert len((tmp_path / "busy_curve.csv").read_text().strip().split("\n")) == 97


def test_unknown_config_key_exits_1(synth_dir, tmp_path, capsys):
    _, _, out = synth_dir
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cluster": {"kk": 3}}))
    assert run("cluster", "--data", out / "data.csv", "--config", cfg, "--out-dir", tmp_path) == 1
    assert "cluster.kk" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    assert run("train", "--out-dir", tmp_path) == 1
    assert run("frobnicate") == 1
    assert run("train", "--data", "x.csv", "--model", "svm", "--out-dir", tmp_path) == 1


def test_malformed_csv_exits_2(synth_dir, tmp_path, capsys):
    _, _, out = synth_dir
    lines = (out / "data.csv").read_text().split("\n")
    header = lines[0].split(",")
    col = header.index("Hour")
    cells = lines[3].split(",")
    cells[col] = "noon"
    lines[3] = ",".join(cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines))
    assert run("evaluate", "--data", bad, "--out-dir", tmp_path) == 2
    err = capsys.readouterr().err
    assert "row 3" in err and "Hour" in err


def test_missing_file_exits_2(tmp_path):
    assert run("validate", "--data", tmp_path / "nope.csv", "--out-dir", tmp_path) == 2


def test_cluster_impute_validate_search(synth_dir, tmp_path):
    _, _, out = synth_dir
    data = out / "data.csv"
    assert run("cluster", "--data", data, "--out-dir", tmp_path, "-k", 4) == 0
    assert json.loads((tmp_path / "cluster.json").read_text())["purity"] == 1.0
    assert run("validate", "--data", data, "--out-dir", tmp_path) == 0
    v = json.loads((tmp_path / "validation.json").read_text())
    assert v["rows"] == 1500 and v["intersections"] == 170
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"impute": {"max_iters": 5}}))
    assert run("impute", "--data", data, "--config", cfg, "--out-dir", tmp_path) == 0
    assert len(json.loads((tmp_path / "imputation.json").read_text())["cities"]) == 4
    assert run("search", *side(out), "--model", "knn", "--out-dir", tmp_path, "--folds", 3) == 0
    s = json.loads((tmp_path / "search.json").read_text())
    assert len(s["trials"]) == 4 and s["best_params"]["k"] in (3, 5, 7, 9)
    cfg.write_text(json.dumps({"search": {"space": {"k": {"int": [1, 9]}}}}))
    assert run("search", *side(out), "--config", cfg, "--model", "knn", "--method", "random", "--n-iter", 3,
               "--out-dir", tmp_path, "--folds", 3) == 0
    assert len(json.loads((tmp_path / "search.json").read_text())["trials"]) == 3


def test_threads_do_not_change_outputs(synth_dir, tmp_path):
    _, _, out = synth_dir
    a, b = tmp_path / "a", tmp_path / "b"
    for d, t in ((a, 1), (b, 4)):
        assert run("evaluate", *side(out), "--out-dir", d, "--threads", t, "--families", "knn", "--folds", 3) == 0
    assert manifest(a, "evaluate") == manifest(b, "evaluate")
