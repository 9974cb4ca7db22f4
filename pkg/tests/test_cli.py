import json
import os
import time

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from diagc import autodiff as ad
from diagc import verify
from diagc.cli import main
from diagc.graphdata import load_dataset

MODEL = {
    "max_iter": 3, "hidden_dims": [8, 4], "mlp_dims": [6, 4], "sir_dims": [4, 3],
    "sir_activations": ["relu", "identity"], "kmeans_n_init": 2,
}


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({
        "synthetic": {"n": 45, "c": 3, "feature_dim": 9},
        "output_dir": str(tmp_path / "out"),
        "model": MODEL,
    }))
    return path


def test_synth_round_trip(tmp_path):
    res = invoke("synth", "--n", 300, "--c", 3, "--seed", 0, "--out", tmp_path / "a")
    assert res.exit_code == 0, res.output
    manifest = res.output.strip()
    graph, c = load_dataset(manifest)
    assert (graph.n, c, graph.n_views, graph.features.shape[1]) == (300, 3, 2, 30)
    invoke("synth", "--n", 300, "--c", 3, "--seed", 0, "--out", tmp_path / "b")
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    size = 0
    for n in names:
        a, b = (tmp_path / "a" / n).read_bytes(), (tmp_path / "b" / n).read_bytes()
        assert a == b
        size += len(a)
    assert size < 5 * 2**20


def test_synth_invalid(tmp_path):
    res = invoke("synth", "--p-in", 1.5, "--out", tmp_path)
    assert res.exit_code == 1


def test_train_writes_artifacts(config, tmp_path):
    res = invoke("train", config, "--repeat", 2)
    assert res.exit_code == 0, res.output
    out = tmp_path / "out"
    for r in ("run_00", "run_01"):
        assert {"checkpoint.json", "history.tsv", "labels.txt", "report.json", "meta.json"} <= set(
            os.listdir(out / r))
    agg = json.loads((out / "aggregate.json").read_text())
    assert agg["runs"] == 2
    assert json.loads((out / "run_01" / "report.json").read_text())["seed"] == 1


def test_train_reproducible(config, tmp_path):
    invoke("train", config)
    first = (tmp_path / "out" / "run_00" / "report.json").read_bytes()
    labels = (tmp_path / "out" / "run_00" / "labels.txt").read_bytes()
    invoke("train", config)
    assert (tmp_path / "out" / "run_00" / "report.json").read_bytes() == first
    assert (tmp_path / "out" / "run_00" / "labels.txt").read_bytes() == labels


def test_train_from_manifest(tmp_path):
    manifest = invoke("synth", "--n", 30, "--dim", 6, "--out", tmp_path / "data").output.strip()
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({"dataset": "data/" + os.path.basename(manifest),
                                   "output_dir": str(tmp_path / "out"), "model": MODEL}))
    res = invoke("train", cfg, "--set", "alpha=0.1")
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "out" / "run_00" / "report.json").read_text())
    assert report["config"]["alpha"] == 0.1


@pytest.mark.parametrize(
    "doc,extra",
    [
        ({"dataset": "missing.yaml"}, []),
        ({"synthetic": {"n": 30}}, ["--set", "ablation=bogus"]),
        ({"synthetic": {"n": 30}}, ["--set", "not_a_param=1"]),
        ({}, []),
    ],
)
def test_train_invalid_config(tmp_path, doc, extra):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({**doc, "output_dir": str(tmp_path / "out")}))
    res = invoke("train", cfg, *extra)
    assert res.exit_code == 1
    assert not (tmp_path / "out").exists()


def test_missing_config(tmp_path):
    assert invoke("train", tmp_path / "nope.yaml").exit_code == 1


def test_numerical_failure(config, monkeypatch):
    real = ad.sigmoid

    def bad(x):
        out = real(x)
        out.data[:] = np.inf
        return out

    monkeypatch.setattr(ad, "sigmoid", bad)
    res = invoke("train", config)
    assert res.exit_code == 2


def test_sweep_default_grid(config, tmp_path):
    res = invoke("sweep", config)
    assert res.exit_code == 0, res.output
    rows = (tmp_path / "out" / "sweep.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows[1:]] == ["0.0001", "0.0010", "0.0100", "0.1000", "1.0000"]
    doc = json.loads((tmp_path / "out" / "sweep.json").read_text())
    assert [r["alpha"] for r in doc["rows"]] == [0.0001, 0.001, 0.01, 0.1, 1.0]
    assert set(doc["spread"]) == {"acc", "f1", "nmi", "ari"}


def test_ablate_all_variants(config, tmp_path):
    res = invoke("ablate", config)
    assert res.exit_code == 0, res.output
    rows = (tmp_path / "out" / "ablation.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows[1:]] == ["full", "no_mim", "no_sir", "no_sc"]
    assert invoke("ablate", config, "--variants", "full,nope").exit_code == 1


def test_eval_and_aggregate(config, tmp_path):
    invoke("train", config, "--repeat", 2)
    truth = tmp_path / "truth.txt"
    truth.write_text("0\n0\n1\n1\n")
    pred = tmp_path / "pred.txt"
    pred.write_text("0\n1\n1\n1\n")
    res = invoke("eval", truth, pred, "--out", tmp_path / "r.json")
    assert res.exit_code == 0
    assert json.loads(res.output)["acc"] == 0.75
    res = invoke("aggregate", tmp_path / "out")
    assert res.exit_code == 0 and "full\t2" in res.output


def test_eval_length_mismatch(tmp_path):
    (tmp_path / "a.txt").write_text("0\n1\n")
    (tmp_path / "b.txt").write_text("0\n")
    assert invoke("eval", tmp_path / "a.txt", tmp_path / "b.txt").exit_code == 1


@pytest.mark.slow
def test_verify_passes():
    t0 = time.perf_counter()
    res = invoke("verify")
    assert time.perf_counter() - t0 < 60
    assert res.exit_code == 0, res.output
    assert res.output.count("[PASS]") == len(verify.CHECKS)


def test_verify_catches_sign_error(monkeypatch):
    real = ad.sigmoid

    def flipped(x):
        out = real(x)
        out._backward = lambda g: (-g * out.data * (1.0 - out.data),)
        return out

    monkeypatch.setattr(ad, "sigmoid", flipped)
    monkeypatch.setattr(verify, "CHECKS", (("gradient check (full loss)", lambda: verify.check_gradients(cases=2)),))
    res = invoke("verify")
    assert res.exit_code == 3
    assert "[FAIL]" in res.output


def test_single_value_sweep_equals_train(config, tmp_path):
    invoke("sweep", config, "--alphas", "0.01", "--out", tmp_path / "sweep")
    invoke("train", config, "--set", "alpha=0.01", "--out", tmp_path / "train")
    sweep = json.loads((tmp_path / "sweep" / "alpha_0.01" / "aggregate.json").read_text())
    train = json.loads((tmp_path / "train" / "aggregate.json").read_text())
    assert sweep == train


def test_empty_sweep(config):
    assert invoke("sweep", config, "--alphas", ",").exit_code == 1
