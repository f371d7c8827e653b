import csv
import json

import numpy as np
import pytest

from rfauth.experiment import (ConfigError, ExperimentConfig, InfeasibleError, MissingDataError, check_feasible,
                               realization_seeds, report, results_csv, run_realization, summarize, sweep_authorized,
                               sweep_known, write_results)
from rfauth.io import write_corpus
from rfauth.simulate import generate_corpus


def tiny_config(tmp_path, **over):
    d = {"corpus": {"n_tx": 10, "frames_per_tx": [30, 30], "seed": 2}, "sizes": [2, 2, 2],
         "archs": ["disc", "dclass", "ova"], "n_realizations": 1,
         "training": {"epochs": 1, "block_filters": [4, 4], "feature_dim": 16, "hidden_width": 8},
         "output_dir": str(tmp_path / "out"), "authorized_grid": [2, 3], "known_grid": [0, 2],
         "save_checkpoints": False}
    d.update(over)
    return ExperimentConfig.from_dict(d)


def test_config_json_round_trip(tmp_path):
    cfg = tiny_config(tmp_path)
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(tmp_path / "c.json") == cfg


@pytest.mark.parametrize("bad", [{"sizes": [1, 2]}, {"archs": ["softmax"]}, {"bogus": 1}, {"n_realizations": 0},
                                 {"training": {"epochz": 3}}, {"known_grid": []}])
def test_config_rejects(tmp_path, bad):
    with pytest.raises(ConfigError):
        tiny_config(tmp_path, **bad)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "bad.json")


def test_seeds_depend_on_realization_and_base():
    assert realization_seeds(0, 1) == realization_seeds(0, 1)
    assert realization_seeds(0, 1) != realization_seeds(0, 2)
    assert realization_seeds(0, 1) != realization_seeds(1, 1)


def test_feasibility():
    check_feasible((10, 25, 30), 71)
    with pytest.raises(InfeasibleError):
        check_feasible((10, 40, 30), 71)


def test_run_realization_artifacts_and_resume(tmp_path):
    cfg = tiny_config(tmp_path, save_checkpoints=True)
    res = run_realization(cfg, 0, out_dir=tmp_path / "r0")
    assert set(res.archs) == {"disc", "dclass", "ova"}
    for arch, r in res.archs.items():
        assert 0 <= r.auc <= 1 and 0 <= r.balanced_accuracy <= 1
        files = {p.name for p in (tmp_path / "r0" / arch).iterdir()}
        assert {"metrics.json", "scores.npz", "checkpoint.pt"} <= files
        assert ("thresholds.json" in files) == (arch != "dclass")
    assert np.isnan(res.archs["disc"].closed_set_accuracy)
    again = run_realization(cfg, 0, out_dir=tmp_path / "r0")
    assert again.archs["ova"].auc == res.archs["ova"].auc


def test_run_realization_needs_unseen_outliers(tmp_path):
    with pytest.raises(InfeasibleError):
        run_realization(tiny_config(tmp_path, sizes=[2, 2, 0]), 0)


def test_sweep_infeasible_before_training(tmp_path):
    cfg = tiny_config(tmp_path)
    with pytest.raises(InfeasibleError):
        sweep_known(cfg, values=[0, 20])
    assert not (tmp_path / "out").exists()


def test_sweep_known_outputs(tmp_path):
    cfg = tiny_config(tmp_path, archs=["disc", "ova"])
    results = sweep_known(cfg)
    assert len(results) == 2
    rows = list(csv.DictReader((tmp_path / "out" / "realizations.csv").open()))
    assert [(r["sweep_value"], r["arch"]) for r in rows] == [("0", "disc"), ("0", "ova"), ("2", "disc"), ("2", "ova")]
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert {g["sweep_value"] for g in summary["groups"]} == {0, 2}


def test_sweep_authorized_skips_dclass(tmp_path):
    results = sweep_authorized(tiny_config(tmp_path))
    assert all(set(r.archs) == {"disc", "ova"} for r in results)
    assert [r.sweep_value for r in results] == [2, 3]


def test_sweep_from_corpus_file(tmp_path):
    write_corpus(generate_corpus(8, (30, 30), 20.0, seed=1), tmp_path / "corpus")
    cfg = tiny_config(tmp_path, corpus={"path": str(tmp_path / "corpus")}, archs=["ova"])
    assert len(sweep_known(cfg, values=[1])) == 1
    with pytest.raises(MissingDataError):
        tiny_config(tmp_path, corpus={"path": str(tmp_path / "nope")}).corpus.load()


def test_summary_statistics():
    rows = [{"sweep_value": "5", "arch": "ova", "auc": a, "balanced_accuracy": "0.5", "closed_set_accuracy": "nan"}
            for a in ("0.6", "0.8")]
    (g,) = summarize(rows)
    assert g["sweep_value"] == 5 and g["n"] == 2
    assert g["auc_mean"] == pytest.approx(0.7) and g["auc_std"] == pytest.approx(0.1)
    assert g["closed_set_accuracy_mean"] is None


def test_report(tmp_path):
    results = sweep_known(tiny_config(tmp_path, archs=["ova"], known_grid=[1]))
    out = tmp_path / "out"
    assert not (out / "fig_auc.png").exists()
    written = report(out)
    assert (out / "fig_auc.png").exists() and (out / "fig_acc.png").exists()
    assert len(written) == 3
    assert results_csv(results) == (out / "realizations.csv").read_text()


def test_report_missing_or_empty(tmp_path):
    with pytest.raises(MissingDataError):
        report(tmp_path)
    write_results([], tmp_path)
    with pytest.raises(MissingDataError):
        report(tmp_path)
    assert not (tmp_path / "fig_auc.png").exists()


@pytest.mark.slow
def test_toy_separated_config_is_pinned():
    # recorded once with the default network; 50 frames/tx is ~30 optimizer steps in total
    cfg = ExperimentConfig.from_dict({"corpus": {"n_tx": 6, "frames_per_tx": [50, 50], "seed": 0, "layout": "spread"},
                                      "sizes": [2, 2, 2], "n_realizations": 1, "save_checkpoints": False})
    res = run_realization(cfg, 0)
    recorded = {"disc": 0.898, "dclass": 0.762, "ova": 0.442}
    for arch, auc in recorded.items():
        assert res.archs[arch].auc == pytest.approx(auc, abs=0.05)
