import csv
import io
import json
import math

import numpy as np
import pytest

from mmsimnet.bench import (RECORD_FIELDS, ExperimentConfig, ExperimentRecord, load_config,
                            planned_keys, problem_order, read_records, run_experiment,
                            single_modality_baseline, summarize)

SMALL = dict(n_entities=120, n_features=6, k_neighbors=8, n_instances=1,
             resolution_grid=[0.8, 1.0, 1.25], n_restarts=3)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


def strip_wall_time(path):
    rows = list(csv.reader(open(path)))
    i = rows[0].index("wall_time")
    return [r[:i] + r[i + 1:] for r in rows]


def test_single_record_all_fields_populated():
    cfg = ExperimentConfig(problems=["Easy"], n_entities=300, n_instances=1, methods=["mean"],
                           clusterers=["leiden"])
    recs = run_experiment(cfg)
    assert len(recs) == 1
    r = recs[0]
    assert not r.error
    for f in ("gamma", "ami_y", "ari_y", "modularity_y", "tpr_y", "assortativity",
              "mean_path_length", "mean_degree", "median_degree", "wall_time"):
        assert np.isfinite(getattr(r, f)), f
    assert math.isnan(r.ami_ynan)
    assert r.ami_y > 0.8


def test_record_count_paper_grid():
    cfg = ExperimentConfig.preset("paper", problems="all")
    assert cfg.n_instances == 20 and len(cfg.problems) == 15
    keys = planned_keys(cfg)
    assert len(keys) == 3000 and len(set(keys)) == 3000


def test_baseline_one_record_per_modality():
    recs = single_modality_baseline(small(problems=["Easy"], clusterers=["spectral"]))
    assert [r.method for r in recs] == ["single:0", "single:1", "single:2"]
    assert all(not r.error for r in recs)


def test_deterministic_files_and_parallel(tmp_path):
    kw = dict(problems=["Easy", "1Rand"], n_instances=2, methods=["mean", "snf", "nemo"])
    a, b, c = (tmp_path / f"{x}.csv" for x in "abc")
    run_experiment(small(output=str(a), **kw))
    run_experiment(small(output=str(b), **kw))
    run_experiment(small(output=str(c), n_jobs=2, **kw))
    assert strip_wall_time(a) == strip_wall_time(b) == strip_wall_time(c)
    man = json.loads((tmp_path / "a.manifest.json").read_text())
    assert man["instance_seeds"] == [0, 1] and man["record_fields"] == RECORD_FIELDS
    assert man["config"]["methods"] == ["mean", "snf", "nemo"]


def test_resume_skips_completed_and_matches_fresh(tmp_path, monkeypatch):
    kw = dict(problems=["Easy"], n_instances=3, methods=["mean", "concat"],
              clusterers=["leiden"])
    fresh = tmp_path / "fresh.csv"
    run_experiment(small(output=str(fresh), **kw))
    lines = fresh.read_text().splitlines(keepends=True)
    partial = tmp_path / "partial.csv"
    # header, instance 0 complete, instance 1 half written and cut mid-line
    partial.write_text("".join(lines[:4]) + lines[4][:25])

    import mmsimnet.bench as bench
    calls = []
    real = bench._run_task

    def spy(cfg, problem, instance, fi, baseline):
        calls.append(instance)
        return real(cfg, problem, instance, fi, baseline)

    monkeypatch.setattr(bench, "_run_task", spy)
    recs = run_experiment(small(output=str(partial), **kw))
    assert calls == [1, 2]
    assert len(recs) == 6
    assert strip_wall_time(partial) == strip_wall_time(fresh)
    calls.clear()
    run_experiment(small(output=str(partial), **kw))
    assert calls == []


def test_errors_are_recorded_and_run_continues():
    # k larger than the entity count makes every graph construction fail
    recs = run_experiment(small(problems=["Easy"], methods=["mean", "nemo"], n_entities=20,
                                k_neighbors=25, clusterers=["leiden"]))
    assert len(recs) == 2 and all(r.error for r in recs)


def test_partial_runs_score_ynan_and_keep_explicit_policy():
    recs = run_experiment(small(problems=["Easy"], methods=["mean:ignore_nan", "snf"],
                                partial_mode="random", partial_fractions=[0.0, 0.3],
                                clusterers=["spectral"]))
    by = {(r.method, r.policy, r.fraction): r for r in recs}
    assert ("mean", "ignore_nan", 0.0) in by and ("mean", "ignore_nan", 0.3) in by
    assert ("snf", "none", 0.0) in by and ("snf", "impute_max", 0.3) in by
    assert math.isnan(by[("snf", "none", 0.0)].ami_ynan)
    assert np.isfinite(by[("snf", "impute_max", 0.3)].ami_ynan)
    assert np.isfinite(by[("snf", "impute_max", 0.3)].snf_iters)


def test_summarize_by_hand():
    recs = [ExperimentRecord("Easy", i, i, "mean", "none", "none", 0.0, "leiden",
                             ami_y=v) for i, v in enumerate(np.linspace(0.1, 0.9, 20))]
    table = list(csv.reader(io.StringIO(summarize(recs, ["method"]))))
    assert table[0] == ["method", "n", "mean_ami_y", "max_ami_y", "std_ami_y"]
    assert table[1][:2] == ["mean", "20"]
    assert float(table[1][2]) == pytest.approx(0.5)
    assert float(table[1][3]) == pytest.approx(0.9)
    const = [ExperimentRecord("Easy", i, i, "nemo", "none", "none", 0.0, "leiden", ami_y=0.7)
             for i in range(4)]
    row = list(csv.reader(io.StringIO(summarize(const, "method"))))[1]
    assert float(row[2]) == 0.7 and float(row[4]) == 0.0
    assert summarize([], "method").strip() == "method,n,mean_ami_y,max_ami_y,std_ami_y"


def test_summarize_problem_by_method_layout_and_order():
    recs = [ExperimentRecord(p, 0, 0, m, "none", "none", 0.0, "leiden", ami_y=v)
            for p, v in (("Easy", 0.9), ("2Rand", 0.2)) for m in ("mean", "snf")]
    rows = list(csv.reader(io.StringIO(summarize(recs, ["problem", "method"]))))
    assert len(rows) == 5
    base = [ExperimentRecord(p, 0, 0, "single:0", "none", "none", 0.0, "leiden", ami_y=v)
            for p, v in (("2Rand", 0.1), ("Easy", 0.8), ("1Rand", 0.5))]
    assert problem_order(base) == ["Easy", "1Rand", "2Rand"]


def test_read_records_roundtrip(tmp_path):
    out = tmp_path / "r.csv"
    recs = run_experiment(small(problems=["Easy"], methods=["extreme"], output=str(out)))
    back = read_records(out)
    assert [r.key() for r in back] == [r.key() for r in recs]
    assert back[0].ami_y == recs[0].ami_y


def test_config_validation_and_loading(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(n_instances=0)
    with pytest.raises(ValueError):
        ExperimentConfig(partial_mode="random", partial_fractions=[1.2])
    with pytest.raises(ValueError):
        ExperimentConfig(problems=["Nope"])
    with pytest.raises(ValueError):
        ExperimentConfig(methods=["snf:bogus"])
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"scale": "paper", "problems": ["Easy"], "n_instances": 3}))
    cfg = load_config(p, n_instances=2, output=None)
    assert cfg.n_entities == 2500 and cfg.n_instances == 2 and cfg.problems == ["Easy"]
    p.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(ValueError):
        load_config(p)
