"""File-producing runs: sample designs, estimate from CSV, joint fits."""

import csv
import io
import json
import math
import os

import numpy as np
import pytest

from funsens import ConfigError, DataContractError, get_builtin
from funsens.pipeline import (
    run_estimate,
    run_fit_joint,
    run_replicate,
    run_sample,
    write_payload,
)
from funsens.runconfig import parse_config

WN_INPUTS = {
    "scalars": [
        {"name": "X1", "distribution": {"kind": "uniform", "a": -math.pi, "b": math.pi}},
        {"name": "X2", "distribution": {"kind": "uniform", "a": -math.pi, "b": math.pi}},
    ],
    "process": {"length": 100, "step_law": {"kind": "normal", "a": 0.0, "b": 1.0}},
}


def macro_cfg(**overrides):
    raw = {
        "model": {"builtin": "wn_ishigami"},
        "method": "macroparameter",
        "seed": 11,
        "n": 128,
        "bootstrap": 16,
    }
    raw.update(overrides)
    return parse_config(raw)


def parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def test_sample_macro_design_files():
    payload = run_sample(macro_cfg())
    files = payload["files"]
    assert set(files) == {
        "manifest.json",
        "design_A.csv",
        "design_B.csv",
        "design_AB_1.csv",
        "design_AB_2.csv",
        "design_AB_eps.csv",
    }
    manifest = payload["manifest"]
    assert manifest["schema_version"] == 1
    assert manifest["seed"] == 11
    assert manifest["scheme"] == "simple_mc"
    assert manifest["N"] == 128
    by_name = {b["name"]: b for b in manifest["blocks"]}
    assert [b["name"] for b in manifest["blocks"]] == ["A", "B", "AB_1", "AB_2", "AB_eps"]
    assert all(b["rows"] == 128 for b in manifest["blocks"])
    assert by_name["A"]["frozen_columns"] == []
    assert by_name["AB_1"]["frozen_columns"] == ["X1"]
    assert by_name["AB_eps"]["frozen_columns"] == ["eps"]
    header, rows = parse_csv(files["design_A.csv"])
    assert header == ["X1", "X2"] + [f"eps_{i}" for i in range(100)]
    assert len(rows) == 128
    # the manifest JSON on disk mirrors the payload manifest
    assert json.loads(files["manifest.json"]) == manifest


def test_sample_sobol_drops_b_block():
    payload = run_sample(macro_cfg(algo="sobol"))
    assert "design_B.csv" not in payload["files"]
    assert [b["name"] for b in payload["manifest"]["blocks"]] == ["A", "AB_1", "AB_2", "AB_eps"]


def test_sample_rerun_is_byte_identical():
    first = run_sample(macro_cfg())
    second = run_sample(macro_cfg())
    assert first["files"] == second["files"]


def test_sample_trigger_resolves_process():
    cfg = macro_cfg(method="trigger", n=64)
    payload = run_sample(cfg)
    header, rows = parse_csv(payload["files"]["design_A.csv"])
    assert header[:3] == ["X1", "X2", "xi"]
    xi = np.array([float(r[2]) for r in rows])
    eps = np.array([[float(v) for v in r[3:]] for r in rows])
    # nominal trajectory (all zeros here) wherever the trigger is off
    off = xi < 0.5
    assert off.any() and (~off).any()
    assert np.all(eps[off] == 0.0)
    assert np.all(np.any(eps[~off] != 0.0, axis=1))


def test_sample_learning_design():
    cfg = parse_config(
        {
            "model": {"builtin": "wn_ishigami"},
            "method": "joint_gam",
            "seed": 3,
            "formulas": {"mean": "Y ~ X1 + s(X1) + s(X2)", "dispersion": "~ s(X1)"},
            "n_learn": 200,
        }
    )
    payload = run_sample(cfg)
    assert set(payload["files"]) == {"manifest.json", "design_L.csv"}
    assert payload["manifest"]["N"] == 200
    header, rows = parse_csv(payload["files"]["design_L.csv"])
    assert len(rows) == 200


def test_estimate_in_process():
    payload = run_estimate(macro_cfg(n=512))
    assert set(payload["files"]) == {"indices.csv", "evaluations.csv"}
    summary = payload["summary"]
    assert summary["method"] == "saltelli"
    assert summary["n_evaluations"] == 512 * 5
    names = set(summary["indices"])
    assert {"S1", "S2", "S_eps", "ST1", "ST2", "ST_eps"} <= names
    header, rows = parse_csv(payload["files"]["indices.csv"])
    assert header == ["index_name", "estimate", "sd", "method", "N", "algo"]
    assert len(rows) == len(summary["indices"])
    header, rows = parse_csv(payload["files"]["evaluations.csv"])
    assert header == ["block", "row", "y"]
    assert len(rows) == 512 * 5


def test_estimate_requires_estimation_method():
    cfg = parse_config(
        {
            "model": {"builtin": "wn_ishigami"},
            "method": "joint_glm",
            "seed": 1,
            "formulas": {"mean": "Y ~ X1", "dispersion": "~ 1"},
            "n_learn": 100,
        }
    )
    with pytest.raises(ConfigError, match="estimate expects"):
        run_estimate(cfg)


def external_cfg(tmp_path, **overrides):
    raw = {
        "model": {"inputs": WN_INPUTS},
        "method": "macroparameter",
        "seed": 11,
        "n": 128,
        "bootstrap": 16,
        "evaluations_csv": str(tmp_path / "evaluations.csv"),
    }
    raw.update(overrides)
    return parse_config(raw)


def evaluate_designs(tmp_path, payload):
    """Play the external simulator: read designs, apply the builtin evaluator."""
    model = get_builtin("wn_ishigami")
    lines = ["block,row,y"]
    for block in payload["manifest"]["blocks"]:
        name = block["name"]
        header, rows = parse_csv(payload["files"][f"design_{name}.csv"])
        x = np.array([[float(v) for v in r[:2]] for r in rows])
        eps = np.array([[float(v) for v in r[2:]] for r in rows])
        y = model.evaluator(x, eps)
        lines += [f"{name},{i},{v!r}" for i, v in enumerate(map(float, y))]
    (tmp_path / "evaluations.csv").write_text("\n".join(lines) + "\n", encoding="utf8")


def test_external_estimation_matches_in_process(tmp_path):
    design = run_sample(external_cfg(tmp_path))
    evaluate_designs(tmp_path, design)
    external = run_estimate(external_cfg(tmp_path))
    internal = run_estimate(macro_cfg())
    assert external["summary"]["indices"] == pytest.approx(internal["summary"]["indices"], abs=1e-12)
    assert external["files"]["indices.csv"] == internal["files"]["indices.csv"]


def test_external_estimation_requires_evaluations(tmp_path):
    cfg = external_cfg(tmp_path)
    cfg.evaluations_csv = None
    with pytest.raises(ConfigError, match="evaluations_csv"):
        run_estimate(cfg)


def test_external_estimation_rejects_shuffled_rows(tmp_path):
    design = run_sample(external_cfg(tmp_path))
    evaluate_designs(tmp_path, design)
    path = tmp_path / "evaluations.csv"
    lines = path.read_text(encoding="utf8").splitlines()
    lines[1], lines[2] = lines[2], lines[1]
    path.write_text("\n".join(lines) + "\n", encoding="utf8")
    with pytest.raises(DataContractError, match="out of order"):
        run_estimate(external_cfg(tmp_path))


def test_external_estimation_rejects_extra_rows(tmp_path):
    design = run_sample(external_cfg(tmp_path))
    evaluate_designs(tmp_path, design)
    path = tmp_path / "evaluations.csv"
    with open(path, "a", encoding="utf8") as fh:
        fh.write("AB_eps,128,0.0\n")
    with pytest.raises(DataContractError, match="extra rows"):
        run_estimate(external_cfg(tmp_path))


def test_external_estimation_rejects_short_file(tmp_path):
    design = run_sample(external_cfg(tmp_path))
    evaluate_designs(tmp_path, design)
    path = tmp_path / "evaluations.csv"
    lines = path.read_text(encoding="utf8").splitlines()
    path.write_text("\n".join(lines[:-10]) + "\n", encoding="utf8")
    with pytest.raises(DataContractError, match="end early|out of order"):
        run_estimate(external_cfg(tmp_path))


def test_sibling_manifest_cross_check(tmp_path):
    design = run_sample(external_cfg(tmp_path))
    evaluate_designs(tmp_path, design)
    stale = dict(design["manifest"], seed=999)
    (tmp_path / "manifest.json").write_text(json.dumps(stale), encoding="utf8")
    with pytest.raises(DataContractError, match="manifest mismatch"):
        run_estimate(external_cfg(tmp_path))


def test_missing_evaluation_columns(tmp_path):
    (tmp_path / "evaluations.csv").write_text("a,b\n1,2\n", encoding="utf8")
    with pytest.raises(DataContractError, match="block,row,y"):
        run_estimate(external_cfg(tmp_path))


def joint_cfg(**overrides):
    raw = {
        "model": {"builtin": "wn_ishigami"},
        "method": "joint_glm",
        "seed": 42,
        "formulas": {
            "mean": "Y ~ X1 + I(X2^2) + I(X1^3) + I(X2^4)",
            "dispersion": "~ 1",
        },
        "n_learn": 400,
        "index_n": 2048,
        "fresh_n": 4096,
        "sd_replicates": 0,
    }
    raw.update(overrides)
    return parse_config(raw)


def test_fit_joint_payload():
    payload = run_fit_joint(joint_cfg())
    assert set(payload["files"]) == {
        "summary_mean.csv",
        "summary_dispersion.csv",
        "indices.csv",
        "fit.json",
        "residuals_vs_fitted.csv",
        "residual_smoother.csv",
        "observed_vs_predicted.csv",
        "qq.csv",
    }
    summary = payload["summary"]
    assert summary["engine"] == "glm"
    assert summary["converged"] is True
    assert summary["n_learn"] == 400
    assert 0.5 <= summary["q2"] <= 1.0
    assert summary["variance_audit"]["gap"] <= 0.2
    assert json.loads(payload["files"]["fit.json"]) == summary
    header, rows = parse_csv(payload["files"]["indices.csv"])
    assert header == ["index", "value", "sd", "interval_lo", "interval_hi", "method"]
    names = {r[0] for r in rows}
    assert {"S1", "S2", "S12", "ST_eps", "S_eps", "ST1", "ST2"} <= names
    header, rows = parse_csv(payload["files"]["summary_mean.csv"])
    assert header[:2] == ["section", "term"]
    assert len(rows) == 5  # intercept + four parametric terms


def test_fit_joint_gam_summary_has_smooth_rows():
    # seed 43: the seed-42 n=300 sample alternates past the 30-cycle cap
    cfg = joint_cfg(
        method="joint_gam",
        formulas={"mean": "Y ~ X1 + s(X1) + s(X2)", "dispersion": "~ s(X1)"},
        seed=43,
        n_learn=300,
        index_n=1024,
        fresh_n=2048,
    )
    payload = run_fit_joint(cfg)
    summary = payload["summary"]
    assert "mean_edf" in summary and "mean_lambdas" in summary
    assert set(summary["mean_edf"]) == {"s(X1)", "s(X2)"}
    header, rows = parse_csv(payload["files"]["summary_mean.csv"])
    sections = {r[0] for r in rows}
    assert sections == {"parametric", "smooth"}


def test_fit_joint_response_fills_bare_formula(tmp_path):
    rng = np.random.default_rng(5)
    x1 = rng.uniform(-1, 1, 200)
    out = 1.0 + 2.0 * x1 + 0.3 * rng.normal(size=200)
    lines = ["X1,output"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(x1, out)]
    path = tmp_path / "learn.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf8")
    cfg = parse_config(
        {
            "model": {"inputs": {"scalars": WN_INPUTS["scalars"][:1]}},
            "method": "joint_glm",
            "seed": 1,
            "formulas": {"mean": "~ X1", "dispersion": "~ 1"},
            "learning_csv": str(path),
            "response": "output",
            "index_n": 512,
            "fresh_n": 512,
            "sd_replicates": 0,
        }
    )
    payload = run_fit_joint(cfg)
    assert payload["summary"]["converged"] is True


def test_fit_joint_learning_csv_needs_response(tmp_path):
    path = tmp_path / "learn.csv"
    path.write_text("X1,Z\n0.1,1.0\n0.2,2.0\n", encoding="utf8")
    cfg = joint_cfg(
        model={"inputs": {"scalars": WN_INPUTS["scalars"][:1]}},
        learning_csv=str(path),
    )
    cfg.n_learn = None
    with pytest.raises(DataContractError, match="no response column"):
        run_fit_joint(cfg)


def test_fit_joint_external_needs_learning_csv():
    cfg = joint_cfg(model={"inputs": WN_INPUTS})
    with pytest.raises(ConfigError, match="learning_csv"):
        run_fit_joint(cfg)


def test_replicate_payload():
    cfg = joint_cfg(replicates=3, n_learn=250, index_n=1024)
    payload = run_replicate(cfg)
    assert set(payload["files"]) == {"boxplot.csv", "replicate_values.csv"}
    summary = payload["summary"]
    assert summary["replicates"] == 3
    assert summary["failures"] == 0
    assert set(summary["medians"]) == {"S1", "S2", "S12", "ST_eps"}
    header, rows = parse_csv(payload["files"]["replicate_values.csv"])
    assert header == ["index", "replicate", "value"]
    assert len(rows) == 4 * 3
    header, rows = parse_csv(payload["files"]["boxplot.csv"])
    assert "median" in header


def test_replicate_validation():
    with pytest.raises(ConfigError, match="requires 'replicates'"):
        run_replicate(joint_cfg())
    cfg = joint_cfg(model={"inputs": WN_INPUTS}, learning_csv="x.csv", replicates=2)
    with pytest.raises(ConfigError, match="n_learn|builtin"):
        run_replicate(cfg)
    with pytest.raises(ConfigError, match="replicate expects"):
        run_replicate(macro_cfg())


def test_write_payload(tmp_path):
    payload = {"files": {"b.csv": "x,y\n1,2\n", "a.json": "{}\n"}}
    out = tmp_path / "nested" / "dir"
    written = write_payload(payload, str(out))
    assert [os.path.basename(p) for p in written] == ["a.json", "b.csv"]
    assert (out / "b.csv").read_text(encoding="utf8") == "x,y\n1,2\n"
