"""Config-driven runs producing file payloads.

Every operation takes a validated :class:`~funsens.runconfig.RunConfig` and
returns a payload dict ``{"files": {name: text}, "summary": {...}}`` (plus a
manifest for sampling).  Writing the files to disk is the caller's job, so
the same functions back both the CLI and the HTTP service.

All CSV text uses comma separators, dot decimals, a header row and UTF-8;
floats are written with ``repr`` so values round-trip exactly and reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataContractError
from .estimators import (
    EstimatorRun,
    IndexEstimate,
    _build_blocks,
    _indices_from_evaluations,
    _normalize_targets,
    _trigger_model,
    bootstrap_sd,
    evaluate_block,
    report_rows,
    saltelli_first_and_total,
    sobol_first_order,
    target_suffix,
    trigger_estimate,
)
from .gam import GamFit, summary_rows
from .glm import FittedComponent, coefficient_tests
from .joint import diagnostics_export, fit_joint, predictivity_q2
from .metamodel import compile_report, report_table, sa_replication_study
from .models import ModelSpec
from .runconfig import SCHEMA_VERSION, RunConfig
from .sampling import SampleBlock, sample_process


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if np.isnan(v) else repr(v)
    return str(value)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _dict_rows_csv(rows: List[dict]) -> str:
    if not rows:
        return ""
    header = list(rows[0].keys())
    return _csv_text(header, [[r.get(k) for k in header] for r in rows])


def _eps_columns(length: int) -> List[str]:
    return [f"eps_{i}" for i in range(length)]


def _block_csv(block: SampleBlock, scalar_names: Sequence[str]) -> str:
    header = list(scalar_names)
    columns = [block.scalars[:, j] for j in range(block.scalars.shape[1])]
    if block.eps is not None:
        header += _eps_columns(block.eps.shape[1])
        columns += [block.eps[:, j] for j in range(block.eps.shape[1])]
    rows = zip(*columns)
    return _csv_text(header, rows)


def _design_blocks(config: RunConfig, model: ModelSpec):
    """The named evaluation blocks for the configured estimation, in manifest
    order, plus the scalar column names of the design."""
    if config.method == "trigger":
        design_model = _trigger_model(model, config.seed)
    else:
        design_model = model
    targets = _normalize_targets(design_model, config.normalized_targets())
    with_b = config.algo == "saltelli"
    blocks = _build_blocks(design_model, config.n, config.seed, targets, config.scheme, with_b)
    ordered = ["A"] + (["B"] if with_b else []) + [
        f"AB_{target_suffix(t)}" for t in targets
    ]
    if config.method == "trigger":
        # resolve the trigger for export: rows with xi >= 0.5 take that block's
        # own fresh realizations, the rest the nominal trajectory
        spec = model.functional_input
        nominal = spec.mean_trajectory()
        resolved = {}
        for name in ordered:
            blk = blocks[name]
            xi = blk.scalars[:, -1]
            eps = sample_process(spec, blk.n, config.seed, block=("trigger_design", name))
            eps = np.where(xi[:, None] < 0.5, nominal[None, :], eps)
            resolved[name] = SampleBlock(
                name=blk.name, scalars=blk.scalars, eps=eps, frozen_columns=blk.frozen_columns
            )
        blocks = resolved
    return [blocks[name] for name in ordered], design_model.scalar_names, targets


def build_manifest(config: RunConfig, blocks: Sequence[SampleBlock]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "scheme": config.scheme,
        "N": config.n,
        "blocks": [
            {
                "name": b.name,
                "rows": b.n,
                "frozen_columns": list(b.frozen_columns),
            }
            for b in blocks
        ],
    }


def _manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2) + "\n"


def run_sample(config: RunConfig) -> dict:
    """Design CSVs plus the manifest external simulators evaluate against."""
    model = config.model.build()
    if config.method in ("macroparameter", "trigger"):
        blocks, scalar_names, _ = _design_blocks(config, model)
    else:
        if config.n_learn is None:
            raise ConfigError("sampling a learning design requires 'n_learn'")
        x = _learning_block(config, model)
        blocks, scalar_names = [x], model.scalar_names
    files = {f"design_{b.name}.csv": _block_csv(b, scalar_names) for b in blocks}
    manifest = build_manifest(config, blocks)
    if config.method in ("joint_glm", "joint_gam"):
        manifest["N"] = config.n_learn
    files["manifest.json"] = _manifest_json(manifest)
    return {
        "manifest": manifest,
        "files": files,
        "summary": {
            "blocks": [b.name for b in blocks],
            "rows_total": int(sum(b.n for b in blocks)),
        },
    }


def _learning_block(config: RunConfig, model: ModelSpec) -> SampleBlock:
    from .sampling import sample_matrix

    x = sample_matrix(model, config.n_learn, config.seed, block="L", scheme=config.scheme)
    eps = None
    if model.functional_input is not None:
        eps = sample_process(model.functional_input, config.n_learn, config.seed, block="L")
    return SampleBlock(name="L", scalars=x, eps=eps)


def _read_csv(path: str) -> Dict[str, np.ndarray]:
    try:
        with open(path, "r", encoding="utf8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataContractError(f"{path}: empty CSV")
            rows = list(reader)
    except OSError as exc:
        raise DataContractError(f"cannot read {path!r}: {exc}") from None
    out = {}
    for j, name in enumerate(header):
        try:
            out[name] = np.array([float(r[j]) for r in rows]) if name != "block" else np.array(
                [r[j] for r in rows]
            )
        except (ValueError, IndexError) as exc:
            raise DataContractError(f"{path}: bad value in column {name!r}: {exc}") from None
    return out


def _load_evaluations(config: RunConfig, blocks: Sequence[SampleBlock]) -> Dict[str, np.ndarray]:
    """Evaluations CSV (block,row,y) checked strictly against the design."""
    path = config.evaluations_csv
    table = _read_csv(path)
    for col in ("block", "row", "y"):
        if col not in table:
            raise DataContractError(
                f"{path}: evaluations CSV needs columns block,row,y; found {list(table)}"
            )
    sibling = os.path.join(os.path.dirname(path) or ".", "manifest.json")
    if os.path.exists(sibling):
        with open(sibling, "r", encoding="utf8") as fh:
            recorded = json.load(fh)
        expected = build_manifest(config, blocks)
        for key in ("seed", "scheme", "N"):
            if recorded.get(key) != expected[key]:
                raise DataContractError(
                    f"manifest mismatch: {sibling} has {key}={recorded.get(key)!r}, "
                    f"config implies {expected[key]!r}"
                )
    names = table["block"]
    rows = table["row"].astype(int)
    y = table["y"]
    cursor = 0
    out = {}
    for blk in blocks:
        end = cursor + blk.n
        if end > names.size:
            raise DataContractError(
                f"evaluations end early: block {blk.name!r} expects rows 0..{blk.n - 1}, "
                f"file has {names.size - cursor} rows left of {names.size}"
            )
        got_names = set(names[cursor:end])
        got_rows = rows[cursor:end]
        if got_names != {blk.name} or not np.array_equal(got_rows, np.arange(blk.n)):
            raise DataContractError(
                f"evaluations out of order: expected block {blk.name!r} rows 0..{blk.n - 1} "
                f"at lines {cursor + 2}..{end + 1}"
            )
        out[blk.name] = y[cursor:end]
        cursor = end
    if cursor != names.size:
        raise DataContractError(
            f"evaluations CSV has {names.size - cursor} extra rows beyond the "
            f"{len(blocks)} design blocks"
        )
    return out


def _evaluations_csv(run: EstimatorRun, block_order: Sequence[str]) -> str:
    rows = []
    for name in block_order:
        y = run.evaluations[name]
        for i, v in enumerate(y):
            rows.append((name, i, v))
    return _csv_text(["block", "row", "y"], rows)


def run_estimate(config: RunConfig) -> dict:
    """Index estimation: in-process for builtins, from CSV for external models."""
    if config.method not in ("macroparameter", "trigger"):
        raise ConfigError(f"estimate expects method macroparameter or trigger, got {config.method!r}")
    model = config.model.build()
    external = model.evaluator is None
    if external or config.evaluations_csv:
        blocks, _, targets = _design_blocks(config, model)
        if not config.evaluations_csv:
            raise ConfigError(
                "external model estimation requires 'evaluations_csv' "
                "(run the sample command, evaluate, then estimate)"
            )
        evaluations = _load_evaluations(config, blocks)
        totals = config.algo == "saltelli"
        f0, variance, indices = _indices_from_evaluations(evaluations, targets, totals)
        run = EstimatorRun(
            method=config.algo if config.method == "macroparameter" else f"trigger_{config.algo}",
            n=config.n,
            seed=config.seed,
            targets=targets,
            f0=f0,
            variance=variance,
            indices=indices,
            evaluations=evaluations,
            n_evaluations=sum(y.size for y in evaluations.values()),
        )
        if config.bootstrap:
            sds = bootstrap_sd(run, n_boot=config.bootstrap, seed=config.seed)
            run.indices = [
                IndexEstimate(e.name, e.value, e.kind, e.target, sd=sds[e.name])
                for e in run.indices
            ]
    elif config.method == "macroparameter":
        fn = saltelli_first_and_total if config.algo == "saltelli" else sobol_first_order
        run = fn(
            model, config.n, config.seed,
            targets=config.normalized_targets(),
            scheme=config.scheme, n_boot=config.bootstrap,
        )
    else:
        run = trigger_estimate(
            model, config.n, config.seed,
            targets=config.normalized_targets(),
            method=config.algo, scheme=config.scheme, n_boot=config.bootstrap,
        )
    block_order = ["A"] + (["B"] if "B" in run.evaluations else []) + [
        f"AB_{target_suffix(t)}" for t in run.targets
    ]
    files = {
        "indices.csv": _dict_rows_csv(report_rows(run)),
        "evaluations.csv": _evaluations_csv(run, block_order),
    }
    return {
        "manifest": None,
        "files": files,
        "summary": {
            "method": run.method,
            "n_evaluations": run.n_evaluations,
            "f0": run.f0,
            "variance": run.variance,
            "indices": {e.name: e.value for e in run.indices},
        },
    }


def _with_response(text: str, response: str) -> str:
    """Allow response-less mean formulas in configs; the response field fills it."""
    t = text.strip()
    return f"{response} {t}" if t.startswith("~") else t


def _component_summary(fit) -> List[dict]:
    if isinstance(fit, FittedComponent):
        return [dict(section="parametric", **row) for row in coefficient_tests(fit)]
    rows = summary_rows(fit)
    out = [dict(section="parametric", **row) for row in rows["parametric"]]
    out += [dict(section="smooth", **row) for row in rows["smooth"]]
    return out


def _summary_csv(fit) -> str:
    rows = _component_summary(fit)
    header = ["section", "term", "estimate", "std_error", "t_value", "p_value", "edf", "rank", "f_value"]
    return _csv_text(header, [[r.get(k) for k in header] for r in rows])


def _learning_data(config: RunConfig, model: ModelSpec) -> Dict[str, np.ndarray]:
    if config.learning_csv:
        data = _read_csv(config.learning_csv)
        if config.response not in data:
            raise DataContractError(
                f"{config.learning_csv}: no response column {config.response!r}"
            )
        return data
    if model.evaluator is None:
        raise ConfigError("an external model needs 'learning_csv' with evaluated outputs")
    blk = _learning_block(config, model)
    y = evaluate_block(model, blk)
    data = {name: blk.scalars[:, j] for j, name in enumerate(model.scalar_names)}
    data[config.response] = y
    return data


def run_fit_joint(config: RunConfig) -> dict:
    """Joint fit, component summaries, diagnostics and the full index table."""
    if config.method not in ("joint_glm", "joint_gam"):
        raise ConfigError(f"fit-joint expects method joint_glm or joint_gam, got {config.method!r}")
    model = config.model.build()
    data = _learning_data(config, model)
    mean_formula = _with_response(config.formulas.mean, config.response)
    joint = fit_joint(mean_formula, config.formulas.dispersion, data, engine=config.engine)
    q2 = predictivity_q2(joint, config.q2_method, seed=config.seed)
    report = compile_report(
        joint, model,
        n=config.index_n, fresh_n=config.fresh_n, seed=config.seed,
        sd_replicates=config.sd_replicates, scheme=config.scheme,
    )
    diag = diagnostics_export(joint)
    files = {
        "summary_mean.csv": _summary_csv(joint.mean),
        "summary_dispersion.csv": _summary_csv(joint.dispersion),
        "indices.csv": _dict_rows_csv(report_table(report)),
    }
    for name, table in diag.items():
        header = list(table.keys())
        files[f"{name}.csv"] = _csv_text(header, zip(*[table[k] for k in header]))
    summary = {
        "engine": joint.engine,
        "converged": joint.converged,
        "monotone": joint.monotone,
        "cycles": len(joint.eql_trace),
        "eql_trace": [float(v) for v in joint.eql_trace],
        "mean_d_expl": float(joint.mean.d_expl),
        "dispersion_d_expl": float(joint.dispersion.d_expl),
        "q2": float(q2),
        "variance_audit": {
            "var_y": report.var_y,
            "var_ym": report.var_ym,
            "mean_yd": report.mean_yd,
            "gap": report.audit_gap,
        },
        "sum_check": report.sum_check,
        "caveats": report.caveats,
        "n_learn": int(joint.response.size),
    }
    if isinstance(joint.mean, GamFit):
        summary["mean_edf"] = {k: float(v) for k, v in joint.mean.edf.items()}
        summary["mean_lambdas"] = [float(v) for v in joint.mean.lambdas]
    if isinstance(joint.dispersion, GamFit):
        summary["dispersion_edf"] = {k: float(v) for k, v in joint.dispersion.edf.items()}
    files["fit.json"] = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    return {"manifest": None, "files": files, "summary": summary}


def run_replicate(config: RunConfig) -> dict:
    """Refit-on-fresh-samples study; builtin models only."""
    if config.method not in ("joint_glm", "joint_gam"):
        raise ConfigError(
            f"replicate expects method joint_glm or joint_gam, got {config.method!r}"
        )
    if config.replicates is None:
        raise ConfigError("replicate requires 'replicates'")
    if config.n_learn is None:
        raise ConfigError("replicate requires 'n_learn'")
    model = config.model.build()
    if model.evaluator is None:
        raise ConfigError("the replication study needs a builtin (in-process) model")
    mean_formula = _with_response(config.formulas.mean, config.response)
    study = sa_replication_study(
        model, mean_formula, config.formulas.dispersion,
        engine=config.engine, n_learn=config.n_learn,
        replicates=config.replicates, seed=config.seed,
        index_n=config.index_n, scheme=config.scheme, response=config.response,
    )
    value_rows = []
    for name, vals in study.values.items():
        for r, v in enumerate(vals):
            value_rows.append({"index": name, "replicate": r, "value": v})
    files = {
        "boxplot.csv": _dict_rows_csv(study.boxplot_rows()),
        "replicate_values.csv": _dict_rows_csv(value_rows),
    }
    summary = {
        "engine": study.engine,
        "n_learn": study.n_learn,
        "replicates": study.replicates,
        "failures": study.failures,
        "failure_messages": study.failure_messages,
        "medians": {
            name: float(np.median(vals)) for name, vals in study.values.items()
        },
    }
    return {"manifest": None, "files": files, "summary": summary}


RUNNERS = {
    "sample": run_sample,
    "estimate": run_estimate,
    "fit-joint": run_fit_joint,
    "replicate": run_replicate,
}


def write_payload(payload: dict, out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, text in sorted(payload["files"].items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf8", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written
