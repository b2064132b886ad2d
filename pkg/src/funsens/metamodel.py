"""Sensitivity indices computed from a fitted joint metamodel.

The mean component drives Monte-Carlo pick-freeze estimation of the scalar
inputs' first- and second-order indices, rescaled by the fraction of the
output variance the mean explains.  The dispersion component gives the total
index of the functional input as mean(Y_d)/Var(Y) (alternatively 1 - Q2).
What Monte Carlo cannot reach is deduced structurally from the formulas:
interaction indices absent from the mean are exactly zero, covariates active
in the dispersion get interval bounds, and total indices follow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, EstimateWarning, FunsensError, NumericalError
from .estimators import (
    EstimatorRun,
    IndexReport,
    evaluate_block,
    index_name,
    sobol_first_order,
)
from .formula import Formula, Interaction, Smooth, TensorSmooth
from .joint import JointModel, fit_joint, predictivity_q2
from .models import ModelSpec
from .sampling import EPS, SampleBlock, sample_matrix, sample_process

DEFAULT_INDEX_N = 10_000
DEFAULT_FRESH_N = 100_000
DEFAULT_SD_REPLICATES = 100


def mean_predictor_model(joint: JointModel, model: ModelSpec) -> ModelSpec:
    """The mean component as an evaluable model over the scalar inputs."""
    names = list(model.scalar_names)
    missing = [v for v in joint.mean_formula.variables() if v not in names]
    if missing:
        raise ConfigError(
            f"mean formula uses {missing} which are not scalar inputs of {model.name!r}"
        )

    def _eval(x: np.ndarray, _eps) -> np.ndarray:
        data = {name: x[:, j] for j, name in enumerate(names)}
        return joint.predict_mean(data)

    return ModelSpec(
        scalar_inputs=model.scalar_inputs,
        evaluator=_eval,
        name=f"{model.name}_mean_component",
    )


def _scalar_pairs(names: Sequence[str]) -> List[tuple]:
    return [(a, b) for i, a in enumerate(names) for b in names[i + 1 :]]


def _sd_seeds(seed: int, replicates: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(0x5EED,))
    return ss.generate_state(replicates, dtype=np.uint64)


def indices_from_mean(
    joint: JointModel,
    model: ModelSpec,
    n: int = DEFAULT_INDEX_N,
    seed: int = 0,
    sd_replicates: int = DEFAULT_SD_REPLICATES,
    scheme: str = "simple_mc",
) -> List[IndexReport]:
    """S_i for every scalar input and S_ij for every pair, by pick-freeze MC
    on the mean predictor, rescaled to the full-output variance scale.

    The run's own variance estimate cancels: each index becomes
    D_s(mean) / Var(Y) with Var(Y) taken from the learning sample.  The sd is
    the spread over independently re-seeded MC runs (no refitting).
    """
    var_y = _learning_variance(joint)
    pred = mean_predictor_model(joint, model)
    targets = [(name,) for name in model.scalar_names]
    targets += _scalar_pairs(list(model.scalar_names))

    def _scaled(run: EstimatorRun) -> Dict[str, float]:
        return {e.name: e.value * run.variance / var_y for e in run.indices}

    # Structurally-null pairs sit at 0 and go slightly negative run after run;
    # the deduced rows carry the exact zeros, so the range warning is noise here.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EstimateWarning)
        base = sobol_first_order(pred, n, seed, targets=targets, scheme=scheme)
        point = _scaled(base)
        spread: Dict[str, List[float]] = {name: [] for name in point}
        for rep_seed in _sd_seeds(seed, sd_replicates):
            run = sobol_first_order(pred, n, int(rep_seed), targets=targets, scheme=scheme)
            for name, value in _scaled(run).items():
                spread[name].append(value)
    reports = []
    for est in base.indices:
        sd = float(np.std(spread[est.name], ddof=1)) if sd_replicates >= 2 else None
        reports.append(IndexReport(name=est.name, estimate=point[est.name], method="MC", sd=sd))
    return reports


def _learning_variance(joint: JointModel) -> float:
    y = joint.response
    var_y = float(np.var(y, ddof=1))
    if not np.isfinite(var_y) or var_y <= 0.0:
        raise NumericalError("learning sample has zero output variance")
    return var_y


def _fresh_scalar_data(model: ModelSpec, n: int, seed: int, scheme: str) -> Dict[str, np.ndarray]:
    x = sample_matrix(model, n, seed, block="fresh", scheme=scheme)
    return {name: x[:, j] for j, name in enumerate(model.scalar_names)}


def total_index_functional(
    joint: JointModel,
    model: ModelSpec,
    method: str = "dispersion_mean",
    n: int = DEFAULT_FRESH_N,
    seed: int = 0,
    scheme: str = "simple_mc",
    q2_seed: int = 0,
) -> IndexReport:
    """Total index of the functional input, named ST_eps.

    ``dispersion_mean``: mean predicted dispersion over a fresh input sample,
    divided by the learning-sample output variance.  ``one_minus_q2``: one
    minus the cross-validated predictivity of the mean component.
    """
    if method == "dispersion_mean":
        data = _fresh_scalar_data(model, n, seed, scheme)
        yd = joint.predict_dispersion(data)
        value = float(yd.mean()) / _learning_variance(joint)
        return IndexReport(name=index_name("ST", (EPS,)), estimate=value, method="MC")
    if method == "one_minus_q2":
        value = 1.0 - predictivity_q2(joint, "cross_validation", seed=q2_seed)
        return IndexReport(name=index_name("ST", (EPS,)), estimate=value, method="Q2")
    raise ConfigError(
        f"unknown method {method!r}; expected 'dispersion_mean' or 'one_minus_q2'"
    )


def _mean_interacts(formula: Formula, a: str, b: str) -> bool:
    for term in formula.terms:
        if isinstance(term, Interaction) and set(term.names) == {a, b}:
            return True
        if isinstance(term, TensorSmooth) and set(term.names) == {a, b}:
            return True
    return False


def _dispersion_active(formula: Formula) -> set:
    return set(formula.variables())


def _point(reports: Sequence[IndexReport], name: str) -> Optional[IndexReport]:
    for r in reports:
        if r.name == name and r.interval is None:
            return r
    return None


def deduce_bounds(
    joint: JointModel,
    reports: Sequence[IndexReport],
    model: ModelSpec,
) -> List[IndexReport]:
    """Index rows that follow from the formulas alone (method=Eq).

    Rules, per scalar input X_k and pair (X_i, X_j):
    - no interaction term joining X_i and X_j in the mean formula: S_ij = 0;
    - X_k in the dispersion formula: S_keps in (0, ST_eps], otherwise 0;
    - S_eps in [0, ST_eps];
    - totals: ST_k = S_k + sum of its known interactions, plus (0, ST_eps]
      when X_k is dispersion-active (interval), exact otherwise.

    Interval upper bounds use the dispersion-mean ST_eps for the *eps rows
    and the largest available ST_eps for the totals (the conservative bound).
    Interval rows carry estimate=nan: there is no point value to report.
    """
    st_eps_rows = [r for r in reports if r.name == index_name("ST", (EPS,))]
    if not st_eps_rows:
        raise ConfigError("deduce_bounds needs an ST_eps report (run total_index_functional)")
    st_eps_interaction = max(float(r.estimate) for r in st_eps_rows)
    mc_st = next((r for r in st_eps_rows if r.method == "MC"), st_eps_rows[0])
    st_eps_disp = float(mc_st.estimate)

    names = list(model.scalar_names)
    active = _dispersion_active(joint.disp_formula)
    out: List[IndexReport] = []
    for a, b in _scalar_pairs(names):
        if not _mean_interacts(joint.mean_formula, a, b):
            out.append(IndexReport(name=index_name("S", (a, b)), estimate=0.0, method="Eq"))
    for k in names:
        nm = index_name("S", (k, EPS))
        if k in active:
            out.append(
                IndexReport(name=nm, estimate=float("nan"), method="Eq", interval=(0.0, st_eps_disp))
            )
        else:
            out.append(IndexReport(name=nm, estimate=0.0, method="Eq"))
    if active:
        out.append(
            IndexReport(
                name=index_name("S", (EPS,)), estimate=float("nan"), method="Eq",
                interval=(0.0, st_eps_disp),
            )
        )
    else:
        # nothing explains the dispersion, so it is all attributed to the
        # process; wrong whenever heteroscedasticity merely went undetected
        out.append(
            IndexReport(name=index_name("S", (EPS,)), estimate=st_eps_disp, method="Eq")
        )
    for k in names:
        s_k = _point(reports, index_name("S", (k,)))
        if s_k is None:
            continue
        base = float(s_k.estimate)
        for other in names:
            if other == k:
                continue
            pair = tuple(sorted((k, other), key=names.index))
            # deduced exact zeros beat the noisy MC estimate of a null pair
            s_pair = _point(out + list(reports), index_name("S", pair))
            if s_pair is not None:
                base += float(s_pair.estimate)
        nm = index_name("ST", (k,))
        if k in active:
            out.append(
                IndexReport(
                    name=nm, estimate=float("nan"), method="Eq",
                    interval=(base, base + st_eps_interaction),
                )
            )
        else:
            out.append(IndexReport(name=nm, estimate=base, method="Eq"))
    return out


def deduction_caveats(joint: JointModel) -> List[str]:
    """Warnings that should accompany the deduced rows."""
    if not _dispersion_active(joint.disp_formula):
        return [
            "dispersion component is intercept-only: every S_keps is deduced 0 and "
            "S_eps = ST_eps; these conclusions are wrong if heteroscedasticity was "
            "present but not detected"
        ]
    return []


@dataclass
class MetamodelSAReport:
    """Full index table plus the variance decomposition audit."""

    indices: List[IndexReport]
    var_y: float
    var_ym: float
    mean_yd: float
    sum_check: float
    caveats: List[str] = field(default_factory=list)

    @property
    def variance_audit(self) -> Tuple[float, float, float]:
        return (self.var_y, self.var_ym, self.mean_yd)

    @property
    def audit_gap(self) -> float:
        return abs(self.var_y - (self.var_ym + self.mean_yd)) / self.var_y

    def by_name(self, name: str, method: Optional[str] = None) -> IndexReport:
        for r in self.indices:
            if r.name == name and (method is None or r.method == method):
                return r
        raise KeyError(name)


def compile_report(
    joint: JointModel,
    model: ModelSpec,
    n: int = DEFAULT_INDEX_N,
    fresh_n: int = DEFAULT_FRESH_N,
    seed: int = 0,
    sd_replicates: int = DEFAULT_SD_REPLICATES,
    scheme: str = "simple_mc",
) -> MetamodelSAReport:
    """Everything the joint model says about the indices, in one table:
    MC rows from the mean component, ST_eps both ways, deduced Eq rows,
    the variance audit and the first+second order + ST_eps sum check."""
    mc = indices_from_mean(
        joint, model, n=n, seed=seed, sd_replicates=sd_replicates, scheme=scheme
    )
    st_disp = total_index_functional(
        joint, model, "dispersion_mean", n=fresh_n, seed=seed, scheme=scheme
    )
    st_q2 = total_index_functional(joint, model, "one_minus_q2", q2_seed=seed)
    deduced = deduce_bounds(joint, list(mc) + [st_disp, st_q2], model)

    var_y = _learning_variance(joint)
    data = _fresh_scalar_data(model, fresh_n, seed, scheme)
    var_ym = float(np.var(joint.predict_mean(data), ddof=1))
    mean_yd = float(np.mean(joint.predict_dispersion(data)))
    sum_check = sum(r.estimate for r in mc) + st_disp.estimate
    return MetamodelSAReport(
        indices=list(mc) + [st_disp, st_q2] + deduced,
        var_y=var_y,
        var_ym=var_ym,
        mean_yd=mean_yd,
        sum_check=float(sum_check),
        caveats=deduction_caveats(joint),
    )


def report_table(report: MetamodelSAReport) -> List[dict]:
    """Flat rows (index, value, sd, interval_lo, interval_hi, method)."""
    rows = []
    for r in report.indices:
        lo, hi = (r.interval if r.interval is not None else (None, None))
        rows.append(
            {
                "index": r.name,
                "value": None if np.isnan(r.estimate) else r.estimate,
                "sd": r.sd,
                "interval_lo": lo,
                "interval_hi": hi,
                "method": r.method,
            }
        )
    return rows


@dataclass
class ReplicationStudy:
    """Per-index distribution of estimates over fresh learning samples."""

    engine: str
    n_learn: int
    replicates: int
    values: Dict[str, List[float]]
    failures: int
    failure_messages: List[str] = field(default_factory=list)

    def boxplot_rows(self) -> List[dict]:
        rows = []
        for name, vals in self.values.items():
            arr = np.asarray(vals, dtype=float)
            q1, med, q3 = np.percentile(arr, [25, 50, 75])
            iqr = q3 - q1
            in_lo = arr[arr >= q1 - 1.5 * iqr]
            in_hi = arr[arr <= q3 + 1.5 * iqr]
            rows.append(
                {
                    "index": name,
                    "q1": float(q1),
                    "median": float(med),
                    "q3": float(q3),
                    "lo_whisker": float(in_lo.min()) if in_lo.size else float(arr.min()),
                    "hi_whisker": float(in_hi.max()) if in_hi.size else float(arr.max()),
                    "engine": self.engine,
                    "n_learn": self.n_learn,
                }
            )
        return rows


def _learning_sample(model: ModelSpec, n: int, seed: int, block: str, scheme: str) -> Dict[str, np.ndarray]:
    x = sample_matrix(model, n, seed, block=block, scheme=scheme)
    eps = None
    if model.functional_input is not None:
        eps = sample_process(model.functional_input, n, seed, block=block)
    y = evaluate_block(model, SampleBlock(name=block, scalars=x, eps=eps))
    data = {name: x[:, j] for j, name in enumerate(model.scalar_names)}
    data["Y"] = y
    return data


def sa_replication_study(
    model: ModelSpec,
    mean_formula: str,
    disp_formula: str,
    engine: str,
    n_learn: int,
    replicates: int,
    seed: int,
    index_n: int = DEFAULT_INDEX_N,
    fresh_n: int = 20_000,
    scheme: str = "simple_mc",
    response: str = "Y",
) -> ReplicationStudy:
    """Refit the joint model on ``replicates`` fresh learning samples and
    collect the resulting indices; fit failures are counted, not fatal.

    Each replicate records the MC S_i / S_ij (single MC run, no sd
    replication) and the dispersion-mean ST_eps.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    values: Dict[str, List[float]] = {}
    failures = 0
    messages: List[str] = []
    for r in range(replicates):
        block = ("learn", r)
        try:
            data = _learning_sample(model, n_learn, seed, block, scheme)
            if response != "Y":
                data[response] = data.pop("Y")
            joint = fit_joint(mean_formula, disp_formula, data, engine=engine)
            reports = indices_from_mean(
                joint, model, n=index_n, seed=seed + r, sd_replicates=0, scheme=scheme
            )
            reports.append(
                total_index_functional(
                    joint, model, "dispersion_mean", n=fresh_n, seed=seed + r, scheme=scheme
                )
            )
        except FunsensError as exc:
            failures += 1
            messages.append(f"replicate {r}: {exc}")
            continue
        for rep in reports:
            values.setdefault(rep.name, []).append(float(rep.estimate))
    if not values:
        raise NumericalError(
            f"all {replicates} replicates failed; first failure: {messages[0]}"
        )
    return ReplicationStudy(
        engine=engine,
        n_learn=n_learn,
        replicates=replicates,
        values=values,
        failures=failures,
        failure_messages=messages,
    )
