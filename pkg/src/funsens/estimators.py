"""Pick-freeze Monte-Carlo estimation of first-order and total Sobol' indices.

Two sampling plans are provided: the classic one (blocks A and one substituted
block per target, first-order indices only, cost N*(k+1)) and the extended one
(extra independent block B, first-order and total indices, cost N*(k+2)).
Estimators are computed from stored evaluation vectors, so bootstrap
resampling and file-based (external model) workflows reuse the same code.

A functional input can participate in two ways: as a regular substitution
target (its realizations are frozen or redrawn like any column group), or via
a trigger variable ``xi`` that replaces the process with its nominal
trajectory for half of the rows and a fresh realization per block otherwise.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, EstimateWarning, NumericalError
from .models import Distribution, ModelSpec
from .sampling import (
    EPS,
    SampleBlock,
    build_design_pair,
    sample_process,
    substitute_columns,
)

TRIGGER = "xi"

DEFAULT_BOOTSTRAP = 100


def target_suffix(target: Sequence[str]) -> str:
    """Compact index suffix: X<k> contributes its number, other names verbatim."""
    parts = []
    for name in target:
        m = re.fullmatch(r"X(\d+)", name)
        parts.append(m.group(1) if m else name)
    return "".join(parts)


def index_name(prefix: str, target: Sequence[str]) -> str:
    """Display name, e.g. S1, ST2, S12, S1eps, S_eps, ST_xi."""
    suffix = target_suffix(target)
    sep = "_" if suffix[:1].isalpha() else ""
    return f"{prefix}{sep}{suffix}"


@dataclass(frozen=True)
class IndexEstimate:
    name: str
    value: float
    kind: str  # "first_order" or "total"
    target: tuple
    sd: Optional[float] = None


@dataclass(frozen=True)
class IndexReport:
    """A named index with either a point estimate (optionally an sd, MC only)
    or a deduced interval; ``method`` is one of MC, Eq, Q2."""

    name: str
    estimate: float
    method: str
    sd: Optional[float] = None
    interval: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in ("MC", "Eq", "Q2"):
            raise ConfigError(f"unknown index method {self.method!r}")
        if self.sd is not None and self.method != "MC":
            raise ConfigError(f"{self.name}: sd is only meaningful for MC estimates")
        if self.interval is not None:
            lo, hi = self.interval
            if not lo <= hi:
                raise ConfigError(f"{self.name}: empty interval ({lo}, {hi})")
            if self.sd is not None:
                raise ConfigError(f"{self.name}: an index carries an sd or an interval, not both")


@dataclass
class EstimatorRun:
    """Everything one estimation produced: indices, moments, raw evaluations."""

    method: str
    n: int
    seed: int
    targets: List[tuple]
    f0: float
    variance: float
    indices: List[IndexEstimate]
    evaluations: Dict[str, np.ndarray]
    n_evaluations: int

    def by_name(self, name: str) -> IndexEstimate:
        for est in self.indices:
            if est.name == name:
                return est
        raise KeyError(name)

    def value(self, name: str) -> float:
        return self.by_name(name).value

    def reports(self) -> List["IndexReport"]:
        return [
            IndexReport(name=e.name, estimate=e.value, method="MC", sd=e.sd)
            for e in self.indices
        ]


def _normalize_targets(model: ModelSpec, targets, extra_names=()) -> List[tuple]:
    valid = list(model.scalar_names) + list(extra_names)
    if model.functional_input is not None:
        valid.append(EPS)
    if targets is None:
        return [(name,) for name in valid]
    out = []
    for t in targets:
        group = (t,) if isinstance(t, str) else tuple(t)
        if not group:
            raise ConfigError("empty target group")
        for name in group:
            if name not in valid:
                raise ConfigError(f"unknown target input {name!r}; inputs are {valid}")
        if len(set(group)) != len(group):
            raise ConfigError(f"duplicate inputs in target group {group}")
        out.append(group)
    if len({target_suffix(g) for g in out}) != len(out):
        raise ConfigError("target groups must be distinct")
    return out


def evaluate_block(model: ModelSpec, block: SampleBlock, chunk_size: int = 32768) -> np.ndarray:
    out = np.empty(block.n)
    for lo in range(0, block.n, chunk_size):
        hi = min(block.n, lo + chunk_size)
        eps = None if block.eps is None else block.eps[lo:hi]
        out[lo:hi] = model.eval_batch(block.scalars[lo:hi], eps)
    return out


def _check_variance(variance: float) -> None:
    if not np.isfinite(variance) or variance <= 0.0:
        raise NumericalError(
            f"output variance estimate is {variance}; indices are undefined for a "
            "constant (or non-finite) output"
        )


def _indices_from_evaluations(
    evaluations: Dict[str, np.ndarray],
    targets: List[tuple],
    totals: bool,
    warn: bool = True,
):
    """Pure estimator core shared by the full runs and bootstrap replicates.

    Evaluations are centered by the mean output before the cross moments are
    formed (pooled over A and B when B exists).  Centering is equivalent in
    expectation to subtracting the squared mean afterwards but markedly less
    noisy for small indices.
    """
    y_a = evaluations["A"]
    y_b = evaluations.get("B")
    n = y_a.size
    if y_b is None:
        f0 = float(y_a.mean())
    else:
        f0 = float(0.5 * (y_a.mean() + y_b.mean()))
    ya = y_a - f0
    variance = float(ya @ ya / (n - 1))
    _check_variance(variance)
    yb = None if y_b is None else y_b - f0
    closed = {}
    for target in targets:
        yab = evaluations[f"AB_{target_suffix(target)}"] - f0
        closed[target] = float(ya @ yab / (n - 1)) / variance
    # Closed indices of groups are reduced to pure interaction indices by
    # subtracting every strict-subset estimate available in the same run
    # (subsets not estimated are treated as null).
    pure = {}
    indices = []
    for target in sorted(targets, key=len):
        value = closed[target]
        for sub, sub_value in pure.items():
            if set(sub) < set(target):
                value -= sub_value
        pure[target] = value
    for target in targets:
        kind = "first_order" if len(target) == 1 else "second_order"
        indices.append(IndexEstimate(index_name("S", target), pure[target], kind, target))
        if totals:
            yab = evaluations[f"AB_{target_suffix(target)}"] - f0
            st = 1.0 - float(yb @ yab / (n - 1)) / variance
            indices.append(IndexEstimate(index_name("ST", target), st, "total", target))
    if warn:
        for est in indices:
            if est.value < 0.0 or est.value > 1.0:
                warnings.warn(
                    f"{est.name} = {est.value:.4f} lies outside [0, 1]; Monte-Carlo "
                    "noise can do this for small or nearly-null indices",
                    EstimateWarning,
                    stacklevel=3,
                )
    return f0, variance, indices


def _attach_sd(run: EstimatorRun, n_boot: int, seed: int) -> None:
    if n_boot <= 0:
        return
    sds = bootstrap_sd(run, n_boot=n_boot, seed=seed)
    run.indices = [
        IndexEstimate(e.name, e.value, e.kind, e.target, sd=sds[e.name]) for e in run.indices
    ]


def bootstrap_sd(run: EstimatorRun, n_boot: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> Dict[str, float]:
    """Standard deviation of each index under paired row resampling.

    Rows are resampled with replacement using the same row set across every
    block, preserving the pick-freeze pairing.  No new model evaluations are
    made.
    """
    if n_boot < 2:
        raise ConfigError(f"bootstrap needs at least 2 replicates, got {n_boot}")
    n = run.n
    totals = any(e.kind == "total" for e in run.indices)
    g = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(0xB007,)))
    )
    values = {e.name: np.empty(n_boot) for e in run.indices}
    for b in range(n_boot):
        rows = g.integers(0, n, size=n)
        resampled = {name: y[rows] for name, y in run.evaluations.items()}
        try:
            _, _, indices = _indices_from_evaluations(resampled, run.targets, totals, warn=False)
        except NumericalError:
            for name in values:
                values[name][b] = np.nan
            continue
        for est in indices:
            values[est.name][b] = est.value
    return {name: float(np.nanstd(v, ddof=1)) for name, v in values.items()}


def _build_blocks(model: ModelSpec, n: int, seed: int, targets: List[tuple], scheme: str, with_b: bool):
    a, b = build_design_pair(model, n, seed, scheme=scheme)
    blocks = {"A": a}
    if with_b:
        blocks["B"] = b
    for target in targets:
        blocks[f"AB_{target_suffix(target)}"] = substitute_columns(
            b, a, target, model, name=f"AB_{target_suffix(target)}"
        )
    return blocks


def _run(
    model: ModelSpec,
    n: int,
    seed: int,
    targets,
    method: str,
    scheme: str,
    n_boot: int,
    chunk_size: int,
) -> EstimatorRun:
    targets = _normalize_targets(model, targets)
    totals = method == "saltelli"
    blocks = _build_blocks(model, n, seed, targets, scheme, with_b=totals)
    evaluations = {name: evaluate_block(model, blk, chunk_size) for name, blk in blocks.items()}
    f0, variance, indices = _indices_from_evaluations(evaluations, targets, totals)
    run = EstimatorRun(
        method=method,
        n=n,
        seed=seed,
        targets=targets,
        f0=f0,
        variance=variance,
        indices=indices,
        evaluations=evaluations,
        n_evaluations=sum(y.size for y in evaluations.values()),
    )
    _attach_sd(run, n_boot, seed)
    return run


def sobol_first_order(
    model: ModelSpec,
    n: int,
    seed: int,
    targets=None,
    scheme: str = "simple_mc",
    n_boot: int = 0,
    chunk_size: int = 32768,
) -> EstimatorRun:
    """First-order (closed) indices for each target group; cost N*(k+1)."""
    return _run(model, n, seed, targets, "sobol", scheme, n_boot, chunk_size)


def saltelli_first_and_total(
    model: ModelSpec,
    n: int,
    seed: int,
    targets=None,
    scheme: str = "simple_mc",
    n_boot: int = 0,
    chunk_size: int = 32768,
) -> EstimatorRun:
    """First-order and total indices per target group; cost N*(k+2)."""
    return _run(model, n, seed, targets, "saltelli", scheme, n_boot, chunk_size)


def _trigger_model(model: ModelSpec, seed: int, nominal=None) -> ModelSpec:
    """Wrap a functional-input model: xi < 0.5 selects the nominal trajectory,
    otherwise a realization drawn fresh for each evaluation context."""
    spec = model.functional_input
    if spec is None:
        raise ConfigError("the trigger method requires a model with a functional input")
    if TRIGGER in model.scalar_names:
        raise ConfigError(f"scalar input name {TRIGGER!r} collides with the trigger variable")
    if nominal is None:
        nominal = spec.mean_trajectory()
    else:
        nominal = np.asarray(nominal, dtype=float)
        if nominal.shape != (spec.length,):
            raise ConfigError(
                f"nominal trajectory must have {spec.length} steps, got {nominal.shape}"
            )
    counter = {"calls": 0}

    def _eval(x: np.ndarray, _traj) -> np.ndarray:
        # One fresh stream per evaluation call: realizations never repeat
        # across blocks, which is what detaches xi from the process itself.
        xi = x[:, -1]
        eps = sample_process(spec, x.shape[0], seed, block=("trigger", counter["calls"]))
        counter["calls"] += 1
        eps = np.where(xi[:, None] < 0.5, nominal[None, :], eps)
        return model.eval_batch(x[:, :-1], eps)

    inputs = model.scalar_inputs + ((TRIGGER, Distribution.uniform(0.0, 1.0)),)
    return ModelSpec(scalar_inputs=inputs, evaluator=_eval, name=f"{model.name}_trigger")


def trigger_estimate(
    model: ModelSpec,
    n: int,
    seed: int,
    targets=None,
    method: str = "saltelli",
    nominal=None,
    scheme: str = "simple_mc",
    n_boot: int = 0,
    chunk_size: int = 32768,
) -> EstimatorRun:
    """Sensitivity of scalars plus the 0/1 trigger standing in for the process.

    The trigger's indices quantify how much replacing the nominal trajectory
    (default: the per-step mean of the noise law) by a random realization
    matters; they are not comparable to the indices obtained by freezing the
    process realizations themselves.
    """
    wrapped = _trigger_model(model, seed, nominal)
    if method == "saltelli":
        run = saltelli_first_and_total(wrapped, n, seed, targets, scheme, 0, chunk_size)
    elif method == "sobol":
        run = sobol_first_order(wrapped, n, seed, targets, scheme, 0, chunk_size)
    else:
        raise ConfigError(f"unknown estimation method {method!r}")
    run.method = f"trigger_{method}"
    _attach_sd(run, n_boot, seed)
    return run


def report_rows(run: EstimatorRun) -> List[dict]:
    """Flat row dicts for CSV/JSON serialization of an estimation."""
    rows = []
    for est in run.indices:
        rows.append(
            {
                "index_name": est.name,
                "estimate": est.value,
                "sd": est.sd,
                "method": "MC",
                "N": run.n,
                "algo": run.method,
            }
        )
    return rows
