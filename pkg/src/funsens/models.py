"""Evaluable-model abstraction: scalar/functional input descriptions and benchmarks.

A model maps a vector of scalar inputs plus (optionally) one discretized
stochastic-process realization to a single real output.  Evaluators are
batch-oriented: they receive ``(n, p)`` scalar matrices and ``(n, length)``
process realizations and must return an ``(n,)`` output vector,
deterministically and without retained state (they may be called
concurrently).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataContractError


@dataclass(frozen=True)
class Distribution:
    """Marginal law of one scalar input: ``uniform(lo, hi)`` or ``normal(mean, sd)``."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind == "uniform":
            if not self.a < self.b:
                raise ConfigError(f"uniform law requires lo < hi, got [{self.a}, {self.b}]")
        elif self.kind == "normal":
            if not self.b > 0:
                raise ConfigError(f"normal law requires sd > 0, got sd={self.b}")
        else:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")

    @staticmethod
    def uniform(lo: float, hi: float) -> "Distribution":
        return Distribution("uniform", float(lo), float(hi))

    @staticmethod
    def normal(mean: float, sd: float) -> "Distribution":
        return Distribution("normal", float(mean), float(sd))

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.a


@dataclass(frozen=True)
class ProcessSpec:
    """Discretized stochastic functional input: i.i.d. ``step_law`` draws per step.

    ``standalone`` realizations are passed to the evaluator as-is;
    ``additive_relative`` realizations perturb a nominal trajectory pointwise,
    the evaluator receiving ``nominal * (1 + eps)``.
    """

    length: int
    step_law: Distribution
    mode: str = "standalone"
    nominal: Optional[tuple] = None

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError(f"process length must be >= 1, got {self.length}")
        if self.mode not in ("standalone", "additive_relative"):
            raise ConfigError(f"unknown process mode {self.mode!r}")
        if self.nominal is not None:
            object.__setattr__(self, "nominal", tuple(float(v) for v in self.nominal))
            if len(self.nominal) != self.length:
                raise ConfigError(
                    f"nominal trajectory has {len(self.nominal)} steps, process has {self.length}"
                )

    def realize(self, eps: np.ndarray) -> np.ndarray:
        """Map raw noise realizations to the trajectory the evaluator sees."""
        if self.mode == "standalone":
            return eps
        if self.nominal is None:
            raise ConfigError("additive_relative process requires a nominal trajectory")
        return np.asarray(self.nominal) * (1.0 + eps)

    def mean_trajectory(self) -> np.ndarray:
        """Per-step mean of the raw noise process (nominal value for the trigger method)."""
        return np.full(self.length, self.step_law.mean)


Evaluator = Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """A black-box model: named scalar inputs, optional functional input, evaluator.

    ``evaluator`` may be ``None`` for external models whose evaluations arrive
    as files; such models can be sampled but not evaluated in-process.
    """

    scalar_inputs: tuple
    functional_input: Optional[ProcessSpec] = None
    evaluator: Optional[Evaluator] = None
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "scalar_inputs", tuple(self.scalar_inputs))
        names = [n for n, _ in self.scalar_inputs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate scalar input names: {names}")

    @property
    def n_scalars(self) -> int:
        return len(self.scalar_inputs)

    @property
    def scalar_names(self) -> list:
        return [n for n, _ in self.scalar_inputs]

    @property
    def distributions(self) -> list:
        return [d for _, d in self.scalar_inputs]

    def eval_batch(self, x: np.ndarray, eps: Optional[np.ndarray]) -> np.ndarray:
        """Evaluate ``n`` rows at once; validates arity before any computation."""
        if self.evaluator is None:
            raise DataContractError(
                f"model {self.name!r} has no in-process evaluator; supply evaluations as a file"
            )
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_scalars:
            raise ConfigError(
                f"expected {self.n_scalars} scalar inputs ({', '.join(self.scalar_names)}), "
                f"got {x.shape[1]}"
            )
        if self.functional_input is None:
            if eps is not None:
                raise ConfigError(f"model {self.name!r} takes no functional input")
            traj = None
        else:
            if eps is None:
                raise ConfigError(f"model {self.name!r} requires a functional input realization")
            eps = np.atleast_2d(np.asarray(eps, dtype=float))
            if eps.shape != (x.shape[0], self.functional_input.length):
                raise ConfigError(
                    f"functional input must have shape ({x.shape[0]}, "
                    f"{self.functional_input.length}), got {eps.shape}"
                )
            traj = self.functional_input.realize(eps)
        y = np.asarray(self.evaluator(x, traj), dtype=float)
        return y.reshape(x.shape[0])


def evaluate(model: ModelSpec, x: Sequence[float], eps: Optional[Sequence[float]] = None) -> float:
    """Evaluate one input point; deterministic for a fixed argument tuple."""
    e = None if eps is None else np.asarray(eps, dtype=float)[None, :]
    return float(model.eval_batch(np.asarray(x, dtype=float)[None, :], e)[0])


def _wn_ishigami_eval(x: np.ndarray, eps: np.ndarray) -> np.ndarray:
    m = np.max(eps, axis=1)
    return np.sin(x[:, 0]) + 7.0 * np.sin(x[:, 1]) ** 2 + 0.1 * m**4 * np.sin(x[:, 0])


def builtin_wn_ishigami() -> ModelSpec:
    """Ishigami variant whose third input is the max of a 100-step white noise.

    The maximum is taken signed, exactly as the formula is written.
    """
    u = Distribution.uniform(-math.pi, math.pi)
    return ModelSpec(
        scalar_inputs=(("X1", u), ("X2", u)),
        functional_input=ProcessSpec(length=100, step_law=Distribution.normal(0.0, 1.0)),
        evaluator=_wn_ishigami_eval,
        name="wn_ishigami",
    )


def _ishigami_eval(x: np.ndarray, eps) -> np.ndarray:
    return np.sin(x[:, 0]) + 7.0 * np.sin(x[:, 1]) ** 2 + 0.1 * x[:, 2] ** 4 * np.sin(x[:, 0])


def builtin_ishigami() -> ModelSpec:
    """Classical three-input Ishigami function (scalar-only estimator oracle)."""
    u = Distribution.uniform(-math.pi, math.pi)
    return ModelSpec(
        scalar_inputs=(("X1", u), ("X2", u), ("X3", u)),
        evaluator=_ishigami_eval,
        name="ishigami",
    )


def builtin_linear(coefficients: Sequence[float], sds: Optional[Sequence[float]] = None) -> ModelSpec:
    """Additive Gaussian model ``Y = sum(beta_i X_i)`` with known analytic indices."""
    betas = np.asarray(coefficients, dtype=float)
    if sds is None:
        sds = np.ones_like(betas)
    inputs = tuple(
        (f"X{i + 1}", Distribution.normal(0.0, float(s))) for i, s in enumerate(sds)
    )

    def _eval(x: np.ndarray, eps) -> np.ndarray:
        return x @ betas

    return ModelSpec(scalar_inputs=inputs, evaluator=_eval, name="linear")


BUILTINS = {
    "wn_ishigami": builtin_wn_ishigami,
    "ishigami": builtin_ishigami,
}


def get_builtin(name: str) -> ModelSpec:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigError(
            f"unknown builtin model {name!r}; available: {sorted(BUILTINS)}"
        ) from None
    return factory()
