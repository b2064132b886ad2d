"""Model abstraction: builtin benchmarks, evaluation contract, input laws."""

import math

import numpy as np
import pytest

from funsens import (
    ConfigError,
    DataContractError,
    Distribution,
    ModelSpec,
    ProcessSpec,
    evaluate,
    get_builtin,
    sample_matrix,
    sample_process,
)
from funsens.models import builtin_linear

# frozen from tests/oracles/wn_ishigami_variance.py (4e6 draws; halves 29.5937/29.4238)
VAR_Y_ORACLE = 29.5087


def test_wn_ishigami_shape(wn_model):
    assert wn_model.n_scalars == 2
    assert wn_model.scalar_names == ["X1", "X2"]
    assert wn_model.functional_input.length == 100
    for dist in wn_model.distributions:
        assert dist.kind == "uniform"
        assert dist.a == pytest.approx(-math.pi)
        assert dist.b == pytest.approx(math.pi)


def test_wn_ishigami_point_values(wn_model):
    zeros = np.zeros(100)
    assert evaluate(wn_model, (0.0, 0.0), zeros) == pytest.approx(0.0, abs=1e-12)
    assert evaluate(wn_model, (math.pi / 2, 0.0), zeros) == pytest.approx(1.0)
    eps = np.full(100, -2.0)
    eps[17] = 1.0  # max is exactly 1
    assert evaluate(wn_model, (math.pi / 2, math.pi / 2), eps) == pytest.approx(8.1)
    # sin(X1)=0 kills the first and third terms regardless of eps
    rng = np.random.default_rng(0)
    for _ in range(3):
        assert evaluate(wn_model, (0.0, math.pi / 2), rng.normal(size=100)) == pytest.approx(7.0)


def test_evaluation_purity(wn_model):
    x = (0.3, -1.2)
    eps = np.random.default_rng(5).normal(size=100)
    values = {evaluate(wn_model, x, eps) for _ in range(100)}
    assert len(values) == 1


def test_monotone_in_max_eps(wn_model):
    # with x = (pi/2, 0), Y = 1 + 0.1 max(eps)^4: nondecreasing for max >= 0
    maxima = np.linspace(0.0, 3.0, 25)
    ys = []
    for m in maxima:
        eps = np.full(100, -1.0)
        eps[0] = m
        ys.append(evaluate(wn_model, (math.pi / 2, 0.0), eps))
    assert np.all(np.diff(ys) >= 0)


def test_arity_errors(wn_model, ishigami_model):
    zeros = np.zeros(100)
    with pytest.raises(ConfigError, match="X1, X2"):
        evaluate(wn_model, (0.0, 0.0, 0.0), zeros)
    with pytest.raises(ConfigError, match="functional input"):
        evaluate(wn_model, (0.0, 0.0))
    with pytest.raises(ConfigError, match=r"\(1, 100\)"):
        evaluate(wn_model, (0.0, 0.0), np.zeros(7))
    with pytest.raises(ConfigError, match="no functional input"):
        evaluate(ishigami_model, (0.0, 0.0, 0.0), zeros)


def test_external_model_cannot_evaluate():
    spec = ModelSpec(scalar_inputs=(("X1", Distribution.uniform(0, 1)),), name="ext")
    with pytest.raises(DataContractError, match="no in-process evaluator"):
        spec.eval_batch(np.zeros((3, 1)), None)


def test_variance_matches_brute_force_oracle(wn_model):
    n = 1_000_000
    x = sample_matrix(wn_model, n, seed=404)
    eps = sample_process(wn_model.functional_input, n, seed=404)
    y = wn_model.eval_batch(x, eps)
    assert np.var(y, ddof=1) == pytest.approx(VAR_Y_ORACLE, rel=0.01)


def test_builtin_registry():
    assert get_builtin("wn_ishigami").name == "wn_ishigami"
    assert get_builtin("ishigami").n_scalars == 3
    with pytest.raises(ConfigError, match="ishigami"):
        get_builtin("nope")


def test_distribution_validation():
    with pytest.raises(ConfigError, match="lo < hi"):
        Distribution.uniform(2.0, 1.0)
    with pytest.raises(ConfigError, match="sd > 0"):
        Distribution.normal(0.0, 0.0)
    with pytest.raises(ConfigError, match="kind"):
        Distribution("beta", 0.0, 1.0)
    assert Distribution.uniform(-1.0, 3.0).mean == pytest.approx(1.0)
    assert Distribution.normal(2.5, 1.0).mean == pytest.approx(2.5)


def test_process_spec_modes():
    with pytest.raises(ConfigError, match="length"):
        ProcessSpec(length=0, step_law=Distribution.normal(0, 1))
    with pytest.raises(ConfigError, match="mode"):
        ProcessSpec(length=5, step_law=Distribution.normal(0, 1), mode="multiplicative")
    rel = ProcessSpec(
        length=3,
        step_law=Distribution.uniform(-0.05, 0.05),
        mode="additive_relative",
        nominal=(10.0, 20.0, 30.0),
    )
    traj = rel.realize(np.array([[0.1, 0.0, -0.1]]))
    assert traj == pytest.approx(np.array([[11.0, 20.0, 27.0]]))
    bare = ProcessSpec(length=3, step_law=Distribution.uniform(-0.05, 0.05), mode="additive_relative")
    with pytest.raises(ConfigError, match="nominal"):
        bare.realize(np.zeros((1, 3)))
    with pytest.raises(ConfigError, match="3 steps"):
        ProcessSpec(length=5, step_law=Distribution.normal(0, 1), nominal=(1.0, 2.0, 3.0))


def test_mean_trajectory_is_step_law_mean():
    spec = ProcessSpec(length=4, step_law=Distribution.uniform(2.0, 4.0))
    assert spec.mean_trajectory() == pytest.approx(np.full(4, 3.0))


def test_duplicate_scalar_names_rejected():
    u = Distribution.uniform(0, 1)
    with pytest.raises(ConfigError, match="duplicate"):
        ModelSpec(scalar_inputs=(("X1", u), ("X1", u)), evaluator=lambda x, e: x[:, 0])


def test_builtin_linear_model():
    model = builtin_linear([2.0, 1.0])
    y = model.eval_batch(np.array([[1.0, 3.0]]), None)
    assert y == pytest.approx([5.0])
