"""Shared fixtures: benchmark models, one cached learning sample, joint fits.

The joint fits are session-scoped because the GAM alternation takes several
seconds; tests that only read a fitted model share one instance.  Anything
that mutates or refits builds its own.
"""

import pytest

from funsens import builtin_ishigami, builtin_wn_ishigami, fit_joint
from funsens.metamodel import _learning_sample

GLM_MEAN = "Y ~ X1 + I(X2^2) + I(X1^3) + I(X2^4)"
GAM_MEAN = "Y ~ X1 + s(X1) + s(X2)"
GAM_DISP = "~ s(X1)"


@pytest.fixture(scope="session")
def wn_model():
    return builtin_wn_ishigami()


@pytest.fixture(scope="session")
def ishigami_model():
    return builtin_ishigami()


@pytest.fixture(scope="session")
def learning_data(wn_model):
    # n=500 draws of (X1, X2, Y), seed 42, dedicated stream block "L"
    return _learning_sample(wn_model, 500, 42, "L", "simple_mc")


@pytest.fixture(scope="session")
def joint_glm(learning_data):
    return fit_joint(GLM_MEAN, "~ 1", learning_data, engine="glm")


@pytest.fixture(scope="session")
def joint_gam(learning_data):
    return fit_joint(GAM_MEAN, GAM_DISP, learning_data, engine="gam")
