"""Penalized regression splines fitted by penalized IRLS with GCV-chosen lambdas.

Smooths are cubic regression splines in the value parameterization: the
coefficients are the spline's values at k quantile knots, natural (zero second
derivative) at the ends, linear beyond the boundary knots.  The wiggliness
penalty is the exact integrated squared second derivative.  Each smooth is
constrained to sum to zero over the data (identifiability against the
intercept); a smooth whose covariate also enters the model as a parametric
linear term is additionally constrained orthogonal to that line, which is why
such a term has rank k-2 instead of k-1.

Smoothing parameters minimize GCV = n * deviance / (n - trace(A))^2,
coordinate-wise per term: a 50-point log grid on [1e-8, 1e8] followed by a
golden-section refinement, ties resolved toward the larger (smoother) lambda.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.linalg import cho_factor, cho_solve, eigh, null_space, solve_triangular

from .errors import ConfigError, FitError
from .glm import CONDITION_WARN, Family

LAMBDA_GRID = np.logspace(-8.0, 8.0, 50)

DEFAULT_K = 10
DEFAULT_TENSOR_K = 5


def _quantile_knots(x: np.ndarray, k: int) -> np.ndarray:
    knots = np.quantile(x, np.linspace(0.0, 1.0, k))
    if np.any(np.diff(knots) <= 0):
        raise ConfigError(
            f"cannot place {k} distinct quantile knots; covariate has too few "
            f"distinct values ({np.unique(x).size})"
        )
    return knots


def _crs_penalty(knots: np.ndarray):
    """Second-derivative penalty S and the map F_full: values -> curvatures."""
    k = knots.size
    h = np.diff(knots)
    D = np.zeros((k - 2, k))
    B = np.zeros((k - 2, k - 2))
    for i in range(k - 2):
        D[i, i] = 1.0 / h[i]
        D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
        D[i, i + 2] = 1.0 / h[i + 1]
        B[i, i] = (h[i] + h[i + 1]) / 3.0
        if i + 1 < k - 2:
            B[i, i + 1] = B[i + 1, i] = h[i + 1] / 6.0
    F = np.linalg.solve(B, D)
    S = D.T @ F
    S = 0.5 * (S + S.T)
    F_full = np.vstack([np.zeros(k), F, np.zeros(k)])
    return S, F_full


def _crs_rows(x: np.ndarray, knots: np.ndarray, F_full: np.ndarray, deriv: bool = False):
    """Rows mapping knot values to s(x) (or s'(x)) for x inside the knot range."""
    k = knots.size
    j = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, k - 2)
    xl, xr = knots[j], knots[j + 1]
    h = xr - xl
    rows = np.zeros((x.size, k))
    idx = np.arange(x.size)
    if deriv:
        rows[idx, j] -= 1.0 / h
        rows[idx, j + 1] += 1.0 / h
        cm = (-3.0 * (xr - x) ** 2 / h + h) / 6.0
        cp = (3.0 * (x - xl) ** 2 / h - h) / 6.0
    else:
        rows[idx, j] += (xr - x) / h
        rows[idx, j + 1] += (x - xl) / h
        cm = ((xr - x) ** 3 / h - h * (xr - x)) / 6.0
        cp = ((x - xl) ** 3 / h - h * (x - xl)) / 6.0
    rows += cm[:, None] * F_full[j] + cp[:, None] * F_full[j + 1]
    return rows


def _crs_design(x: np.ndarray, knots: np.ndarray, F_full: np.ndarray) -> np.ndarray:
    """Basis matrix at arbitrary x, linear beyond the boundary knots."""
    x = np.asarray(x, dtype=float)
    C = np.zeros((x.size, knots.size))
    inside = (x >= knots[0]) & (x <= knots[-1])
    if inside.any():
        C[inside] = _crs_rows(x[inside], knots, F_full)
    for mask, xb in ((x < knots[0], knots[0]), (x > knots[-1], knots[-1])):
        if mask.any():
            point = np.array([xb])
            value = _crs_rows(point, knots, F_full)[0]
            slope = _crs_rows(point, knots, F_full, deriv=True)[0]
            C[mask] = value + (x[mask] - xb)[:, None] * slope
    return C


def build_spline_basis(x: np.ndarray, k: int = DEFAULT_K):
    """Cubic regression spline basis at k quantile knots plus its penalty.

    Returns (basis (n, k), penalty (k, k), knots).  The penalty is the exact
    integral of the squared second derivative; its null space is spanned by
    the constant and linear functions.
    """
    if k < 4:
        raise ConfigError(f"spline basis needs k >= 4, got {k}")
    x = np.asarray(x, dtype=float)
    knots = _quantile_knots(x, k)
    S, F_full = _crs_penalty(knots)
    return _crs_design(x, knots, F_full), S, knots


@dataclass
class SmoothSpec:
    """One smooth term to be fitted: label, covariate name(s) and data."""

    label: str
    covariates: Tuple[str, ...]
    values: Tuple[np.ndarray, ...]
    k: Optional[int] = None
    orthogonal_to_linear: bool = False


@dataclass
class _TermBasis:
    spec: SmoothSpec
    knots: Tuple[np.ndarray, ...]
    f_full: Tuple[np.ndarray, ...]
    Z: np.ndarray  # unconstrained-to-constrained reparameterization
    penalty: np.ndarray  # constrained-space penalty
    columns: slice = slice(0, 0)

    @property
    def label(self) -> str:
        return self.spec.label

    @property
    def rank(self) -> int:
        return self.Z.shape[1]

    def raw_design(self, values: Sequence[np.ndarray]) -> np.ndarray:
        parts = [
            _crs_design(np.asarray(v, dtype=float), kn, ff)
            for v, kn, ff in zip(values, self.knots, self.f_full)
        ]
        if len(parts) == 1:
            return parts[0]
        a, b = parts
        return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)

    def design(self, values: Sequence[np.ndarray]) -> np.ndarray:
        return self.raw_design(values) @ self.Z


def _build_term(spec: SmoothSpec) -> _TermBasis:
    if len(spec.covariates) == 1:
        k = spec.k if spec.k is not None else DEFAULT_K
        if k < 4:
            raise ConfigError(f"{spec.label}: basis size must be >= 4, got {k}")
        knots = (_quantile_knots(np.asarray(spec.values[0], float), k),)
        S, F = _crs_penalty(knots[0])
        f_full = (F,)
        S_raw = S
    else:
        k = spec.k if spec.k is not None else DEFAULT_TENSOR_K
        if k < 4:
            raise ConfigError(f"{spec.label}: marginal basis size must be >= 4, got {k}")
        knots, f_full, margins = [], [], []
        for v in spec.values:
            kn = _quantile_knots(np.asarray(v, float), k)
            S, F = _crs_penalty(kn)
            knots.append(kn)
            f_full.append(F)
            margins.append(S)
        knots, f_full = tuple(knots), tuple(f_full)
        eye = np.eye(k)
        S_raw = np.kron(margins[0], eye) + np.kron(eye, margins[1])
    term = _TermBasis(spec=spec, knots=knots, f_full=f_full, Z=np.empty(0), penalty=np.empty(0))
    C = term.raw_design(spec.values)
    constraints = [C.sum(axis=0)]
    if spec.orthogonal_to_linear:
        if len(spec.covariates) != 1:
            raise ConfigError(f"{spec.label}: linear-orthogonality applies to 1-d smooths only")
        constraints.append(np.asarray(spec.values[0], float) @ C)
    Z = null_space(np.vstack(constraints))
    term.Z = Z
    term.penalty = Z.T @ S_raw @ Z
    return term


@dataclass
class GamFit:
    """A converged penalized fit with per-term edf, GCV, and inference."""

    family: Family
    parametric_names: Tuple[str, ...]
    coefficients: np.ndarray  # full coefficient vector, parametric first
    parametric_std_errors: np.ndarray
    terms: List[_TermBasis]
    lambdas: np.ndarray
    edf: Dict[str, float]
    total_edf: float
    gcv: float
    deviance: float
    null_deviance: float
    scale: float
    eta: np.ndarray
    mu: np.ndarray
    prior_weights: np.ndarray
    n_iter: int
    X: np.ndarray
    y: np.ndarray

    @property
    def d_expl(self) -> float:
        return 1.0 - self.deviance / self.null_deviance

    @property
    def n_parametric(self) -> int:
        return len(self.parametric_names)

    def smooth_coefficients(self, term: _TermBasis) -> np.ndarray:
        return self.coefficients[term.columns]

    def predict(self, X_par: np.ndarray, smooth_values: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
        """Fitted means at new data; smooth_values gives per-term covariate arrays."""
        X_par = np.atleast_2d(np.asarray(X_par, dtype=float))
        if X_par.shape[1] != self.n_parametric:
            raise ConfigError(
                f"prediction design has {X_par.shape[1]} parametric columns, "
                f"fit has {self.n_parametric}"
            )
        if len(smooth_values) != len(self.terms):
            raise ConfigError(
                f"expected covariate arrays for {len(self.terms)} smooth terms, "
                f"got {len(smooth_values)}"
            )
        eta = X_par @ self.coefficients[: self.n_parametric]
        for term, values in zip(self.terms, smooth_values):
            eta = eta + term.design(values) @ self.smooth_coefficients(term)
        return self.family.inverse(eta)


def _assemble(X_par: np.ndarray, terms: List[_TermBasis]):
    blocks = [X_par]
    offset = X_par.shape[1]
    for term in terms:
        design = term.design(term.spec.values)
        term.columns = slice(offset, offset + design.shape[1])
        offset += design.shape[1]
        blocks.append(design)
    return np.hstack(blocks)


def _penalty_matrix(q: int, terms: List[_TermBasis], lambdas: np.ndarray) -> np.ndarray:
    S = np.zeros((q, q))
    for term, lam in zip(terms, lambdas):
        S[term.columns, term.columns] += lam * term.penalty
    return S


def _penalty_root(S: np.ndarray) -> np.ndarray:
    """E with E.T @ E = S, rows only for the numerically nonzero eigenvalues."""
    vals, vecs = eigh(S)
    keep = vals > max(vals.max(), 0.0) * 1e-12
    if not keep.any():
        return np.empty((0, S.shape[0]))
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


def _pirls(
    X: np.ndarray,
    y: np.ndarray,
    family: Family,
    w: np.ndarray,
    terms: List[_TermBasis],
    lambdas: np.ndarray,
    column_names: Sequence[str],
    tol: float = 1e-10,
    max_iter: int = 50,
):
    """Penalized IRLS at fixed lambdas; returns the fit state and hat trace."""
    n, q = X.shape
    S_lambda = _penalty_matrix(q, terms, lambdas)
    E = _penalty_root(S_lambda)
    aug_zero = np.zeros(E.shape[0])
    mu = family.initialize(y, w)
    eta = family.link(mu)
    objective = family.deviance(y, mu, w)
    beta = np.zeros(q)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        W = w * family.irls_weight(mu)
        z = eta + (y - mu) * family.dlink(mu)
        sw = np.sqrt(W)
        Xw = np.vstack([X * sw[:, None], E])
        zw = np.concatenate([z * sw, aug_zero])
        Q, R = np.linalg.qr(Xw)
        rdiag = np.abs(np.diag(R))
        biggest = rdiag.max() if rdiag.size else 0.0
        if biggest == 0.0 or np.any(rdiag <= biggest * 1e-12):
            bad = [column_names[j] for j in np.nonzero(rdiag <= biggest * 1e-12)[0]]
            raise FitError(f"penalized design is rank deficient; column(s): {bad or 'all'}")
        beta_prev = beta
        beta = solve_triangular(R, Q.T @ zw)
        eta = X @ beta
        mu = family.inverse(eta)
        new_objective = family.deviance(y, mu, w) + float(beta @ S_lambda @ beta)
        # at very large lambda the penalty term amplifies round-off into a
        # persistent objective wobble; a coefficient fixpoint is converged too
        step = np.max(np.abs(beta - beta_prev)) if n_iter > 1 else np.inf
        if abs(new_objective - objective) <= tol * (abs(objective) + tol) or step <= tol * (
            1.0 + np.max(np.abs(beta))
        ):
            objective = new_objective
            converged = True
            break
        objective = new_objective
    if not converged:
        raise FitError(f"penalized IRLS did not converge in {max_iter} iterations")

    W = w * family.irls_weight(mu)
    M = (X * W[:, None]).T @ X
    try:
        chol = cho_factor(M + S_lambda)
    except np.linalg.LinAlgError:
        raise FitError("penalized normal matrix is not positive definite") from None
    P = cho_solve(chol, np.eye(q))
    hat_diag_cols = np.einsum("ij,ji->i", P, M)
    deviance = family.deviance(y, mu, w)
    return {
        "beta": beta,
        "eta": eta,
        "mu": mu,
        "deviance": deviance,
        "P": P,
        "edf_cols": hat_diag_cols,
        "trace": float(hat_diag_cols.sum()),
        "n_iter": n_iter,
        "W": W,
    }


def _gcv_score(n: int, deviance: float, trace: float) -> float:
    slack = n - trace
    if slack <= 1e-8:
        return np.inf
    return n * deviance / slack**2


def _golden_refine(score, lo: float, hi: float, best_val: float, best_score: float):
    """Golden-section on log-lambda in [lo, hi]; ties move toward larger lambda."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(lo), np.log(hi)
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = score(np.exp(c)), score(np.exp(d))
    for _ in range(40):
        if fc >= fd:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = score(np.exp(d))
        else:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = score(np.exp(c))
        if b - a < 1e-6:
            break
    for lam, val in ((np.exp(d), fd), (np.exp(c), fc)):
        if val < best_score - 1e-12 or (abs(val - best_score) <= 1e-12 and lam > best_val):
            best_val, best_score = lam, val
    return best_val, best_score


def fit_gam(
    X_par: np.ndarray,
    y: np.ndarray,
    family: Family,
    smooths: Sequence[SmoothSpec],
    weights: Optional[np.ndarray] = None,
    parametric_names: Optional[Sequence[str]] = None,
    lambdas: Optional[Sequence[float]] = None,
    gcv_tol: float = 1e-7,
    max_cycles: int = 20,
) -> GamFit:
    """Fit parametric columns plus penalized smooths.

    With ``lambdas`` given, smoothing parameters are held fixed; otherwise they
    are selected by coordinate-wise GCV minimization.
    """
    X_par = np.atleast_2d(np.asarray(X_par, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if X_par.shape[0] != n:
        raise ConfigError(f"parametric design has {X_par.shape[0]} rows, y has {n}")
    if parametric_names is None:
        parametric_names = tuple(f"x{j}" for j in range(X_par.shape[1]))
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != n or np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ConfigError("weights must be positive, finite, and match y in length")
    family.check_support(y)

    terms = [_build_term(s) for s in smooths]
    X = _assemble(X_par, terms)
    q = X.shape[1]
    if n < q:
        raise ConfigError(f"need at least as many observations ({n}) as columns ({q})")
    names = list(parametric_names)
    for term in terms:
        names.extend(f"{term.label}.{j}" for j in range(term.rank))

    cond = np.linalg.cond(X)
    if cond > CONDITION_WARN:
        warnings.warn(
            f"design matrix condition estimate {cond:.2e} exceeds {CONDITION_WARN:.0e}",
            UserWarning,
            stacklevel=2,
        )

    if lambdas is not None:
        lam = np.asarray([float(v) for v in lambdas])
        if lam.shape[0] != len(terms):
            raise ConfigError(f"expected {len(terms)} lambdas, got {lam.shape[0]}")
        if np.any(lam < 0):
            raise ConfigError("lambdas must be nonnegative")
    elif terms:
        lam = np.ones(len(terms))
        cache: Dict[tuple, tuple] = {}

        def gcv_at(vector) -> float:
            key = tuple(np.round(np.log10(np.maximum(vector, 1e-300)), 12))
            if key not in cache:
                state = _pirls(X, y, family, w, terms, np.asarray(vector), names)
                cache[key] = (state["deviance"], state["trace"])
            dev, tr = cache[key]
            return _gcv_score(n, dev, tr)

        current = gcv_at(lam)
        for _ in range(max_cycles):
            previous = current
            for j in range(len(terms)):
                trial = lam.copy()

                def score(value: float) -> float:
                    trial[j] = value
                    return gcv_at(trial)

                grid_scores = np.array([score(g) for g in LAMBDA_GRID])
                # ties go to the larger lambda: scan from the top of the grid
                best_i = len(LAMBDA_GRID) - 1 - int(np.argmin(grid_scores[::-1]))
                best_val, best_score = LAMBDA_GRID[best_i], grid_scores[best_i]
                if score(lam[j]) < best_score:
                    best_val, best_score = lam[j], score(lam[j])
                lo = LAMBDA_GRID[max(best_i - 1, 0)]
                hi = LAMBDA_GRID[min(best_i + 1, len(LAMBDA_GRID) - 1)]
                best_val, best_score = _golden_refine(score, lo, hi, best_val, best_score)
                lam[j] = best_val
                current = best_score
            if abs(previous - current) <= gcv_tol * (1.0 + abs(current)):
                break
    else:
        lam = np.empty(0)

    state = _pirls(X, y, family, w, terms, lam, names)
    trace = state["trace"]
    deviance = state["deviance"]
    edf = {}
    for term in terms:
        edf[term.label] = float(state["edf_cols"][term.columns].sum())

    pearson = float(np.sum(w * (y - state["mu"]) ** 2 / family.variance(state["mu"])))
    df_resid = n - trace
    scale = pearson / df_resid if df_resid > 0 else np.nan
    # Bayesian-style covariance: scale * (X'WX + S_lambda)^{-1}
    par_se = np.sqrt(np.maximum(scale * np.diag(state["P"])[: X_par.shape[1]], 0.0))

    mu_null = float(np.sum(w * y) / np.sum(w))
    null_dev = family.deviance(y, np.full(n, mu_null), w)

    return GamFit(
        family=family,
        parametric_names=tuple(parametric_names),
        coefficients=state["beta"],
        parametric_std_errors=par_se,
        terms=terms,
        lambdas=lam,
        edf=edf,
        total_edf=float(trace),
        gcv=_gcv_score(n, deviance, trace),
        deviance=deviance,
        null_deviance=null_dev,
        scale=scale,
        eta=state["eta"],
        mu=state["mu"],
        prior_weights=w,
        n_iter=state["n_iter"],
        X=X,
        y=y,
    )


def smooth_significance(fit: GamFit, label: str):
    """Approximate F test of a smooth term against zero.

    Refits without the term (other lambdas frozen) and compares deviances:
    F = (delta deviance / delta edf) / scale, with (delta edf, n - total edf)
    degrees of freedom.  Documented as approximate, as any such test is.
    """
    index = next((i for i, t in enumerate(fit.terms) if t.label == label), None)
    if index is None:
        raise ConfigError(f"no smooth term {label!r}; terms: {[t.label for t in fit.terms]}")
    reduced_terms = [t.spec for i, t in enumerate(fit.terms) if i != index]
    reduced_lam = [float(l) for i, l in enumerate(fit.lambdas) if i != index]
    reduced = fit_gam(
        fit.X[:, : fit.n_parametric],
        fit.y,
        fit.family,
        reduced_terms,
        weights=fit.prior_weights,
        parametric_names=fit.parametric_names,
        lambdas=reduced_lam,
    )
    n = fit.y.shape[0]
    delta_dev = max(reduced.deviance - fit.deviance, 0.0)
    delta_edf = max(fit.total_edf - reduced.total_edf, 1e-8)
    f_stat = (delta_dev / delta_edf) / fit.scale
    df2 = max(n - fit.total_edf, 1e-8)
    p_value = float(stats.f.sf(f_stat, delta_edf, df2))
    return float(f_stat), p_value


def term_curve(fit: GamFit, label: str, n_grid: int = 100):
    """(grid, s(grid)) for one 1-d smooth term's centered contribution."""
    term = next((t for t in fit.terms if t.label == label), None)
    if term is None:
        raise ConfigError(f"no smooth term {label!r}; terms: {[t.label for t in fit.terms]}")
    if len(term.spec.covariates) != 1:
        raise ConfigError(f"{label} is a tensor smooth; export it on a 2-d grid instead")
    x = term.spec.values[0]
    grid = np.linspace(float(np.min(x)), float(np.max(x)), n_grid)
    values = term.design([grid]) @ fit.smooth_coefficients(term)
    return grid, values


def summary_rows(fit: GamFit) -> dict:
    """Parametric and smooth summaries in the layout of a fit report table."""
    parametric = []
    df = max(int(round(fit.y.shape[0] - fit.total_edf)), 1)
    for name, est, se in zip(
        fit.parametric_names,
        fit.coefficients[: fit.n_parametric],
        fit.parametric_std_errors,
    ):
        t_val = est / se if se > 0 else np.inf
        parametric.append(
            {
                "term": name,
                "estimate": float(est),
                "std_error": float(se),
                "t_value": float(t_val),
                "p_value": float(2.0 * stats.t.sf(abs(t_val), df=df)),
            }
        )
    smooth = []
    for term in fit.terms:
        f_stat, p = smooth_significance(fit, term.label)
        smooth.append(
            {
                "term": term.label,
                "edf": fit.edf[term.label],
                "rank": term.rank,
                "f_value": f_stat,
                "p_value": p,
            }
        )
    return {"parametric": parametric, "smooth": smooth}
