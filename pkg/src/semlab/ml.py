"""Maximum-likelihood covariance-structure estimation.

The discrepancy F(theta) = log|Sigma(theta)| + tr(S Sigma(theta)^{-1})
- log|S| - p is minimized over the free cells of a ParamTable by BFGS
with a backtracking line search; parameter points with a non-positive-
definite implied covariance get infinite discrepancy, which keeps the
search inside the PD region without explicit constraints. The gradient
is analytic (matrix calculus on the LISREL structure); standard errors
come from the numerical Hessian of F at the optimum.

Convergence requires both a small gradient (max-norm below 1e-6) and a
small relative F change (below 1e-9) within the iteration budget; a
solution is admissible only if it converged, every parameter variance
is nonnegative, the implied construct covariance and the measurement
error covariance are numerically positive definite, and composite block
rotations are invertible. Failed checks are reported as reason codes,
never exceptions: inadmissible outcomes are data, not errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hospec
from .model_ir import (
    ConstructKind,
    ModelSpec,
    ParamTable,
    construct_covariance,
    parameterize,
    standardize,
)

__all__ = [
    "MlResult",
    "fml",
    "fml_gradient",
    "finite_difference_gradient",
    "fit_ml",
    "check_admissibility",
    "GTOL",
    "FTOL",
    "MAX_ITER",
    "PD_TOL",
]

GTOL = 1e-6
FTOL = 1e-9
MAX_ITER = 500
PD_TOL = -1e-8  # smallest acceptable eigenvalue in admissibility checks

NONCONVERGENCE = "nonconvergence"
NEGATIVE_SE = "negative_se"
NONPD_CONSTRUCT_COV = "nonPD_construct_cov"
NONPD_ERROR_COV = "nonPD_error_cov"
SINGULAR_ROTATION = "singular_rotation"


@dataclass(frozen=True)
class MlResult:
    """One fit: the table at the optimum, fit value, convergence and
    admissibility verdicts, standardized paths, standard errors (NaN where
    the parameter variance came out negative or undefined), and recovered
    composite weights per composite construct."""

    table: ParamTable
    F_min: float
    converged: bool
    iterations: int
    std_paths: dict[tuple[str, str], float]
    se: dict[str, float]
    weights: dict[str, np.ndarray]
    admissible: bool
    reason_codes: tuple[str, ...]


def fml(S: np.ndarray, Sigma: np.ndarray) -> float:
    """ML discrepancy; +inf when Sigma is not positive definite."""
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return np.inf
    p = S.shape[0]
    logdet_sigma = 2.0 * float(np.sum(np.log(np.diag(L))))
    sign, logdet_s = np.linalg.slogdet(S)
    if sign <= 0:
        raise ValueError("sample covariance must be positive definite")
    # tr(Sigma^{-1} S) via two triangular solves: L Z = S, L' X = Z
    X = np.linalg.solve(L.T, np.linalg.solve(L, S))
    return logdet_sigma + float(np.trace(X)) - logdet_s - p


def _sigma_pieces(table: ParamTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Sigma, M, G) with M = Lambda A and G = A Psi A', A = (I-B)^{-1}."""
    m = len(table.construct_names)
    A = np.linalg.solve(np.eye(m) - table.B, np.eye(m))
    G = A @ table.Psi @ A.T
    G = 0.5 * (G + G.T)
    M = table.Lambda @ A
    Sigma = table.Lambda @ G @ table.Lambda.T + table.Theta
    return 0.5 * (Sigma + Sigma.T), M, G


def fml_gradient(table: ParamTable, S: np.ndarray) -> np.ndarray | None:
    """Analytic gradient of fml in the table's free-cell order, or None
    when the implied covariance is not positive definite."""
    Sigma, M, G = _sigma_pieces(table)
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return None
    p = Sigma.shape[0]
    Sigma_inv = np.linalg.solve(L.T, np.linalg.solve(L, np.eye(p)))
    W = Sigma_inv @ (Sigma - S) @ Sigma_inv
    W = 0.5 * (W + W.T)
    WLG = W @ table.Lambda @ G
    MWLG = M.T @ WLG
    MWM = M.T @ W @ M
    grad = []
    for mat, i, j in table._free_cells():
        if mat == "Lambda":
            grad.append(2.0 * WLG[i, j])
        elif mat == "B":
            grad.append(2.0 * MWLG[i, j])
        elif mat == "Psi":
            grad.append(MWM[i, j] if i == j else 2.0 * MWM[i, j])
        else:
            grad.append(W[i, j] if i == j else 2.0 * W[i, j])
    return np.array(grad)


def finite_difference_gradient(
    table: ParamTable, S: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of fml; reference for the analytic one."""
    x = table.theta()
    out = np.empty_like(x)
    for k in range(len(x)):
        step = h * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        fp = fml(S, _sigma_pieces(table.with_theta(xp))[0])
        fm = fml(S, _sigma_pieces(table.with_theta(xm))[0])
        out[k] = (fp - fm) / (2.0 * step)
    return out


def _minimize(func_grad, x0: np.ndarray, gtol: float, ftol: float,
              max_iter: int) -> tuple[np.ndarray, float, bool, int, np.ndarray]:
    """BFGS with backtracking Armijo line search. Infinite function values
    reject a step inside the line search; convergence needs both a small
    gradient and a small relative decrease."""
    x = np.asarray(x0, dtype=float)
    f, g = func_grad(x)
    if not np.isfinite(f):
        raise ValueError("discrepancy is not finite at the starting values")
    q = len(x)
    H = np.eye(q)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d = -H @ g
        gTd = float(g @ d)
        if gTd >= 0.0:  # curvature update went bad; restart from steepest descent
            H = np.eye(q)
            d = -g
            gTd = float(g @ d)
        step = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + step * d
            f_new, g_new = func_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * gTd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        s = x_new - x
        y = g_new - g
        rel_df = abs(f - f_new) / max(abs(f), abs(f_new), 1.0)
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            rho = 1.0 / sy
            V = np.eye(q) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        if float(np.max(np.abs(g))) < gtol and rel_df < ftol:
            converged = True
            break
    return x, f, converged, iterations, g


def _numerical_hessian(table: ParamTable, S: np.ndarray,
                       x: np.ndarray) -> np.ndarray:
    """Central differences of the analytic gradient; shrinks the step when
    a probe point leaves the PD region."""
    q = len(x)
    H = np.full((q, q), np.nan)
    for k in range(q):
        col = None
        step = 1e-5 * max(1.0, abs(x[k]))
        for _ in range(4):
            xp, xm = x.copy(), x.copy()
            xp[k] += step
            xm[k] -= step
            gp = fml_gradient(table.with_theta(xp), S)
            gm = fml_gradient(table.with_theta(xm), S)
            if gp is not None and gm is not None:
                col = (gp - gm) / (2.0 * step)
                break
            step *= 0.1
        if col is not None:
            H[:, k] = col
    return 0.5 * (H + H.T)


def _theta_submatrix(table: ParamTable) -> np.ndarray | None:
    """Measurement-error covariance restricted to indicators that carry any
    free or nonzero error cell; all-zero fixed rows (proxy and composite
    indicators) are exempt from the PD check."""
    keep = [
        i
        for i in range(len(table.indicator_names))
        if table.free_Theta[i].any() or np.any(table.Theta[i] != 0.0)
    ]
    if not keep:
        return None
    return table.Theta[np.ix_(keep, keep)]


def check_admissibility(
    table: ParamTable, converged: bool, variances: np.ndarray
) -> tuple[bool, tuple[str, ...]]:
    """Apply the admissibility checks to a fitted table. `variances` is the
    diagonal of the parameter covariance estimate (NaN allowed)."""
    codes = []
    if not converged:
        codes.append(NONCONVERGENCE)
    if np.any(~np.isfinite(variances)) or np.any(variances < 0.0):
        codes.append(NEGATIVE_SE)
    C = construct_covariance(table)
    if np.linalg.eigvalsh(C).min() <= PD_TOL:
        codes.append(NONPD_CONSTRUCT_COV)
    Theta_sub = _theta_submatrix(table)
    if Theta_sub is not None and np.linalg.eigvalsh(Theta_sub).min() <= PD_TOL:
        codes.append(NONPD_ERROR_COV)
    for k, name in enumerate(table.construct_names):
        if (
            table.kinds[k] is ConstructKind.COMPOSITE
            and table.roles[k] == "substantive"
            and len(table.block_of(name)) >= 2
        ):
            try:
                hospec.recover_weights(table, name)
            except hospec.SingularRotationError:
                codes.append(SINGULAR_ROTATION)
    return (not codes), tuple(codes)


def fit_ml(
    spec: ModelSpec | ParamTable,
    S: np.ndarray,
    n: int,
    start: np.ndarray | None = None,
    gtol: float = GTOL,
    ftol: float = FTOL,
    max_iter: int = MAX_ITER,
) -> MlResult:
    """Fit a model to a sample covariance matrix with n observations.

    Accepts either a declarative spec (compiled here) or an already
    compiled ParamTable. Starting values are the table's generic defaults
    plus data-informed composite-block starts.
    """
    table = parameterize(spec) if isinstance(spec, ModelSpec) else spec
    table = hospec.starting_values(table, S)
    x0 = table.theta() if start is None else np.asarray(start, dtype=float)

    def func_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
        t = table.with_theta(x)
        Sigma = _sigma_pieces(t)[0]
        f = fml(S, Sigma)
        if not np.isfinite(f):
            return np.inf, np.zeros_like(x)
        return f, fml_gradient(t, S)

    x_hat, f_min, converged, iterations, g_hat = _minimize(
        func_grad, x0, gtol, ftol, max_iter
    )

    # Newton polish on the analytic gradient with the true curvature.
    # The line search cannot resolve parameters past ~sqrt(eps) in flat
    # directions (a variance at a boundary leaves F changes below machine
    # precision) but the gradient still points at the optimum; steps are
    # kept only while the gradient norm strictly falls.
    H = _numerical_hessian(table, S, x_hat)
    if np.all(np.isfinite(H)):
        for _ in range(8):
            gmax = float(np.max(np.abs(g_hat)))
            if gmax == 0.0:
                break
            try:
                step = np.linalg.solve(H, g_hat)
            except np.linalg.LinAlgError:
                break
            f_new, g_new = func_grad(x_hat - step)
            if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
                break
            if float(np.max(np.abs(g_new))) >= gmax:
                break
            x_hat, f_min, g_hat = x_hat - step, f_new, g_new
    fitted = table.with_theta(x_hat)
    if np.all(np.isfinite(H)):
        try:
            H_inv = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            H_inv = np.linalg.pinv(H)
        variances = (2.0 / (n - 1)) * np.diag(H_inv)
    else:
        variances = np.full(len(x_hat), np.nan)
    se = {
        label: float(np.sqrt(v)) if np.isfinite(v) and v >= 0.0 else float("nan")
        for label, v in zip(fitted.free_labels(), variances)
    }

    weights: dict[str, np.ndarray] = {}
    for k, name in enumerate(fitted.construct_names):
        if (
            fitted.kinds[k] is ConstructKind.COMPOSITE
            and fitted.roles[k] == "substantive"
            and len(fitted.block_of(name)) >= 2
        ):
            try:
                weights[name] = hospec.recover_weights(fitted, name)
            except hospec.SingularRotationError:
                pass

    admissible, codes = check_admissibility(fitted, converged, variances)
    return MlResult(
        table=fitted,
        F_min=float(f_min),
        converged=converged,
        iterations=iterations,
        std_paths=standardize(fitted),
        se=se,
        weights=weights,
        admissible=admissible,
        reason_codes=codes,
    )
