"""Model-evaluation criteria: exact-fit test, SRMR, CFI, RMSEA, and the
reliability/validity pair (CR, AVE) for latent blocks, with threshold
flags.

All criteria work on the sample/implied covariance pair in correlation
metric. The CFI baseline is the independence model (diagonal implied
covariance, variances free); its ML solution is available in closed
form (the fitted variances equal the sample variances), giving
T_base = (n-1) * (-log det R) with R the sample correlation matrix; the
test suite cross-checks this against the numeric optimizer. Flags are
pure functions of the computed values and a threshold table, so a
report can always be re-derived from its stored numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as _chi2

from .ml import MlResult, fml
from .model_ir import (
    ConstructKind,
    ParamTable,
    construct_covariance,
    degrees_of_freedom,
    implied_covariance,
)
from .pls import PlsResult

__all__ = [
    "Thresholds",
    "FitReport",
    "DEFAULT_THRESHOLDS",
    "chi_square_test",
    "srmr",
    "cfi",
    "rmsea",
    "cr_ave",
    "baseline_statistic",
    "fit_report",
    "report_ml",
    "report_pls",
]

CRITERIA = ("chi2", "srmr", "cfi", "rmsea", "cr", "ave")


@dataclass(frozen=True)
class Thresholds:
    """Cutoffs: a fit is flagged as poor when p < alpha, srmr > srmr_max,
    cfi < cfi_min, rmsea > rmsea_max, or any block has cr < cr_min or
    ave < ave_min."""

    alpha: float = 0.05
    srmr_max: float = 0.08
    cfi_min: float = 0.95
    rmsea_max: float = 0.05
    cr_min: float = 0.7
    ave_min: float = 0.5


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class FitReport:
    """Criterion values and flags for one fitted model. cr/ave are maps
    from latent construct name to value (empty when the model has no
    multi-indicator latent block). A flag of None means not applicable
    (for example the exact-fit test of a saturated model)."""

    T: float
    df: int
    p_value: float | None
    srmr: float
    cfi: float | None
    rmsea: float | None
    cr: dict[str, float]
    ave: dict[str, float]
    flags: dict[str, bool | None]


def chi_square_test(F_min: float, n: int, df: int) -> tuple[float, float]:
    """Exact-fit test statistic T = (n-1) F and its upper-tail p value."""
    if df < 1:
        raise ValueError("exact-fit test needs positive degrees of freedom")
    if F_min < -1e-10:
        raise ValueError("negative discrepancy")
    T = (n - 1) * max(F_min, 0.0)
    return float(T), float(_chi2.sf(T, df))


def srmr(S: np.ndarray, Sigma_hat: np.ndarray) -> float:
    """Root mean square of correlation-metric residuals over the unique
    elements including the diagonal."""
    d_s = np.sqrt(np.diag(S))
    d_m = np.sqrt(np.diag(Sigma_hat))
    R_s = S / np.outer(d_s, d_s)
    R_m = Sigma_hat / np.outer(d_m, d_m)
    resid = R_s - R_m
    p = S.shape[0]
    iu = np.triu_indices(p)
    return float(np.sqrt(np.mean(resid[iu] ** 2)))


def cfi(T: float, df: int, T_base: float, df_base: int) -> float:
    """Comparative fit index against the independence baseline, in [0, 1]."""
    num = max(T - df, 0.0)
    den = max(T - df, T_base - df_base, 0.0)
    if den == 0.0:
        return 1.0
    return float(np.clip(1.0 - num / den, 0.0, 1.0))


def rmsea(T: float, df: int, n: int) -> float:
    if df < 1:
        raise ValueError("rmsea needs positive degrees of freedom")
    return float(np.sqrt(max(T - df, 0.0) / (df * (n - 1))))


def baseline_statistic(S: np.ndarray, n: int) -> tuple[float, int]:
    """Exact-fit statistic of the independence model. Its ML solution is
    closed-form (fitted variances = sample variances), so
    F_base = -log det(correlation matrix)."""
    d = np.sqrt(np.diag(S))
    R = S / np.outer(d, d)
    sign, logdet = np.linalg.slogdet(R)
    if sign <= 0:
        raise ValueError("sample covariance must be positive definite")
    p = S.shape[0]
    return float((n - 1) * (-logdet)), p * (p - 1) // 2


def cr_ave(
    loadings: np.ndarray, error_variances: np.ndarray
) -> tuple[float, float]:
    """Composite reliability and average variance extracted for one
    standardized latent block."""
    lam = np.asarray(loadings, dtype=float)
    th = np.asarray(error_variances, dtype=float)
    cr = float(lam.sum() ** 2 / (lam.sum() ** 2 + th.sum()))
    ave = float((lam**2).sum() / ((lam**2).sum() + th.sum()))
    return cr, ave


def fit_report(
    S: np.ndarray,
    Sigma_hat: np.ndarray,
    F_min: float,
    df: int,
    n: int,
    latent_blocks: dict[str, tuple[np.ndarray, np.ndarray]],
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
) -> FitReport:
    """Assemble the full report. latent_blocks maps latent construct name
    to its (standardized loadings, standardized error variances)."""
    srmr_val = srmr(S, Sigma_hat)
    cr_map: dict[str, float] = {}
    ave_map: dict[str, float] = {}
    for name, (lam, th) in latent_blocks.items():
        cr_map[name], ave_map[name] = cr_ave(lam, th)

    flags: dict[str, bool | None] = {}
    if df >= 1:
        T, p_value = chi_square_test(F_min, n, df)
        T_base, df_base = baseline_statistic(S, n)
        cfi_val = cfi(T, df, T_base, df_base)
        rmsea_val = rmsea(T, df, n)
        flags["chi2"] = p_value < thresholds.alpha
        flags["cfi"] = cfi_val < thresholds.cfi_min
        flags["rmsea"] = rmsea_val > thresholds.rmsea_max
    else:
        T = (n - 1) * max(F_min, 0.0)
        p_value = None
        cfi_val = None
        rmsea_val = None
        flags["chi2"] = None
        flags["cfi"] = None
        flags["rmsea"] = None
    flags["srmr"] = srmr_val > thresholds.srmr_max
    flags["cr"] = min(cr_map.values()) < thresholds.cr_min if cr_map else None
    flags["ave"] = min(ave_map.values()) < thresholds.ave_min if ave_map else None
    return FitReport(
        T=float(T),
        df=int(df),
        p_value=p_value,
        srmr=srmr_val,
        cfi=cfi_val,
        rmsea=rmsea_val,
        cr=cr_map,
        ave=ave_map,
        flags=flags,
    )


def _ml_latent_blocks(
    table: ParamTable,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Standardized loadings and error variances per substantive latent
    block of a fitted table."""
    Sigma = implied_covariance(table)
    G = construct_covariance(table)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for k, name in enumerate(table.construct_names):
        if table.kinds[k] is not ConstructKind.LATENT:
            continue
        if table.roles[k] != "substantive":
            continue
        rows = list(table.block_of(name))
        if not rows:
            continue
        sd_c = np.sqrt(G[k, k])
        sd_x = np.sqrt(Sigma[rows, rows])
        lam = table.Lambda[rows, k] * sd_c / sd_x
        th = np.diag(table.Theta)[rows] / Sigma[rows, rows]
        out[name] = (lam, th)
    return out


def report_ml(
    result: MlResult,
    S: np.ndarray,
    n: int,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
) -> FitReport:
    df = degrees_of_freedom(result.table)
    Sigma_hat = implied_covariance(result.table)
    return fit_report(
        S, Sigma_hat, result.F_min, df, n, _ml_latent_blocks(result.table),
        thresholds,
    )


def report_pls(
    result: PlsResult,
    n: int,
    spec_kinds: dict[str, ConstructKind],
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
) -> FitReport:
    """Fit report for a PLS solution: the exact-fit statistic applies the
    ML discrepancy to the PLS-implied correlation matrix, with the
    degrees of freedom of the matching covariance-structure model."""
    blocks: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name, lam in result.loadings.items():
        if spec_kinds[name] is ConstructKind.LATENT and len(lam) >= 2:
            blocks[name] = (lam, 1.0 - lam**2)
    F = fml(result.S, result.Sigma_hat)
    return fit_report(
        result.S, result.Sigma_hat, F, result.df, n, blocks, thresholds
    )
