"""Monte Carlo driver: replicate cells until enough admissible fits.

A study cell is one design condition fitted under one or more assumed
indicator-construct models with a single estimator. Every assumed model
inside a replication sees the identical sample (verified by hashing the
draw), and each keeps its own admissible counter: sampling continues until
every assumed model has ``target_admissible`` admissible fits or the
attempt cap is reached, in which case the aggregate row is marked
truncated. Seeds derive from (master seed, condition label, replication
index) alone, so record streams are reproducible under any degree of
parallelism and re-used across estimators.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dgp import (
    AUX,
    FOCAL,
    STD_PATHS,
    DesignCondition,
    build_population,
    draw_sample,
    normalize_to_population,
    study_spec,
)
from .fit import (
    CRITERIA,
    DEFAULT_THRESHOLDS,
    FitReport,
    Thresholds,
    report_ml,
    report_pls,
)
from .ml import fit_ml
from .model_ir import ConstructKind
from .pls import fit_pls

__all__ = [
    "ESTIMATORS",
    "FISHER_N",
    "FisherResult",
    "McSummary",
    "RepRecord",
    "StudyPlan",
    "aggregate",
    "allowed_assumed_kinds",
    "consistent_combination",
    "derive_seed",
    "fisher_check",
    "fisher_grid",
    "fit_record",
    "run_condition",
    "run_plan",
    "sample_digest",
    "structural_path_keys",
]

ESTIMATORS = ("ml", "pls")

# canonical reporting order for assumed indicator-construct models
KIND_ORDER = (
    ConstructKind.LATENT,
    ConstructKind.CAUSAL_FORMATIVE,
    ConstructKind.COMPOSITE,
)

FISHER_N = 10_000
FISHER_PASS_TOL = 1e-6
FISHER_DEVIATION_FLOOR = 1e-3


def allowed_assumed_kinds(
    condition: DesignCondition, estimator: str
) -> tuple[ConstructKind, ...]:
    """Assumed models that are estimable for this condition and estimator.

    Causal-formative models cannot be assumed for an endogenous focal
    construct (no emitted paths) nor under PLS (no formative mode).
    """
    kinds = []
    for kind in KIND_ORDER:
        if kind is ConstructKind.CAUSAL_FORMATIVE and (
            estimator == "pls" or condition.position == "endogenous"
        ):
            continue
        kinds.append(kind)
    return tuple(kinds)


@dataclass(frozen=True)
class StudyPlan:
    """A set of cells to simulate with one estimator.

    assumed_kinds None means every assumed model allowed for the cell;
    an explicit tuple is intersected with the allowed set and must leave
    at least one assumed model per condition.
    """

    conditions: tuple[DesignCondition, ...]
    estimator: str
    assumed_kinds: tuple[ConstructKind, ...] | None = None
    target_admissible: int = 1000
    attempt_cap_multiplier: float = 20.0
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if not self.conditions:
            raise ValueError("plan needs at least one condition")
        if self.target_admissible < 1:
            raise ValueError("target_admissible must be positive")
        if self.attempt_cap_multiplier < 1:
            raise ValueError("attempt_cap_multiplier must be positive")
        if self.assumed_kinds is not None:
            if self.estimator == "pls" and (
                ConstructKind.CAUSAL_FORMATIVE in self.assumed_kinds
            ):
                raise ValueError(
                    "causal-formative assumed models are excluded under pls"
                )
        for cond in self.conditions:
            if not self.cell_assumed(cond):
                raise ValueError(
                    f"no assumed model left for condition {cond.label}"
                )

    def cell_assumed(
        self, condition: DesignCondition
    ) -> tuple[ConstructKind, ...]:
        allowed = allowed_assumed_kinds(condition, self.estimator)
        if self.assumed_kinds is None:
            return allowed
        return tuple(k for k in allowed if k in self.assumed_kinds)


def structural_path_keys(position: str) -> tuple[tuple[str, str], ...]:
    """The three focal structural paths in auxiliary-construct order."""
    if position == "exogenous":
        return tuple((FOCAL, a) for a in AUX)
    return tuple((a, FOCAL) for a in AUX)


def derive_seed(master_seed: int, label: str, rep: int) -> int:
    """Stable 64-bit replication seed; independent of estimator and
    assumed model so samples can be shared across both."""
    digest = hashlib.sha256(
        f"{master_seed}|{label}|{rep}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


def sample_digest(data: np.ndarray) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(data).tobytes()
    ).hexdigest()[:16]


@dataclass(frozen=True)
class RepRecord:
    """One fit of one assumed model on one replication sample."""

    condition: DesignCondition
    assumed_kind: ConstructKind
    estimator: str
    rep: int
    seed: int
    sample_hash: str
    admissible: bool
    reason_codes: tuple[str, ...]
    betas: tuple[float, float, float]
    F_min: float
    T: float
    df: int
    p_value: float
    srmr: float
    cfi: float
    rmsea: float
    cr_min: float
    ave_min: float
    flags: dict[str, bool | None] = field(default_factory=dict)


def _nan_or(value: float | None) -> float:
    return float("nan") if value is None else float(value)


def _min_or_nan(values: dict[str, float]) -> float:
    finite = [v for v in values.values() if math.isfinite(v)]
    return min(finite) if finite else float("nan")


def fit_record(
    condition: DesignCondition,
    assumed_kind: ConstructKind,
    estimator: str,
    data: np.ndarray,
    rep: int,
    seed: int,
    sample_hash: str | None = None,
    thresholds: Thresholds | None = None,
) -> RepRecord:
    """Fit one assumed model to one sample and flatten the outcome."""
    spec = study_spec(condition.position, assumed_kind, condition.K)
    n = condition.n
    if thresholds is None:
        thresholds = DEFAULT_THRESHOLDS
    if estimator == "ml":
        S = np.cov(data, rowvar=False, ddof=1)
        res = fit_ml(spec, S, n)
        F_min = res.F_min
        try:
            report: FitReport | None = report_ml(res, S, n, thresholds)
        except Exception:
            report = None
    elif estimator == "pls":
        res = fit_pls(spec, data)
        kinds = {c.name: c.kind for c in spec.constructs}
        try:
            report = report_pls(res, n, kinds, thresholds)
            F_min = report.T / (n - 1)
        except Exception:
            report = None
            F_min = float("nan")
    else:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")

    keys = structural_path_keys(condition.position)
    betas = tuple(
        float(res.std_paths.get(k, float("nan"))) for k in keys
    )
    if report is None:
        stats = dict.fromkeys(
            ("T", "p_value", "srmr", "cfi", "rmsea", "cr_min", "ave_min"),
            float("nan"),
        )
        df = -1
        flags: dict[str, bool | None] = dict.fromkeys(CRITERIA)
    else:
        stats = {
            "T": float(report.T),
            "p_value": _nan_or(report.p_value),
            "srmr": float(report.srmr),
            "cfi": _nan_or(report.cfi),
            "rmsea": _nan_or(report.rmsea),
            "cr_min": _min_or_nan(report.cr),
            "ave_min": _min_or_nan(report.ave),
        }
        df = report.df
        flags = dict(report.flags)
    return RepRecord(
        condition=condition,
        assumed_kind=assumed_kind,
        estimator=estimator,
        rep=rep,
        seed=seed,
        sample_hash=sample_digest(data) if sample_hash is None else sample_hash,
        admissible=res.admissible,
        reason_codes=tuple(res.reason_codes),
        betas=betas,  # type: ignore[arg-type]
        F_min=float(F_min),
        df=df,
        **stats,
        flags=flags,
    )


def run_condition(
    condition: DesignCondition,
    estimator: str,
    assumed_kinds: tuple[ConstructKind, ...],
    target_admissible: int,
    attempt_cap_multiplier: float,
    master_seed: int,
) -> list[RepRecord]:
    """Draw and fit until every assumed model has enough admissible fits.

    Each replication's sample is drawn once and fitted under every
    assumed model that still needs results, so comparisons across assumed
    models rest on the same data.  A multiplier of 1 turns the loop into
    a fixed-attempt design (rates over exactly target_admissible draws).
    """
    pop = build_population(condition)
    admissible_count = dict.fromkeys(assumed_kinds, 0)
    cap = int(attempt_cap_multiplier * target_admissible)
    records: list[RepRecord] = []
    for rep in range(cap):
        pending = [
            k for k in assumed_kinds
            if admissible_count[k] < target_admissible
        ]
        if not pending:
            break
        seed = derive_seed(master_seed, condition.label, rep)
        data = draw_sample(pop, condition.n, seed)
        digest = sample_digest(data)
        for kind in pending:
            rec = fit_record(
                condition, kind, estimator, data, rep, seed, digest
            )
            records.append(rec)
            if rec.admissible:
                admissible_count[kind] += 1
    return records


@dataclass(frozen=True)
class McSummary:
    """Aggregates for one (condition, assumed model, estimator) cell.

    bias/variance/mse are per focal structural path, ordered like
    structural_path_keys; variance uses the N-1 divisor; flag rates and
    inadmissibility_pct are proportions in [0, 1] (a flag rate is None
    when a criterion never applied). estimable is False when fewer than
    two admissible fits exist, in which case the moment fields are NaN.
    """

    condition: DesignCondition
    assumed_kind: ConstructKind
    estimator: str
    n_attempts: int
    n_admissible: int
    inadmissibility_pct: float
    estimable: bool
    truncated: bool
    path_names: tuple[str, ...]
    theta0: tuple[float, float, float]
    bias: tuple[float, float, float]
    variance: tuple[float, float, float]
    mse: tuple[float, float, float]
    flag_rates: dict[str, float | None]


def _summarize_group(
    key: tuple[DesignCondition, ConstructKind, str],
    group: list[RepRecord],
    target_admissible: int | None,
) -> McSummary:
    condition, assumed_kind, estimator = key
    adm = [r for r in group if r.admissible]
    n_att, n_adm = len(group), len(adm)
    nan3 = (float("nan"),) * 3
    if n_adm >= 2:
        est = np.array([r.betas for r in adm])
        bias = tuple(float(b) for b in est.mean(axis=0) - STD_PATHS)
        variance = tuple(float(v) for v in est.var(axis=0, ddof=1))
        mse = tuple(b * b + v for b, v in zip(bias, variance))
    else:
        bias = variance = mse = nan3
    rates: dict[str, float | None] = {}
    for crit in CRITERIA:
        votes = [r.flags.get(crit) for r in adm]
        votes = [v for v in votes if v is not None]
        rates[crit] = float(np.mean(votes)) if votes else None
    keys = structural_path_keys(condition.position)
    return McSummary(
        condition=condition,
        assumed_kind=assumed_kind,
        estimator=estimator,
        n_attempts=n_att,
        n_admissible=n_adm,
        inadmissibility_pct=1.0 - n_adm / n_att if n_att else float("nan"),
        estimable=n_adm >= 2,
        truncated=(
            target_admissible is not None and n_adm < target_admissible
        ),
        path_names=tuple(f"{s}->{t}" for s, t in keys),
        theta0=STD_PATHS,
        bias=bias,  # type: ignore[arg-type]
        variance=variance,  # type: ignore[arg-type]
        mse=mse,  # type: ignore[arg-type]
        flag_rates=rates,
    )


def record_sort_key(rec: RepRecord) -> tuple:
    return (
        rec.estimator,
        rec.condition.label,
        KIND_ORDER.index(rec.assumed_kind),
        rec.rep,
    )


def aggregate(
    records: list[RepRecord],
    target_admissible: int | None = None,
) -> tuple[McSummary, ...]:
    """Deterministic per-cell aggregation, invariant to record order."""
    groups: dict[tuple, list[RepRecord]] = {}
    for rec in sorted(records, key=record_sort_key):
        key = (rec.condition, rec.assumed_kind, rec.estimator)
        groups.setdefault(key, []).append(rec)
    return tuple(
        _summarize_group(key, group, target_admissible)
        for key, group in sorted(
            groups.items(),
            key=lambda kv: (
                kv[0][2],
                kv[0][0].label,
                KIND_ORDER.index(kv[0][1]),
            ),
        )
    )


def _cell_worker(args: tuple) -> list[RepRecord]:
    return run_condition(*args)


def run_plan(
    plan: StudyPlan, workers: int = 1
) -> tuple[list[RepRecord], tuple[McSummary, ...]]:
    """Run every cell of the plan, optionally across processes.

    The record stream and summaries are identical for any worker count
    because seeds depend only on (master seed, condition, replication)
    and aggregation sorts canonically.
    """
    tasks = [
        (
            cond,
            plan.estimator,
            plan.cell_assumed(cond),
            plan.target_admissible,
            plan.attempt_cap_multiplier,
            plan.master_seed,
        )
        for cond in plan.conditions
    ]
    records: list[RepRecord] = []
    if workers <= 1 or len(tasks) == 1:
        for t in tasks:
            records.extend(run_condition(*t))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_cell_worker, tasks):
                records.extend(chunk)
    records.sort(key=record_sort_key)
    return records, aggregate(records, plan.target_admissible)


@dataclass(frozen=True)
class FisherResult:
    """Outcome of one population-recovery check."""

    condition: DesignCondition
    assumed_kind: ConstructKind
    estimator: str
    expected_consistent: bool
    max_deviation: float
    admissible: bool
    reason_codes: tuple[str, ...]
    passed: bool


def consistent_combination(
    position: str,
    dgp_kind: ConstructKind,
    assumed_kind: ConstructKind,
    estimator: str,
) -> bool:
    """Whether the estimator recovers the population paths exactly.

    ML is exact for every correctly assumed model and, in the exogenous
    design, whenever a causal-formative model is assumed (its extra
    disturbance parameter absorbs either true model). PLS is exact only
    for correctly assumed latent or composite models.
    """
    if estimator == "ml":
        if assumed_kind is dgp_kind:
            return True
        return (
            assumed_kind is ConstructKind.CAUSAL_FORMATIVE
            and position == "exogenous"
        )
    return assumed_kind is dgp_kind and dgp_kind is not (
        ConstructKind.CAUSAL_FORMATIVE
    )


def fisher_check(
    condition: DesignCondition,
    assumed_kind: ConstructKind,
    estimator: str,
    seed: int = 0,
) -> FisherResult:
    """Fit a moment-normalized population and compare recovered paths.

    The sample is rescaled so its covariance equals the population matrix
    exactly; consistent combinations must recover the standardized paths
    to 1e-6, inconsistent ones must miss by more than 1e-3. An
    inadmissible population fit fails outright with its reason codes.
    """
    if assumed_kind not in allowed_assumed_kinds(condition, estimator):
        raise ValueError(
            f"{assumed_kind.value} cannot be assumed for "
            f"{condition.position} position under {estimator}"
        )
    pop = build_population(condition)
    raw = draw_sample(pop, FISHER_N, seed)
    data = normalize_to_population(raw, pop.Sigma0)
    fisher_cond = DesignCondition(
        condition.position,
        condition.dgp_kind,
        FISHER_N,
        condition.K,
        condition.sigma,
        condition.homogeneous,
    )
    rec = fit_record(fisher_cond, assumed_kind, estimator, data, 0, seed)
    deviation = (
        float(np.max(np.abs(np.asarray(rec.betas) - STD_PATHS)))
        if np.all(np.isfinite(rec.betas))
        else float("nan")
    )
    expected = consistent_combination(
        condition.position, condition.dgp_kind, assumed_kind, estimator
    )
    if not rec.admissible:
        passed = False
    elif expected:
        passed = deviation < FISHER_PASS_TOL
    else:
        passed = deviation > FISHER_DEVIATION_FLOOR
    return FisherResult(
        condition=condition,
        assumed_kind=assumed_kind,
        estimator=estimator,
        expected_consistent=expected,
        max_deviation=deviation,
        admissible=rec.admissible,
        reason_codes=rec.reason_codes,
        passed=passed,
    )


def fisher_grid(
    estimator: str,
    K: int = 3,
    sigma: float = 0.5,
    homogeneous: bool = True,
    positions: tuple[str, ...] = ("exogenous", "endogenous"),
) -> tuple[FisherResult, ...]:
    """Population-recovery checks over every valid combination of data
    generating kind and assumed kind at one measurement design."""
    results = []
    for position in positions:
        for dgp_kind in KIND_ORDER:
            if (
                position == "endogenous"
                and dgp_kind is ConstructKind.CAUSAL_FORMATIVE
            ):
                continue
            cond = DesignCondition(
                position, dgp_kind, FISHER_N, K, sigma, homogeneous
            )
            for assumed in allowed_assumed_kinds(cond, estimator):
                results.append(fisher_check(cond, assumed, estimator))
    return tuple(results)
