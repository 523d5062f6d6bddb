"""Batch front end.

Subcommands
-----------
run             simulate a (filtered) design grid and write result CSVs
fisher          population-recovery table for one estimator
verify          diagnostic suites: analytic audits, fisher checks, golden run
list-conditions print the measurement-design cells (no generating kind)
population      dump the population covariance of a single cell as JSON

Configuration can come from a JSON file (--config); command line flags
always win. All floating point output uses 12 significant digits with a
locale-independent decimal point.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _golden
from .dgp import (
    DesignCondition,
    build_population,
    composite_weights,
    design_grid,
    eta_star_loadings,
    population_to_json,
    study_spec,
)
from .dgp import _hospec_population_cells
from .fit import CRITERIA, DEFAULT_THRESHOLDS, Thresholds
from .hospec import excrescent_names
from .mc import (
    ESTIMATORS,
    KIND_ORDER,
    McSummary,
    RepRecord,
    StudyPlan,
    fisher_grid,
    run_plan,
)
from .ml import finite_difference_gradient, fit_ml, fml_gradient
from .model_ir import (
    ConstructKind,
    augment_causal_formative,
    degrees_of_freedom,
    parameterize,
)

__all__ = [
    "RECORD_COLUMNS",
    "SUMMARY_COLUMNS",
    "RunConfig",
    "build_parser",
    "main",
    "records_csv",
    "run_quick_mc",
    "summaries_csv",
]

_FILTER_KEYS = ("position", "kind", "n", "K", "sigma", "homogeneous")

_KIND_ALIASES = {
    "latent": ConstructKind.LATENT,
    "causal_formative": ConstructKind.CAUSAL_FORMATIVE,
    "causal-formative": ConstructKind.CAUSAL_FORMATIVE,
    "composite": ConstructKind.COMPOSITE,
}

RECORD_COLUMNS = (
    "condition_id",
    "position",
    "dgp_kind",
    "assumed_kind",
    "estimator",
    "rep",
    "seed",
    "admissible",
    "reason_codes",
    "beta1_std",
    "beta2_std",
    "beta3_std",
    "F_min",
    "T",
    "df",
    "p_value",
    "srmr",
    "cfi",
    "rmsea",
    "cr_min",
    "ave_min",
) + tuple(f"flag_{c}" for c in CRITERIA)

SUMMARY_COLUMNS = (
    "condition_id",
    "position",
    "dgp_kind",
    "assumed_kind",
    "estimator",
    "n",
    "K",
    "sigma",
    "homogeneous",
    "n_attempts",
    "n_admissible",
    "inadmissibility_pct",
    "estimable",
    "truncated",
) + tuple(
    f"beta{i}_{part}"
    for i in (1, 2, 3)
    for part in ("name", "theta0", "bias", "variance", "mse")
) + tuple(f"rate_{c}" for c in CRITERIA)

FISHER_COLUMNS = (
    "estimator",
    "position",
    "dgp_kind",
    "assumed_kind",
    "expected_consistent",
    "max_deviation",
    "admissible",
    "reason_codes",
    "passed",
)


def format_value(value) -> str:
    """12-significant-digit, locale-independent cell rendering."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12g" % float(value)
    return str(value)


def _write_csv(stream, columns, rows) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])


def _record_row(rec: RepRecord) -> list:
    cond = rec.condition
    return [
        cond.label,
        cond.position,
        cond.dgp_kind.value,
        rec.assumed_kind.value,
        rec.estimator,
        rec.rep,
        rec.seed,
        rec.admissible,
        ";".join(rec.reason_codes),
        *rec.betas,
        rec.F_min,
        rec.T,
        rec.df,
        rec.p_value,
        rec.srmr,
        rec.cfi,
        rec.rmsea,
        rec.cr_min,
        rec.ave_min,
        *(rec.flags.get(c) for c in CRITERIA),
    ]


def _summary_row(s: McSummary) -> list:
    cond = s.condition
    row = [
        cond.label,
        cond.position,
        cond.dgp_kind.value,
        s.assumed_kind.value,
        s.estimator,
        cond.n,
        cond.K,
        cond.sigma,
        cond.homogeneous,
        s.n_attempts,
        s.n_admissible,
        s.inadmissibility_pct,
        s.estimable,
        s.truncated,
    ]
    for i in range(3):
        row += [
            s.path_names[i],
            s.theta0[i],
            s.bias[i],
            s.variance[i],
            s.mse[i],
        ]
    row += [s.flag_rates.get(c) for c in CRITERIA]
    return row


def records_csv(records) -> str:
    buf = io.StringIO()
    _write_csv(buf, RECORD_COLUMNS, map(_record_row, records))
    return buf.getvalue()


def summaries_csv(summaries) -> str:
    buf = io.StringIO()
    _write_csv(buf, SUMMARY_COLUMNS, map(_summary_row, summaries))
    return buf.getvalue()


def _plot_tables(summaries) -> dict[str, str]:
    """Long-format companions to summary.csv, one per figure family."""
    base_cols = (
        "position",
        "dgp_kind",
        "assumed_kind",
        "estimator",
        "n",
        "K",
        "sigma",
        "homogeneous",
    )

    def base(s: McSummary) -> list:
        c = s.condition
        return [
            c.position,
            c.dgp_kind.value,
            s.assumed_kind.value,
            s.estimator,
            c.n,
            c.K,
            c.sigma,
            c.homogeneous,
        ]

    bias_rows = []
    inad_rows = []
    flag_rows = []
    for s in summaries:
        for i in range(3):
            bias_rows.append(
                base(s)
                + [
                    s.path_names[i],
                    s.theta0[i],
                    s.bias[i],
                    s.variance[i],
                    s.mse[i],
                ]
            )
        inad_rows.append(
            base(s)
            + [s.n_attempts, s.n_admissible, s.inadmissibility_pct]
        )
        for crit in CRITERIA:
            flag_rows.append(base(s) + [crit, s.flag_rates.get(crit)])

    out = {}
    for name, cols, rows in (
        (
            "plotdata_bias.csv",
            base_cols + ("path", "theta0", "bias", "variance", "mse"),
            bias_rows,
        ),
        (
            "plotdata_inadmissible.csv",
            base_cols
            + ("n_attempts", "n_admissible", "inadmissibility_pct"),
            inad_rows,
        ),
        (
            "plotdata_flags.csv",
            base_cols + ("criterion", "flag_rate"),
            flag_rows,
        ),
    ):
        buf = io.StringIO()
        _write_csv(buf, cols, rows)
        out[name] = buf.getvalue()
    return out


def parse_filters(pairs: list[str]) -> dict[str, set]:
    """Parse repeated ``key=value[,value...]`` flags into typed sets."""
    out: dict[str, set] = {}
    for pair in pairs:
        key, eq, raw = pair.partition("=")
        if not eq:
            raise ValueError(f"filter {pair!r} is not of the form key=value")
        key = key.strip()
        if key not in _FILTER_KEYS:
            raise ValueError(
                f"unknown filter key {key!r}; known: {', '.join(_FILTER_KEYS)}"
            )
        for token in raw.split(","):
            token = token.strip()
            if key == "position":
                if token not in ("exogenous", "endogenous"):
                    raise ValueError(f"unknown position {token!r}")
                value = token
            elif key == "kind":
                if token not in _KIND_ALIASES:
                    raise ValueError(f"unknown construct kind {token!r}")
                value = _KIND_ALIASES[token]
            elif key in ("n", "K"):
                value = int(token)
            elif key == "sigma":
                value = float(token)
            else:
                if token.lower() in ("true", "1", "yes"):
                    value = True
                elif token.lower() in ("false", "0", "no"):
                    value = False
                else:
                    raise ValueError(f"homogeneous must be boolean, got {token!r}")
            out.setdefault(key, set()).add(value)
    return out


def _matches(cond: DesignCondition, filters: dict[str, set]) -> bool:
    probes = {
        "position": cond.position,
        "kind": cond.dgp_kind,
        "n": cond.n,
        "K": cond.K,
        "sigma": cond.sigma,
        "homogeneous": cond.homogeneous,
    }
    return all(probes[k] in allowed for k, allowed in filters.items())


def filter_grid(filters: dict[str, set]) -> tuple[DesignCondition, ...]:
    conditions = tuple(c for c in design_grid() if _matches(c, filters))
    if not conditions:
        raise ValueError("filters select an empty sub-grid")
    return conditions


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one invocation (after config-file merge)."""

    estimator: str = "ml"
    target_admissible: int = 1000
    attempt_cap_multiplier: float = 20.0
    master_seed: int = 0
    filters: dict = field(default_factory=dict)
    assumed_kinds: tuple[ConstructKind, ...] | None = None
    out: str = "."
    workers: int = 1
    thresholds: Thresholds = DEFAULT_THRESHOLDS


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    return raw


def resolve_config(args, config: dict) -> RunConfig:
    """Merge config-file values under command line flags."""
    known = {
        "estimator",
        "reps",
        "target_admissible",
        "attempt_cap_multiplier",
        "seed",
        "master_seed",
        "filters",
        "assumed_kinds",
        "out",
        "workers",
        "thresholds",
    }
    unknown = set(config) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    filters = dict(config.get("filters", {}))
    filter_pairs = [f"{k}={v}" for k, v in filters.items()]
    filter_pairs += getattr(args, "filter", None) or []
    parsed_filters = parse_filters(filter_pairs)

    assumed = config.get("assumed_kinds")
    if assumed is not None:
        assumed = tuple(_KIND_ALIASES[str(k)] for k in assumed)

    thresholds = DEFAULT_THRESHOLDS
    if "thresholds" in config:
        thresholds = replace(DEFAULT_THRESHOLDS, **config["thresholds"])

    reps = getattr(args, "reps", None)
    if reps is None:
        reps = config.get("reps", config.get("target_admissible", 1000))
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = config.get("seed", config.get("master_seed", 0))
    estimator = getattr(args, "estimator", None) or config.get(
        "estimator", "ml"
    )
    out = getattr(args, "out", None) or config.get("out", ".")
    workers = getattr(args, "workers", None)
    if workers is None:
        workers = int(config.get("workers", 1))

    return RunConfig(
        estimator=estimator,
        target_admissible=int(reps),
        attempt_cap_multiplier=float(
            config.get("attempt_cap_multiplier", 20.0)
        ),
        master_seed=int(seed),
        filters=parsed_filters,
        assumed_kinds=assumed,
        out=out,
        workers=workers,
        thresholds=thresholds,
    )


# ---------------------------------------------------------------- run


def cmd_run(args) -> int:
    cfg = resolve_config(args, load_config(args.config))
    conditions = filter_grid(cfg.filters)
    plan = StudyPlan(
        conditions=conditions,
        estimator=cfg.estimator,
        assumed_kinds=cfg.assumed_kinds,
        target_admissible=cfg.target_admissible,
        attempt_cap_multiplier=cfg.attempt_cap_multiplier,
        master_seed=cfg.master_seed,
    )
    t0 = time.perf_counter()
    records, summaries = run_plan(plan, workers=cfg.workers)
    elapsed = time.perf_counter() - t0

    os.makedirs(cfg.out, exist_ok=True)
    files = {
        "records.csv": records_csv(records),
        "summary.csv": summaries_csv(summaries),
    }
    files.update(_plot_tables(summaries))
    for name, text in files.items():
        path = os.path.join(cfg.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {path}")
    print(
        f"{len(conditions)} conditions, {len(records)} fits, "
        f"{elapsed:.1f}s"
    )
    return 0


# ------------------------------------------------------------- fisher


def cmd_fisher(args) -> int:
    estimator = args.estimator or "ml"
    results = fisher_grid(estimator)
    header = (
        f"{'position':<11} {'dgp':<16} {'assumed':<16} "
        f"{'expected':<9} {'max_dev':>12} {'status':<6}"
    )
    print(header)
    print("-" * len(header))
    for r in results:
        expected = "exact" if r.expected_consistent else "deviates"
        status = "pass" if r.passed else "FAIL"
        print(
            f"{r.condition.position:<11} {r.condition.dgp_kind.value:<16} "
            f"{r.assumed_kind.value:<16} {expected:<9} "
            f"{r.max_deviation:>12.3e} {status:<6}"
        )
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} combinations passed")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "fisher.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            _write_csv(
                fh,
                FISHER_COLUMNS,
                (
                    [
                        r.estimator,
                        r.condition.position,
                        r.condition.dgp_kind.value,
                        r.assumed_kind.value,
                        r.expected_consistent,
                        r.max_deviation,
                        r.admissible,
                        ";".join(r.reason_codes),
                        r.passed,
                    ]
                    for r in results
                ),
            )
        print(f"wrote {path}")
    return 0 if n_pass == len(results) else 1


# ------------------------------------------------------------- verify

DF_ORACLE = {
    ("exogenous", ConstructKind.LATENT, 3): 87,
    ("exogenous", ConstructKind.LATENT, 5): 116,
    ("exogenous", ConstructKind.LATENT, 7): 149,
    ("exogenous", ConstructKind.CAUSAL_FORMATIVE, 3): 84,
    ("exogenous", ConstructKind.CAUSAL_FORMATIVE, 5): 106,
    ("exogenous", ConstructKind.CAUSAL_FORMATIVE, 7): 128,
    ("exogenous", ConstructKind.COMPOSITE, 3): 85,
    ("exogenous", ConstructKind.COMPOSITE, 5): 107,
    ("exogenous", ConstructKind.COMPOSITE, 7): 129,
    ("endogenous", ConstructKind.LATENT, 3): 84,
    ("endogenous", ConstructKind.LATENT, 5): 113,
    ("endogenous", ConstructKind.LATENT, 7): 146,
    ("endogenous", ConstructKind.COMPOSITE, 3): 82,
    ("endogenous", ConstructKind.COMPOSITE, 5): 104,
    ("endogenous", ConstructKind.COMPOSITE, 7): 126,
}


def _suite_gradient() -> tuple[bool, str]:
    worst = 0.0
    for kind in KIND_ORDER:
        cond = DesignCondition("exogenous", kind, 300, 3, 0.5, True)
        pop = build_population(cond)
        table = pop.theta0
        # probe away from the optimum so the gradient is not trivially zero
        theta = table.theta() * 1.05 + 0.01
        probe = table.with_theta(theta)
        g = fml_gradient(probe, pop.Sigma0)
        g_fd = finite_difference_gradient(probe, pop.Sigma0)
        rel = float(
            np.max(np.abs(g - g_fd)) / max(1.0, np.max(np.abs(g)))
        )
        worst = max(worst, rel)
    return worst < 1e-5, f"max rel err {worst:.2e}"


def _suite_sigma0_pd() -> tuple[bool, str]:
    worst = np.inf
    for cond in design_grid():
        eig = float(np.linalg.eigvalsh(build_population(cond).Sigma0)[0])
        worst = min(worst, eig)
    return worst > 0.0, f"min eigenvalue {worst:.3e} over 270 cells"


def _suite_df() -> tuple[bool, str]:
    bad = []
    for (position, kind, K), expected in DF_ORACLE.items():
        spec = study_spec(position, kind, K)
        if kind is ConstructKind.CAUSAL_FORMATIVE:
            spec = augment_causal_formative(spec)
        got = degrees_of_freedom(parameterize(spec))
        if got != expected:
            bad.append(f"{position}/{kind.value}/K={K}: {got}!={expected}")
    return not bad, "; ".join(bad) if bad else "15 models agree"


def _suite_saturation() -> tuple[bool, str]:
    """The excrescent parameterization reproduces arbitrary PD blocks."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for K in (3, 5, 7):
        for _ in range(5):
            A = rng.normal(size=(K, K + 3))
            Sxx = A @ A.T
            d = np.sqrt(np.diag(Sxx))
            Sxx = Sxx / np.outer(d, d)  # correlation metric, PD
            w = composite_weights(Sxx)
            lam = eta_star_loadings(Sxx, w)
            cells = _hospec_population_cells(lam, w, Sxx)
            exc = excrescent_names("focal", K)
            L = np.zeros((K, K - 1))
            Psi = np.zeros((K - 1, K - 1))
            for mat, rname, cname, value in cells:
                if mat == "Lambda":
                    j = exc.index(cname)
                    L[int(rname[1:]) - 1, j] = value
                    L[int(rname[1:]), j] = -1.0
                else:
                    a, b = exc.index(rname), exc.index(cname)
                    Psi[a, b] = Psi[b, a] = value
            implied = np.outer(lam, lam) + L @ Psi @ L.T
            worst = max(worst, float(np.max(np.abs(implied - Sxx))))
    cond = DesignCondition("exogenous", ConstructKind.COMPOSITE, 300, 3, 0.5, True)
    pop = build_population(cond)
    res = fit_ml(study_spec("exogenous", ConstructKind.COMPOSITE, 3), pop.Sigma0, 10_000)
    ok = worst < 1e-10 and res.F_min < 1e-10
    return ok, f"block residual {worst:.2e}, population F {res.F_min:.2e}"


def _suite_fit_flags(thresholds: Thresholds) -> tuple[bool, str]:
    expected = Thresholds()
    if thresholds != expected:
        return False, f"threshold table differs from documented defaults"
    cond = DesignCondition("exogenous", ConstructKind.LATENT, 300, 3, 0.5, True)
    pop = build_population(cond)
    from .dgp import draw_sample
    from .fit import report_ml

    data = draw_sample(pop, 300, 1)
    S = np.cov(data, rowvar=False, ddof=1)
    res = fit_ml(study_spec("exogenous", ConstructKind.LATENT, 3), S, 300)
    rep = report_ml(res, S, 300, thresholds)
    recomputed = {
        "chi2": rep.p_value < thresholds.alpha,
        "srmr": rep.srmr > thresholds.srmr_max,
        "cfi": rep.cfi < thresholds.cfi_min,
        "rmsea": rep.rmsea > thresholds.rmsea_max,
        "cr": min(rep.cr.values()) < thresholds.cr_min,
        "ave": min(rep.ave.values()) < thresholds.ave_min,
    }
    ok = all(rep.flags[c] == recomputed[c] for c in CRITERIA)
    return ok, "flags reproducible from values and thresholds"


def _suite_fisher() -> tuple[bool, str]:
    results = []
    for estimator in ESTIMATORS:
        results.extend(fisher_grid(estimator))
    n_pass = sum(r.passed for r in results)
    return n_pass == len(results), f"{n_pass}/{len(results)} combinations"


QUICK_MC_CELLS = tuple(
    (estimator, kind)
    for estimator in ESTIMATORS
    for kind in (ConstructKind.LATENT, ConstructKind.COMPOSITE)
)


def run_quick_mc(workers: int = 1) -> dict[str, str]:
    """Seeded 200-replication study of 4 correct-specification cells;
    returns the result CSV texts keyed by estimator."""
    out = {}
    for estimator in ESTIMATORS:
        summaries = []
        for _, kind in (c for c in QUICK_MC_CELLS if c[0] == estimator):
            cond = DesignCondition("exogenous", kind, 100, 3, 0.5, True)
            plan = StudyPlan(
                conditions=(cond,),
                estimator=estimator,
                assumed_kinds=(kind,),
                target_admissible=200,
                master_seed=2024,
            )
            _, summ = run_plan(plan, workers=workers)
            summaries.extend(summ)
        out[estimator] = summaries_csv(summaries)
    return out


def _suite_golden(workers: int) -> tuple[bool, str]:
    texts = run_quick_mc(workers)
    mismatches = []
    for estimator, text in texts.items():
        digest = hashlib.sha256(text.encode()).hexdigest()
        if digest != _golden.QUICK_MC_SUMMARY_SHA256[estimator]:
            mismatches.append(f"{estimator}: {digest[:12]}")
    return not mismatches, (
        "summary hashes match" if not mismatches
        else "drift in " + ", ".join(mismatches)
    )


VERIFY_SUITES = (
    "gradient",
    "sigma0_pd",
    "df_audit",
    "hospec_saturation",
    "fit_flags",
    "fisher",
    "golden_mc",
)


def cmd_verify(args) -> int:
    cfg = resolve_config(args, load_config(args.config))
    suites = {
        "gradient": _suite_gradient,
        "sigma0_pd": _suite_sigma0_pd,
        "df_audit": _suite_df,
        "hospec_saturation": _suite_saturation,
        "fit_flags": lambda: _suite_fit_flags(cfg.thresholds),
        "fisher": _suite_fisher,
        "golden_mc": lambda: _suite_golden(cfg.workers),
    }
    selected = getattr(args, "suite", None) or list(VERIFY_SUITES)
    all_ok = True
    for name in selected:
        t0 = time.perf_counter()
        ok, detail = suites[name]()
        dt = time.perf_counter() - t0
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<18} {dt:6.1f}s  {detail}")
    print("verify:", "all suites passed" if all_ok else "FAILURES above")
    return 0 if all_ok else 1


# -------------------------------------------------- small subcommands


def cmd_list_conditions(args) -> int:
    filters = parse_filters(args.filter or [])
    seen = []
    for cond in design_grid():
        if not _matches(cond, filters):
            continue
        key = (cond.position, cond.n, cond.K, cond.sigma, cond.homogeneous)
        if key not in seen:
            seen.append(key)
    _write_csv(
        sys.stdout,
        ("position", "n", "K", "sigma", "homogeneous"),
        seen,
    )
    return 0


def cmd_population(args) -> int:
    filters = parse_filters(args.filter or [])
    matched = [c for c in design_grid() if _matches(c, filters)]
    if len(matched) != 1:
        raise ValueError(
            f"population needs filters selecting exactly one of the "
            f"270 cells, got {len(matched)}"
        )
    pop = build_population(matched[0])
    text = population_to_json(pop)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"population_{matched[0].label}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        print(text)
    return 0


# --------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semlab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, out_default=None):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--reps", type=int, help="admissible fits per cell")
        p.add_argument("--estimator", choices=ESTIMATORS)
        p.add_argument(
            "--filter",
            action="append",
            metavar="KEY=VALUE",
            help="design filter (position, kind, n, K, sigma, homogeneous);"
            " repeatable, values may be comma-separated",
        )
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--workers", type=int, help="process count")

    p_run = sub.add_parser("run", help="simulate and write result CSVs")
    common(p_run, out_default=None)
    p_run.set_defaults(fn=cmd_run)

    p_fisher = sub.add_parser(
        "fisher", help="population-recovery table for one estimator"
    )
    p_fisher.add_argument("--estimator", choices=ESTIMATORS, default="ml")
    p_fisher.add_argument("--seed", type=int, default=0)
    p_fisher.add_argument("--out", help="also write fisher.csv here")
    p_fisher.set_defaults(fn=cmd_fisher)

    p_verify = sub.add_parser("verify", help="run the diagnostic suites")
    common(p_verify)
    p_verify.add_argument(
        "--suite",
        action="append",
        choices=VERIFY_SUITES,
        help="run only the named suite(s); repeatable",
    )
    p_verify.set_defaults(fn=cmd_verify)

    p_list = sub.add_parser(
        "list-conditions", help="print measurement-design cells as CSV"
    )
    p_list.add_argument("--filter", action="append", metavar="KEY=VALUE")
    p_list.set_defaults(fn=cmd_list_conditions)

    p_pop = sub.add_parser(
        "population", help="dump one cell's population covariance as JSON"
    )
    p_pop.add_argument("--filter", action="append", metavar="KEY=VALUE")
    p_pop.add_argument("--out", help="write JSON here instead of stdout")
    p_pop.set_defaults(fn=cmd_population)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
