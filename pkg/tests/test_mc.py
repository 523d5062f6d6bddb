"""Replication engine: seeding, aggregation, plan orchestration, and the
population-recovery grid."""

import math

import numpy as np
import pytest

from semlab.dgp import STD_PATHS, DesignCondition, design_grid
from semlab.mc import (
    ESTIMATORS,
    FISHER_N,
    KIND_ORDER,
    McSummary,
    RepRecord,
    StudyPlan,
    aggregate,
    allowed_assumed_kinds,
    consistent_combination,
    derive_seed,
    fisher_check,
    record_sort_key,
    run_condition,
    run_plan,
    structural_path_keys,
)
from semlab.model_ir import ConstructKind

COND = DesignCondition("exogenous", ConstructKind.LATENT, 100, 3, 0.5, True)


def make_record(rep, betas, admissible=True, flags=None, condition=COND):
    return RepRecord(
        condition=condition,
        assumed_kind=ConstructKind.LATENT,
        estimator="ml",
        rep=rep,
        seed=rep,
        sample_hash=f"{rep:016x}",
        admissible=admissible,
        reason_codes=() if admissible else ("nonconvergence",),
        betas=betas,
        F_min=0.1,
        T=9.9,
        df=87,
        p_value=0.5,
        srmr=0.02,
        cfi=0.99,
        rmsea=0.01,
        cr_min=0.85,
        ave_min=0.64,
        flags=flags or {},
    )


class TestSeeding:
    def test_seed_depends_on_all_inputs(self):
        s = derive_seed(0, COND.label, 0)
        assert s == derive_seed(0, COND.label, 0)
        assert s != derive_seed(1, COND.label, 0)
        assert s != derive_seed(0, COND.label, 1)
        assert s != derive_seed(0, "other-label", 0)

    def test_seed_is_64_bit(self):
        for rep in range(50):
            assert 0 <= derive_seed(12345, COND.label, rep) < 2**64


class TestAggregate:
    def test_two_point_oracle(self):
        # estimates straddling the targets symmetrically: zero bias,
        # variance (0.1^2 + 0.1^2) / (2 - 1) = 0.02 per path
        records = [
            make_record(0, (0.3, 0.2, 0.1)),
            make_record(1, (0.5, 0.4, 0.3)),
        ]
        (s,) = aggregate(records)
        assert s.n_attempts == 2
        assert s.n_admissible == 2
        assert s.estimable
        assert s.theta0 == STD_PATHS
        assert s.bias == pytest.approx((0.0, 0.0, 0.0), abs=1e-15)
        assert s.variance == pytest.approx((0.02, 0.02, 0.02), abs=1e-15)
        assert s.mse == pytest.approx((0.02, 0.02, 0.02), abs=1e-15)

    def test_mse_identity(self):
        rng = np.random.default_rng(8)
        betas = rng.normal(0.4, 0.05, size=(9, 3))
        records = [make_record(i, tuple(b)) for i, b in enumerate(betas)]
        (s,) = aggregate(records)
        N = len(betas)
        for j in range(3):
            est = betas[:, j]
            bias = est.mean() - STD_PATHS[j]
            var = est.var(ddof=1)
            assert s.bias[j] == pytest.approx(bias, abs=1e-14)
            assert s.variance[j] == pytest.approx(var, abs=1e-14)
            assert s.mse[j] == pytest.approx(bias**2 + var, abs=1e-14)
            # the raw second moment uses the N divisor, hence the factor
            direct = np.mean((est - STD_PATHS[j]) ** 2)
            assert direct == pytest.approx(
                bias**2 + (N - 1) / N * var, abs=1e-14
            )

    def test_inadmissible_records_excluded_from_moments(self):
        records = [
            make_record(0, (0.3, 0.2, 0.1)),
            make_record(1, (0.5, 0.4, 0.3)),
            make_record(2, (9.0, 9.0, 9.0), admissible=False),
        ]
        (s,) = aggregate(records)
        assert s.n_attempts == 3
        assert s.n_admissible == 2
        assert s.inadmissibility_pct == pytest.approx(1.0 / 3.0)
        assert s.bias == pytest.approx((0.0, 0.0, 0.0), abs=1e-15)

    def test_single_admissible_fit_not_estimable(self):
        records = [
            make_record(0, (0.4, 0.3, 0.2)),
            make_record(1, (0.5, 0.4, 0.3), admissible=False),
        ]
        (s,) = aggregate(records)
        assert not s.estimable
        assert all(math.isnan(b) for b in s.bias)

    def test_flag_rates_ignore_none_votes(self):
        records = [
            make_record(0, (0.4, 0.3, 0.2), flags={"chi2": True, "cr": None}),
            make_record(1, (0.4, 0.3, 0.2), flags={"chi2": False, "cr": None}),
            make_record(2, (0.4, 0.3, 0.2), flags={"chi2": True, "cr": None}),
        ]
        (s,) = aggregate(records)
        assert s.flag_rates["chi2"] == pytest.approx(2.0 / 3.0)
        assert s.flag_rates["cr"] is None

    def test_order_invariance(self):
        rng = np.random.default_rng(5)
        records = [
            make_record(i, tuple(rng.normal(0.4, 0.1, 3)), admissible=i % 4 != 3)
            for i in range(12)
        ]
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert repr(aggregate(shuffled)) == repr(aggregate(records))

    def test_truncation_marker(self):
        records = [make_record(i, (0.4, 0.3, 0.2)) for i in range(3)]
        (s_exact,) = aggregate(records, target_admissible=3)
        (s_short,) = aggregate(records, target_admissible=5)
        assert not s_exact.truncated
        assert s_short.truncated


class TestStudyPlan:
    def test_pls_formative_assumed_raises(self):
        with pytest.raises(ValueError, match="causal-formative"):
            StudyPlan(
                (COND,), "pls",
                assumed_kinds=(ConstructKind.CAUSAL_FORMATIVE,),
            )

    def test_empty_cell_raises(self):
        endo = DesignCondition(
            "endogenous", ConstructKind.LATENT, 100, 3, 0.5, True
        )
        with pytest.raises(ValueError, match="no assumed model"):
            StudyPlan(
                (endo,), "ml",
                assumed_kinds=(ConstructKind.CAUSAL_FORMATIVE,),
            )

    def test_unknown_estimator_raises(self):
        with pytest.raises(ValueError, match="estimator"):
            StudyPlan((COND,), "gls")

    def test_no_conditions_raises(self):
        with pytest.raises(ValueError, match="condition"):
            StudyPlan((), "ml")

    def test_structural_path_keys(self):
        assert structural_path_keys("exogenous") == (
            ("focal", "aux1"), ("focal", "aux2"), ("focal", "aux3")
        )
        assert structural_path_keys("endogenous") == (
            ("aux1", "focal"), ("aux2", "focal"), ("aux3", "focal")
        )


class TestRunCondition:
    def test_samples_shared_across_assumed_models(self):
        records = run_condition(
            COND, "ml",
            (ConstructKind.LATENT, ConstructKind.COMPOSITE),
            target_admissible=3, attempt_cap_multiplier=20.0, master_seed=0,
        )
        by_rep: dict[int, set[str]] = {}
        for r in records:
            by_rep.setdefault(r.rep, set()).add(r.sample_hash)
        for rep, hashes in by_rep.items():
            assert len(hashes) == 1, f"rep {rep} used different samples"

    def test_samples_shared_across_estimators(self):
        kwargs = dict(
            target_admissible=3, attempt_cap_multiplier=20.0, master_seed=0
        )
        ml = run_condition(COND, "ml", (ConstructKind.LATENT,), **kwargs)
        pls = run_condition(COND, "pls", (ConstructKind.LATENT,), **kwargs)
        ml_hashes = {r.rep: r.sample_hash for r in ml}
        pls_hashes = {r.rep: r.sample_hash for r in pls}
        common = set(ml_hashes) & set(pls_hashes)
        assert common
        for rep in common:
            assert ml_hashes[rep] == pls_hashes[rep]

    def test_fixed_attempt_design_truncates(self):
        # multiplier 1 fixes the draw count; pls at n=100 rejects enough
        # correct-composite fits that the target is out of reach
        cond = DesignCondition(
            "exogenous", ConstructKind.COMPOSITE, 100, 3, 0.5, True
        )
        plan = StudyPlan(
            (cond,), "pls", assumed_kinds=(ConstructKind.COMPOSITE,),
            target_admissible=40, attempt_cap_multiplier=1.0, master_seed=7,
        )
        _, (s,) = run_plan(plan)
        assert s.n_attempts == 40
        assert s.n_admissible == 15
        assert s.truncated
        assert s.inadmissibility_pct == pytest.approx(25.0 / 40.0)


class TestRunPlan:
    def test_worker_count_does_not_change_results(self):
        lat = DesignCondition("exogenous", ConstructKind.LATENT, 100, 3, 0.5, True)
        comp = DesignCondition(
            "exogenous", ConstructKind.COMPOSITE, 100, 3, 0.5, True
        )
        plan = StudyPlan(
            (lat, comp), "ml", assumed_kinds=(ConstructKind.LATENT,),
            target_admissible=4, master_seed=3,
        )
        rec1, sum1 = run_plan(plan, workers=1)
        rec2, sum2 = run_plan(plan, workers=2)
        assert repr(rec1) == repr(rec2)
        assert repr(sum1) == repr(sum2)

    def test_records_sorted_canonically(self):
        plan = StudyPlan(
            (COND,), "ml", target_admissible=2, master_seed=1
        )
        records, _ = run_plan(plan)
        assert records == sorted(records, key=record_sort_key)


class TestFisher:
    def test_combination_counts(self):
        ml_combos = []
        pls_combos = []
        for position in ("exogenous", "endogenous"):
            for dgp in KIND_ORDER:
                if position == "endogenous" and (
                    dgp is ConstructKind.CAUSAL_FORMATIVE
                ):
                    continue
                cond = DesignCondition(position, dgp, FISHER_N, 3, 0.5, True)
                for est, bucket in (("ml", ml_combos), ("pls", pls_combos)):
                    for assumed in allowed_assumed_kinds(cond, est):
                        bucket.append(
                            consistent_combination(position, dgp, assumed, est)
                        )
        assert len(ml_combos) == 13
        assert sum(ml_combos) == 7
        assert len(pls_combos) == 10
        assert sum(pls_combos) == 4

    def test_consistent_cell_passes(self):
        res = fisher_check(COND, ConstructKind.LATENT, "ml")
        assert res.expected_consistent
        assert res.passed
        assert res.max_deviation < 1e-6

    def test_inconsistent_cell_passes_with_deviation(self):
        comp = DesignCondition(
            "exogenous", ConstructKind.COMPOSITE, 300, 3, 0.5, True
        )
        res = fisher_check(comp, ConstructKind.LATENT, "ml")
        assert not res.expected_consistent
        assert res.passed
        assert res.max_deviation > 1e-3

    def test_inadmissible_population_fit_fails(self):
        # weakly correlated indicators push the misspecified construct
        # correlation matrix outside PD; the check must fail outright
        # rather than credit the deviation
        comp = DesignCondition(
            "endogenous", ConstructKind.COMPOSITE, 300, 3, 0.1, True
        )
        res = fisher_check(comp, ConstructKind.LATENT, "ml")
        assert not res.admissible
        assert not res.passed
        assert "nonPD_construct_cov" in res.reason_codes
        assert res.max_deviation > 1e-3  # deviation alone would have passed

    def test_disallowed_combination_raises(self):
        endo = DesignCondition(
            "endogenous", ConstructKind.LATENT, 300, 3, 0.5, True
        )
        with pytest.raises(ValueError, match="cannot be assumed"):
            fisher_check(endo, ConstructKind.CAUSAL_FORMATIVE, "ml")


class TestCrossFittingBias:
    def test_misfit_direction_asymmetry(self):
        # composite model on latent data attenuates the first path;
        # latent model on composite data inflates it by more
        lat = DesignCondition("exogenous", ConstructKind.LATENT, 500, 5, 0.3, True)
        comp = DesignCondition(
            "exogenous", ConstructKind.COMPOSITE, 500, 5, 0.3, True
        )
        _, (s_cl,) = run_plan(StudyPlan(
            (lat,), "ml", assumed_kinds=(ConstructKind.COMPOSITE,),
            target_admissible=60, attempt_cap_multiplier=3.0, master_seed=11,
        ))
        _, (s_lc,) = run_plan(StudyPlan(
            (comp,), "ml", assumed_kinds=(ConstructKind.LATENT,),
            target_admissible=60, attempt_cap_multiplier=3.0, master_seed=11,
        ))
        assert s_cl.bias[0] < -0.01
        assert s_lc.bias[0] > 0.01
        assert abs(s_lc.bias[0]) > abs(s_cl.bias[0])
