"""Composite/latent path estimation with disattenuation.

Population checks run on samples rescaled so their covariance equals the
target exactly; at that point a consistent estimator must return the
design paths up to iteration tolerance.
"""

import numpy as np
import pytest

from semlab.dgp import (
    DesignCondition,
    build_population,
    draw_sample,
    normalize_to_population,
    study_spec,
)
from semlab.model_ir import Construct, ConstructKind, ModelSpec
from semlab.pls import (
    LOADING_ABOVE_ONE,
    NONPD_CONSTRUCT_COV,
    check_admissibility_pls,
    default_config,
    dijkstra_reliability,
    fit_pls,
    plsc_correct,
    pls_weights,
)

PATHS = {"aux1": 0.4, "aux2": 0.3, "aux3": 0.2}


def population_data(position, kind, K=3, sigma=0.5, n=2000, seed=5):
    cond = DesignCondition(position, kind, 300, K, sigma, True)
    pop = build_population(cond)
    X = draw_sample(pop, n, seed=seed)
    return normalize_to_population(X, pop.Sigma0), pop


class TestPopulationRecovery:
    @pytest.mark.parametrize("kind", [ConstructKind.LATENT, ConstructKind.COMPOSITE])
    @pytest.mark.parametrize("position", ["exogenous", "endogenous"])
    def test_correct_model_recovers_paths(self, position, kind):
        X, pop = population_data(position, kind)
        res = fit_pls(study_spec(position, kind, 3), X)
        assert res.converged
        assert res.admissible, res.reason_codes
        for (src, dst), beta in res.std_paths.items():
            other = src if dst == "focal" else dst
            assert abs(abs(beta) - PATHS[other]) < 1e-6, (src, dst)

    def test_latent_assumed_on_formative_population_deviates(self):
        X, pop = population_data("exogenous", ConstructKind.CAUSAL_FORMATIVE)
        res = fit_pls(study_spec("exogenous", ConstructKind.LATENT, 3), X)
        devs = [
            abs(abs(beta) - PATHS[dst]) for (src, dst), beta in res.std_paths.items()
        ]
        assert max(devs) > 1e-3

    def test_composite_assumed_on_latent_population_deviates(self):
        X, pop = population_data("exogenous", ConstructKind.LATENT)
        res = fit_pls(study_spec("exogenous", ConstructKind.COMPOSITE, 3), X)
        devs = [
            abs(abs(beta) - PATHS[dst]) for (src, dst), beta in res.std_paths.items()
        ]
        assert max(devs) > 1e-3


class TestWeights:
    def test_unit_score_variance_per_block(self):
        X, pop = population_data("exogenous", ConstructKind.COMPOSITE)
        spec = study_spec("exogenous", ConstructKind.COMPOSITE, 3)
        Xs = (X - X.mean(axis=0))
        Xs = Xs / Xs.std(axis=0, ddof=1)
        fitted = pls_weights(Xs, spec, default_config(spec))
        S = np.cov(Xs, rowvar=False, ddof=1)
        cols = {x: i for i, x in enumerate(
            x for c in spec.constructs for x in spec.block(c.name)
        )}
        for c in spec.constructs:
            ix = [cols[x] for x in spec.block(c.name)]
            w = fitted.weights[c.name]
            assert w @ S[np.ix_(ix, ix)] @ w == pytest.approx(1.0, abs=1e-10)

    def test_block_permutation_equivariance(self):
        # reordering constructs (and the data columns to match) must not
        # change any named path estimate
        X, pop = population_data("exogenous", ConstructKind.LATENT, n=500, seed=9)
        spec = study_spec("exogenous", ConstructKind.LATENT, 3)
        res = fit_pls(spec, X)

        order = ["aux2", "focal", "aux3", "aux1"]
        permuted = ModelSpec(
            constructs=tuple(spec.construct(n) for n in order),
            indicators={n: spec.block(n) for n in order},
            paths=spec.paths,
        )
        col_of = {x: i for i, x in enumerate(pop.indicator_names)}
        perm_cols = [col_of[x] for n in order for x in spec.block(n)]
        res_p = fit_pls(permuted, X[:, perm_cols])

        assert set(res.std_paths) == set(res_p.std_paths)
        for key in res.std_paths:
            assert res_p.std_paths[key] == pytest.approx(
                res.std_paths[key], abs=1e-9
            )


class TestDisattenuation:
    def test_rho_a_population_value(self):
        # auxiliary block: 4 indicators, loadings 0.8. With score-variance
        # normalized equal weights, rho_A = (sum lam)^2 / (1' Sbb 1)
        # = 10.24 / 11.68
        Sbb = np.full((4, 4), 0.64) + 0.36 * np.eye(4)
        w = np.full(4, 1.0 / np.sqrt(11.68))
        assert w @ Sbb @ w == pytest.approx(1.0, abs=1e-12)
        rho = dijkstra_reliability(w, Sbb)
        assert rho == pytest.approx(10.24 / 11.68, abs=1e-12)
        assert rho == pytest.approx(0.8767123287671233, abs=1e-12)

    def test_single_indicator_block_reliability_one(self):
        assert dijkstra_reliability(np.array([1.0]), np.array([[1.0]])) == 1.0

    def test_composite_blocks_keep_reliability_one(self):
        X, pop = population_data("exogenous", ConstructKind.COMPOSITE)
        res = fit_pls(study_spec("exogenous", ConstructKind.COMPOSITE, 3), X)
        assert res.reliabilities["focal"] == 1.0

    def test_correction_recovers_attenuated_correlation(self):
        # two latent blocks correlated at 0.5 with loadings 0.8: the raw
        # proxy correlation is rho * 0.5; dividing by sqrt(rho_i rho_j)
        # restores 0.5
        spec = ModelSpec(
            constructs=(
                Construct("a", ConstructKind.LATENT, True),
                Construct("b", ConstructKind.LATENT, False),
            ),
            indicators={
                "a": ("a1", "a2", "a3", "a4"),
                "b": ("b1", "b2", "b3", "b4"),
            },
            paths=(("a", "b"),),
        )
        lam = np.full(4, 0.8)
        Sbb = np.outer(lam, lam) + np.diag(1 - lam**2)
        Sab = 0.5 * np.outer(lam, lam)
        Sigma = np.block([[Sbb, Sab], [Sab.T, Sbb]])
        rng = np.random.default_rng(21)
        X = rng.multivariate_normal(np.zeros(8), Sigma, size=600)
        X = normalize_to_population(X, Sigma)
        res = fit_pls(spec, X)
        assert res.admissible
        assert res.reliabilities["a"] == pytest.approx(10.24 / 11.68, abs=1e-6)
        assert res.std_paths[("a", "b")] == pytest.approx(0.5, abs=1e-6)

    def test_nan_reliability_product_poisons_cell_not_process(self):
        # a negative reliability must yield NaN corrected correlations and
        # an inadmissible verdict, not a crash
        spec = ModelSpec(
            constructs=(
                Construct("a", ConstructKind.LATENT, True),
                Construct("b", ConstructKind.LATENT, False),
            ),
            indicators={"a": ("a1", "a2"), "b": ("b1", "b2")},
            paths=(("a", "b"),),
        )
        weights = {"a": np.array([0.9, -0.9]), "b": np.array([0.7, 0.7])}
        S = np.eye(4)
        S[0, 1] = S[1, 0] = 0.5
        S[2, 3] = S[3, 2] = 0.5
        S[0, 2] = S[2, 0] = 0.3
        raw = np.array([[1.0, 0.2], [0.2, 1.0]])
        loadings, rho, corrected = plsc_correct(weights, S, spec, raw)
        assert rho["a"] < 0 or not np.isfinite(rho["a"])
        assert np.isnan(corrected[0, 1])
        ok, codes = check_admissibility_pls(True, loadings, rho, corrected)
        assert not ok
        assert NONPD_CONSTRUCT_COV in codes


class TestAdmissibility:
    def test_loading_above_one_flagged(self):
        loadings = {"a": np.array([1.2, 0.8])}
        ok, codes = check_admissibility_pls(
            True, loadings, {"a": 0.9}, np.eye(2)
        )
        assert not ok
        assert LOADING_ABOVE_ONE in codes

    def test_clean_fit_passes(self):
        ok, codes = check_admissibility_pls(
            True, {"a": np.array([0.8, 0.7])}, {"a": 0.85}, np.eye(2)
        )
        assert ok
        assert codes == ()


class TestFormativeRejection:
    def test_fit_raises(self):
        spec = study_spec("exogenous", ConstructKind.CAUSAL_FORMATIVE, 3)
        X = np.random.default_rng(0).standard_normal((100, 15))
        with pytest.raises(ValueError, match="causal-formative"):
            fit_pls(spec, X)

    def test_default_config_raises(self):
        spec = study_spec("exogenous", ConstructKind.CAUSAL_FORMATIVE, 3)
        with pytest.raises(ValueError, match="causal-formative"):
            default_config(spec)
