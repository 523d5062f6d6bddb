"""Model IR: spec validation, compilation, degrees of freedom,
standardization."""

import numpy as np
import pytest

from semlab.model_ir import (
    Constraint,
    Construct,
    ConstructKind,
    ModelSpec,
    augment_causal_formative,
    check_emitted_paths,
    degrees_of_freedom,
    implied_covariance,
    parameterize,
    spec_from_json,
    spec_to_json,
    standardize,
    substantive_paths,
)
from semlab.dgp import STD_PATHS, build_population, design_grid, study_spec
from semlab.cli import DF_ORACLE


def latent(name, exogenous=True):
    return Construct(name, ConstructKind.LATENT, exogenous)


def one_factor_spec():
    return ModelSpec(
        constructs=(latent("f"),),
        indicators={"f": ("x1", "x2", "x3", "x4")},
    )


class TestSpecValidation:
    def test_duplicate_construct_names_raise(self):
        with pytest.raises(ValueError, match="duplicate"):
            ModelSpec(
                constructs=(latent("f"), latent("f")),
                indicators={"f": ("x1",)},
            )

    def test_indicator_in_two_blocks_raises(self):
        with pytest.raises(ValueError, match="exactly one block"):
            ModelSpec(
                constructs=(latent("a"), latent("b")),
                indicators={"a": ("x1", "x2"), "b": ("x1", "x3")},
            )

    def test_unknown_path_target_raises(self):
        with pytest.raises(ValueError, match="unknown construct"):
            ModelSpec(
                constructs=(latent("a"),),
                indicators={"a": ("x1",)},
                paths=(("a", "ghost"),),
            )

    def test_cycle_raises(self):
        a = latent("a", exogenous=False)
        b = latent("b", exogenous=False)
        with pytest.raises(ValueError, match="cycle"):
            ModelSpec(
                constructs=(a, b),
                indicators={"a": ("x1",), "b": ("x2",)},
                paths=(("a", "b"), ("b", "a")),
            )

    def test_exogenous_receiving_path_raises(self):
        with pytest.raises(ValueError, match="exogenous"):
            ModelSpec(
                constructs=(latent("a"), latent("b")),
                indicators={"a": ("x1",), "b": ("x2",)},
                paths=(("a", "b"),),
            )

    def test_constraint_unknown_matrix_raises(self):
        with pytest.raises(ValueError, match="unknown matrix"):
            Constraint("Gamma", "a", "b", 1.0)


class TestJsonRoundTrip:
    @pytest.mark.parametrize("kind", list(ConstructKind))
    @pytest.mark.parametrize("position", ["exogenous", "endogenous"])
    def test_study_specs_round_trip(self, position, kind):
        if position == "endogenous" and kind is ConstructKind.CAUSAL_FORMATIVE:
            pytest.skip("combination excluded from the study")
        spec = study_spec(position, kind, 5)
        assert spec_from_json(spec_to_json(spec)) == spec

    def test_round_trip_preserves_constraints_and_free_cells(self):
        spec = ModelSpec(
            constructs=(latent("a"), latent("b", exogenous=False)),
            indicators={"a": ("x1", "x2"), "b": ("y1", "y2")},
            paths=(("a", "b"),),
            constraints=(Constraint("Theta", "x1", "x1", 0.0),),
            free_cells=(("Lambda", "y1", "a"),),
        )
        again = spec_from_json(spec_to_json(spec))
        assert again == spec
        assert again.constraints == spec.constraints
        assert again.free_cells == spec.free_cells


class TestDegreesOfFreedom:
    def test_single_latent_four_indicators(self):
        # 10 moments, 3 free loadings + 4 error variances + 1 factor
        # variance = 8 parameters
        table = parameterize(one_factor_spec())
        assert table.n_free == 8
        assert degrees_of_freedom(table) == 2

    @pytest.mark.parametrize("key,expected", sorted(DF_ORACLE.items(), key=str))
    def test_study_models_match_counting_oracle(self, key, expected):
        position, kind, K = key
        spec = study_spec(position, kind, K)
        if kind is ConstructKind.CAUSAL_FORMATIVE:
            spec = augment_causal_formative(spec)
        assert degrees_of_freedom(parameterize(spec)) == expected


class TestAugmentCausalFormative:
    def test_structure(self):
        spec = study_spec("exogenous", ConstructKind.CAUSAL_FORMATIVE, 3)
        aug = augment_causal_formative(spec)
        focal = aug.construct("focal")
        assert not focal.exogenous  # receives paths from the proxies now
        proxies = [c for c in aug.constructs if c.role == "proxy"]
        assert len(proxies) == 3
        assert all(c.parent == "focal" for c in proxies)
        assert all(c.exogenous for c in proxies)
        # each proxy keeps its x indicator with loading fixed 1, error 0
        for c in proxies:
            block = aug.block(c.name)
            assert len(block) == 1
            x = block[0]
            assert any(
                k.matrix == "Lambda" and k.row == x and k.col == c.name
                and k.value == 1.0
                for k in aug.constraints
            )
            assert any(
                k.matrix == "Theta" and k.row == x and k.col == x
                and k.value == 0.0
                for k in aug.constraints
            )

    def test_idempotent(self):
        spec = study_spec("exogenous", ConstructKind.CAUSAL_FORMATIVE, 5)
        aug = augment_causal_formative(spec)
        assert augment_causal_formative(aug) == aug

    def test_preserves_implied_covariance(self):
        # spot check on the population point: compiled causal-formative
        # model must reproduce Sigma0
        grid = design_grid()
        cond = next(
            c for c in grid
            if c.position == "exogenous"
            and c.dgp_kind is ConstructKind.CAUSAL_FORMATIVE
            and c.n == 300 and c.K == 3 and c.sigma == 0.5 and c.homogeneous
        )
        pop = build_population(cond)
        assert np.max(np.abs(implied_covariance(pop.theta0) - pop.Sigma0)) < 1e-12


class TestImpliedCovariance:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_symmetric_at_random_points(self, seed):
        table = parameterize(study_spec("endogenous", ConstructKind.LATENT, 3))
        rng = np.random.default_rng(seed)
        pt = table.with_theta(table.theta() + 0.3 * rng.standard_normal(table.n_free))
        Sigma = implied_covariance(pt)
        assert np.array_equal(Sigma, Sigma.T)


class TestStandardize:
    def test_population_paths_recovered(self):
        grid = design_grid()
        for cond in grid:
            if not (cond.n == 300 and cond.K == 3 and cond.sigma == 0.5
                    and cond.homogeneous):
                continue
            pop = build_population(cond)
            std = standardize(pop.theta0)
            got = [std[p] for p in substantive_paths(pop.theta0)]
            assert np.allclose(got, STD_PATHS, atol=1e-10), cond.label

    def test_invariant_under_rescaling(self):
        # move the focal latent's scale from its first loading to a
        # different magnitude; standardized paths must not move
        cond = next(
            c for c in design_grid()
            if c.position == "exogenous" and c.dgp_kind is ConstructKind.LATENT
            and c.n == 300 and c.K == 3 and c.sigma == 0.5 and c.homogeneous
        )
        pop = build_population(cond)
        table = pop.theta0
        before = standardize(table)
        scale = 2.0
        focal_block = [pop.indicator_names[i] for i in table.block_of("focal")]
        cells = [("Lambda", x, "focal", table.Lambda[
            table.indicator_names.index(x), table.construct_names.index("focal")
        ] / scale) for x in focal_block]
        cells.append(("Psi", "focal", "focal", table.Psi[
            table.construct_names.index("focal"),
            table.construct_names.index("focal")] * scale ** 2))
        i_focal = table.construct_names.index("focal")
        for j, name in enumerate(table.construct_names):
            if table.B[j, i_focal] != 0.0:
                cells.append(("B", name, "focal", table.B[j, i_focal] / scale))
        rescaled = table.with_cells(cells)
        assert np.max(np.abs(implied_covariance(rescaled) - pop.Sigma0)) < 1e-10
        after = standardize(rescaled)
        for key in before:
            assert after[key] == pytest.approx(before[key], abs=1e-10)

    def test_scaling_constraint_choice_irrelevant_at_optimum(self):
        # fixing the construct variance instead of anchoring the first
        # loading reparameterizes the same model; the fitted standardized
        # paths must coincide
        import dataclasses

        from semlab.dgp import draw_sample, normalize_to_population
        from semlab.ml import fit_ml

        spec = study_spec("exogenous", ConstructKind.LATENT, 3)
        alt = dataclasses.replace(
            spec,
            constraints=spec.constraints
            + (Constraint("Psi", "focal", "focal", 1.0),),
            free_cells=spec.free_cells + (("Lambda", "x1", "focal"),),
        )
        cond = next(
            c for c in design_grid()
            if c.position == "exogenous" and c.dgp_kind is ConstructKind.LATENT
            and c.n == 300 and c.K == 3 and c.sigma == 0.5 and c.homogeneous
        )
        pop = build_population(cond)
        X = normalize_to_population(draw_sample(pop, 300, seed=3), pop.Sigma0)
        rng = np.random.default_rng(4)
        S = np.cov(X + 0.3 * rng.standard_normal(X.shape), rowvar=False, ddof=1)
        r1 = fit_ml(parameterize(spec), S, 300)
        r2 = fit_ml(parameterize(alt), S, 300)
        assert r1.converged and r2.converged
        assert r1.F_min == pytest.approx(r2.F_min, abs=1e-10)
        for key, val in r1.std_paths.items():
            assert r2.std_paths[key] == pytest.approx(val, abs=1e-10)

    def test_substantive_paths_exclude_technical_edges(self):
        spec = augment_causal_formative(
            study_spec("exogenous", ConstructKind.CAUSAL_FORMATIVE, 3)
        )
        table = parameterize(spec)
        paths = substantive_paths(table)
        assert len(paths) == 3
        assert all("focal" in p or any(a in p for a in ("aux1", "aux2", "aux3"))
                   for p in paths)
        for src, dst in paths:
            assert spec.construct(src).role == "substantive"
            assert spec.construct(dst).role == "substantive"


class TestEmittedPaths:
    def test_isolated_formative_violates(self):
        spec = ModelSpec(
            constructs=(Construct("f", ConstructKind.CAUSAL_FORMATIVE, True),),
            indicators={"f": ("x1", "x2", "x3")},
        )
        assert check_emitted_paths(spec) == ["f"]

    def test_formative_with_three_outgoing_ok(self):
        spec = study_spec("exogenous", ConstructKind.CAUSAL_FORMATIVE, 3)
        assert check_emitted_paths(spec) == []

    def test_formative_with_no_outgoing_violates(self):
        # receiving paths only: the structural disturbance has nothing
        # to identify it
        spec = ModelSpec(
            constructs=(
                latent("a"),
                Construct("f", ConstructKind.CAUSAL_FORMATIVE, False),
            ),
            indicators={"a": ("y1", "y2", "y3"), "f": ("x1", "x2")},
            paths=(("a", "f"),),
        )
        assert "f" in check_emitted_paths(spec)
