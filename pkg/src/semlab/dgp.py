"""Population models and samplers for the simulation study.

Every population contains one focal construct measured by K indicators
(its indicator-construct relation is the thing being varied: latent,
causal-formative, or composite) and three auxiliary latent constructs,
each with four indicators loading 0.8 and error variance 0.36. In the
exogenous design the focal construct feeds the three others with
standardized coefficients (0.4, 0.3, 0.2); in the endogenous design the
three others (mutually uncorrelated) feed it. All indicators have unit
variance, so the population covariance is a correlation matrix.

Populations are assembled analytically block by block and carried both
as a covariance matrix and as a true parameter table for the matching
correctly specified analysis model; the two agree exactly, which the
test suite uses as a cross-check. Samples are drawn construct-first so
per-row identities (a composite is exactly its weighted indicator sum)
hold in every draw, not just in expectation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model_ir import (
    Construct,
    ConstructKind,
    ModelSpec,
    ParamTable,
    implied_covariance,
    parameterize,
)
from .hospec import excrescent_names

__all__ = [
    "DesignCondition",
    "PopulationModel",
    "Recipe",
    "design_grid",
    "study_spec",
    "indicator_correlations",
    "composite_weights",
    "eta_star_loadings",
    "build_population",
    "draw_sample",
    "normalize_to_population",
    "population_to_json",
    "STD_PATHS",
    "FOCAL",
    "AUX",
]

STD_PATHS = (0.4, 0.3, 0.2)
AUX_LOADING = 0.8
AUX_ERROR_VAR = 0.36
AUX_BLOCK_SIZE = 4
FORMATIVE_DISTURBANCE_VAR = 0.25

POSITIONS = ("exogenous", "endogenous")
SAMPLE_SIZES = (100, 300, 500)
BLOCK_SIZES = (3, 5, 7)
BASE_CORRELATIONS = (0.1, 0.3, 0.5)

FOCAL = "focal"
AUX = ("aux1", "aux2", "aux3")

_KIND_TAG = {
    ConstructKind.LATENT: "lat",
    ConstructKind.CAUSAL_FORMATIVE: "form",
    ConstructKind.COMPOSITE: "comp",
}


@dataclass(frozen=True)
class DesignCondition:
    """One cell of the simulation design.

    position says whether the focal construct is exogenous (it feeds the
    three auxiliary constructs) or endogenous (they feed it); dgp_kind is
    the focal construct's true indicator-construct relation; K its
    indicator count; sigma the base inter-indicator correlation, either
    homogeneous or spread equidistantly over sigma +/- 0.1.
    """

    position: str
    dgp_kind: ConstructKind
    n: int
    K: int
    sigma: float
    homogeneous: bool

    def __post_init__(self) -> None:
        if self.position not in POSITIONS:
            raise ValueError(f"position must be one of {POSITIONS}")
        if (
            self.position == "endogenous"
            and self.dgp_kind is ConstructKind.CAUSAL_FORMATIVE
        ):
            # an endogenous causal-formative construct would emit no paths
            # and is unidentified; the design excludes the combination
            raise ValueError(
                "endogenous causal-formative populations are not identified"
            )
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must be in (0, 1)")

    @property
    def label(self) -> str:
        pos = "exo" if self.position == "exogenous" else "endo"
        hom = "hom" if self.homogeneous else "het"
        return (
            f"{pos}-{_KIND_TAG[self.dgp_kind]}-n{self.n}"
            f"-K{self.K}-s{self.sigma:g}-{hom}"
        )


def design_grid() -> tuple[DesignCondition, ...]:
    """All valid design cells crossed with the valid focal kinds.

    The (position, n, K, sigma, homogeneous) projection has 108 cells;
    crossing in dgp_kind (three exogenous, two endogenous) gives 270.
    """
    out = []
    for position in POSITIONS:
        for kind in ConstructKind:
            if position == "endogenous" and kind is ConstructKind.CAUSAL_FORMATIVE:
                continue
            for n in SAMPLE_SIZES:
                for K in BLOCK_SIZES:
                    for sigma in BASE_CORRELATIONS:
                        for homogeneous in (True, False):
                            out.append(
                                DesignCondition(
                                    position, kind, n, K, sigma, homogeneous
                                )
                            )
    return tuple(out)


def study_spec(position: str, kind: ConstructKind, K: int) -> ModelSpec:
    """Analysis model for one design cell: the focal construct with K
    indicators under `kind`, three auxiliary latents with four indicators
    each, and the three structural paths of the given position."""
    if position not in POSITIONS:
        raise ValueError(f"position must be one of {POSITIONS}")
    exogenous = position == "exogenous"
    focal = Construct(FOCAL, kind, exogenous=exogenous)
    aux = [
        Construct(name, ConstructKind.LATENT, exogenous=not exogenous)
        for name in AUX
    ]
    indicators: dict[str, tuple[str, ...]] = {
        FOCAL: tuple(f"x{i}" for i in range(1, K + 1))
    }
    for j, name in enumerate(AUX, start=1):
        indicators[name] = tuple(
            f"y{j}{k}" for k in range(1, AUX_BLOCK_SIZE + 1)
        )
    # declaration order = causal order, so indicator columns line up with
    # the compiled table in both positions
    if exogenous:
        constructs = [focal, *aux]
        paths = tuple((FOCAL, a) for a in AUX)
    else:
        constructs = [*aux, focal]
        paths = tuple((a, FOCAL) for a in AUX)
    return ModelSpec(tuple(constructs), indicators, paths)


def indicator_correlations(K: int, sigma: float, homogeneous: bool) -> np.ndarray:
    """Correlation matrix of the focal indicators.

    Heterogeneous blocks spread the K(K-1)/2 off-diagonal values
    equidistantly from sigma-0.1 to sigma+0.1, assigned in lexicographic
    pair order (1,2), (1,3), ..., (K-1,K).
    """
    if K < 2:
        raise ValueError("need at least two indicators")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must be in (0, 1)")
    S = np.eye(K)
    if homogeneous:
        S[~np.eye(K, dtype=bool)] = sigma
    else:
        n_pairs = K * (K - 1) // 2
        vals = (
            np.linspace(sigma - 0.1, sigma + 0.1, n_pairs)
            if n_pairs > 1
            else np.array([sigma])
        )
        k = 0
        for i in range(K):
            for j in range(i + 1, K):
                S[i, j] = S[j, i] = vals[k]
                k += 1
    if np.linalg.eigvalsh(S).min() <= 0.0:
        raise ValueError(
            f"indicator correlations not positive definite (K={K}, sigma={sigma})"
        )
    return S


def composite_weights(Sxx: np.ndarray) -> np.ndarray:
    """Equal weights scaled to unit composite variance: w_i = 1/sqrt(1'Sxx 1)."""
    total = float(np.sum(Sxx))
    if total <= 0.0:
        raise ValueError("indicator covariance sums to a non-positive value")
    K = Sxx.shape[0]
    return np.full(K, 1.0 / np.sqrt(total))


def eta_star_loadings(Sxx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Covariance between the focal indicators and the construct score,
    Sxx w; identical across the three focal kinds by construction."""
    return Sxx @ w


@dataclass(frozen=True)
class Recipe:
    """Generative description of a population, sufficient to draw from it.

    coeffs are the unstandardized structural coefficients on the focal
    construct's own scale; resid_vars the matching disturbance variances
    (three values for the exogenous design's auxiliary constructs, one for
    the endogenous design's focal disturbance).
    """

    position: str
    kind: ConstructKind
    w: np.ndarray
    lam_star: np.ndarray
    Sxx: np.ndarray
    coeffs: tuple[float, float, float]
    resid_vars: tuple[float, ...]
    eta_star_var: float

    def __post_init__(self) -> None:
        for arr in (self.w, self.lam_star, self.Sxx):
            arr.flags.writeable = False


@dataclass(frozen=True)
class PopulationModel:
    condition: DesignCondition
    Sigma0: np.ndarray
    theta0: ParamTable
    std_paths0: tuple[float, float, float]
    recipe: Recipe
    indicator_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        self.Sigma0.flags.writeable = False


def _hospec_population_cells(
    lam_star: np.ndarray, w: np.ndarray, Sxx: np.ndarray
) -> list[tuple[str, str, str, float]]:
    """Population values for the excrescent part of a composite block:
    free loadings a_j = w_{j+1}/w_j and the excrescent covariance matrix
    solving L Psi_nu L' = Sxx - lam lam'."""
    K = len(w)
    exc = excrescent_names(FOCAL, K)
    xs = [f"x{i}" for i in range(1, K + 1)]
    cells: list[tuple[str, str, str, float]] = []
    L = np.zeros((K, K - 1))
    for j in range(K - 1):
        a_j = w[j + 1] / w[j]
        L[j, j] = a_j
        L[j + 1, j] = -1.0
        cells.append(("Lambda", xs[j], exc[j], float(a_j)))
    M = Sxx - np.outer(lam_star, lam_star)
    Lp = np.linalg.pinv(L)
    Psi_nu = Lp @ M @ Lp.T
    for a in range(K - 1):
        for b in range(a + 1):
            cells.append(("Psi", exc[a], exc[b], float(Psi_nu[a, b])))
    return cells


def build_population(
    condition: DesignCondition,
    std_paths: tuple[float, float, float] = STD_PATHS,
) -> PopulationModel:
    """Analytic population for one design cell.

    Returns the covariance matrix assembled block by block, the true
    parameter table of the matching correctly specified analysis model
    (expressed on the population scale), and the generative recipe.
    """
    kind, K = condition.dgp_kind, condition.K
    Sxx = indicator_correlations(K, condition.sigma, condition.homogeneous)
    w = composite_weights(Sxx)
    lam_star = eta_star_loadings(Sxx, w)

    exogenous = condition.position == "exogenous"
    if exogenous:
        v_star = (
            1.0 + FORMATIVE_DISTURBANCE_VAR
            if kind is ConstructKind.CAUSAL_FORMATIVE
            else 1.0
        )
        # eta_j = c_j eta* + zeta_j with Var(eta_j) = 1
        coeffs = tuple(b / np.sqrt(v_star) for b in std_paths)
        resid = tuple(1.0 - b * b for b in std_paths)
        # construct covariance over (focal, aux1..aux3)
        C = np.ones((4, 4))
        C[0, 0] = v_star
        for j, c_j in enumerate(coeffs, start=1):
            C[0, j] = C[j, 0] = c_j * v_star
        for a in range(1, 4):
            for b in range(1, 4):
                if a != b:
                    C[a, b] = coeffs[a - 1] * coeffs[b - 1] * v_star
        order = [FOCAL, *AUX]
    else:
        v_star = 1.0
        coeffs = tuple(std_paths)
        resid = (1.0 - sum(b * b for b in std_paths),)
        C = np.eye(4)
        for j, c_j in enumerate(coeffs):
            C[j, 3] = C[3, j] = c_j
        C[3, 3] = v_star
        order = [*AUX, FOCAL]

    # cross-block loadings: Cov(indicator, any other construct) equals
    # loadvec * Cov(own construct, other); the focal block's effective
    # loading is lam*/Var(eta*) so that Cov(x, eta*) = lam* in every kind
    if kind is ConstructKind.LATENT:
        within_focal = np.outer(lam_star, lam_star) + np.diag(1.0 - lam_star**2)
    else:
        within_focal = Sxx
    loadvecs = {FOCAL: lam_star / v_star}
    withins = {FOCAL: within_focal}
    aux_lam = np.full(AUX_BLOCK_SIZE, AUX_LOADING)
    for a in AUX:
        loadvecs[a] = aux_lam
        withins[a] = np.outer(aux_lam, aux_lam) + AUX_ERROR_VAR * np.eye(
            AUX_BLOCK_SIZE
        )

    sizes = [len(loadvecs[name]) for name in order]
    p = sum(sizes)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    Sigma0 = np.zeros((p, p))
    for a, na in enumerate(order):
        sl_a = slice(offsets[a], offsets[a + 1])
        Sigma0[sl_a, sl_a] = withins[na]
        for b in range(a + 1, len(order)):
            sl_b = slice(offsets[b], offsets[b + 1])
            cross = np.outer(loadvecs[na], loadvecs[order[b]]) * C[a, b]
            Sigma0[sl_a, sl_b] = cross
            Sigma0[sl_b, sl_a] = cross.T
    if np.linalg.eigvalsh(Sigma0).min() <= 1e-10:
        raise ValueError(f"population covariance not PD for {condition.label}")

    table = parameterize(study_spec(condition.position, kind, K))
    cells: list[tuple[str, str, str, float]] = []
    xs = [f"x{i}" for i in range(1, K + 1)]
    for j, a in enumerate(AUX, start=1):
        for k in range(1, AUX_BLOCK_SIZE + 1):
            cells.append(("Lambda", f"y{j}{k}", a, AUX_LOADING))
            cells.append(("Theta", f"y{j}{k}", f"y{j}{k}", AUX_ERROR_VAR))
    if exogenous:
        if kind is not ConstructKind.CAUSAL_FORMATIVE:
            cells.append(("Psi", FOCAL, FOCAL, v_star))
        for a, c_j, v_j in zip(AUX, coeffs, resid):
            cells.append(("B", a, FOCAL, float(c_j)))
            cells.append(("Psi", a, a, v_j))
        for a in range(3):
            for b in range(a + 1, 3):
                cells.append(("Psi", AUX[a], AUX[b], 0.0))
    else:
        cells.append(("Psi", FOCAL, FOCAL, resid[0]))
        for a, c_j in zip(AUX, coeffs):
            cells.append(("B", FOCAL, a, float(c_j)))
            cells.append(("Psi", a, a, 1.0))
        for a in range(3):
            for b in range(a + 1, 3):
                cells.append(("Psi", AUX[a], AUX[b], 0.0))
    if kind is ConstructKind.LATENT:
        for x, lam in zip(xs, lam_star):
            cells.append(("Lambda", x, FOCAL, float(lam)))
            cells.append(("Theta", x, x, float(1.0 - lam * lam)))
    elif kind is ConstructKind.CAUSAL_FORMATIVE:
        # augmented form: proxy covariances carry Sxx, weights carry w
        for i in range(K):
            for j in range(i + 1):
                cells.append(
                    ("Psi", f"{xs[i]}_proxy", f"{xs[j]}_proxy", float(Sxx[i, j]))
                )
            cells.append(("B", FOCAL, f"{xs[i]}_proxy", float(w[i])))
        cells.append(("Psi", FOCAL, FOCAL, FORMATIVE_DISTURBANCE_VAR))
    else:
        for x, lam in zip(xs, lam_star):
            cells.append(("Lambda", x, FOCAL, float(lam)))
        if K >= 2:
            cells.extend(_hospec_population_cells(lam_star, w, Sxx))
    theta0 = table.with_cells(cells)

    recipe = Recipe(
        position=condition.position,
        kind=kind,
        w=w,
        lam_star=lam_star,
        Sxx=Sxx,
        coeffs=tuple(float(c) for c in coeffs),
        resid_vars=tuple(float(v) for v in resid),
        eta_star_var=float(v_star),
    )
    return PopulationModel(
        condition=condition,
        Sigma0=Sigma0,
        theta0=theta0,
        std_paths0=tuple(std_paths),
        recipe=recipe,
        indicator_names=theta0.indicator_names,
    )


def _sqrt_psd(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix; tiny negative eigenvalues
    from roundoff are clipped to zero."""
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def draw_sample(
    pop: PopulationModel,
    n: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> np.ndarray:
    """Draw n rows construct-first so that per-row identities hold exactly
    (a composite row equals its weighted indicator sum). Columns follow
    pop.indicator_names."""
    r = pop.recipe
    K = len(r.w)
    p = K + 3 * AUX_BLOCK_SIZE
    if n < p + 1:
        raise ValueError(f"need at least {p + 1} rows, got {n}")
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )

    if r.position == "exogenous":
        if r.kind is ConstructKind.LATENT:
            eta_star = rng.standard_normal(n)
            x = np.outer(eta_star, r.lam_star) + rng.standard_normal(
                (n, K)
            ) * np.sqrt(1.0 - r.lam_star**2)
        elif r.kind is ConstructKind.COMPOSITE:
            x = rng.standard_normal((n, K)) @ np.linalg.cholesky(r.Sxx).T
            eta_star = x @ r.w
        else:
            x = rng.standard_normal((n, K)) @ np.linalg.cholesky(r.Sxx).T
            eta_star = x @ r.w + rng.standard_normal(n) * np.sqrt(
                FORMATIVE_DISTURBANCE_VAR
            )
        aux = [
            c * eta_star + rng.standard_normal(n) * np.sqrt(v)
            for c, v in zip(r.coeffs, r.resid_vars)
        ]
        cols = [x]
    else:
        aux = [rng.standard_normal(n) for _ in range(3)]
        eta_star = sum(c * a for c, a in zip(r.coeffs, aux))
        eta_star = eta_star + rng.standard_normal(n) * np.sqrt(r.resid_vars[0])
        if r.kind is ConstructKind.LATENT:
            x = np.outer(eta_star, r.lam_star) + rng.standard_normal(
                (n, K)
            ) * np.sqrt(1.0 - r.lam_star**2)
        else:
            # u lives in the orthogonal complement of w, so w'x = eta* per row
            M = r.Sxx - np.outer(r.lam_star, r.lam_star)
            u = rng.standard_normal((n, K)) @ _sqrt_psd(M).T
            x = np.outer(eta_star, r.lam_star) + u
        cols = []

    for a in aux:
        y = np.outer(a, np.full(AUX_BLOCK_SIZE, AUX_LOADING))
        y += rng.standard_normal((n, AUX_BLOCK_SIZE)) * np.sqrt(AUX_ERROR_VAR)
        cols.append(y)
    if r.position == "endogenous":
        cols.append(x)
    return np.hstack(cols)


def normalize_to_population(sample: np.ndarray, Sigma0: np.ndarray) -> np.ndarray:
    """Center and linearly transform a sample so its covariance (divisor
    n-1, matching the discrepancy functions) equals Sigma0 exactly."""
    Xc = sample - sample.mean(axis=0)
    S = Xc.T @ Xc / (sample.shape[0] - 1)
    vals, vecs = np.linalg.eigh(S)
    if vals.min() <= 0.0:
        raise ValueError("sample covariance is singular; need more rows")
    S_inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    return Xc @ S_inv_sqrt @ _sqrt_psd(Sigma0)


def population_to_json(pop: PopulationModel) -> str:
    """Portable description: condition, covariance (row-major), true
    parameter matrices, standardized paths."""
    t = pop.theta0
    doc = {
        "condition": {
            "position": pop.condition.position,
            "dgp_kind": pop.condition.dgp_kind.value,
            "n": pop.condition.n,
            "K": pop.condition.K,
            "sigma": pop.condition.sigma,
            "homogeneous": pop.condition.homogeneous,
        },
        "indicator_names": list(pop.indicator_names),
        "Sigma0": [float(v) for v in pop.Sigma0.ravel(order="C")],
        "theta0": {
            "construct_names": list(t.construct_names),
            "Lambda": t.Lambda.tolist(),
            "B": t.B.tolist(),
            "Psi": t.Psi.tolist(),
            "Theta": t.Theta.tolist(),
        },
        "std_paths0": list(pop.std_paths0),
    }
    return json.dumps(doc, indent=2)
