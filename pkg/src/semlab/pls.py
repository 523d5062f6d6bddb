"""Partial-least-squares path modeling and its disattenuation-corrected
variant for latent variables.

The kernel alternates outer weight estimation (mode A: covariances with
the inner proxy; mode B: regression of the inner proxy on the block)
with inner proxy construction under a centroid, factorial, or path
weighting scheme, on column-standardized data, until the weights are
stable. Composite constructs use mode B and need no correction; latent
constructs use mode A and are disattenuated: block reliability rho_A is
estimated from the weights and the off-diagonal block covariance, and
construct correlations are divided by the square root of the reliability
product before path coefficients are computed by least squares on the
corrected correlation matrix.

Causal-formative constructs are rejected at configuration time: the
algorithm has no consistent variant for them.

For fit indices a model-implied indicator correlation matrix is
assembled from the fitted loadings and path coefficients. Latent blocks
contribute corrected loadings; composite blocks contribute the
weight-implied covariances between indicators and their construct
score, which makes the within-block implied structure rank one (plus a
diagonal) and is what lets exact-fit tests see the difference between
a saturated composite block and its factor-style projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_ir import (
    ConstructKind,
    ModelSpec,
    degrees_of_freedom,
    parameterize,
)

__all__ = [
    "PlsConfig",
    "PlsResult",
    "default_config",
    "pls_weights",
    "plsc_correct",
    "pls_paths",
    "fit_pls",
    "implied_covariance_pls",
    "check_admissibility_pls",
    "PLS_TOL",
    "PLS_MAX_ITER",
]

PLS_TOL = 1e-5
PLS_MAX_ITER = 300
PD_TOL = -1e-8
RELIABILITY_TOL = 1e-8

NONCONVERGENCE = "nonconvergence"
LOADING_ABOVE_ONE = "loading_above_one"
RELIABILITY_OUT_OF_RANGE = "reliability_out_of_range"
NONPD_CONSTRUCT_COV = "nonPD_construct_cov"

INNER_SCHEMES = ("centroid", "factorial", "path")


@dataclass(frozen=True)
class PlsConfig:
    """Estimation settings: outer mode per construct, inner weighting
    scheme, stopping rule, and whether latent blocks are disattenuated."""

    modes: dict[str, str]
    inner_scheme: str = "path"
    tolerance: float = PLS_TOL
    max_iterations: int = PLS_MAX_ITER
    correction: str = "plsc"

    def __post_init__(self) -> None:
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.inner_scheme not in INNER_SCHEMES:
            raise ValueError(f"inner scheme must be one of {INNER_SCHEMES}")
        if self.correction not in ("none", "plsc"):
            raise ValueError("correction must be 'none' or 'plsc'")
        for name, mode in self.modes.items():
            if mode not in ("A", "B"):
                raise ValueError(f"mode for {name!r} must be 'A' or 'B'")


def default_config(spec: ModelSpec, inner_scheme: str = "path") -> PlsConfig:
    """Mode B for composites, mode A with disattenuation for latents.
    Raises on causal-formative constructs."""
    modes: dict[str, str] = {}
    for c in spec.constructs:
        if c.kind is ConstructKind.CAUSAL_FORMATIVE:
            raise ValueError(
                f"{c.name}: causal-formative constructs cannot be estimated "
                "with this algorithm"
            )
        modes[c.name] = "B" if c.kind is ConstructKind.COMPOSITE else "A"
    return PlsConfig(modes=modes, inner_scheme=inner_scheme)


def _standardize_columns(data: np.ndarray) -> np.ndarray:
    X = data - data.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd <= 0.0):
        raise ValueError("constant indicator column")
    return X / sd


def _oriented(w: np.ndarray, Sbb: np.ndarray) -> np.ndarray:
    """Resolve the sign indeterminacy: the block's average indicator-score
    covariance is made positive."""
    if float(np.sum(Sbb @ w)) < 0.0:
        return -w
    return w


@dataclass(frozen=True)
class PlsWeights:
    weights: dict[str, np.ndarray]
    scores: np.ndarray  # n x m, column order = spec construct order
    converged: bool
    iterations: int


def pls_weights(
    data: np.ndarray, spec: ModelSpec, config: PlsConfig
) -> PlsWeights:
    """Iterate outer and inner estimation until the largest weight change
    drops below the tolerance. Scores come out standardized (n-1 divisor)."""
    X = _standardize_columns(np.asarray(data, dtype=float))
    n = X.shape[0]
    names = [c.name for c in spec.constructs]
    cols = {x: i for i, x in enumerate(
        x for c in spec.constructs for x in spec.block(c.name)
    )}
    blocks = {c.name: [cols[x] for x in spec.block(c.name)] for c in spec.constructs}
    for name, ix in blocks.items():
        if not ix:
            raise ValueError(f"construct {name!r} has no indicators")
    preds = {t: [s for s, u in spec.paths if u == t] for t in names}
    succs = {s: [t for u, t in spec.paths if u == s] for s in names}
    neighbors = {b: preds[b] + succs[b] for b in names}

    Sblocks = {b: np.cov(X[:, ix], rowvar=False, ddof=1).reshape(len(ix), len(ix))
               for b, ix in blocks.items()}
    weights: dict[str, np.ndarray] = {}
    for b, ix in blocks.items():
        w = np.ones(len(ix))
        w = w / np.sqrt(float(w @ Sblocks[b] @ w))
        weights[b] = _oriented(w, Sblocks[b])

    def block_scores() -> dict[str, np.ndarray]:
        return {b: X[:, blocks[b]] @ weights[b] for b in names}

    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        scores = block_scores()
        R = {
            (a, b): float(scores[a] @ scores[b] / (n - 1))
            for a in names
            for b in neighbors[a]
        }
        inner: dict[str, np.ndarray] = {}
        for b in names:
            z = np.zeros(n)
            if config.inner_scheme == "path" and preds[b]:
                P = preds[b]
                Cp = np.array(
                    [[float(scores[a] @ scores[c] / (n - 1)) for c in P] for a in P]
                )
                cp = np.array([R[(b, a)] for a in P])
                beta = np.linalg.solve(Cp, cp)
                for a, bcoef in zip(P, beta):
                    z += bcoef * scores[a]
                for a in succs[b]:
                    z += R[(b, a)] * scores[a]
            else:
                for a in neighbors[b]:
                    e = R[(b, a)]
                    if config.inner_scheme == "centroid":
                        e = float(np.sign(e)) or 1.0
                    z += e * scores[a]
            inner[b] = z

        max_change = 0.0
        for b in names:
            ix = blocks[b]
            Xb = X[:, ix]
            if config.modes[b] == "A":
                w = Xb.T @ inner[b] / (n - 1)
            else:
                w = np.linalg.solve(Sblocks[b], Xb.T @ inner[b] / (n - 1))
            norm = float(w @ Sblocks[b] @ w)
            if norm <= 0.0:
                raise ValueError(f"degenerate weights for block {b!r}")
            w = _oriented(w / np.sqrt(norm), Sblocks[b])
            max_change = max(max_change, float(np.abs(w - weights[b]).max()))
            weights[b] = w
        if max_change < config.tolerance:
            converged = True
            break

    scores = block_scores()
    score_mat = np.column_stack([scores[b] for b in names])
    return PlsWeights(weights=weights, scores=score_mat,
                      converged=converged, iterations=iterations)


def dijkstra_reliability(w: np.ndarray, Sbb: np.ndarray) -> float:
    """rho_A: reliability of the weighted proxy for a latent block, from
    the weights and the off-diagonal covariance structure."""
    K = len(w)
    if K < 2:
        return 1.0
    E = Sbb - np.diag(np.diag(Sbb))
    W = np.outer(w, w)
    D = W - np.diag(np.diag(W))
    denom = float(w @ D @ w)
    if denom <= 0.0:
        return float("nan")
    c2 = float(w @ E @ w) / denom
    return float((w @ w) ** 2) * c2 / float((w @ Sbb @ w) ** 2)


def plsc_correct(
    weights: dict[str, np.ndarray],
    S: np.ndarray,
    spec: ModelSpec,
    construct_corr: np.ndarray,
) -> tuple[dict[str, np.ndarray], dict[str, float], np.ndarray]:
    """Disattenuation: reliability per latent block, corrected loadings
    lambda = c*w, and construct correlations divided by sqrt(rho_i rho_j).
    Composite blocks keep reliability 1 and weight-implied loadings."""
    names = [c.name for c in spec.constructs]
    cols = {x: i for i, x in enumerate(
        x for c in spec.constructs for x in spec.block(c.name)
    )}
    loadings: dict[str, np.ndarray] = {}
    rho: dict[str, float] = {}
    for c in spec.constructs:
        ix = [cols[x] for x in spec.block(c.name)]
        Sbb = S[np.ix_(ix, ix)]
        w = weights[c.name]
        if c.kind is ConstructKind.LATENT and len(ix) >= 2:
            r = dijkstra_reliability(w, Sbb)
            rho[c.name] = r
            c_scale = np.sqrt(r) / float(w @ w) if np.isfinite(r) and r > 0 else np.nan
            loadings[c.name] = c_scale * w
        else:
            rho[c.name] = 1.0
            loadings[c.name] = Sbb @ w
    corrected = construct_corr.copy()
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i != j:
                prod = rho[a] * rho[b]
                # out-of-range reliabilities poison the cell; admissibility
                # screening rejects the run downstream
                corrected[i, j] = (
                    corrected[i, j] / np.sqrt(prod) if prod > 0.0 else np.nan
                )
    np.fill_diagonal(corrected, 1.0)
    return loadings, rho, corrected


def pls_paths(
    construct_corr: np.ndarray, spec: ModelSpec
) -> dict[tuple[str, str], float]:
    """Least-squares path coefficients per endogenous construct from the
    (corrected) construct correlation matrix; standardized by construction."""
    names = [c.name for c in spec.constructs]
    ix = {n: k for k, n in enumerate(names)}
    out: dict[tuple[str, str], float] = {}
    for t in names:
        sources = [s for s, u in spec.paths if u == t]
        if not sources:
            continue
        P = [ix[s] for s in sources]
        Cpp = construct_corr[np.ix_(P, P)]
        cpt = construct_corr[P, ix[t]]
        beta = np.linalg.solve(Cpp, cpt)
        for s, b in zip(sources, beta):
            out[(s, t)] = float(b)
    return out


def implied_covariance_pls(
    spec: ModelSpec,
    loadings: dict[str, np.ndarray],
    paths: dict[tuple[str, str], float],
    construct_corr: np.ndarray,
) -> np.ndarray:
    """Model-implied indicator correlation matrix for fit indices.

    Exogenous construct correlations are taken from the (corrected)
    estimate; endogenous rows are rebuilt recursively from the fitted
    paths with unit construct variances and uncorrelated disturbances,
    mirroring the covariance-structure route. The indicator diagonal is
    set to one (errors absorb the remainder).
    """
    names = [c.name for c in spec.constructs]
    ix = {n: k for k, n in enumerate(names)}
    m = len(names)
    order = spec._toposort()
    endo = {t for _, t in spec.paths}
    C = np.eye(m)
    done: list[str] = []
    for name in order:
        k = ix[name]
        if name not in endo:
            for other in done:
                if other not in endo:
                    C[k, ix[other]] = C[ix[other], k] = construct_corr[
                        k, ix[other]
                    ]
        else:
            sources = [s for s, u in spec.paths if u == name]
            beta = np.array([paths[(s, name)] for s in sources])
            for other in done:
                v = float(
                    beta @ np.array([C[ix[s], ix[other]] for s in sources])
                )
                C[k, ix[other]] = C[ix[other], k] = v
        done.append(name)

    p = sum(len(spec.block(n)) for n in names)
    Lambda = np.zeros((p, m))
    row = 0
    for c in spec.constructs:
        lam = loadings[c.name]
        Lambda[row : row + len(lam), ix[c.name]] = lam
        row += len(lam)
    Sigma = Lambda @ C @ Lambda.T
    np.fill_diagonal(Sigma, 1.0)
    return Sigma


@dataclass(frozen=True)
class PlsResult:
    """One PLS fit: weights, (corrected) loadings and reliabilities per
    construct, corrected construct correlations, standardized paths, the
    implied correlation matrix and reference degrees of freedom for fit
    indices, and the admissibility verdict."""

    weights: dict[str, np.ndarray]
    loadings: dict[str, np.ndarray]
    reliabilities: dict[str, float]
    construct_names: tuple[str, ...]
    construct_corr: np.ndarray
    std_paths: dict[tuple[str, str], float]
    converged: bool
    iterations: int
    S: np.ndarray
    Sigma_hat: np.ndarray
    df: int
    admissible: bool
    reason_codes: tuple[str, ...]


def check_admissibility_pls(
    converged: bool,
    loadings: dict[str, np.ndarray],
    reliabilities: dict[str, float],
    construct_corr: np.ndarray,
) -> tuple[bool, tuple[str, ...]]:
    codes = []
    if not converged:
        codes.append(NONCONVERGENCE)
    all_load = np.concatenate([np.atleast_1d(v) for v in loadings.values()])
    if np.any(~np.isfinite(all_load)) or np.any(
        np.abs(all_load) > 1.0 + RELIABILITY_TOL
    ):
        codes.append(LOADING_ABOVE_ONE)
    for r in reliabilities.values():
        if not np.isfinite(r) or r <= 0.0 or r > 1.0 + RELIABILITY_TOL:
            codes.append(RELIABILITY_OUT_OF_RANGE)
            break
    if not np.all(np.isfinite(construct_corr)):
        codes.append(NONPD_CONSTRUCT_COV)
    elif np.linalg.eigvalsh(construct_corr).min() <= PD_TOL:
        codes.append(NONPD_CONSTRUCT_COV)
    return (not codes), tuple(codes)


def fit_pls(
    spec: ModelSpec,
    data: np.ndarray,
    config: PlsConfig | None = None,
) -> PlsResult:
    """Estimate a latent/composite model from raw data."""
    if config is None:
        config = default_config(spec)
    else:
        for c in spec.constructs:
            if c.kind is ConstructKind.CAUSAL_FORMATIVE:
                raise ValueError(
                    f"{c.name}: causal-formative constructs cannot be "
                    "estimated with this algorithm"
                )
    X = _standardize_columns(np.asarray(data, dtype=float))
    n = X.shape[0]
    fitted = pls_weights(X, spec, config)
    S = np.cov(X, rowvar=False, ddof=1)
    names = tuple(c.name for c in spec.constructs)
    raw_corr = fitted.scores.T @ fitted.scores / (n - 1)

    if config.correction == "plsc":
        loadings, rho, corrected = plsc_correct(
            fitted.weights, S, spec, raw_corr
        )
    else:
        cols = {x: i for i, x in enumerate(
            x for c in spec.constructs for x in spec.block(c.name)
        )}
        loadings = {}
        for c in spec.constructs:
            ix = [cols[x] for x in spec.block(c.name)]
            loadings[c.name] = S[np.ix_(ix, ix)] @ fitted.weights[c.name]
        rho = {name: 1.0 for name in names}
        corrected = raw_corr.copy()
        np.fill_diagonal(corrected, 1.0)

    paths = pls_paths(corrected, spec)
    Sigma_hat = implied_covariance_pls(spec, loadings, paths, corrected)
    df = degrees_of_freedom(parameterize(spec))
    admissible, codes = check_admissibility_pls(
        fitted.converged, loadings, rho, corrected
    )
    return PlsResult(
        weights=fitted.weights,
        loadings=loadings,
        reliabilities=rho,
        construct_names=names,
        construct_corr=corrected,
        std_paths=paths,
        converged=fitted.converged,
        iterations=fitted.iterations,
        S=S,
        Sigma_hat=Sigma_hat,
        df=df,
        admissible=admissible,
        reason_codes=codes,
    )
