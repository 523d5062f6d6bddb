"""Excrescent-variable specification for composite blocks (Henseler-Ogasawara).

A composite eta = w'x of K indicators puts no restriction on the covariance
matrix of its block. To estimate it with covariance-structure machinery, the
block is rotated into K factors: the composite itself, loading freely on all
K indicators, plus K-1 excrescent variables nu_j capturing the variance the
composite ignores. nu_j loads on x_j (free) and on x_{j+1} (fixed to -1 as
its scale anchor), covaries freely with its siblings but with nothing else,
and all measurement-error variances in the block are fixed to 0.

With free excrescent variances this block reproduces any positive definite
K x K covariance exactly (saturation) while still carrying estimable weights:
the free-cell count is K(K+1)/2 + (K-1), of which K-1 directions (the weight
degrees of freedom) are identified only through the composite's structural
connections. This is why an isolated composite is unidentified. Fixing the
excrescent variances instead would hit the count K(K+1)/2 but provably
breaks saturation (for K = 2 the implied Var(x_2) could never drop below 1),
so the free-variance form is used and audited.

Composite weights are recovered from a fitted block by inverting the block
loading matrix: the composite's row of Lambda_block^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_ir import (
    Constraint,
    Construct,
    ConstructKind,
    ModelSpec,
    ParamTable,
    _scale_pinned,
)

__all__ = [
    "HospecPattern",
    "SingularRotationError",
    "build_hospec",
    "expand_composites",
    "starting_values",
    "recover_weights",
    "block_free_cells",
    "excrescent_names",
]

COND_LIMIT = 1e12
START_EXCRESCENT_LOADING = 0.1


class SingularRotationError(np.linalg.LinAlgError):
    """Block loading matrix is numerically singular; weights undefined."""


@dataclass(frozen=True)
class HospecPattern:
    """Cell pattern for one composite block of K indicators.

    free_eta_loadings counts the composite's free loadings (K when the
    composite is exogenous and its variance is fixed to 1; K-1 when it is
    endogenous and the first loading anchors the scale, with the free
    disturbance making up the difference either way).
    """

    K: int
    n_excrescent: int
    free_excrescent_loadings: int
    free_excrescent_psi: int
    free_cell_count: int

    @property
    def saturated_moments(self) -> int:
        return self.K * (self.K + 1) // 2


def build_hospec(K: int) -> HospecPattern:
    """Pattern for a composite block of K indicators.

    K = 1 degenerates to a single perfectly measured construct (loading
    fixed to 1, no excrescent variables, one free variance cell).
    """
    if K < 1:
        raise ValueError("composite block needs at least one indicator")
    if K == 1:
        return HospecPattern(1, 0, 0, 0, 1)
    n_exc = K - 1
    free_psi = n_exc + n_exc * (n_exc - 1) // 2  # variances + sibling covs
    # K composite cells (loadings, or loadings + disturbance when
    # endogenous) + one free loading per excrescent variable + its psi block
    count = K + n_exc + free_psi
    assert count == K * (K + 1) // 2 + (K - 1)
    return HospecPattern(K, n_exc, n_exc, free_psi, count)


def excrescent_names(construct: str, K: int) -> tuple[str, ...]:
    return tuple(f"{construct}_exc{j}" for j in range(1, K))


def expand_composites(spec: ModelSpec) -> ModelSpec:
    """Insert excrescent variables for every composite indicator block.

    Adds, per composite with K >= 2 indicators: K-1 exogenous excrescent
    constructs, their free loadings on x_j and fixed -1 anchors on x_{j+1},
    zero error variances across the block, and (for endogenous composites)
    a first-loading scale anchor. Idempotent.
    """
    expanded = {c.parent for c in spec.constructs if c.role == "excrescent"}
    targets = [
        c
        for c in spec.constructs
        if c.kind is ConstructKind.COMPOSITE
        and c.name not in expanded
        and spec.block(c.name)
    ]
    if not targets:
        return spec

    constructs: list[Construct] = []
    constraints = list(spec.constraints)
    free_cells = list(spec.free_cells)
    target_names = {c.name for c in targets}

    theta_fixed = {
        (f.row, f.col) for f in spec.constraints if f.matrix == "Theta"
    }
    for c in spec.constructs:
        constructs.append(c)
        if c.name not in target_names:
            continue
        block = spec.block(c.name)
        K = len(block)
        for x in block:
            if (x, x) not in theta_fixed:
                constraints.append(Constraint("Theta", x, x, 0.0))
        if (K == 1 or not c.exogenous) and not _scale_pinned(spec, c.name):
            constraints.append(Constraint("Lambda", block[0], c.name, 1.0))
        for j, name in enumerate(excrescent_names(c.name, K), start=1):
            constructs.append(
                Construct(name, ConstructKind.LATENT, exogenous=True,
                          role="excrescent", parent=c.name)
            )
            free_cells.append(("Lambda", block[j - 1], name))
            constraints.append(Constraint("Lambda", block[j], name, -1.0))

    return ModelSpec(
        constructs=tuple(constructs),
        indicators=spec.indicators,
        paths=spec.paths,
        constraints=tuple(constraints),
        free_cells=tuple(free_cells),
    )


def _composite_columns(table: ParamTable, construct: str) -> list[int]:
    """Column indices of the composite followed by its excrescent children."""
    cols = [table.construct_names.index(construct)]
    for k, name in enumerate(table.construct_names):
        if table.roles[k] == "excrescent" and table.parents[k] == construct:
            cols.append(k)
    return cols


def starting_values(table: ParamTable, S: np.ndarray) -> ParamTable:
    """Data-informed starting values for composite blocks.

    The composite loadings start at S_block w0 with w0 equal weights scaled
    to unit proxy variance; excrescent loadings start at 0.1 and excrescent
    covariances at 0. Tables without composite blocks are returned as-is.
    """
    cells: list[tuple[str, str, str, float]] = []
    for k, name in enumerate(table.construct_names):
        if table.kinds[k] is not ConstructKind.COMPOSITE:
            continue
        rows = list(table.block_of(name))
        if len(rows) < 2 or table.roles[k] != "substantive":
            continue
        Sb = S[np.ix_(rows, rows)]
        K = len(rows)
        ones = np.ones(K)
        w0 = ones / np.sqrt(float(ones @ Sb @ ones))
        lam0 = Sb @ w0
        if not table.exogenous[k]:
            lam0 = lam0 / lam0[0]  # first loading is the fixed scale anchor
        for r, i in enumerate(rows):
            if table.free_Lambda[i, k]:
                cells.append(
                    ("Lambda", table.indicator_names[i], name, float(lam0[r]))
                )
        for col in _composite_columns(table, name)[1:]:
            exc = table.construct_names[col]
            for i in rows:
                if table.free_Lambda[i, col]:
                    cells.append(
                        ("Lambda", table.indicator_names[i], exc,
                         START_EXCRESCENT_LOADING)
                    )
    if not cells:
        return table
    return table.with_cells(cells)


def recover_weights(table: ParamTable, construct: str) -> np.ndarray:
    """Composite weights from a fitted block: the composite's row of the
    inverse block loading matrix. Raises SingularRotationError when the
    block rotation is numerically singular (condition number >= 1e12)."""
    rows = list(table.block_of(construct))
    cols = _composite_columns(table, construct)
    if len(cols) != len(rows):
        raise ValueError(
            f"{construct} block is not square: {len(rows)} indicators, "
            f"{len(cols)} block factors"
        )
    Lb = table.Lambda[np.ix_(rows, cols)]
    if np.linalg.cond(Lb) >= COND_LIMIT:
        raise SingularRotationError(
            f"composite block {construct!r} has condition number >= {COND_LIMIT:g}"
        )
    return np.linalg.inv(Lb)[0, :]


def block_free_cells(table: ParamTable, construct: str) -> int:
    """Audit: free cells attributable to a composite block (its Lambda
    columns, the Psi block over composite + excrescent variables, and the
    Theta block of its indicators)."""
    rows = list(table.block_of(construct))
    cols = _composite_columns(table, construct)
    n = int(table.free_Lambda[np.ix_(rows, cols)].sum())
    psi = table.free_Psi[np.ix_(cols, cols)]
    n += int(np.tril(psi).sum())
    theta = table.free_Theta[np.ix_(rows, rows)]
    n += int(np.tril(theta).sum())
    return n
