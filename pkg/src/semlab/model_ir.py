"""Model intermediate representation for recursive structural equation models.

A model is declared as a :class:`ModelSpec` (constructs, indicator blocks,
structural paths, explicit fixed-value constraints) and compiled by
:func:`parameterize` into a :class:`ParamTable`, a LISREL-style
(Lambda, B, Psi, Theta) parameterization with free/fixed cell masks.

Three ways of attaching indicators to a construct are supported:

* latent variable: indicators are effects of the construct,
* causal-formative: indicators cause the construct, which keeps a
  disturbance term; estimated via the single-indicator augmentation
  (each indicator gets a perfectly measured proxy construct),
* composite: the construct is a weighted sum of its indicators without
  a disturbance; estimated via an excrescent-variable specification
  (see :mod:`semlab.hospec`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ConstructKind",
    "Construct",
    "Constraint",
    "ModelSpec",
    "ParamTable",
    "parameterize",
    "implied_covariance",
    "construct_covariance",
    "augment_causal_formative",
    "degrees_of_freedom",
    "check_emitted_paths",
    "standardize",
    "substantive_paths",
    "spec_to_json",
    "spec_from_json",
]

MATRICES = ("Lambda", "B", "Psi", "Theta")

# Default starting values used when a table is compiled; data-dependent
# overrides for composite blocks live in semlab.hospec.
START_LOADING = 0.7
START_ERROR_VAR = 0.5
START_PSI_DIAG = 0.5


class ConstructKind(str, Enum):
    LATENT = "latent"
    CAUSAL_FORMATIVE = "causal_formative"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class Construct:
    """One construct: a name, how its indicators relate to it, causal status.

    role distinguishes substantive constructs from the technical ones
    introduced by compilation: "proxy" marks a single-indicator stand-in for
    a causal-formative indicator, "excrescent" marks the auxiliary rotation
    variables of a composite block. parent names the substantive construct
    a technical one belongs to.
    """

    name: str
    kind: ConstructKind
    exogenous: bool
    role: str = "substantive"
    parent: str | None = None


@dataclass(frozen=True)
class Constraint:
    """Fix one cell of Lambda/B/Psi/Theta to a value.

    Rows and columns are names: Lambda[indicator, construct],
    B[target, source], Psi[construct, construct], Theta[indicator, indicator].
    """

    matrix: str
    row: str
    col: str
    value: float

    def __post_init__(self) -> None:
        if self.matrix not in MATRICES:
            raise ValueError(f"unknown matrix {self.matrix!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model: constructs, indicator blocks, paths, constraints.

    free_cells lists additional free cells ("Lambda", indicator, construct)
    beyond the default patterns; compilation steps use it for loadings that
    cross block boundaries (excrescent variables load on the indicators of
    their parent composite).
    """

    constructs: tuple[Construct, ...]
    indicators: Mapping[str, tuple[str, ...]]
    paths: tuple[tuple[str, str], ...] = ()
    constraints: tuple[Constraint, ...] = ()
    free_cells: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self) -> None:
        names = [c.name for c in self.constructs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate construct names")
        object.__setattr__(
            self, "indicators", {k: tuple(v) for k, v in self.indicators.items()}
        )
        for cname in self.indicators:
            if cname not in names:
                raise ValueError(f"indicator block for unknown construct {cname!r}")
        all_ind = [x for block in self.indicators.values() for x in block]
        if len(set(all_ind)) != len(all_ind):
            raise ValueError("an indicator may belong to exactly one block")
        object.__setattr__(self, "paths", tuple((s, t) for s, t in self.paths))
        for s, t in self.paths:
            if s not in names or t not in names:
                raise ValueError(f"path {s}->{t} references unknown construct")
        self._toposort()  # raises on cycles
        incoming = {t for _, t in self.paths}
        for c in self.constructs:
            if c.exogenous and c.name in incoming:
                raise ValueError(f"{c.name} is exogenous but receives a path")

    def construct(self, name: str) -> Construct:
        for c in self.constructs:
            if c.name == name:
                return c
        raise KeyError(name)

    def block(self, name: str) -> tuple[str, ...]:
        return self.indicators.get(name, ())

    def _toposort(self) -> list[str]:
        """Stable topological order: sources before targets, declaration
        order otherwise."""
        names = [c.name for c in self.constructs]
        preds: dict[str, set[str]] = {n: set() for n in names}
        for s, t in self.paths:
            preds[t].add(s)
        order: list[str] = []
        remaining = list(names)
        while remaining:
            ready = [n for n in remaining if preds[n] <= set(order)]
            if not ready:
                raise ValueError("structural paths contain a cycle")
            order.append(ready[0])
            remaining.remove(ready[0])
        return order


def spec_to_json(spec: ModelSpec) -> str:
    """Serialize a ModelSpec; round-trips losslessly via spec_from_json."""
    doc = {
        "constructs": [
            {
                "name": c.name,
                "kind": c.kind.value,
                "exogenous": c.exogenous,
                "role": c.role,
                "parent": c.parent,
            }
            for c in spec.constructs
        ],
        "indicators": {k: list(v) for k, v in spec.indicators.items()},
        "paths": [list(p) for p in spec.paths],
        "constraints": [
            {"matrix": f.matrix, "row": f.row, "col": f.col, "value": f.value}
            for f in spec.constraints
        ],
    }
    if spec.free_cells:
        doc["free_cells"] = [list(c) for c in spec.free_cells]
    return json.dumps(doc, indent=2)


def spec_from_json(text: str) -> ModelSpec:
    doc = json.loads(text)
    return ModelSpec(
        constructs=tuple(
            Construct(
                name=c["name"],
                kind=ConstructKind(c["kind"]),
                exogenous=c["exogenous"],
                role=c.get("role", "substantive"),
                parent=c.get("parent"),
            )
            for c in doc["constructs"]
        ),
        indicators={k: tuple(v) for k, v in doc["indicators"].items()},
        paths=tuple((s, t) for s, t in doc["paths"]),
        constraints=tuple(
            Constraint(f["matrix"], f["row"], f["col"], f["value"])
            for f in doc["constraints"]
        ),
        free_cells=tuple(tuple(c) for c in doc.get("free_cells", ())),
    )


def augment_causal_formative(spec: ModelSpec) -> ModelSpec:
    """Rewrite causal-formative indicator blocks into estimable form.

    Every indicator x_j of a causal-formative construct becomes a perfectly
    measured proxy construct (loading fixed to 1, error variance fixed to 0)
    and the construct turns endogenous on those proxies, keeping its free
    disturbance variance. Proxies covary freely. The implied covariance is
    unchanged at every parameter point. Idempotent: specs without
    causal-formative indicator blocks are returned as-is.
    """
    targets = [
        c
        for c in spec.constructs
        if c.kind is ConstructKind.CAUSAL_FORMATIVE and spec.block(c.name)
    ]
    if not targets:
        return spec

    constructs: list[Construct] = []
    indicators: dict[str, tuple[str, ...]] = {}
    paths = list(spec.paths)
    constraints = list(spec.constraints)
    target_names = {c.name for c in targets}

    for c in spec.constructs:
        if c.name not in target_names:
            constructs.append(c)
            if spec.block(c.name):
                indicators[c.name] = spec.block(c.name)
            continue
        block = spec.block(c.name)
        for x in block:
            proxy = f"{x}_proxy"
            constructs.append(
                Construct(proxy, ConstructKind.LATENT, exogenous=True,
                          role="proxy", parent=c.name)
            )
            indicators[proxy] = (x,)
            constraints.append(Constraint("Lambda", x, proxy, 1.0))
            constraints.append(Constraint("Theta", x, x, 0.0))
            paths.append((proxy, c.name))
        constructs.append(replace(c, exogenous=False))

    return ModelSpec(
        constructs=tuple(constructs),
        indicators=indicators,
        paths=tuple(paths),
        constraints=tuple(constraints),
        free_cells=spec.free_cells,
    )


@dataclass(frozen=True)
class ParamTable:
    """LISREL-style parameterization with free/fixed masks.

    Lambda is p x m (indicators by constructs), B is m x m strictly lower
    triangular under the stored construct order (which is topological),
    Psi and Theta are symmetric. Instances are immutable; use with_theta
    to obtain a table at a new free-parameter point.
    """

    construct_names: tuple[str, ...]
    indicator_names: tuple[str, ...]
    kinds: tuple[ConstructKind, ...]
    roles: tuple[str, ...]
    parents: tuple[str | None, ...]
    exogenous: tuple[bool, ...]
    blocks: tuple[tuple[int, ...], ...]  # indicator indices per construct
    paths: tuple[tuple[str, str], ...]
    Lambda: np.ndarray
    B: np.ndarray
    Psi: np.ndarray
    Theta: np.ndarray
    free_Lambda: np.ndarray
    free_B: np.ndarray
    free_Psi: np.ndarray
    free_Theta: np.ndarray

    def __post_init__(self) -> None:
        m = len(self.construct_names)
        p = len(self.indicator_names)
        for name, arr, shape in (
            ("Lambda", self.Lambda, (p, m)),
            ("B", self.B, (m, m)),
            ("Psi", self.Psi, (m, m)),
            ("Theta", self.Theta, (p, p)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if np.any(np.triu(self.B) != 0.0) or np.any(np.triu(self.free_B)):
            raise ValueError("B must be strictly lower triangular")
        for arr in (self.Psi, self.Theta, self.free_Psi, self.free_Theta):
            if not np.array_equal(arr, arr.T):
                raise ValueError("Psi/Theta and their masks must be symmetric")
        for arr in (
            self.Lambda, self.B, self.Psi, self.Theta,
            self.free_Lambda, self.free_B, self.free_Psi, self.free_Theta,
        ):
            arr.flags.writeable = False

    # -- free-parameter vector mapping -------------------------------------
    # Canonical cell order: Lambda row-major, B row-major, Psi lower
    # triangle row-major, Theta lower triangle row-major.

    def _free_cells(self) -> list[tuple[str, int, int]]:
        cells: list[tuple[str, int, int]] = []
        for i, j in zip(*np.nonzero(self.free_Lambda)):
            cells.append(("Lambda", int(i), int(j)))
        for i, j in zip(*np.nonzero(self.free_B)):
            cells.append(("B", int(i), int(j)))
        for i, j in zip(*np.nonzero(np.tril(self.free_Psi))):
            cells.append(("Psi", int(i), int(j)))
        for i, j in zip(*np.nonzero(np.tril(self.free_Theta))):
            cells.append(("Theta", int(i), int(j)))
        return cells

    @property
    def n_free(self) -> int:
        return len(self._free_cells())

    def free_labels(self) -> list[str]:
        ind, con = self.indicator_names, self.construct_names
        out = []
        for mat, i, j in self._free_cells():
            if mat == "Lambda":
                out.append(f"Lambda[{ind[i]},{con[j]}]")
            elif mat == "B":
                out.append(f"B[{con[i]},{con[j]}]")
            elif mat == "Psi":
                out.append(f"Psi[{con[i]},{con[j]}]")
            else:
                out.append(f"Theta[{ind[i]},{ind[j]}]")
        return out

    def theta(self) -> np.ndarray:
        """Current free-parameter vector."""
        mats = {"Lambda": self.Lambda, "B": self.B,
                "Psi": self.Psi, "Theta": self.Theta}
        return np.array([mats[m][i, j] for m, i, j in self._free_cells()])

    def with_theta(self, theta: np.ndarray) -> "ParamTable":
        """Return a new table with free cells set from `theta`."""
        cells = self._free_cells()
        if len(theta) != len(cells):
            raise ValueError(f"expected {len(cells)} values, got {len(theta)}")
        mats = {
            "Lambda": self.Lambda.copy(),
            "B": self.B.copy(),
            "Psi": self.Psi.copy(),
            "Theta": self.Theta.copy(),
        }
        for (mat, i, j), v in zip(cells, theta):
            mats[mat][i, j] = v
            if mat in ("Psi", "Theta") and i != j:
                mats[mat][j, i] = v
        return replace(
            self,
            Lambda=mats["Lambda"], B=mats["B"],
            Psi=mats["Psi"], Theta=mats["Theta"],
        )

    def with_cells(self, cells: Iterable[tuple[str, str, str, float]]) -> "ParamTable":
        """Return a new table with named cells (matrix, row, col) set to values.

        Ignores free/fixed status; intended for constructing population
        tables and starting values.
        """
        con = {n: k for k, n in enumerate(self.construct_names)}
        ind = {n: k for k, n in enumerate(self.indicator_names)}
        mats = {
            "Lambda": self.Lambda.copy(),
            "B": self.B.copy(),
            "Psi": self.Psi.copy(),
            "Theta": self.Theta.copy(),
        }
        for mat, row, col, v in cells:
            if mat == "Lambda":
                i, j = ind[row], con[col]
            elif mat == "Theta":
                i, j = ind[row], ind[col]
            else:
                i, j = con[row], con[col]
            mats[mat][i, j] = v
            if mat in ("Psi", "Theta") and i != j:
                mats[mat][j, i] = v
        return replace(
            self,
            Lambda=mats["Lambda"], B=mats["B"],
            Psi=mats["Psi"], Theta=mats["Theta"],
        )

    def block_of(self, construct: str) -> tuple[int, ...]:
        return self.blocks[self.construct_names.index(construct)]


def implied_covariance(table: ParamTable) -> np.ndarray:
    """Model-implied indicator covariance Lambda A Psi A' Lambda' + Theta
    with A = (I - B)^{-1}. Exactly symmetric."""
    m = len(table.construct_names)
    A = np.linalg.solve(np.eye(m) - table.B, np.eye(m))
    G = A @ table.Psi @ A.T
    G = 0.5 * (G + G.T)
    sigma = table.Lambda @ G @ table.Lambda.T + table.Theta
    return 0.5 * (sigma + sigma.T)


def construct_covariance(table: ParamTable) -> np.ndarray:
    """Implied covariance of the constructs, (I-B)^{-1} Psi (I-B)^{-T}."""
    m = len(table.construct_names)
    A = np.linalg.solve(np.eye(m) - table.B, np.eye(m))
    G = A @ table.Psi @ A.T
    return 0.5 * (G + G.T)


def degrees_of_freedom(table: ParamTable) -> int:
    """p(p+1)/2 minus the number of free cells."""
    p = len(table.indicator_names)
    return p * (p + 1) // 2 - table.n_free


def standardize(table: ParamTable) -> dict[tuple[str, str], float]:
    """Standardized structural coefficients from the implied construct
    covariance: beta_std(i -> j) = B[j, i] * sd(i) / sd(j).

    Invariant to the scaling convention (fixed loading vs fixed variance)
    at equivalent parameter points.
    """
    cov = construct_covariance(table)
    with np.errstate(invalid="ignore"):
        # negative implied variances (inadmissible points) become NaN
        sd = np.sqrt(np.diag(cov))
    out: dict[tuple[str, str], float] = {}
    rows, cols = np.nonzero((table.B != 0.0) | table.free_B)
    for j, i in zip(rows, cols):  # B[j, i]: path i -> j
        src = table.construct_names[i]
        tgt = table.construct_names[j]
        out[(src, tgt)] = float(table.B[j, i] * sd[i] / sd[j])
    return out


def substantive_paths(table: ParamTable) -> tuple[tuple[str, str], ...]:
    """Structural paths between substantive constructs. Compilation adds
    technical edges (proxy weights); reporting code filters them out here."""
    role = dict(zip(table.construct_names, table.roles))
    return tuple(
        (s, t)
        for s, t in table.paths
        if role.get(s) == "substantive" and role.get(t) == "substantive"
    )


def check_emitted_paths(spec: ModelSpec) -> list[str]:
    """Identification screen for unrestricted disturbance variances.

    A construct whose disturbance variance is unrestricted needs at least
    two emitted directed edges toward variables that themselves carry
    unrestricted error or disturbance variances (necessary, not sufficient).
    Applies to causal-formative constructs (free disturbance by definition)
    and endogenous latent constructs; composites are exempt because their
    scaling fixes the implied construct variance. Returns the violators.
    """
    violations = []
    free_error_constructs = {
        c.name
        for c in spec.constructs
        if c.kind is ConstructKind.CAUSAL_FORMATIVE or not c.exogenous
    }
    theta_fixed = {
        (f.row, f.col) for f in spec.constraints if f.matrix == "Theta"
    }
    for c in spec.constructs:
        unrestricted = c.kind is ConstructKind.CAUSAL_FORMATIVE or (
            not c.exogenous and c.kind is ConstructKind.LATENT
        )
        if not unrestricted:
            continue
        emitted = sum(1 for s, t in spec.paths
                      if s == c.name and t in free_error_constructs)
        if c.kind is ConstructKind.LATENT:
            emitted += sum(
                1 for x in spec.block(c.name) if (x, x) not in theta_fixed
            )
        if emitted < 2:
            violations.append(c.name)
    return violations


def _scale_pinned(spec: ModelSpec, name: str) -> bool:
    """True if user constraints already pin the scale of a construct
    (a fixed own-variance or a fixed loading/incoming weight)."""
    block = set(spec.block(name))
    for f in spec.constraints:
        if f.matrix == "Psi" and f.row == name and f.col == name:
            return True
        if f.matrix == "Lambda" and f.col == name and f.row in block:
            return True
        if f.matrix == "B" and f.row == name:
            return True
    return False


def parameterize(spec: ModelSpec) -> ParamTable:
    """Compile a ModelSpec into a ParamTable with default free/fixed
    patterns, scaling constraints, and generic starting values.

    Causal-formative blocks are augmented first; composite blocks are
    expanded into the excrescent-variable form. Scaling defaults (applied
    only where no user constraint pins a construct's scale): latent
    constructs fix their first loading to 1, causal-formative constructs
    fix the first incoming weight to 1 and keep a free disturbance,
    exogenous composites fix the implied composite variance to 1 while
    endogenous ones fix their first loading instead. Exogenous substantive
    and proxy constructs covary freely; excrescent variables covary only
    with their siblings.
    """
    from . import hospec  # deferred: hospec builds on this module's types

    spec = augment_causal_formative(spec)
    spec = hospec.expand_composites(spec)

    order = spec._toposort()
    # exogenous constructs first, topological and declaration-stable otherwise
    order = [n for n in order if spec.construct(n).exogenous] + [
        n for n in order if not spec.construct(n).exogenous
    ]
    constructs = [spec.construct(n) for n in order]
    indicators = [x for n in order for x in spec.block(n)]
    con_ix = {n: k for k, n in enumerate(order)}
    ind_ix = {x: k for k, x in enumerate(indicators)}
    m, p = len(order), len(indicators)

    Lambda = np.zeros((p, m))
    B = np.zeros((m, m))
    Psi = np.zeros((m, m))
    Theta = np.zeros((p, p))
    fLambda = np.zeros((p, m), bool)
    fB = np.zeros((m, m), bool)
    fPsi = np.zeros((m, m), bool)
    fTheta = np.zeros((p, p), bool)

    user = {(f.matrix, f.row, f.col) for f in spec.constraints}

    def lam_fixed(x: str, c: str) -> bool:
        return ("Lambda", x, c) in user

    # measurement part
    for c in constructs:
        j = con_ix[c.name]
        block = spec.block(c.name)
        pinned = _scale_pinned(spec, c.name)
        for rank, x in enumerate(block):
            i = ind_ix[x]
            if lam_fixed(x, c.name):
                continue
            if rank == 0 and not pinned and c.kind is ConstructKind.LATENT:
                Lambda[i, j] = 1.0  # first-loading scale anchor
            else:
                Lambda[i, j] = START_LOADING
                fLambda[i, j] = True

    # structural part
    for s, t in spec.paths:
        i, j = con_ix[t], con_ix[s]
        if ("B", t, s) in user:
            continue
        fB[i, j] = True

    # first incoming weight of a causal-formative construct anchors its
    # scale; weights are the paths from its own proxy constructs
    for c in constructs:
        if c.kind is not ConstructKind.CAUSAL_FORMATIVE or c.exogenous:
            continue
        if _scale_pinned(spec, c.name):
            continue
        weights = [
            s for s, t in spec.paths
            if t == c.name and spec.construct(s).role == "proxy"
            and spec.construct(s).parent == c.name
        ]
        sources = weights or [s for s, t in spec.paths if t == c.name]
        if sources:
            i, j = con_ix[c.name], con_ix[sources[0]]
            B[i, j] = 1.0
            fB[i, j] = False

    # variances and disturbance variances
    for c in constructs:
        j = con_ix[c.name]
        if ("Psi", c.name, c.name) in user:
            continue
        if (
            c.exogenous
            and c.kind is ConstructKind.COMPOSITE
            and len(spec.block(c.name)) > 1
            and not _scale_pinned(spec, c.name)
        ):
            Psi[j, j] = 1.0  # composite scale: implied variance fixed
            continue
        Psi[j, j] = START_PSI_DIAG
        fPsi[j, j] = True

    # free covariances among exogenous constructs; excrescent variables
    # covary with their siblings only
    for a in constructs:
        for b in constructs:
            ia, ib = con_ix[a.name], con_ix[b.name]
            if ia >= ib or not (a.exogenous and b.exogenous):
                continue
            if ("Psi", a.name, b.name) in user or ("Psi", b.name, a.name) in user:
                continue
            if a.role == "excrescent" or b.role == "excrescent":
                if not (a.role == b.role == "excrescent" and a.parent == b.parent):
                    continue
            fPsi[ia, ib] = fPsi[ib, ia] = True

    # measurement error variances
    for x in indicators:
        i = ind_ix[x]
        if ("Theta", x, x) in user:
            continue
        Theta[i, i] = START_ERROR_VAR
        fTheta[i, i] = True

    # explicit extra free cells (cross-block loadings)
    for mat, row, col in spec.free_cells:
        if mat != "Lambda":
            raise ValueError("free_cells currently supports Lambda only")
        i, j = ind_ix[row], con_ix[col]
        Lambda[i, j] = START_LOADING
        fLambda[i, j] = True

    # user constraints override everything above
    for f in spec.constraints:
        if f.matrix == "Lambda":
            i, j = ind_ix[f.row], con_ix[f.col]
            Lambda[i, j] = f.value
            fLambda[i, j] = False
        elif f.matrix == "B":
            i, j = con_ix[f.row], con_ix[f.col]
            B[i, j] = f.value
            fB[i, j] = False
        elif f.matrix == "Psi":
            i, j = con_ix[f.row], con_ix[f.col]
            Psi[i, j] = Psi[j, i] = f.value
            fPsi[i, j] = fPsi[j, i] = False
        else:
            i, j = ind_ix[f.row], ind_ix[f.col]
            Theta[i, j] = Theta[j, i] = f.value
            fTheta[i, j] = fTheta[j, i] = False

    return ParamTable(
        construct_names=tuple(order),
        indicator_names=tuple(indicators),
        kinds=tuple(c.kind for c in constructs),
        roles=tuple(c.role for c in constructs),
        parents=tuple(c.parent for c in constructs),
        exogenous=tuple(c.exogenous for c in constructs),
        blocks=tuple(tuple(ind_ix[x] for x in spec.block(n)) for n in order),
        paths=spec.paths,
        Lambda=Lambda, B=B, Psi=Psi, Theta=Theta,
        free_Lambda=fLambda, free_B=fB, free_Psi=fPsi, free_Theta=fTheta,
    )
