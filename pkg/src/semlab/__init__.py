"""semlab: simulation lab for structural equation models whose constructs
mix latent, causal-formative, and composite indicator blocks.

The public surface mirrors the pipeline: model_ir declares models and
their parameter tables, dgp builds design cells and populations, ml and
pls estimate assumed models, fit scores them, mc replicates and
aggregates, cli batches everything to CSV.
"""

from .dgp import (
    DesignCondition,
    PopulationModel,
    STD_PATHS,
    build_population,
    design_grid,
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
from .mc import (
    FisherResult,
    McSummary,
    RepRecord,
    StudyPlan,
    aggregate,
    fisher_check,
    fisher_grid,
    run_condition,
    run_plan,
)
from .ml import MlResult, fit_ml
from .model_ir import (
    ConstructKind,
    ModelSpec,
    ParamTable,
    degrees_of_freedom,
    implied_covariance,
    parameterize,
)
from .pls import PlsResult, fit_pls

__version__ = "0.1.0"

__all__ = [
    "CRITERIA",
    "DEFAULT_THRESHOLDS",
    "ConstructKind",
    "DesignCondition",
    "FisherResult",
    "FitReport",
    "McSummary",
    "MlResult",
    "ModelSpec",
    "ParamTable",
    "PlsResult",
    "PopulationModel",
    "RepRecord",
    "STD_PATHS",
    "StudyPlan",
    "Thresholds",
    "__version__",
    "aggregate",
    "build_population",
    "degrees_of_freedom",
    "design_grid",
    "draw_sample",
    "fisher_check",
    "fisher_grid",
    "fit_ml",
    "fit_pls",
    "implied_covariance",
    "normalize_to_population",
    "parameterize",
    "report_ml",
    "report_pls",
    "run_condition",
    "run_plan",
    "study_spec",
]
