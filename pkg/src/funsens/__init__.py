"""Global sensitivity analysis for models with scalar and functional inputs."""

from .errors import (
    ConfigError,
    DataContractError,
    EstimateWarning,
    FitError,
    FunsensError,
    NumericalError,
)
from .models import (
    Distribution,
    ModelSpec,
    ProcessSpec,
    builtin_ishigami,
    builtin_wn_ishigami,
    evaluate,
    get_builtin,
)
from .sampling import EPS, SampleBlock, build_design_pair, sample_matrix, sample_process, substitute_columns
from .estimators import (
    EstimatorRun,
    IndexEstimate,
    IndexReport,
    bootstrap_sd,
    evaluate_block,
    index_name,
    saltelli_first_and_total,
    sobol_first_order,
    trigger_estimate,
)
from .formula import Formula, format_formula, parse_formula, realize_design
from .glm import Family, FittedComponent, fit_glm
from .gam import GamFit, SmoothSpec, fit_gam, smooth_significance
from .joint import JointModel, diagnostics_export, fit_joint, predictivity_q2
from .metamodel import (
    MetamodelSAReport,
    ReplicationStudy,
    compile_report,
    deduce_bounds,
    deduction_caveats,
    indices_from_mean,
    mean_predictor_model,
    report_table,
    sa_replication_study,
    total_index_functional,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataContractError",
    "Distribution",
    "EPS",
    "EstimateWarning",
    "EstimatorRun",
    "Family",
    "FitError",
    "FittedComponent",
    "Formula",
    "FunsensError",
    "GamFit",
    "IndexEstimate",
    "IndexReport",
    "JointModel",
    "MetamodelSAReport",
    "ModelSpec",
    "NumericalError",
    "ProcessSpec",
    "ReplicationStudy",
    "SampleBlock",
    "SmoothSpec",
    "bootstrap_sd",
    "build_design_pair",
    "builtin_ishigami",
    "builtin_wn_ishigami",
    "compile_report",
    "deduce_bounds",
    "deduction_caveats",
    "diagnostics_export",
    "evaluate",
    "evaluate_block",
    "fit_gam",
    "fit_glm",
    "fit_joint",
    "format_formula",
    "get_builtin",
    "index_name",
    "indices_from_mean",
    "mean_predictor_model",
    "parse_formula",
    "predictivity_q2",
    "realize_design",
    "report_table",
    "sa_replication_study",
    "saltelli_first_and_total",
    "sample_matrix",
    "sample_process",
    "smooth_significance",
    "sobol_first_order",
    "substitute_columns",
    "total_index_functional",
    "trigger_estimate",
]
