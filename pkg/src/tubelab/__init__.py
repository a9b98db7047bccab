"""tubelab: exact incidence geometry of dyadic tubes at finite scales."""
from __future__ import annotations

from .core_grid import (
    DyadicPoint,
    DyadicRational,
    ExponentFit,
    PointSet,
    Scale,
    covering_number,
    covering_number_1d,
    energy_sum,
    fit_exponent,
)
from .errors import (
    DomainError,
    DyadicOverflowError,
    GeneratorError,
    HypothesisViolation,
    ParseError,
    ScaleError,
    TubelabError,
    ValidationError,
)
from .tubes import (
    DyadicTube,
    Line,
    OrdinaryTube,
    TubeFamily,
    Window,
    canonical_tube_through,
    cover_by_coarse_tubes,
    children,
    children_in_family,
    dual_line,
    parent,
    separating_point,
    to_ordinary,
    tube_contains,
    tubes_through,
)
from .delta_sets import (
    DeltaSetParams,
    DiscreteContent,
    ExtractReport,
    ValidationReport,
    discrete_content,
    discrete_content_1d,
    extract,
    validate,
    validate_1d,
)
from .incidence import (
    CauchySchwarzReport,
    Configuration,
    DichotomyReport,
    IncidenceReport,
    cauchy_schwarz_bound,
    dichotomy_check,
    good_tube_count,
    incidence_report,
    validate_configuration,
)
from .projections import (
    DirectionNet,
    ProjectionEnergy,
    ProjectionSweep,
    exceptional_set,
    project,
    projection_energy,
    sweep,
)
from .additive import (
    PairGraph,
    QuasiProduct,
    bsg_refine,
    plunnecke_corollary_check,
    restricted_sumset,
    sumset_cover,
    tripod_image_cover,
    tripod_projection,
    tripod_residual,
    tube_slice_pairs,
)
from .generators import (
    GeneratorSpec,
    cantor_grid,
    cantor_line,
    collinear_tripod,
    furstenberg_product,
    grid,
    quasi_product,
    quasi_product_tubes,
    slope_net,
)
from .manifest import ExperimentManifest, run

__version__ = "0.1.0"
