"""Power-system state estimation with conventional, hybrid and PMU-only measurements."""
from .estimator import (
    EstimationResult,
    SolverOptions,
    UnobservableError,
    linear_pmu_estimate,
    objective,
    observability_rank,
    wls_estimate,
)
from .kernels import BACKEND
from .measurements import (
    DEFAULT_NOISE,
    Measurement,
    MeasurementKind,
    MeasurementModel,
    MeasurementPlan,
    MeasurementSet,
    MeasType,
    NoiseSpec,
    conventional_plan,
    evaluate_h,
    hybrid_plan,
    jacobian_row,
    pmu_plan,
    simulate_measurements,
)
from .network import (
    Branch,
    Bus,
    BusKind,
    Network,
    NetworkDataError,
    NetworkFormatError,
    PolarState,
    RectangularState,
    branch_admittances,
    load_case,
    parse_ieee_cdf,
)

__version__ = "0.1.0"
