"""Simulation and nonparametric intensity estimation for spatial
birth-death-move point processes."""

from .geometry import (
    GeometryError,
    PointConfig,
    Tessellation,
    Window,
    cardinality_distance,
    delaunay,
    hausdorff,
    max_cell_area,
    max_nn_distance,
    optimal_matching,
)
from .model import (
    IntensityFn,
    ModelSpec,
    ModelValidationError,
    MoveProcess,
    PRESETS,
    TransitionKernel,
    ValidationReport,
    brownian_move,
    get_preset,
    identity_move,
    poisson_initial_config,
    sim41_model,
    sim42_model,
    validate_model,
)
from .simulate import (
    FrameSequence,
    JumpEvent,
    SimOptions,
    SimulationError,
    Trajectory,
    discretize,
    jump_count_scaling,
    sample_waiting_time,
    simulate,
)
from .estimate import (
    FeatureMap,
    IntensityEstimate,
    KernelSpec,
    estimate_continuous,
    estimate_discrete,
    eval_kernel,
    feature_cardinality,
    feature_maxarea,
    gaussian_profile,
    jump_counts_between,
    occupation_time,
)
from .bandwidth import (
    BandwidthSelectionError,
    CVResult,
    cv_objective_continuous,
    cv_objective_discrete,
    select_bandwidth,
)
from .analysis import (
    MseReport,
    SeriesPair,
    STRATEGIES,
    ccf,
    run_mse_experiment,
    scatter_export,
    strategy_kernel,
)
from .io import (
    load_config,
    read_frames,
    read_trajectory,
    write_frames,
    write_trajectory,
)

__version__ = "0.1.0"
