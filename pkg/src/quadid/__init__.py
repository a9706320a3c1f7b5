"""Quadrotor dynamics identification and receding-horizon validation toolkit."""

from .dynamics import (
    EulerAngles,
    InertiaParams,
    State12,
    Wrench,
    coriolis_matrix,
    euler_rate_map,
    generalized_accel,
    inertia_matrix,
    rotation_matrix,
    step_rk4,
)
from .pd_model import (
    ControlInput,
    DEFAULT_XI,
    PdGains,
    PdModel,
    PdParams,
    SMatrices,
    build_s_matrices,
    expanded_rotation,
    gains_to_xi,
    pd_closed_loop_accel,
    pd_derivative,
    pd_wrench,
    pd_wrench_matrix,
)
from .signals import (
    FlightDataset,
    TimeSeries,
    differentiate,
    lowpass,
    preprocess_dataset,
    read_dataset_csv,
    savitzky_golay,
    write_dataset_csv,
)
from .sindy import (
    LibrarySpec,
    SolverConfig,
    SparseModel,
    build_library,
    identify_sindy,
    sindy_predict,
    sr3_fit,
    stlsq_fit,
)
from .ident_pd import IdentProblem, IdentResult, identify_pd, wrench_residual
from .mpc import OcpConfig, OcpSolution, TrackingLog, discretize, solve_ocp, track
from .evaluation import (
    MetricReport,
    TrajectoryKind,
    concordance_index,
    mae,
    reference_position,
    reference_window,
    rmse,
)
from .simulate import (
    ChirpSpec,
    ClosedFormPdPlant,
    ExcitationConfig,
    InnerLoopPlant,
    generate_dataset,
)
from .config import PipelineConfig, STOCK_MASS

__version__ = "0.1.0"
