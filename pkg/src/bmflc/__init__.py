"""BMFLC filters with a closed-loop vibration suppression testbed."""

__version__ = "0.1.0"

from .filters import (
    VARIANTS,
    BasisVector,
    FilterConfig,
    FilterDivergenceError,
    FilterState,
    FrequencyGrid,
    StepSizeParams,
    eval_basis,
    feedforward_force,
    load_filter_state,
    make_filter_state,
    make_grid,
    predict,
    save_filter_state,
    step,
    step_damped,
    step_kalman,
    step_lms,
    step_rls,
)
from .campaigns import CampaignConfig, config_hash, load_config, save_params
from .metrics import TimingStats, bandpass_mse, dft_magnitude, suppression_rate, time_step_sizes
from .plant import (
    ControllerParams,
    ExperimentRecord,
    PlantParams,
    PlantState,
    impedance_force,
    plant_step,
    run_closed_loop,
)
from .synth import (
    MotionSpec,
    SineComponent,
    SynthParams,
    apply_drift,
    drift_crossfade,
    evaluate,
    load_motion,
    make_motion,
    sample_spec,
    save_motion,
    vibration_defaults,
    vibration_force,
    voluntary_accel,
    voluntary_defaults,
    voluntary_position,
    voluntary_velocity,
)
from .replay import ReplayReport, load_trace, peak_magnitude, replay
from .tuning import NMResult, TuneProblem, TuneResult, nelder_mead, tune_general_params
