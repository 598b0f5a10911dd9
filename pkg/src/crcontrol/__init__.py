"""Reset-control toolbox: elements with continuous-output wrapping, harmonic
response analysis, frequency-domain stability checks, and hybrid closed-loop
simulation."""

from .closedloop import (
    LoopConfig,
    SensitivityCurve,
    StepMetrics,
    df_open_loop,
    hbeta_of_loop,
    phase_margin,
    sensitivity_scan,
    step_response,
)
from .design import (
    CglpDesign,
    design_cglp,
    gain_variation_experiment,
    guideline_preset,
    make_loop,
    practical_controllers,
    sweep_harmonics,
    sweep_transient,
)
from .frf import FrfData, fit_second_order_delay, load_frf
from .harmonics import (
    HosidfResult,
    compute_hosidf_grid,
    cr_hosidf,
    hosidf,
    hosidf_empirical,
    third_harmonic_integral,
)
from .hybridsim import BACKEND, HybridSimConfig, default_sim_config
from .lti import StateSpace, TransferFunction
from .reset import (
    CrElement,
    ResetElement,
    SimTrace,
    clegg,
    fore,
    reset_instants_predicted,
    simulate_reset_open,
)
from .stability import HbetaReport, hbeta_check

__all__ = [
    "BACKEND",
    "CglpDesign",
    "CrElement",
    "FrfData",
    "HbetaReport",
    "HosidfResult",
    "HybridSimConfig",
    "LoopConfig",
    "ResetElement",
    "SensitivityCurve",
    "SimTrace",
    "StateSpace",
    "StepMetrics",
    "TransferFunction",
    "clegg",
    "compute_hosidf_grid",
    "cr_hosidf",
    "default_sim_config",
    "design_cglp",
    "df_open_loop",
    "fit_second_order_delay",
    "fore",
    "gain_variation_experiment",
    "guideline_preset",
    "hbeta_check",
    "hbeta_of_loop",
    "hosidf",
    "hosidf_empirical",
    "load_frf",
    "make_loop",
    "phase_margin",
    "practical_controllers",
    "reset_instants_predicted",
    "sensitivity_scan",
    "simulate_reset_open",
    "step_response",
    "sweep_harmonics",
    "sweep_transient",
    "third_harmonic_integral",
]

__version__ = "0.1.0"
