"""Servo-axis simulation and cost-driven cascade-gain auto-tuning.

The package models a ball-screw axis driven by a PM synchronous motor
under a three-loop cascade (position P, speed PI, current PI in the
drive), scores closed-loop runs with a weighted tracking cost, and
tunes the cascade gains with grid search, classical rules, or Gaussian-
process Bayesian optimization over a bounded gain box.

Layers, bottom up:

- :mod:`axistune.plant` -- transfer functions and state-space models of
  the motor plus two-mass drivetrain.
- :mod:`axistune.refgen` -- setpoints to reference trajectories.
- :mod:`axistune.simloop` -- the sampled cascade simulator.
- :mod:`axistune.metrics` -- step-response metrics and the scalar cost.
- :mod:`axistune.bench` -- the memoized cost oracle tying those together.
- :mod:`axistune.gpr` -- Gaussian-process regression (squared-exponential
  kernel, Cholesky solves, marginal-likelihood hyperparameter fit).
- :mod:`axistune.tuner` -- feasible gain grids, confidence-bound
  acquisition, the optimization loop, and exhaustive grid search.
- :mod:`axistune.baselines` -- relay, ultimate-gain, and ITAE tuning.
- :mod:`axistune.presets` / :mod:`axistune.cli` -- named configurations
  and the command-line front end.
"""

from .baselines import (
    TuningError,
    TuningResult,
    itae_tune,
    measure_limit_cycle,
    relay_tune,
    ziegler_nichols,
)
from .bench import BENCH_MOVE, TuningBench, benchmark_profile
from .gpr import (
    Dataset,
    GpHyperparams,
    GpPosterior,
    HyperparamSearchError,
    default_hyper_bounds,
    fit,
    fit_hyperparams,
    kernel,
    nlml,
    predict,
    predict_many,
)
from .metrics import CostWeights, MetricVector, cost, extract_metrics, itae
from .plant import (
    ModelError,
    PlantParams,
    StateSpaceModel,
    TransferFunction,
    drivetrain_tfs,
    full_tf,
    motor_tf,
    physical_state_model,
    rational_equal,
    to_state_space,
)
from .presets import (
    DEFAULT_PRESET,
    FEASIBLE_PRESETS,
    LAB_SERVO,
    LAB_SERVO_CURRENT,
    PRESETS,
    Preset,
    SIM_PRESETS,
    TRAJECTORY_PRESETS,
    WEIGHT_PRESETS,
    get_preset,
    get_weights,
)
from .refgen import (
    PhaseSpan,
    ReferenceProfile,
    TrajectorySpec,
    bidirectional_step,
    constant_speed_profile,
    generate_profile,
)
from .simloop import (
    CurrentControllerGains,
    GainVector,
    SimConfig,
    SimTrace,
    simulate,
    simulate_batch,
    stability_probe,
)
from .tuner import (
    BoConfig,
    BoState,
    FeasibleSet,
    IterationRecord,
    OracleAbort,
    grid_search,
    lcb,
    load_grid_table,
    next_point,
    run_bo,
    save_grid_table,
)

__version__ = "0.1.0"
