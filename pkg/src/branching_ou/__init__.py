"""Branching Ornstein-Uhlenbeck particle systems with mean-field interaction.

A simulator (exact per-generation Gaussian sampling plus Euler-Maruyama),
the closed-form theory layer it is verified against, and statistical
experiments covering center-of-mass limits, the relative-system law of
large numbers, ancestry-resolved covariances, and local extinction.
"""

from .analysis import (
    Box,
    ExperimentReport,
    RectangleFamily,
    center_of_mass,
    covariance_by_class,
    empirical_measure,
    relative_positions,
    slln_deviation,
    support_radius,
)
from .errors import (
    ArgumentError,
    BranchingOUError,
    ConfigurationError,
    DomainError,
    ResourceError,
    StateError,
)
from .model import (
    Bounded,
    Generation,
    Linear,
    ModelParams,
    ancestor,
    branch,
    new_system,
    pairs_by_split_time,
    split_time,
)
from .simulate import (
    RngStream,
    SnapshotPolicy,
    StepperConfig,
    drift_vector,
    euler_step,
    exact_generation_step,
    run,
)

__version__ = "0.1.0"
