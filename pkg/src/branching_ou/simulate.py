"""Time evolution of the particle system.

Two steppers are provided and cross-validated against each other:

* ``euler_step`` integrates the coupled SDE directly with a dyadic step
  size, giving continuous-time paths for intra-interval diagnostics;
* ``exact_generation_step`` samples the end-of-interval law exactly in
  O(n) by splitting the drift matrix gamma*P - (gamma+b)*I along the
  averaging projection P: the relative part decays like e^{-(gamma+b)}
  with noise variance (1-e^{-2(gamma+b)})/(2(gamma+b)), the mean part like
  e^{-b} with noise variance (1-e^{-2b})/(2b), evaluated by limit at the
  removable singularities.

Randomness is addressed, not consumed from a shared stream: each
(replicate, generation, substep) triple owns a Philox counter block and
particle i reads row i of the drawn block. Identical seeds therefore give
bit-identical trajectories regardless of thread count or iteration order,
and distinct triples give independent draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ResourceError, StateError
from .model import (
    Generation,
    Linear,
    ModelParams,
    bound_function,
    branch,
    new_system,
)
from .theory import unit_ou_variance

__all__ = [
    "RngStream",
    "StepperConfig",
    "SnapshotPolicy",
    "drift_vector",
    "euler_step",
    "exact_generation_step",
    "run",
    "MAX_PARTICLES",
]

# Hard ceiling on population size; beyond ~2^22 particles per snapshot the
# trajectory no longer fits a desk-scale memory budget.
MAX_PARTICLES = 2**22

_KEY_MIX = 0x9E3779B97F4A7C15  # second Philox key word, fixed


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (replicate, generation, substep).

    The particle index addresses rows within a drawn block rather than a
    separate counter word; the layout is fixed, so the determinism and
    independence guarantees are unaffected.
    """

    root_seed: int
    replicate: int = 0
    generation: int = 0
    substep: int = 0

    def generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(
            key=[self.root_seed & (2**64 - 1), _KEY_MIX],
            counter=[0, self.substep, self.generation, self.replicate],
        )
        return np.random.Generator(bitgen)

    def at(self, *, replicate: Optional[int] = None, generation: Optional[int] = None,
           substep: Optional[int] = None) -> "RngStream":
        return replace(
            self,
            replicate=self.replicate if replicate is None else replicate,
            generation=self.generation if generation is None else generation,
            substep=self.substep if substep is None else substep,
        )

    def normals(self, shape) -> np.ndarray:
        return self.generator().standard_normal(shape)


@dataclass(frozen=True)
class StepperConfig:
    """Integration mode: exact per-generation sampling or Euler-Maruyama.

    Euler step sizes must be dyadic (h = 2^-k) so branch times are hit
    exactly; the default is 2^-8.
    """

    mode: str = "exact"          # "exact" or "euler"
    h: float = 2.0**-8

    def __post_init__(self):
        if self.mode not in ("exact", "euler"):
            raise ConfigurationError(f"unknown stepper mode: {self.mode!r}")
        if self.mode == "euler":
            k = -math.log2(self.h) if self.h > 0 else -1
            if k < 0 or abs(k - round(k)) > 1e-12:
                raise ConfigurationError(
                    f"Euler step must be a dyadic fraction 2^-k, got {self.h}")

    @property
    def substeps_per_interval(self) -> int:
        return 1 if self.mode == "exact" else int(round(1.0 / self.h))


@dataclass(frozen=True)
class SnapshotPolicy:
    """What to record: integer-time states always; optionally every Euler
    substep within an interval."""

    substeps: bool = False


# ---------------------------------------------------------------------------
# Drift
# ---------------------------------------------------------------------------

def _drift_array(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Drift for positions shaped (..., n, d)."""
    mean = x.mean(axis=-2, keepdims=True)
    interaction = params.gamma * (mean - x)
    if isinstance(params.drift_mode, Linear):
        return interaction - params.b * x
    fn = bound_function(params.drift_mode.fn_id)
    return interaction + fn(x)


def drift_vector(g: Generation, params: ModelParams) -> np.ndarray:
    """Per-particle drift gamma*(mean - x_i) - b*x_i (linear mode), or
    gamma*(mean - x_i) + b(x_i) in bounded mode."""
    return _drift_array(g.positions, params)


# ---------------------------------------------------------------------------
# Steppers
# ---------------------------------------------------------------------------

def euler_step(g: Generation, cfg: StepperConfig, params: ModelParams,
               rng: RngStream) -> Generation:
    """One Euler-Maruyama substep: x += drift*h + sqrt(h)*xi."""
    if cfg.mode != "euler":
        raise ConfigurationError("euler_step requires an euler-mode StepperConfig")
    h = cfg.h
    if g.t + h > g.m + 1 + 1e-12:
        raise StateError(
            f"step from t={g.t} by h={h} crosses branch time {g.m + 1}")
    xi = rng.normals(g.positions.shape)
    new = g.positions + _drift_array(g.positions, params) * h + math.sqrt(h) * xi
    # dyadic h is exactly representable, so t lands on m+1 with no drift
    return Generation(g.m, g.t + h, new)


def _exact_coefficients(params: ModelParams) -> tuple[float, float, float, float]:
    lam = params.gamma_eff
    return (math.exp(-lam), math.exp(-params.b),
            unit_ou_variance(lam), unit_ou_variance(params.b))


def _exact_update(x: np.ndarray, xi: np.ndarray, g_rel: float, g_com: float,
                  v_rel: float, v_com: float) -> np.ndarray:
    """Exact unit-interval transition for positions shaped (..., n, d)."""
    xbar = x.mean(axis=-2, keepdims=True)
    xibar = xi.mean(axis=-2, keepdims=True)
    return (g_rel * (x - xbar) + g_com * xbar
            + math.sqrt(v_rel) * (xi - xibar) + math.sqrt(v_com) * xibar)


def exact_generation_step(g: Generation, params: ModelParams,
                          rng: RngStream) -> Generation:
    """Advance one full interval [m, m+1) by exact Gaussian sampling.

    Coordinates evolve independently; within a coordinate the mean and the
    relative part are independent Gaussians. The relative noise lives in
    the zero-sum hyperplane (rank n-1), the mean noise has variance
    v_com / n, which reproduces the 2^{-m/2} noise scale of the center of
    mass.
    """
    if not isinstance(params.drift_mode, Linear):
        raise ConfigurationError("exact stepper requires linear drift mode")
    if g.t != g.m:
        raise StateError(f"exact step must start at t={g.m}, state is at t={g.t}")
    xi = rng.normals(g.positions.shape)
    new = _exact_update(g.positions, xi, *_exact_coefficients(params))
    return Generation(g.m, g.m + 1, new)


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------

def _check_budget(params: ModelParams) -> None:
    n_final = 2**params.horizon_m
    if n_final > MAX_PARTICLES:
        raise ResourceError(
            f"horizon_m={params.horizon_m} needs {n_final} particles; the limit "
            f"is {MAX_PARTICLES}. Reduce the horizon or raise MAX_PARTICLES "
            f"if you really have the memory.")


def run(params: ModelParams, cfg: StepperConfig = StepperConfig(),
        rng: Optional[RngStream] = None,
        record: SnapshotPolicy = SnapshotPolicy()) -> list[Generation]:
    """Simulate horizon_m branching events and return the trajectory.

    The loop alternates interval evolution and branching: generation m is
    evolved over [m, m+1) and branches at m+1, for m < horizon_m; the final
    generation is evolved over its interval but does not branch. Snapshots
    are recorded at every integer time (the initial state, each post-branch
    population, and the evolved final generation); with
    ``record.substeps`` and the Euler stepper, intra-interval states are
    recorded as well.
    """
    _check_budget(params)
    if rng is None:
        rng = RngStream(params.seed)
    g = new_system(params)
    trajectory = [g]
    M = params.horizon_m
    for m in range(M + 1):
        stream = rng.at(generation=m, substep=0)
        if cfg.mode == "exact":
            g = exact_generation_step(g, params, stream)
        else:
            for k in range(cfg.substeps_per_interval):
                g = euler_step(g, cfg, params, stream.at(substep=k))
                if record.substeps and g.t < g.m + 1:
                    trajectory.append(g)
        if m < M:
            g = branch(g)
        trajectory.append(g)
    return trajectory
