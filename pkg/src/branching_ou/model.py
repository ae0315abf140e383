"""Model state, parameters, dyadic branching, and lineage combinatorics.

The particle system lives in R^d. Generation m occupies the unit time
interval [m, m+1) and contains exactly 2^m particles. Labels are 1-based;
branching sends particle i of generation m to children 2i-1 and 2i of
generation m+1, both born at the parent's final position. This labeling is
deterministic and independent of the spatial motion, which is all the
lineage queries below rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ArgumentError, ConfigurationError, StateError

__all__ = [
    "Linear",
    "Bounded",
    "DriftMode",
    "ModelParams",
    "Generation",
    "new_system",
    "branch",
    "ancestor",
    "split_time",
    "pairs_by_split_time",
    "register_bound_function",
    "bound_function",
]


# ---------------------------------------------------------------------------
# Drift modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Linear:
    """Linear restoring drift -b*x plus mean-field interaction."""


@dataclass(frozen=True)
class Bounded:
    """Drift b(x) confined to (lower, upper), applied coordinate-wise.

    ``fn_id`` names a registered scalar function; the registry keeps the
    parameters serializable. Requires 0 < lower < upper.
    """

    lower: float
    upper: float
    fn_id: str


DriftMode = Union[Linear, Bounded]

_BOUND_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {}


def register_bound_function(fn_id: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Register a vectorized scalar drift function under ``fn_id``."""
    _BOUND_FUNCTIONS[fn_id] = fn


def bound_function(fn_id: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return _BOUND_FUNCTIONS[fn_id]
    except KeyError:
        raise ConfigurationError(f"unknown bounded drift function id: {fn_id!r}") from None


# Stock functions used by the presets.
register_bound_function("tanh_ramp", lambda x: 1.5 + 0.4 * np.tanh(x))
register_bound_function("const_1.5", lambda x: np.full_like(np.asarray(x, dtype=float), 1.5))


def _check_bounded(mode: Bounded) -> None:
    if not (0.0 < mode.lower < mode.upper):
        raise ConfigurationError(
            f"bounded drift requires 0 < lower < upper, got ({mode.lower}, {mode.upper})"
        )
    fn = bound_function(mode.fn_id)
    probe = np.linspace(-50.0, 50.0, 501)
    vals = np.asarray(fn(probe), dtype=float)
    # strict bounds up to float rounding: tanh saturates to 1.0 exactly in
    # double precision even though the mathematical value never reaches it
    eps = 1e-12 * max(abs(mode.lower), abs(mode.upper))
    if not np.all((vals > mode.lower - eps) & (vals < mode.upper + eps)):
        raise ConfigurationError(
            f"bound function {mode.fn_id!r} leaves ({mode.lower}, {mode.upper}) on probe grid"
        )


# ---------------------------------------------------------------------------
# Parameters and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Model parameters.

    b is the restoring drift strength (positive pulls toward the origin,
    negative pushes away); gamma is the mean-field interaction strength
    (positive = attraction toward the center of mass, gamma = 0 is the
    non-interacting system). horizon_m counts branching events, so a run
    ends with 2^horizon_m particles.
    """

    d: int = 1
    b: float = 0.0
    gamma: float = 0.0
    horizon_m: int = 0
    drift_mode: DriftMode = field(default_factory=Linear)
    seed: int = 0
    start: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {self.d}")
        if self.horizon_m < 0:
            raise ConfigurationError(f"horizon_m must be >= 0, got {self.horizon_m}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")
        if isinstance(self.drift_mode, Bounded):
            _check_bounded(self.drift_mode)
        elif not isinstance(self.drift_mode, Linear):
            raise ConfigurationError(f"unknown drift mode: {self.drift_mode!r}")
        if self.start is not None:
            s = tuple(float(v) for v in self.start)
            if len(s) != self.d:
                raise ConfigurationError(
                    f"start has {len(s)} coordinates for dimension {self.d}"
                )
            if not all(math.isfinite(v) for v in s):
                raise ConfigurationError("start coordinates must be finite")
            object.__setattr__(self, "start", s)

    @property
    def gamma_eff(self) -> float:
        """Drift parameter of the relative system, gamma + b."""
        return self.gamma + self.b


class Generation:
    """Population snapshot: 2^m particle positions at a time t in [m, m+1].

    Positions are stored as a read-only (2^m, d) float array; row i-1 is
    particle i. Instances are immutable and safe to share across threads.
    """

    __slots__ = ("m", "t", "positions")

    def __init__(self, m: int, t: float, positions: np.ndarray):
        positions = np.array(positions, dtype=float, copy=True)
        if positions.ndim == 1:
            positions = positions[:, None]
        if m < 0:
            raise ConfigurationError(f"generation index must be >= 0, got {m}")
        if positions.shape[0] != 2**m:
            raise ConfigurationError(
                f"generation {m} needs {2**m} particles, got {positions.shape[0]}"
            )
        if not (m <= t <= m + 1):
            raise StateError(f"time {t} outside [{m}, {m + 1}]")
        if not np.all(np.isfinite(positions)):
            raise ConfigurationError("positions must be finite")
        positions.flags.writeable = False
        self.m = int(m)
        self.t = float(t)
        self.positions = positions

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def __repr__(self):
        return f"Generation(m={self.m}, t={self.t}, n={self.n}, d={self.d})"


def new_system(params: ModelParams) -> Generation:
    """Initial state: one particle at ``params.start`` (origin by default)."""
    start = params.start if params.start is not None else (0.0,) * params.d
    return Generation(0, 0.0, np.array([start], dtype=float))


def branch(g: Generation) -> Generation:
    """Dyadic branching at the end of the interval.

    Children 2i-1 and 2i are both placed at parent i's final position.
    """
    if g.t != g.m + 1:
        raise StateError(f"branch called at t={g.t}, interval end is {g.m + 1}")
    return Generation(g.m + 1, g.t, np.repeat(g.positions, 2, axis=0))


# ---------------------------------------------------------------------------
# Lineage queries
# ---------------------------------------------------------------------------

def ancestor(i: int, m: int, g: int) -> int:
    """Label of particle i's ancestor at generation g (ceil(i / 2^(m-g)))."""
    if not (0 <= g <= m):
        raise ArgumentError(f"need 0 <= g <= m, got g={g}, m={m}")
    if not (1 <= i <= 2**m):
        raise ArgumentError(f"label {i} out of range for generation {m}")
    return -((-i) >> (m - g))  # ceil division by 2^(m-g)


def split_time(i: int, j: int, m: int) -> int:
    """Last generation at which particles i and j share an ancestor.

    Siblings split at m-1; particles in opposite halves of the tree split
    at 0 (only the root is common). Symmetric in (i, j).
    """
    if i == j:
        raise ArgumentError("split_time needs two distinct particles")
    for lab in (i, j):
        if not (1 <= lab <= 2**m):
            raise ArgumentError(f"label {lab} out of range for generation {m}")
    return m - ((i - 1) ^ (j - 1)).bit_length()


def pairs_by_split_time(i: int, m: int) -> np.ndarray:
    """count[a] = number of j != i with split_time(i, j, m) == a.

    The profile is label-independent: count[a] = 2^(m-a-1), summing to
    2^m - 1. Note this counts ancestry splits one generation earlier than
    the convention in which the count at distance k is 2^k; the two
    conventions differ by exactly a factor of two (see README).
    """
    if m < 1:
        raise ArgumentError(f"pairs_by_split_time needs m >= 1, got {m}")
    if not (1 <= i <= 2**m):
        raise ArgumentError(f"label {i} out of range for generation {m}")
    return np.array([2 ** (m - a - 1) for a in range(m)], dtype=np.int64)
