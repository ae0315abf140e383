"""Named experiment presets: one per studied parameter regime.

Each preset fixes a parameter point inside its regime (inward/outward
drift, attraction/repulsion, critical balance, bounded drift) together
with the replicate budget used by the verification suite. ``--quick``
runs a tenth of the replicates against widened thresholds, for smoke
tests only.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

from . import analysis
from .analysis import DEFAULT_THRESHOLDS, ExperimentReport, StatLine, Thresholds
from .errors import ArgumentError
from .model import Bounded, ModelParams
from .theory import delta_transform

__all__ = ["ExperimentPreset", "PRESETS", "run_preset", "quick_thresholds"]


def quick_thresholds(base: Thresholds = DEFAULT_THRESHOLDS) -> Thresholds:
    """Widened thresholds for 1/10-replicate smoke runs."""
    return dataclasses.replace(
        base,
        z_max=6.0,
        slln_tol=0.03,
        escape_var_rel_tol=0.10,
        extinction_ratio_median=0.02,
        spearman_p_max=0.05,
    )


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    params: ModelParams
    horizon: int
    replicates: int
    runner: Callable[[ModelParams, int, int, int, Thresholds], ExperimentReport]

    def validate(self) -> None:
        """Check that the defaults satisfy the preset's regime."""
        checks = {
            "case1_slln": self.params.b > 0 and self.params.gamma_eff > 0,
            "noninteractive_ou": self.params.gamma == 0 and self.params.b > 0,
            "case2_watanabe": self.params.b > 0 and self.params.gamma_eff == 0,
            "case3_explore": self.params.b > 0 and self.params.gamma_eff < 0,
            "case4_extinction": self.params.b < 0 and self.params.gamma > 0,
            "com_inward": self.params.b > 0,
            "com_escape": self.params.b < 0,
            "delta_equiv": True,
            "covariance_mrca": self.params.gamma_eff > 0,
            "bounded_drift": isinstance(self.params.drift_mode, Bounded),
        }
        if not checks.get(self.name, True):
            raise ArgumentError(
                f"preset {self.name} defaults violate its parameter regime")


def _run_com_inward(params, m, reps, jobs, thresholds):
    return analysis.com_convergence_test(params, reps, m, jobs, thresholds)


def _run_com_escape(params, m, reps, jobs, thresholds):
    return analysis.escape_test(params, reps, m, jobs, thresholds)


def _run_slln(params, m, reps, jobs, thresholds):
    return analysis.slln_test(params, reps, m, jobs, thresholds=thresholds)


def _run_watanabe(params, m, reps, jobs, thresholds):
    return analysis.watanabe_scaling_test(
        params, reps, m_range=tuple(range(8, m + 1)), jobs=jobs,
        thresholds=thresholds)


def _run_extinction(params, m, reps, jobs, thresholds):
    return analysis.extinction_test(params, reps, m, ball_radius=1.0, jobs=jobs,
                                    thresholds=thresholds)


def _run_delta(params, m, reps, jobs, thresholds):
    """Both canonical drift-elimination pairs, merged into one report."""
    pairs = [
        (params, delta_transform(params, -params.b)),
        (dataclasses.replace(params, b=-1.0, gamma=1.0),
         dataclasses.replace(params, b=0.0, gamma=0.0)),
    ]
    merged: Optional[ExperimentReport] = None
    for k, (p1, p2) in enumerate(pairs):
        rep = analysis.delta_equivalence_test(p1, p2, m, reps, jobs, thresholds)
        tag = f"(b={p1.b},g={p1.gamma})~(b={p2.b},g={p2.gamma})"
        stats = [StatLine(f"{s.name} {tag}", s.observed, s.theoretical, s.se,
                          s.z, s.passed) for s in rep.statistics]
        if merged is None:
            merged = rep
            merged.statistics = stats
        else:
            merged.statistics.extend(stats)
    return merged


def _run_covariance(params, m, reps, jobs, thresholds):
    return analysis.covariance_mrca_test(params, reps, m, classes=(0, 3, 5),
                                         jobs=jobs, thresholds=thresholds)


def _run_bounded(params, m, reps, jobs, thresholds):
    return analysis.bounded_drift_test(params, reps, m, h=2.0**-3, jobs=jobs,
                                       thresholds=thresholds)


def _run_case3(params, m, reps, jobs, thresholds):
    """Exploratory occupation-decay sweep around the conjectured dichotomy.

    No pass/fail: the dichotomy is only conjectured, so every line is
    informational. The decisive comparison is the fitted log-occupation
    slope against log 2 - d |gamma + b|.
    """
    report = ExperimentReport("case3_explore",
                              {"b": params.b, "d": params.d, "horizon_m": m}, reps)
    for gamma in (-0.7, -1.0, -1.5):
        p = dataclasses.replace(params, gamma=gamma)
        row = analysis.occupation_stats(p, reps, m, jobs=jobs)
        report.statistics.append(StatLine(
            f"log-occupation slope (b={p.b}, gamma={gamma})",
            row["log_occupation_slope"], row["conjectured_slope"],
            None, None, True))
        report.statistics.append(StatLine(
            f"occupied fraction at m={m} (b={p.b}, gamma={gamma})",
            row["box_occupied_fraction_final"], None, None, None, True))
    return report


PRESETS: dict[str, ExperimentPreset] = {}


def _add(name, description, params, horizon, replicates, runner):
    PRESETS[name] = ExperimentPreset(name, description, params, horizon,
                                     replicates, runner)


_add("case1_slln",
     "inward drift with attraction: empirical measure converges to the Gaussian density",
     ModelParams(d=1, b=0.5, gamma=0.5, horizon_m=13, seed=2026),
     13, 100, _run_slln)
_add("noninteractive_ou",
     "non-interacting inward O-U branching: same SLLN with gamma = 0",
     ModelParams(d=1, b=1.0, gamma=0.0, horizon_m=13, seed=2027),
     13, 100, _run_slln)
_add("case2_watanabe",
     "critical balance gamma + b = 0: scaled occupation drifts toward Lebesgue measure",
     ModelParams(d=1, b=0.5, gamma=-0.5, horizon_m=14, seed=2028),
     14, 200, _run_watanabe)
_add("case3_explore",
     "inward drift dominated by repulsion: exploratory occupation decay (conjecture only)",
     ModelParams(d=1, b=0.5, gamma=-1.0, horizon_m=14, seed=2029),
     14, 200, _run_case3)
_add("case4_extinction",
     "outward drift with attraction: local extinction of every bounded set",
     ModelParams(d=1, b=-1.0, gamma=0.5, horizon_m=12, seed=2030),
     12, 200, _run_extinction)
_add("com_inward",
     "center of mass collapses to the origin for inward drift",
     ModelParams(d=1, b=1.0, gamma=0.5, horizon_m=10, seed=2031),
     10, 10_000, _run_com_inward)
_add("com_escape",
     "center of mass escapes at rate |b| with a Gaussian terminal profile",
     ModelParams(d=1, b=-1.0, gamma=0.5, horizon_m=15, seed=2032),
     15, 10_000, _run_com_escape)
_add("delta_equiv",
     "relative system law depends on gamma + b only",
     ModelParams(d=1, b=1.0, gamma=0.5, horizon_m=10, seed=2033),
     10, 10_000, _run_delta)
_add("covariance_mrca",
     "pair covariance by most recent common ancestor class",
     ModelParams(d=1, b=0.0, gamma=1.0, horizon_m=6, seed=2034),
     6, 100_000, _run_covariance)
_add("bounded_drift",
     "drift bounded in (1.1, 1.9): center-of-mass speed sandwich",
     ModelParams(d=1, b=0.0, gamma=0.5, horizon_m=20, seed=2035,
                 drift_mode=Bounded(1.1, 1.9, "tanh_ramp")),
     20, 200, _run_bounded)

for _p in PRESETS.values():
    _p.validate()


def run_preset(name: str, *, replicates: Optional[int] = None, jobs: int = 1,
               quick: bool = False, overrides: Optional[dict] = None) -> ExperimentReport:
    """Run a preset, optionally overriding parameters or replicate count."""
    if name not in PRESETS:
        raise ArgumentError(
            f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    preset = PRESETS[name]
    params = preset.params
    if overrides:
        params = dataclasses.replace(params, **overrides)
    horizon = params.horizon_m
    reps = replicates if replicates is not None else preset.replicates
    thresholds = DEFAULT_THRESHOLDS
    if quick:
        reps = max(10, reps // 10) if replicates is None else reps
        thresholds = quick_thresholds()
    return preset.runner(params, horizon, reps, jobs, thresholds)
