"""Grid-ladder experiments: count, fit, and compare with the predicted coefficient."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..asymptotics import CoefficientReport
from ..spectra import PER_DECADE, CountSamples, FitError, FitResult, auto_window, fit_power_law, t_grid
from .models import ModelProblem


@dataclass
class LevelResult:
    L: float
    n: int
    floor: float
    samples: CountSamples
    fit: FitResult | None
    C_ratio: float | None
    theta_ratio: float | None
    C_fixed_ratio: float | None
    runtime: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "n": self.n,
            "floor": self.floor,
            "t": self.samples.t.tolist(),
            "counts": self.samples.n.tolist(),
            "flagged": self.samples.flagged.astype(bool).tolist(),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "C_ratio": self.C_ratio,
            "theta_ratio": self.theta_ratio,
            "C_fixed_ratio": self.C_fixed_ratio,
            "note": self.note,
        }


def _log_dist(r):
    return abs(math.log(r)) if r and r > 0 else math.inf


@dataclass
class ExperimentReport:
    model_id: str
    predicted: CoefficientReport | None
    levels: list[LevelResult] = field(default_factory=list)

    @property
    def finest(self) -> LevelResult:
        return self.levels[-1]

    def trend(self) -> dict:
        """Changes of the agreement measures from the coarsest to the finest level."""
        fitted = [lv for lv in self.levels if lv.fit is not None]
        if len(fitted) < 2:
            return {"levels": len(fitted)}
        th = [abs(lv.theta_ratio - 1) for lv in fitted]
        cl = [_log_dist(lv.C_ratio) for lv in fitted]
        cf = [_log_dist(lv.C_fixed_ratio) for lv in fitted]
        mono = lambda v: all(b < a for a, b in zip(v, v[1:]))
        return {
            "levels": len(fitted),
            "theta_error": th,
            "theta_error_decreasing": mono(th),
            "C_log_error": cl,
            "C_ratio_toward_one": mono(cl),
            "C_fixed_log_error": cf,
            "C_fixed_toward_one": mono(cf),
        }

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "predicted": None if self.predicted is None else self.predicted.to_dict(),
            "levels": [lv.to_dict() for lv in self.levels],
            "trend": self.trend(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def runtimes(self) -> list[float]:
        return [lv.runtime for lv in self.levels]


def level_t_grid(floor: float, per_decade: int = PER_DECADE) -> np.ndarray:
    """From a decade below the floor to two decades above it."""
    return t_grid(floor / 10.0, floor * 100.0, per_decade)


def run_level(model: ModelProblem, L: float, n: int, window=None) -> LevelResult:
    t0 = time.perf_counter()
    floor = model.floor(L, n)
    ts = level_t_grid(floor)
    samples = model.samples(L, n, ts)
    pred = model.expected
    theta_pred = model.theta_expected
    fit = None
    note = ""
    try:
        if window is None:
            fit = auto_window(samples, floor, theta_fixed=theta_pred)
        else:
            fit = fit_power_law(samples, window, theta_fixed=theta_pred)
    except FitError as exc:
        note = str(exc)
    C_ratio = theta_ratio = Cf_ratio = None
    if fit is not None:
        theta_ratio = fit.theta / theta_pred
        if pred is not None and pred.C > 0:
            C_ratio = fit.C / pred.C
            Cf_ratio = fit.C_fixed / pred.C
    return LevelResult(L, n, floor, samples, fit, C_ratio, theta_ratio, Cf_ratio,
                       time.perf_counter() - t0, note)


def run_experiment(model: ModelProblem, grids=None, window=None) -> ExperimentReport:
    """Assemble, solve, count and fit at each ``(L, n)`` of the ladder."""
    ladder = tuple(grids) if grids is not None else model.ladder
    if len(ladder) < 2:
        raise ValueError("a grid ladder needs at least two levels")
    rep = ExperimentReport(model.model_id, model.expected)
    for L, n in ladder:
        rep.levels.append(run_level(model, L, n, window))
    return rep
