"""Monte Carlo replay of a flight: LOS classification, measurement synthesis,
ML estimation and summary error statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from tdoaloc.channel import RadioConfig
from tdoaloc.crlb import GeometryDegenerateError, crlb
from tdoaloc.estimator import DEFAULT_INIT_ALTITUDE_M, OUTLIER_THRESHOLD_M, estimate
from tdoaloc.geometry import (
    DEFAULT_SPEED_MPS,
    Box,
    Cylinder,
    Position,
    SensorNetwork,
    Trajectory,
    distance,
    sample_trajectory,
)
from tdoaloc.los import classify
from tdoaloc.tdoa import NlosBiasModel, synthesize

PERCENTILES = (10, 20, 30, 40, 50, 60, 70, 80, 90)


@dataclass(frozen=True)
class Scenario:
    name: str
    net: SensorNetwork
    trajectory: Trajectory
    cfg: RadioConfig
    obstacles: tuple[Box | Cylinder, ...] = ()
    bias: NlosBiasModel = field(default_factory=NlosBiasModel.none)
    trials_per_epoch: int = 1
    seed: int = 0
    speed_mps: float = DEFAULT_SPEED_MPS
    noise_scale: float = 1.0
    init_altitude_m: float = DEFAULT_INIT_ALTITUDE_M
    outlier_threshold_m: float = OUTLIER_THRESHOLD_M

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.trials_per_epoch < 1:
            raise ValueError("trials_per_epoch must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be nonnegative")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    trial: int
    time_s: float
    segment: str
    truth: Position
    estimate: Position | None
    error_m: float
    los: tuple[bool, ...]
    rmse_bound_m: float
    converged: bool
    failure_reason: str | None = None

    @property
    def valid(self) -> bool:
        return self.estimate is not None and math.isfinite(self.error_m)

    @property
    def los_count(self) -> int:
        return sum(self.los)


@dataclass(frozen=True)
class Aggregates:
    valid_count: int
    total_count: int
    valid_pct: float
    mean_error_m: float
    mean_error_outliers_removed_m: float
    outlier_count: int
    error_cdf: tuple[float, ...]

    @property
    def valid_summary(self) -> str:
        return f"{self.valid_count} out of {self.total_count} ({self.valid_pct:.1f}%)"

    def percentiles(self, qs: Sequence[float] = PERCENTILES) -> dict[int, float]:
        if not self.error_cdf:
            return {int(q): math.nan for q in qs}
        vals = np.percentile(np.asarray(self.error_cdf), qs)
        return {int(q): float(v) for q, v in zip(qs, vals)}

    def to_dict(self) -> dict:
        return {
            "valid_count": self.valid_count,
            "total_count": self.total_count,
            "valid_pct": self.valid_pct,
            "valid_summary": self.valid_summary,
            "mean_error_m": _num(self.mean_error_m),
            "mean_error_outliers_removed_m": _num(self.mean_error_outliers_removed_m),
            "outlier_count": self.outlier_count,
            "percentiles_m": {str(k): _num(v) for k, v in self.percentiles().items()},
        }


def summarize(errors: Sequence[float], threshold_m: float = OUTLIER_THRESHOLD_M) -> Aggregates:
    """Aggregate per-epoch errors; non-finite entries count as invalid epochs.

    The outlier-removed mean drops valid errors strictly above ``threshold_m``.
    """
    errs = np.asarray(errors, dtype=float)
    total = int(errs.size)
    valid = errs[np.isfinite(errs)]
    kept = valid[valid <= threshold_m]
    return Aggregates(
        valid_count=int(valid.size),
        total_count=total,
        valid_pct=100.0 * valid.size / total if total else math.nan,
        mean_error_m=float(valid.mean()) if valid.size else math.nan,
        mean_error_outliers_removed_m=float(kept.mean()) if kept.size else math.nan,
        outlier_count=int(valid.size - kept.size),
        error_cdf=tuple(float(v) for v in np.sort(valid)),
    )


def los_buckets(los_counts: Sequence[int], errors: Sequence[float], threshold_m: float = OUTLIER_THRESHOLD_M) -> dict[int, Aggregates]:
    """Aggregates grouped by the number of LOS links."""
    counts = np.asarray(los_counts, dtype=int)
    errs = np.asarray(errors, dtype=float)
    return {int(k): summarize(errs[counts == k], threshold_m) for k in np.unique(counts)}


@dataclass(frozen=True)
class RunReport:
    name: str
    records: tuple[EpochRecord, ...]
    aggregates: Aggregates
    threshold_m: float = OUTLIER_THRESHOLD_M

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error_m for r in self.records])

    @property
    def los_fraction(self) -> float:
        """Share of UAV-sensor links that are LOS, over all records."""
        n = sum(len(r.los) for r in self.records)
        return sum(r.los_count for r in self.records) / n if n else math.nan

    def median_error(self) -> float:
        cdf = self.aggregates.error_cdf
        return float(np.median(cdf)) if cdf else math.nan

    def by_los_count(self) -> dict[int, Aggregates]:
        return los_buckets([r.los_count for r in self.records], self.errors, self.threshold_m)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "aggregates": self.aggregates.to_dict(),
            "los_fraction": _num(self.los_fraction),
            "by_los_count": {str(k): v.to_dict() for k, v in self.by_los_count().items()},
        }

    def to_json(self, meta: dict | None = None) -> str:
        body = {"meta": meta} if meta else {}
        body.update(self.to_dict())
        return json.dumps(body, indent=2, allow_nan=False) + "\n"


def _num(v: float):
    return float(v) if math.isfinite(v) else None


def epoch_seed(seed: int, epoch: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch, trial])


def run(scn: Scenario) -> RunReport:
    """Replay the scenario trajectory and estimate every epoch and trial.

    Deterministic: each (epoch, trial) draws from its own seed sequence
    derived from the scenario seed.
    """
    net = scn.net
    records = []
    for k, sample in enumerate(sample_trajectory(scn.trajectory, scn.speed_mps)):
        truth = sample.position
        los = classify(net, truth, scn.obstacles)
        try:
            bound = crlb(net, truth, scn.cfg).rmse_bound_m
        except (GeometryDegenerateError, ValueError):
            bound = math.inf
        for trial in range(scn.trials_per_epoch):
            meas = synthesize(
                net, truth, scn.cfg, scn.bias, los, epoch_seed(scn.seed, k, trial),
                epoch=sample.time, noise_scale=scn.noise_scale,
            )
            est = estimate(
                net, meas, truth=truth,
                outlier_threshold_m=scn.outlier_threshold_m, init_altitude_m=scn.init_altitude_m,
            )
            ok = est.converged and all(map(math.isfinite, est.position))
            records.append(
                EpochRecord(
                    epoch=k,
                    trial=trial,
                    time_s=sample.time,
                    segment=sample.segment,
                    truth=truth,
                    estimate=est.position if ok else None,
                    error_m=distance(est.position, truth) if ok else math.nan,
                    los=los,
                    rmse_bound_m=bound,
                    converged=est.converged,
                    failure_reason=est.failure_reason,
                )
            )
    agg = summarize([r.error_m for r in records], scn.outlier_threshold_m)
    return RunReport(scn.name, tuple(records), agg, scn.outlier_threshold_m)


@dataclass(frozen=True)
class Comparison:
    names: tuple[str, ...]
    rows: tuple[dict, ...]

    def column(self, key: str) -> list:
        return [r[key] for r in self.rows]

    def to_text(self) -> str:
        head = f"{'scenario':<24} {'valid measurements':<26} {'total avg error':>16} {'avg (outliers removed)':>24}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r['name']:<24} {r['valid_summary']:<26} {_m(r['mean_error_m']):>16} "
                f"{_m(r['mean_error_outliers_removed_m']):>24}"
            )
        lines.append("")
        lines.append(f"{'scenario':<24} " + " ".join(f"{'p' + str(q):>9}" for q in PERCENTILES))
        for r in self.rows:
            lines.append(f"{r['name']:<24} " + " ".join(f"{_m(r['percentiles_m'][str(q)]):>9}" for q in PERCENTILES))
        return "\n".join(lines) + "\n"


def _m(v) -> str:
    return "n/a" if v is None else f"{v:.2f} m"


def compare(reports: Sequence[RunReport]) -> Comparison:
    """Side-by-side aggregates and error-CDF percentiles of several runs."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    rows = tuple({"name": r.name, **r.aggregates.to_dict(), "los_fraction": _num(r.los_fraction)} for r in reports)
    return Comparison(tuple(r.name for r in reports), rows)
