"""Day-ahead price signal baselines trained on historical plus simulated prices.

Features per hour: the regional demand forecast, hour-of-day, day-of-week,
the limits of every interconnector, and the available capacity of each
(generator type, zone) group.  Two interchangeable model kinds sit behind
the same interface:

* ``ridge-linear``   -- regularised least squares on z-scored features,
  normal equations with an unpenalised intercept, weight 1e-3;
* ``nearest-neighbor`` -- the price of the closest stored exemplar in
  z-scored feature space (ties break to the earliest sample).

Constant features carry no information and are dropped at training time
(recorded on the predictor).  Everything is deterministic for a fixed
training set and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from gridstudy.dispatch import Generator

RIDGE_WEIGHT = 1e-3
MODEL_KINDS = ("ridge-linear", "nearest-neighbor")

_STD_FLOOR = 1e-12


class PricingError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSnapshot:
    """Everything the feature extractor needs about one hour of the system."""

    timestamp: datetime
    region: str
    demand_forecast_mw: float
    fleet: tuple[Generator, ...]
    line_limits: Mapping[str, tuple[float, float]]  # name -> (forward, reverse)
    availability: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.timestamp is None or self.region is None:
            raise PricingError("snapshot is missing its timestamp or region")
        if not np.isfinite(self.demand_forecast_mw):
            raise PricingError("snapshot demand forecast is not finite")


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (len(self.names),):
            raise PricingError(f"{len(self.names)} names for {arr.shape} values")
        if not np.all(np.isfinite(arr)):
            raise PricingError("feature vector contains non-finite entries")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def extract_features(snapshot: SystemSnapshot) -> FeatureVector:
    """Deterministic feature row for one hour.

    Capacity features are available MW summed per (type, zone); line
    features carry both limits of every interconnector.
    """
    names = ["demand_mw", "hour_of_day", "day_of_week"]
    values = [snapshot.demand_forecast_mw,
              float(snapshot.timestamp.hour),
              float(snapshot.timestamp.weekday())]
    for line_name in sorted(snapshot.line_limits):
        fwd, rev = snapshot.line_limits[line_name]
        names.append(f"line:{line_name}:forward")
        values.append(float(fwd))
        names.append(f"line:{line_name}:reverse")
        values.append(float(rev))
    groups: dict[tuple[str, str], float] = {}
    for gen in snapshot.fleet:
        avail = snapshot.availability.get(gen.name, 1.0) if gen.is_renewable else 1.0
        key = (gen.gtype, gen.zone)
        groups[key] = groups.get(key, 0.0) + gen.capacity_mw * avail
    for gtype, zone in sorted(groups):
        names.append(f"capacity:{gtype}:{zone}")
        values.append(groups[(gtype, zone)])
    return FeatureVector(tuple(names), np.array(values))


@dataclass(frozen=True)
class TrainingSample:
    features: FeatureVector
    price: float
    provenance: str  # historical | simulated

    def __post_init__(self):
        if self.provenance not in ("historical", "simulated"):
            raise PricingError(f"unknown provenance {self.provenance!r}")
        if not np.isfinite(self.price):
            raise PricingError("sample price is not finite")


@dataclass(frozen=True)
class TrainingSet:
    samples: tuple[TrainingSample, ...]

    def __post_init__(self):
        if not self.samples:
            raise PricingError("training set is empty")
        names = self.samples[0].features.names
        for s in self.samples:
            if s.features.names != names:
                raise PricingError("inconsistent feature names across samples")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.samples[0].features.names

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.vstack([s.features.values for s in self.samples])
        y = np.array([s.price for s in self.samples])
        return x, y


@dataclass(frozen=True)
class TrainedPredictor:
    kind: str
    seed: int
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray  # mask over feature_names; constant features dropped
    dropped: tuple[str, ...]
    coef: Optional[np.ndarray] = None        # ridge: [weights..., intercept]
    exemplars: Optional[np.ndarray] = None   # nn: normalised rows
    prices: Optional[np.ndarray] = None      # nn: target per exemplar


def train(data: TrainingSet, kind: str = "ridge-linear", seed: int = 0) -> TrainedPredictor:
    """Fit a predictor of the requested kind on z-scored features."""
    x, y = data.matrix()
    return train_matrix(data.feature_names, x, y, kind, seed)


def train_matrix(feature_names: tuple[str, ...], x: np.ndarray, y: np.ndarray,
                 kind: str = "ridge-linear", seed: int = 0) -> TrainedPredictor:
    """Bulk twin of ``train`` taking the stacked feature matrix directly."""
    if kind not in MODEL_KINDS:
        raise PricingError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise PricingError("training set is empty")
    if x.shape[1] != len(feature_names):
        raise PricingError(f"{len(feature_names)} names for {x.shape[1]} feature columns")
    if kind == "ridge-linear" and n < 24:
        raise PricingError(f"ridge needs at least 24 samples, got {n}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    kept = std > _STD_FLOOR
    if not np.any(kept) and kind == "ridge-linear":
        # Constant features carry nothing for a regression; the neighbour
        # model degenerates gracefully (all distances zero, earliest wins).
        raise PricingError("every feature is constant across the training set")
    feature_names = tuple(feature_names)
    dropped = tuple(name for name, k in zip(feature_names, kept) if not k)
    z = (x[:, kept] - mean[kept]) / std[kept]
    if kind == "ridge-linear":
        k = z.shape[1]
        a = np.hstack([z, np.ones((n, 1))])
        gram = a.T @ a
        gram[:k, :k] += RIDGE_WEIGHT * np.eye(k)  # intercept unpenalised
        coef = np.linalg.solve(gram, a.T @ y)
        return TrainedPredictor(kind, seed, feature_names, mean, std, kept,
                                dropped, coef=coef)
    return TrainedPredictor(kind, seed, feature_names, mean, std, kept,
                            dropped, exemplars=z, prices=y)


def _normalise(predictor: TrainedPredictor, rows: np.ndarray) -> np.ndarray:
    kept = predictor.kept
    return (rows[:, kept] - predictor.mean[kept]) / predictor.std[kept]


def predict_rows(predictor: TrainedPredictor, names: tuple[str, ...],
                 rows: np.ndarray) -> np.ndarray:
    if names != predictor.feature_names:
        raise PricingError("feature names do not match the training features")
    z = _normalise(predictor, rows)
    if predictor.kind == "ridge-linear":
        return z @ predictor.coef[:-1] + predictor.coef[-1]
    out = np.empty(z.shape[0])
    chunk = 512
    for i in range(0, z.shape[0], chunk):
        block = z[i:i + chunk]
        d2 = ((block[:, None, :] - predictor.exemplars[None, :, :]) ** 2).sum(axis=2)
        out[i:i + chunk] = predictor.prices[np.argmin(d2, axis=1)]
    return out


def predict(predictor: TrainedPredictor, features: FeatureVector) -> float:
    return float(predict_rows(predictor, features.names, features.values[None, :])[0])


def predict_day(predictor: TrainedPredictor, features: Sequence[FeatureVector]) -> np.ndarray:
    """Prices for a 24-hour block of feature vectors."""
    if len(features) != 24:
        raise PricingError(f"expected 24 feature vectors, got {len(features)}")
    names = features[0].names
    for fv in features:
        if fv.names != names:
            raise PricingError("inconsistent feature names within the day")
    rows = np.vstack([fv.values for fv in features])
    return predict_rows(predictor, names, rows)


# -- plain-text persistence -------------------------------------------------

_MAGIC = "gridstudy-predictor v1"


def save_predictor(predictor: TrainedPredictor, path) -> None:
    lines = [_MAGIC, f"kind {predictor.kind}", f"seed {predictor.seed}",
             f"features {len(predictor.feature_names)}"]
    for i, name in enumerate(predictor.feature_names):
        lines.append(f"f {name} {float(predictor.mean[i])!r} {float(predictor.std[i])!r} {int(predictor.kept[i])}")
    if predictor.kind == "ridge-linear":
        lines.append("coef " + " ".join(repr(float(c)) for c in predictor.coef))
    else:
        lines.append(f"exemplars {predictor.exemplars.shape[0]}")
        for row, price in zip(predictor.exemplars, predictor.prices):
            lines.append("e " + " ".join(repr(float(v)) for v in row) + f" -> {float(price)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_predictor(path) -> TrainedPredictor:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise PricingError(f"{path}: not a saved predictor")
    kind = lines[1].split(" ", 1)[1]
    seed = int(lines[2].split(" ", 1)[1])
    n_features = int(lines[3].split(" ", 1)[1])
    names, mean, std, kept = [], [], [], []
    for line in lines[4:4 + n_features]:
        _, name, m, s, k = line.split(" ")
        names.append(name)
        mean.append(float(m))
        std.append(float(s))
        kept.append(bool(int(k)))
    rest = lines[4 + n_features:]
    mean, std, kept = np.array(mean), np.array(std), np.array(kept)
    dropped = tuple(n for n, k in zip(names, kept) if not k)
    if kind == "ridge-linear":
        coef = np.array([float(v) for v in rest[0].split(" ")[1:]])
        return TrainedPredictor(kind, seed, tuple(names), mean, std, kept, dropped, coef=coef)
    count = int(rest[0].split(" ", 1)[1])
    exemplars, prices = [], []
    for line in rest[1:1 + count]:
        body = line[2:]
        feats, price = body.split(" -> ")
        exemplars.append([float(v) for v in feats.split(" ")])
        prices.append(float(price))
    return TrainedPredictor(kind, seed, tuple(names), mean, std, kept, dropped,
                            exemplars=np.array(exemplars), prices=np.array(prices))
