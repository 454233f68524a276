"""binned measures and count reports"""

import csv
import functools
import io
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from src.errors import DomainError

CSV_COLUMNS = ("bin_id", "lo", "hi", "observed", "predicted", "ratio")


@dataclass(frozen=True)
class BinSpec:
    """one cell of a partition: identifier plus lower/upper coordinate"""

    id: str
    lo: float
    hi: float


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """nonnegative weights over a fixed partition"""

    bins: Tuple[BinSpec, ...]
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(self.bins),):
            raise DomainError(f"{len(self.bins)} bins but {weights.shape} weights")
        if np.any(weights < 0):
            raise DomainError("weights must be nonnegative")
        weights.setflags(write=False)
        object.__setattr__(self, "bins", tuple(self.bins))
        object.__setattr__(self, "weights", weights)

    @classmethod
    def empty(cls, bins: Sequence[BinSpec]) -> "EmpiricalMeasure":
        return cls(tuple(bins), np.zeros(len(bins)))

    @classmethod
    def from_indices(cls, bins: Sequence[BinSpec], indices: np.ndarray, weights: Optional[np.ndarray] = None) -> "EmpiricalMeasure":
        """accumulate (optionally weighted) samples by bin index"""
        counts = np.bincount(np.asarray(indices, dtype=np.int64), weights=weights, minlength=len(bins))
        return cls(tuple(bins), counts[:len(bins)].astype(float))

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def merge(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        """weight-wise sum of two runs over the same partition"""
        if self.bins != other.bins:
            raise DomainError("cannot merge measures over different partitions")
        return EmpiricalMeasure(self.bins, self.weights + other.weights)

    def normalized(self) -> np.ndarray:
        total = self.total
        if total <= 0:
            raise DomainError("cannot normalize an empty measure")
        return self.weights / total


def merge_all(measures: Iterable[EmpiricalMeasure]) -> EmpiricalMeasure:
    return functools.reduce(EmpiricalMeasure.merge, measures)


@dataclass(frozen=True, eq=False)
class CountReport:
    """
    observed counts against predicted asymptotics, bin by bin

    shape is () for a flat partition and (rows, cols) for a joint grid
    stored row-major
    """

    T: float
    bins: Tuple[BinSpec, ...]
    observed: np.ndarray
    predicted: np.ndarray
    stabilizer_order: int = 1
    mode: str = "gamma"
    shape: Tuple[int, ...] = ()
    parameters: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        observed = np.asarray(self.observed, dtype=np.int64)
        predicted = np.asarray(self.predicted, dtype=float)
        if observed.shape != (len(self.bins),) or predicted.shape != observed.shape:
            raise DomainError("observed/predicted must have one entry per bin")
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "predicted", predicted)
        object.__setattr__(self, "bins", tuple(self.bins))

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.predicted > 0, self.observed / self.predicted, np.nan)

    @property
    def global_relative_error(self) -> float:
        predicted = float(np.sum(self.predicted))
        if predicted <= 0:
            return math.nan
        return abs(float(np.sum(self.observed)) / predicted - 1.0)

    @property
    def max_deviation(self) -> float:
        return float(np.nanmax(np.abs(self.ratio - 1.0)))

    @property
    def reliable(self) -> bool:
        """false when some bin predicts fewer than one point"""
        return bool(np.all(self.predicted >= 1.0))

    def grid(self, values: np.ndarray) -> np.ndarray:
        if len(self.shape) != 2:
            raise DomainError("report is not a joint grid")
        return np.asarray(values).reshape(self.shape)

    def marginal(self, axis: int, bins: Sequence[BinSpec]) -> "CountReport":
        """
        collapse one axis of a joint report

        args:
            axis: 0 keeps the row partition, 1 keeps the column partition
            bins: descriptors of the kept partition
        """
        summed_axis = 1 if axis == 0 else 0
        return CountReport(
            T=self.T,
            bins=tuple(bins),
            observed=self.grid(self.observed).sum(axis=summed_axis),
            predicted=self.grid(self.predicted).sum(axis=summed_axis),
            stabilizer_order=self.stabilizer_order,
            mode=self.mode,
            parameters=dict(self.parameters),
        )

    def rows(self) -> List[Tuple[str, str, str, str, str, str]]:
        out = []
        for spec, obs, pred, ratio in zip(self.bins, self.observed, self.predicted, self.ratio):
            out.append((spec.id, repr(float(spec.lo)), repr(float(spec.hi)), str(int(obs)), repr(float(pred)), repr(float(ratio))))
        return out

    def write_csv(self, handle: TextIO) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows())

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()

    def summary(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "mode": self.mode,
            "stabilizer_order": self.stabilizer_order,
            "shape": list(self.shape),
            "total_observed": int(np.sum(self.observed)),
            "total_predicted": float(np.sum(self.predicted)),
            "global_relative_error": self.global_relative_error,
            "max_deviation": self.max_deviation,
            "reliable": self.reliable,
            "parameters": self.parameters,
        }
