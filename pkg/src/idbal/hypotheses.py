"""Hypothesis representations and the operations the learners drive.

Two worlds:

* exact: a finite ordered class realized as a label table over a fixed
  instance pool, with explicit candidate-set updates and an exhaustive
  disagreement test;
* practical: a linear model with a bias coordinate, trained by online gradient
  descent on the squared surrogate (y mapped to {-1, +1}), with a margin-based
  approximation of the disagreement test that never materializes a candidate
  set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Example, FeatureVector
from .estimators import WeightedSample, as_predictor

__all__ = [
    "LinearModel",
    "FiniteClass",
    "TableClassifier",
    "CandidateSetExact",
    "predict",
    "classification_error",
    "erm_weighted",
    "update_candidates",
    "exact_dis_test",
    "ogd_stepsize",
    "ogd_update",
    "approx_dis_test",
    "approx_dis_mask",
]


@dataclass(frozen=True)
class LinearModel:
    """Linear threshold classifier over the extended vector x~ = (1, x).

    weights[0] is the bias; weights[i] multiplies feature index i. steps
    counts every gradient update ever applied, across training phases; it is
    never reset.
    """

    weights: np.ndarray
    steps: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-d array")
        object.__setattr__(self, "weights", w)
        if self.steps < 0:
            raise ValueError("steps cannot be negative")

    @classmethod
    def zeros(cls, dim: int) -> "LinearModel":
        if dim < 1:
            raise ValueError("dim must be positive")
        return cls(np.zeros(dim + 1), 0)

    @property
    def dim(self) -> int:
        return self.weights.size - 1

    def raw_score(self, x: FeatureVector) -> float:
        w = self.weights
        total = w[0]
        for index, value in x.items:
            if index >= w.size:
                raise ValueError(f"feature index {index} exceeds model dimension {self.dim}")
            total += w[index] * value
        return float(total)

    def predict(self, x: FeatureVector) -> int:
        # ties (score exactly 0) go to label 1
        return 1 if self.raw_score(x) >= 0.0 else 0

    def margin(self, x: FeatureVector) -> float:
        """|w . x~| / ||w||_2, bias included on both sides; 0 for a zero model."""
        norm = float(np.linalg.norm(self.weights))
        if norm == 0.0:
            return 0.0
        return abs(self.raw_score(x)) / norm

    def to_csv_line(self) -> str:
        return ",".join(repr(float(v)) for v in self.weights)

    @classmethod
    def from_csv_line(cls, line: str, steps: int = 0) -> "LinearModel":
        values = [float(tok) for tok in line.strip().split(",") if tok != ""]
        if not values:
            raise ValueError("empty weight line")
        return cls(np.array(values), steps)


def ogd_stepsize(t: int, eta: float) -> float:
    """Schedule sqrt(eta / (t + eta)) for update number t (1-based); t = 0
    gives the degenerate value 1 for every eta, so callers pass the
    incremented counter."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if t < 0:
        raise ValueError("t cannot be negative")
    return math.sqrt(eta / (t + eta))


def ogd_update(model: LinearModel, x: FeatureVector, y: int, importance_weight: float, eta: float) -> LinearModel:
    """One gradient step on the weighted squared surrogate (w . x~ - y~)^2
    with y~ = 2y - 1. Uses the pre-increment step index for the stepsize; the
    returned model has steps advanced by one even if the weight is 0.
    """
    if y not in (0, 1):
        raise ValueError("label must be 0 or 1")
    if importance_weight < 0.0:
        raise ValueError("importance weight cannot be negative")
    step = ogd_stepsize(model.steps + 1, eta)
    weights = model.weights.copy()
    if importance_weight > 0.0:
        target = 2.0 * y - 1.0
        residual = model.raw_score(x) - target
        scale = step * importance_weight * 2.0 * residual
        weights[0] -= scale
        for index, value in x.items:
            weights[index] -= scale * value
    return LinearModel(weights, model.steps + 1)


class TableClassifier:
    """A single member of a FiniteClass; total on the class's pool only."""

    __slots__ = ("owner", "index")

    def __init__(self, owner: "FiniteClass", index: int):
        self.owner = owner
        self.index = index

    def predict(self, x: FeatureVector) -> int:
        return int(self.owner.labels[self.index, self.owner.pool_position(x)])

    def __repr__(self) -> str:
        return f"TableClassifier(index={self.index})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TableClassifier)
            and other.index == self.index
            and other.owner is self.owner
        )

    def __hash__(self) -> int:
        return hash((id(self.owner), self.index))


class FiniteClass:
    """Ordered finite hypothesis class over a shared instance pool.

    Stored as a (members x pool) 0/1 label table: membership tests,
    disagreement checks, and weighted empirical errors reduce to array
    lookups. Members are addressed by their index.
    """

    def __init__(self, pool: Sequence[FeatureVector], labels: np.ndarray):
        table = np.asarray(labels)
        if table.ndim != 2:
            raise ValueError("labels must be a (members, pool) table")
        if table.shape[1] != len(pool):
            raise ValueError("label table width must match pool size")
        if table.shape[0] < 1:
            raise ValueError("class must contain at least one member")
        if not np.isin(table, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        self.pool: tuple[FeatureVector, ...] = tuple(pool)
        self.labels: np.ndarray = table.astype(np.int8)
        self._positions: dict[FeatureVector, int] = {x: i for i, x in enumerate(self.pool)}
        if len(self._positions) != len(self.pool):
            raise ValueError("pool instances must be distinct")

    @classmethod
    def from_classifiers(cls, pool: Sequence[FeatureVector], members: Sequence) -> "FiniteClass":
        """Tabulate arbitrary classifiers (fixed separators etc.) on the pool."""
        rows = []
        for member in members:
            p = as_predictor(member)
            rows.append([int(p(x)) for x in pool])
        return cls(pool, np.array(rows, dtype=np.int8))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def member(self, index: int) -> TableClassifier:
        if not 0 <= index < len(self):
            raise ValueError(f"member index {index} out of range")
        return TableClassifier(self, index)

    def pool_position(self, x: FeatureVector) -> int:
        try:
            return self._positions[x]
        except KeyError:
            raise ValueError("instance is not in the class's pool") from None

    def positions(self, instances: Sequence[FeatureVector]) -> np.ndarray:
        return np.array([self.pool_position(x) for x in instances], dtype=np.intp)

    def predictions(self, instances: Sequence[FeatureVector]) -> np.ndarray:
        """(members, len(instances)) label matrix."""
        return self.labels[:, self.positions(instances)]


@dataclass(frozen=True)
class CandidateSetExact:
    """A nonempty subset of a FiniteClass, held as sorted member indices."""

    active: tuple[int, ...]

    def __post_init__(self):
        if len(self.active) == 0:
            raise ValueError("candidate set cannot be empty")
        ordered = tuple(sorted(set(int(i) for i in self.active)))
        if len(ordered) != len(self.active):
            raise ValueError("candidate indices must be distinct")
        object.__setattr__(self, "active", ordered)

    @classmethod
    def full(cls, hypothesis_class: FiniteClass) -> "CandidateSetExact":
        return cls(tuple(range(len(hypothesis_class))))

    def __len__(self) -> int:
        return len(self.active)

    def __contains__(self, index: int) -> bool:
        return index in self.active


def predict(classifier, x: FeatureVector) -> int:
    """Predict with any supported classifier representation."""
    return int(as_predictor(classifier)(x))


def classification_error(classifier, examples: Sequence[Example]) -> float:
    """Plain 0-1 error on fully labeled examples."""
    if len(examples) == 0:
        raise ValueError("error undefined on an empty example list")
    p = as_predictor(classifier)
    wrong = sum(1 for ex in examples if p(ex.x) != ex.y)
    return wrong / len(examples)


def _weighted_losses(
    hypothesis_class: FiniteClass, sample: WeightedSample, member_indices: Sequence[int]
) -> np.ndarray:
    """Estimator value per member over the sample, vectorized on the table."""
    rows = np.asarray(member_indices, dtype=np.intp)
    live = [(t, d) for t, d in sample.records if t.z == 1]
    if not live:
        return np.zeros(len(rows))
    cols = hypothesis_class.positions([t.x for t, _ in live])
    targets = np.array([t.y for t, _ in live], dtype=np.int8)
    inverse = np.array([1.0 / d for _, d in live])
    mistakes = hypothesis_class.labels[np.ix_(rows, cols)] != targets
    return mistakes @ inverse


def erm_weighted(
    hypothesis_class: FiniteClass,
    sample: WeightedSample,
    restrict: CandidateSetExact | None = None,
) -> tuple[int, float]:
    """Member minimizing the weighted estimator over the restricted set.

    Ties break toward the lowest member index; an empty or fully unrevealed
    sample makes every loss 0, so the lowest restricted index wins.
    """
    if restrict is None:
        restrict = CandidateSetExact.full(hypothesis_class)
    losses = _weighted_losses(hypothesis_class, sample, restrict.active)
    best = int(np.argmin(losses))  # argmin returns the first minimum: lowest index
    return restrict.active[best], float(losses[best])


def update_candidates(
    hypothesis_class: FiniteClass,
    sample: WeightedSample,
    current: CandidateSetExact,
    threshold: Callable[[int, int], float],
) -> CandidateSetExact:
    """Keep the members whose estimated error is within threshold(member,
    best) of the restricted minimizer. The minimizer itself always stays."""
    losses = _weighted_losses(hypothesis_class, sample, current.active)
    best_pos = int(np.argmin(losses))
    best_index = current.active[best_pos]
    best_loss = float(losses[best_pos])
    kept = [
        index
        for index, loss in zip(current.active, losses)
        if index == best_index or loss <= best_loss + threshold(index, best_index)
    ]
    return CandidateSetExact(tuple(kept))


def exact_dis_test(
    hypothesis_class: FiniteClass, candidates: CandidateSetExact, x: FeatureVector
) -> int:
    """1 iff some pair of candidate members disagrees at x."""
    column = hypothesis_class.labels[list(candidates.active), hypothesis_class.pool_position(x)]
    return int(column.min() != column.max())


def approx_dis_test(
    model: LinearModel,
    x: FeatureVector,
    stepsize: float,
    capacity: float,
    erm_loss: float,
    effective_n: float,
    sample_count: int,
) -> int:
    """Margin proxy for the exact disagreement test.

    Declares x in the disagreement region iff

        |2 w . x~| / (stepsize * x~ . x~)
            <= sqrt(capacity * erm_loss / effective_n)
               + capacity * ln(sample_count) / effective_n

    where x~ includes the bias coordinate, stepsize is the most recent
    gradient stepsize, erm_loss is the current model's own weighted estimate,
    and effective_n is the propensity-adjusted sample size m*xi + n.
    """
    if stepsize <= 0.0:
        raise ValueError("stepsize must be positive")
    if capacity <= 0.0:
        raise ValueError("capacity must be positive")
    if erm_loss < 0.0:
        raise ValueError("erm_loss cannot be negative")
    if effective_n <= 0.0:
        raise ValueError("effective_n must be positive")
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    gap = abs(2.0 * model.raw_score(x)) / (stepsize * (1.0 + x.squared_norm()))
    radius = math.sqrt(capacity * erm_loss / effective_n)
    radius += capacity * math.log(sample_count) / effective_n
    return 1 if gap <= radius else 0


def approx_dis_mask(
    model: LinearModel,
    dense_instances: np.ndarray,
    stepsize: float,
    capacity: float,
    erm_loss: float,
    effective_n: float,
    sample_count: int,
) -> np.ndarray:
    """Vectorized approx_dis_test over rows of a dense (N, dim+1) matrix with
    the bias column at position 0. Same arithmetic, one boolean per row."""
    if stepsize <= 0.0 or capacity <= 0.0 or effective_n <= 0.0:
        raise ValueError("stepsize, capacity, and effective_n must be positive")
    scores = dense_instances @ model.weights
    squared = (dense_instances * dense_instances).sum(axis=1)  # bias column contributes 1
    gap = np.abs(2.0 * scores) / (stepsize * squared)
    radius = math.sqrt(capacity * erm_loss / effective_n)
    radius += capacity * math.log(sample_count) / effective_n
    return gap <= radius
