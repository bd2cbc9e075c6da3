"""Datasets, logging records, splits, and the synthetic generator.

Binary classification with sparse features. Labels are {0, 1} internally;
{-1, +1} is accepted on input and mapped to {0, 1}. A logged record either
carries a label (z = 1) or carries none at all (z = 0); nothing downstream can
touch a label that the logging policy hid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .rng import derive_rng

__all__ = [
    "FeatureVector",
    "Example",
    "LabelSource",
    "LoggedTriple",
    "DataSplit",
    "SyntheticSpec",
    "ParseError",
    "parse_sparse_dataset",
    "format_sparse_dataset",
    "generate_synthetic",
    "synthetic_separator",
    "split_dataset",
    "apply_logging",
    "to_dense_matrix",
]


class ParseError(ValueError):
    """Malformed dataset text; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class FeatureVector:
    """Immutable sparse feature map from 1-based index to float value.

    Zero-valued entries are dropped at construction, so two vectors that
    differ only in explicit zeros compare equal and hash alike.
    """

    __slots__ = ("_items",)

    def __init__(self, entries: Mapping[int, float] | Iterable[tuple[int, float]]):
        pairs = entries.items() if isinstance(entries, Mapping) else entries
        seen: dict[int, float] = {}
        for index, value in pairs:
            if not isinstance(index, (int, np.integer)) or isinstance(index, bool):
                raise ValueError(f"feature index {index!r} is not an integer")
            idx = int(index)
            if idx < 1:
                raise ValueError(f"feature index {idx} is not positive")
            if idx in seen:
                raise ValueError(f"duplicate feature index {idx}")
            val = float(value)
            if not math.isfinite(val):
                raise ValueError(f"non-finite value {value!r} at index {idx}")
            if val != 0.0:
                seen[idx] = val
        self._items = tuple(sorted(seen.items()))

    @property
    def items(self) -> tuple[tuple[int, float], ...]:
        return self._items

    @property
    def entries(self) -> dict[int, float]:
        return dict(self._items)

    def max_index(self) -> int:
        """Largest populated index; 0 for the empty vector."""
        return self._items[-1][0] if self._items else 0

    def squared_norm(self) -> float:
        return sum(v * v for _, v in self._items)

    def key(self) -> str:
        """Canonical text form, also used as the instance id in table policies."""
        return " ".join(f"{i}:{v!r}" for i, v in self._items)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FeatureVector) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"FeatureVector({{{', '.join(f'{i}: {v}' for i, v in self._items)}}})"


def _canonical_label(token: str, line_number: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(line_number, f"label {token!r} is not numeric") from None
    if value not in (-1.0, 0.0, 1.0) or not value.is_integer():
        raise ParseError(line_number, f"label {token!r} is not in {{0,1}} or {{-1,+1}}")
    return 1 if value == 1.0 else 0


@dataclass(frozen=True)
class Example:
    """A fully labeled instance."""

    x: FeatureVector
    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label {self.y!r} must be 0 or 1")


class LabelSource(Enum):
    QUERIED = "queried"
    INFERRED = "inferred"


@dataclass(frozen=True)
class LoggedTriple:
    """An instance with a reveal bit; the label exists only when z = 1.

    label_source records whether a revealed label came from the labeler
    (QUERIED) or from a learner's own prediction (INFERRED); inferred labels
    only arise on online-phase records.
    """

    x: FeatureVector
    z: int
    y: int | None = None
    label_source: LabelSource | None = None

    def __post_init__(self):
        if self.z not in (0, 1):
            raise ValueError(f"reveal bit {self.z!r} must be 0 or 1")
        if self.z == 1:
            if self.y not in (0, 1):
                raise ValueError("z = 1 record must carry a 0/1 label")
            if self.label_source is None:
                object.__setattr__(self, "label_source", LabelSource.QUERIED)
        else:
            if self.y is not None:
                raise ValueError("z = 0 record must not carry a label")
            if self.label_source is not None:
                raise ValueError("z = 0 record cannot have a label source")


@dataclass(frozen=True)
class DataSplit:
    """Disjoint logged / online / test partition of a dataset."""

    logged: tuple[Example, ...]
    online: tuple[Example, ...]
    test: tuple[Example, ...]
    seed: int


@dataclass(frozen=True)
class SyntheticSpec:
    """Uniform points on [-1, 1]^dim labeled by a random separator, then
    flipped independently with probability flip_prob."""

    count: int = 6000
    dim: int = 30
    flip_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be positive")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ValueError("flip_prob must be in [0, 0.5)")


def parse_sparse_dataset(text: str | bytes) -> list[Example]:
    """Parse 'label index:value index:value ...' lines into examples.

    Labels may be {0,1} or {-1,+1} (mixed is fine); -1 maps to 0. Indices are
    1-based integers; duplicates, non-positive indices, and malformed tokens
    raise ParseError with the offending line number. Blank lines and lines
    starting with '#' are skipped. Both LF and CRLF line endings are accepted.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    examples: list[Example] = []
    for line_number, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r").strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        label = _canonical_label(tokens[0], line_number)
        pairs: list[tuple[int, float]] = []
        seen: set[int] = set()
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise ParseError(line_number, f"token {token!r} is not index:value")
            try:
                index = int(index_text)
            except ValueError:
                raise ParseError(line_number, f"index {index_text!r} is not an integer") from None
            if index < 1:
                raise ParseError(line_number, f"index {index} is not positive")
            if index in seen:
                raise ParseError(line_number, f"duplicate feature index {index}")
            seen.add(index)
            try:
                value = float(value_text)
            except ValueError:
                raise ParseError(line_number, f"value {value_text!r} is not numeric") from None
            if not math.isfinite(value):
                raise ParseError(line_number, f"non-finite value at index {index}")
            pairs.append((index, value))
        examples.append(Example(FeatureVector(pairs), label))
    return examples


def format_sparse_dataset(examples: Sequence[Example]) -> str:
    """Inverse of parse_sparse_dataset; floats use repr for exact round-trips."""
    lines = []
    for ex in examples:
        parts = [str(ex.y)] + [f"{i}:{v!r}" for i, v in ex.x.items]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def synthetic_separator(spec: SyntheticSpec) -> np.ndarray:
    """The label-generating weight vector for a spec (no bias term)."""
    rng = derive_rng(spec.seed, "synthetic", "separator")
    return rng.standard_normal(spec.dim)


def generate_synthetic(spec: SyntheticSpec) -> list[Example]:
    """Draw the synthetic dataset described by spec. Deterministic in spec.seed."""
    weights = synthetic_separator(spec)
    points_rng = derive_rng(spec.seed, "synthetic", "points")
    flips_rng = derive_rng(spec.seed, "synthetic", "flips")
    points = points_rng.uniform(-1.0, 1.0, size=(spec.count, spec.dim))
    clean = (points @ weights >= 0.0).astype(np.int64)
    flips = flips_rng.random(spec.count) < spec.flip_prob
    labels = np.where(flips, 1 - clean, clean)
    examples = []
    for row, label in zip(points, labels):
        pairs = [(i + 1, float(v)) for i, v in enumerate(row)]
        examples.append(Example(FeatureVector(pairs), int(label)))
    return examples


def split_dataset(
    data: Sequence[Example],
    fractions: tuple[float, float] = (0.2, 0.5),
    seed: int = 0,
) -> DataSplit:
    """Shuffle and cut into test / logged / online parts.

    fractions = (test_frac, logged_frac): the test part takes
    floor(count * test_frac) examples, the logged part takes
    floor(remaining * logged_frac), and the online part takes the rest.
    """
    test_frac, logged_frac = fractions
    if not (0.0 < test_frac < 1.0 and 0.0 < logged_frac < 1.0):
        raise ValueError("fractions must lie strictly between 0 and 1")
    count = len(data)
    if count < 3:
        raise ValueError(f"need at least 3 examples to split, got {count}")
    order = derive_rng(seed, "split", "shuffle").permutation(count)
    n_test = int(count * test_frac)
    n_logged = int((count - n_test) * logged_frac)
    test = tuple(data[i] for i in order[:n_test])
    logged = tuple(data[i] for i in order[n_test : n_test + n_logged])
    online = tuple(data[i] for i in order[n_test + n_logged :])
    return DataSplit(logged=logged, online=online, test=test, seed=seed)


def apply_logging(examples: Sequence[Example], policy, seed: int = 0) -> list[LoggedTriple]:
    """Simulate the logging phase: reveal each label with its policy probability.

    z = 0 records keep the instance but drop the label entirely.
    """
    from .policies import policy_prob

    rng = derive_rng(seed, "logging", "reveal")
    triples: list[LoggedTriple] = []
    for ex in examples:
        prob = policy_prob(policy, ex.x)
        if rng.random() < prob:
            triples.append(LoggedTriple(ex.x, 1, ex.y, LabelSource.QUERIED))
        else:
            triples.append(LoggedTriple(ex.x, 0))
    return triples


def to_dense_matrix(instances: Sequence[FeatureVector], dim: int) -> np.ndarray:
    """Stack instances into an (N, dim+1) array with a constant 1 bias column
    at position 0. Errors if any instance uses an index above dim."""
    out = np.zeros((len(instances), dim + 1))
    out[:, 0] = 1.0
    for row, x in enumerate(instances):
        for index, value in x.items:
            if index > dim:
                raise ValueError(f"feature index {index} exceeds dimension {dim}")
            out[row, index] = value
    return out
