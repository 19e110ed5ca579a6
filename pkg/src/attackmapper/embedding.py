"""Unit-vector embeddings: stores, retrieval, and a trainable toy encoder.

Real transformer inference stays out of process. Precomputed embedding
tables stand in for sentence-transformer models; the ToyEncoder is a
hashed bag-of-tokens model small enough to train on a desk machine while
exercising the same loss, batching, and evaluation machinery.

Table file format: header line "#dim <d> <model_label>", then one record
per line as "key<TAB>float float ...". Floats are written with repr and
normalisation leaves unit rows untouched, so a save/load cycle reproduces
rows bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConflictError,
    DataError,
    EmptyStoreError,
    ParseError,
    ShapeError,
    ValidationError,
)
from .similarity import tokenize

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211
_UINT64_MASK = (1 << 64) - 1

DEFAULT_BUCKETS = 4096
DEFAULT_DIM = 64


def fnv1a_64(text: str) -> int:
    """FNV-1a 64-bit hash over the UTF-8 bytes of text."""
    value = FNV64_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * FNV64_PRIME) & _UINT64_MASK
    return value


def as_unit_vector(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Normalise to unit L2 length, rejecting non-finite or zero input.

    Vectors already unit-length (within rounding) pass through unchanged,
    so applying this twice is bit-identical to applying it once.
    """
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise DataError("vector contains NaN or Inf entries")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DataError("cannot normalise a zero vector")
    if abs(norm - 1.0) <= 1e-12:
        return vec.copy()
    return vec / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of unit vectors, clamped to [-1, 1] against rounding."""
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(min(1.0, max(-1.0, float(np.dot(u, v)))))


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable key -> unit vector table with a model label."""

    keys: tuple[str, ...]
    matrix: np.ndarray  # shape (n, dimension); rows unit-norm
    model_label: str

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    @property
    def _index(self) -> dict[str, int]:
        # Computed lazily; object.__setattr__ sidesteps frozen on first use.
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {key: i for i, key in enumerate(self.keys)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def vector(self, key: str) -> np.ndarray:
        if key not in self._index:
            raise KeyError(key)
        return self.matrix[self._index[key]]


def build_store(
    entries: Mapping[str, Sequence[float]] | Iterable[tuple[str, Sequence[float]]],
    model_label: str,
) -> EmbeddingStore:
    items = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
    if not items:
        raise EmptyStoreError("embedding store needs at least one entry")
    keys = []
    rows = []
    dim = None
    for index, (key, values) in enumerate(items):
        if "\t" in key or "\n" in key:
            raise ValidationError(f"store key {key!r} contains a tab or newline")
        if key in keys:
            raise ConflictError(f"duplicate store key {key!r}")
        try:
            row = as_unit_vector(values)
        except (DataError, ShapeError) as exc:
            raise type(exc)(f"row {index} ({key!r}): {exc.message}") from exc
        if dim is None:
            dim = row.shape[0]
        elif row.shape[0] != dim:
            raise ShapeError(
                f"row {index} ({key!r}) has dimension {row.shape[0]}, expected {dim}"
            )
        keys.append(key)
        rows.append(row)
    matrix = np.vstack(rows)
    matrix.setflags(write=False)
    return EmbeddingStore(keys=tuple(keys), matrix=matrix, model_label=model_label)


def load_store(source: IO[str], format: str = "table") -> EmbeddingStore:
    """Read an embedding table stream. Only the "table" format exists."""
    if format != "table":
        raise ValidationError(f"unknown store format {format!r}")
    header = source.readline()
    parts = header.strip().split(maxsplit=2)
    if len(parts) < 3 or parts[0] != "#dim":
        raise ParseError('store header must read "#dim <dimension> <model_label>"')
    try:
        dim = int(parts[1])
    except ValueError:
        raise ParseError(f"store header dimension {parts[1]!r} is not an integer") from None
    if dim <= 0:
        raise ParseError(f"store header dimension must be positive, got {dim}")
    model_label = parts[2]

    entries = []
    for lineno, line in enumerate(source, start=2):
        if not line.strip():
            continue
        key, tab, rest = line.rstrip("\n").partition("\t")
        if not tab:
            raise ParseError(f"line {lineno}: expected key<TAB>values")
        try:
            values = [float(x) for x in rest.split()]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if len(values) != dim:
            raise ShapeError(
                f"line {lineno}: row has {len(values)} values, header declares {dim}"
            )
        if not all(np.isfinite(values)):
            raise DataError(f"line {lineno}: row contains NaN or Inf")
        entries.append((key, values))
    return build_store(entries, model_label)


def save_store(store: EmbeddingStore, sink: IO[str]) -> None:
    sink.write(f"#dim {store.dimension} {store.model_label}\n")
    for key, row in zip(store.keys, store.matrix):
        sink.write(key + "\t" + " ".join(repr(float(x)) for x in row) + "\n")


def nearest_k(
    store: EmbeddingStore, query: np.ndarray, k: int
) -> list[tuple[str, float]]:
    """Top-k store keys by cosine, descending; ties broken by ascending key."""
    if len(store) == 0:
        raise EmptyStoreError("cannot query an empty store")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if query.shape != (store.dimension,):
        raise ShapeError(
            f"query has shape {query.shape}, store dimension is {store.dimension}"
        )
    scores = store.matrix @ query
    ranked = sorted(zip(store.keys, scores), key=lambda kv: (-kv[1], kv[0]))
    return [(key, float(min(1.0, max(-1.0, score)))) for key, score in ranked[:k]]


@dataclass
class ToyEncoder:
    """Hashed bag-of-tokens encoder: mean-pooled rows, L2-normalised output.

    Tokens hash to one of `buckets` rows via FNV-1a 64 modulo the bucket
    count. Tokenisation reuses the lexical pipeline's lowercasing and
    punctuation stripping but keeps stop-words: at this scale they carry
    gradient signal.
    """

    buckets: int
    dim: int
    rows: np.ndarray  # shape (buckets, dim)
    model_label: str = "toy"

    def __post_init__(self) -> None:
        if self.buckets < 1 or self.dim < 1:
            raise ValidationError("encoder needs positive bucket count and dimension")
        if self.rows.shape != (self.buckets, self.dim):
            raise ShapeError(
                f"row matrix shape {self.rows.shape} does not match "
                f"({self.buckets}, {self.dim})"
            )
        if not np.all(np.isfinite(self.rows)):
            raise DataError("encoder rows contain NaN or Inf")

    @classmethod
    def initialize(
        cls,
        buckets: int = DEFAULT_BUCKETS,
        dim: int = DEFAULT_DIM,
        seed: int = 0,
        model_label: str = "toy",
    ) -> "ToyEncoder":
        rng = np.random.default_rng(seed)
        rows = rng.standard_normal((buckets, dim)) / np.sqrt(dim)
        return cls(buckets=buckets, dim=dim, rows=rows, model_label=model_label)

    def bucket(self, token: str) -> int:
        return fnv1a_64(token) % self.buckets

    def token_indices(self, text: str) -> list[int]:
        # Sorted so pooling (and gradient accumulation) sums in a fixed
        # order: permuting tokens then yields bit-identical vectors.
        return sorted(self.bucket(token) for token in tokenize(text))

    def encode(self, text: str) -> np.ndarray:
        """Unit embedding of text; empty token list maps to the first basis
        direction so every text has a well-defined vector."""
        indices = self.token_indices(text)
        if not indices:
            basis = np.zeros(self.dim)
            basis[0] = 1.0
            return basis
        pooled = self.rows[indices].mean(axis=0)
        return as_unit_vector(pooled)

    def encode_all(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack([self.encode(t) for t in texts]) if texts else np.zeros((0, self.dim))

    def copy(self) -> "ToyEncoder":
        return ToyEncoder(
            buckets=self.buckets,
            dim=self.dim,
            rows=self.rows.copy(),
            model_label=self.model_label,
        )


def save_encoder(encoder: ToyEncoder, sink: IO[str]) -> None:
    doc = {
        "schema": "encoder.v1",
        "buckets": encoder.buckets,
        "dim": encoder.dim,
        "model_label": encoder.model_label,
        "rows": [[float(x) for x in row] for row in encoder.rows],
    }
    json.dump(doc, sink)
    sink.write("\n")


def load_encoder(source: IO[str]) -> ToyEncoder:
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"encoder file is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != "encoder.v1":
        raise ParseError('encoder file must declare "schema": "encoder.v1"')
    try:
        rows = np.asarray(doc["rows"], dtype=np.float64)
        return ToyEncoder(
            buckets=int(doc["buckets"]),
            dim=int(doc["dim"]),
            rows=rows,
            model_label=str(doc.get("model_label", "toy")),
        )
    except KeyError as exc:
        raise ParseError(f"encoder file is missing key {exc.args[0]!r}") from None


def store_from_encoder(
    encoder: ToyEncoder, texts_by_key: Mapping[str, str]
) -> EmbeddingStore:
    """Materialise an embedding store by encoding one text per key."""
    return build_store(
        {key: encoder.encode(text) for key, text in texts_by_key.items()},
        model_label=encoder.model_label,
    )
