"""Semantic-fidelity scoring and filtering of augmented incident pairs.

Scoring follows the greedy-max token-matching scheme: precision is the
mean over candidate tokens of the best cosine against any reference
token, recall the mirror image, F1 their harmonic mean. No IDF weighting
and no baseline rescaling. Token vectors come from a pluggable embedder
so the scorer itself stays free of any ML runtime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Protocol, Sequence

import numpy as np

from .corpus import QualityPair, pair_record
from .embedding import EmbeddingStore, ToyEncoder, as_unit_vector, fnv1a_64
from .errors import (
    AttackMapperError,
    DataError,
    EmptySequenceError,
    ShapeError,
    ValidationError,
)
from .similarity import tokenize


@dataclass(frozen=True)
class QualityReport:
    precision: float
    recall: float
    f1: float


class TokenEmbedder(Protocol):
    @property
    def dimension(self) -> int: ...

    def vector(self, token: str) -> np.ndarray: ...


def hashed_pseudo_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic unit vector for a token outside any table: drawn
    from a generator seeded with the token's FNV-1a hash."""
    rng = np.random.default_rng(fnv1a_64(token))
    return as_unit_vector(rng.standard_normal(dim))


class TableTokenEmbedder:
    """Token vectors from a precomputed table store.

    Out-of-vocabulary tokens fall back to the hashed pseudo-embedding,
    so scores over any vocabulary are reproducible.
    """

    def __init__(self, store: EmbeddingStore):
        self._store = store

    @property
    def dimension(self) -> int:
        return self._store.dimension

    def vector(self, token: str) -> np.ndarray:
        if token in self._store:
            return self._store.vector(token)
        return hashed_pseudo_vector(token, self.dimension)


class HashTokenEmbedder:
    """Purely hash-derived token vectors; needs no table or encoder."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValidationError(f"embedder dimension must be positive, got {dim}")
        self._dim = dim

    @property
    def dimension(self) -> int:
        return self._dim

    def vector(self, token: str) -> np.ndarray:
        return hashed_pseudo_vector(token, self._dim)


class EncoderTokenEmbedder:
    """Token vectors read (normalised) from a toy encoder's hashed rows."""

    def __init__(self, encoder: ToyEncoder):
        self._encoder = encoder

    @property
    def dimension(self) -> int:
        return self._encoder.dim

    def vector(self, token: str) -> np.ndarray:
        return as_unit_vector(self._encoder.rows[self._encoder.bucket(token)])


@dataclass(frozen=True)
class QualityConfig:
    token_embedder: TokenEmbedder
    f1_threshold: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 < self.f1_threshold <= 1.0:
            raise ValidationError(
                f"f1_threshold must lie in (0, 1], got {self.f1_threshold}"
            )


def _token_matrix(vectors: Sequence[np.ndarray], side: str) -> np.ndarray:
    if len(vectors) == 0:
        raise EmptySequenceError(f"{side} token list is empty")
    matrix = np.vstack(vectors)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        offender = int(np.argmax(np.abs(norms - 1.0)))
        raise DataError(f"{side} token {offender} is not unit norm")
    # Renormalise so input norm slack (the 1e-6 allowance) cannot leak
    # into the scores.
    return matrix / norms[:, None]


def bertscore(
    reference_tokens: Sequence[np.ndarray], candidate_tokens: Sequence[np.ndarray]
) -> QualityReport:
    """Greedy-max token matching between two unit-vector sequences.

    Identical token sequences score exactly (1, 1, 1): cosines within
    rounding of the boundary are snapped to it before the means.
    """
    ref = _token_matrix(reference_tokens, "reference")
    cand = _token_matrix(candidate_tokens, "candidate")
    if ref.shape[1] != cand.shape[1]:
        raise ShapeError(
            f"token dimension mismatch: reference {ref.shape[1]}, "
            f"candidate {cand.shape[1]}"
        )
    sims = cand @ ref.T  # (n_cand, n_ref)
    np.clip(sims, -1.0, 1.0, out=sims)
    sims[sims > 1.0 - 1e-12] = 1.0
    sims[sims < -1.0 + 1e-12] = -1.0
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return QualityReport(precision=precision, recall=recall, f1=f1)


def score_pair(original: str, augmented: str, embedder: TokenEmbedder) -> QualityReport:
    """Score one augmentation against its source text.

    The original is the reference side, the augmented text the candidate.
    Tokenisation keeps stop-words: fidelity scoring weighs every token.
    """
    reference = [embedder.vector(t) for t in tokenize(original)]
    candidate = [embedder.vector(t) for t in tokenize(augmented)]
    return bertscore(reference, candidate)


@dataclass(frozen=True)
class ScoredPair:
    pair: QualityPair
    report: QualityReport | None
    error: str | None = None


@dataclass(frozen=True)
class FilterResult:
    kept: tuple[ScoredPair, ...]
    rejected: tuple[ScoredPair, ...]
    min_precision: float | None
    min_recall: float | None
    min_f1: float | None

    def minima_json(self) -> str:
        doc = {
            "schema": "quality-minima.v1",
            "kept": len(self.kept),
            "rejected": len(self.rejected),
            "min_precision": self.min_precision,
            "min_recall": self.min_recall,
            "min_f1": self.min_f1,
        }
        return json.dumps(doc, sort_keys=True) + "\n"


def filter_pairs(pairs: Sequence[QualityPair], config: QualityConfig) -> FilterResult:
    """Partition pairs by F1 threshold, preserving input order on each side.

    A pair the scorer cannot handle (no tokens, zero-norm row) lands in
    rejected with an error annotation; processing continues.
    """
    kept: list[ScoredPair] = []
    rejected: list[ScoredPair] = []
    for pair in pairs:
        try:
            report = score_pair(pair.original, pair.augmented, config.token_embedder)
        except AttackMapperError as exc:
            rejected.append(ScoredPair(pair=pair, report=None, error=exc.message))
            continue
        scored = ScoredPair(pair=pair, report=report)
        if report.f1 >= config.f1_threshold:
            kept.append(scored)
        else:
            rejected.append(scored)
    reports = [s.report for s in kept if s.report is not None]
    return FilterResult(
        kept=tuple(kept),
        rejected=tuple(rejected),
        min_precision=min(r.precision for r in reports) if reports else None,
        min_recall=min(r.recall for r in reports) if reports else None,
        min_f1=min(r.f1 for r in reports) if reports else None,
    )


def dedupe_pairs(pairs: Sequence[QualityPair]) -> tuple[list[QualityPair], list[QualityPair]]:
    """Drop pairs whose augmented text repeats an earlier pair's, keeping
    first occurrences. Returns (unique, duplicates), both in input order."""
    seen: set[str] = set()
    unique: list[QualityPair] = []
    duplicates: list[QualityPair] = []
    for pair in pairs:
        if pair.augmented in seen:
            duplicates.append(pair)
        else:
            seen.add(pair.augmented)
            unique.append(pair)
    return unique, duplicates


def write_scored_jsonl(scored: Sequence[ScoredPair], stream: IO[str]) -> None:
    for entry in scored:
        rec = pair_record(entry.pair)
        if entry.report is not None:
            rec["f1"] = entry.report.f1
            rec["p"] = entry.report.precision
            rec["r"] = entry.report.recall
        if entry.error is not None:
            rec["error"] = entry.error
        stream.write(json.dumps(rec, ensure_ascii=False) + "\n")
