"""Text normalisation, lexical similarity, and hard-negative mining.

Two complementary surface metrics are combined into one score: word-level
Jaccard over Porter-stemmed tokens, and Jaccard over character n-gram sets
(default n=4, computed on the normalised string so inter-word boundaries
contribute grams). Mining picks, for every technique, the most similar
*other* technique as its hard negative, deterministically (lowest id on
ties), and the mined negative is attached to every training pair whose
positive is that technique.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Mapping, Protocol, Sequence

from .corpus import TrainingTriple
from .errors import CoverageError, InsufficientCorpusError, ValidationError
from .stemmer import stem_word


def _load_default_stopwords() -> frozenset[str]:
    text = resources.files("attackmapper.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


DEFAULT_STOPWORDS = _load_default_stopwords()


@dataclass(frozen=True)
class SimilarityConfig:
    gram_size: int = 4
    jaccard_weight: float = 0.5
    stopwords: frozenset[str] = field(default=DEFAULT_STOPWORDS)

    def __post_init__(self) -> None:
        if self.gram_size < 2:
            raise ValidationError(f"gram_size must be >= 2, got {self.gram_size}")
        if not 0.0 <= self.jaccard_weight <= 1.0:
            raise ValidationError(
                f"jaccard_weight must lie in [0, 1], got {self.jaccard_weight}"
            )


@dataclass(frozen=True)
class HardNegative:
    positive_technique_id: str
    negative_technique_id: str
    similarity_score: float

    def __post_init__(self) -> None:
        if self.positive_technique_id == self.negative_technique_id:
            raise ValidationError(
                f"hard negative for {self.positive_technique_id} must be a different technique"
            )


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, delete punctuation characters, split on whitespace."""
    lowered = text.lower()
    stripped = "".join(ch for ch in lowered if not _is_punctuation(ch))
    return stripped.split()


def normalize(text: str, config: SimilarityConfig = SimilarityConfig()) -> list[str]:
    """Tokenize and drop stop-words; token order is preserved."""
    return [tok for tok in tokenize(text) if tok not in config.stopwords]


def stem_tokens(tokens: Sequence[str]) -> list[str]:
    return [stem_word(tok) for tok in tokens]


def _set_jaccard(a: set, b: set) -> float:
    # Identical empty sets count as identical (1.0); a single empty side as
    # fully dissimilar (0.0). Keeps self-similarity at 1 without a 0/0.
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def jaccard_words(a: Sequence[str], b: Sequence[str]) -> float:
    """Jaccard similarity over token sets (inputs already normalised/stemmed)."""
    return _set_jaccard(set(a), set(b))


def _collapse(text: str) -> str:
    return " ".join(text.lower().split())


def _gram_set(text: str, n: int) -> set[str]:
    if len(text) < n:
        return set()
    return {text[i : i + n] for i in range(len(text) - n + 1)}


def char_ngram_overlap(a: str, b: str, config: SimilarityConfig = SimilarityConfig()) -> float:
    """Jaccard over sets of contiguous character n-grams.

    Inputs are lowercased and whitespace-collapsed before gram extraction;
    a string shorter than the gram size contributes the empty set.
    """
    n = config.gram_size
    return _set_jaccard(_gram_set(_collapse(a), n), _gram_set(_collapse(b), n))


def combined_similarity(a: str, b: str, config: SimilarityConfig = SimilarityConfig()) -> float:
    """Weighted blend of stemmed word Jaccard and character n-gram overlap."""
    tokens_a = normalize(a, config)
    tokens_b = normalize(b, config)
    word_score = jaccard_words(stem_tokens(tokens_a), stem_tokens(tokens_b))
    gram_score = char_ngram_overlap(" ".join(tokens_a), " ".join(tokens_b), config)
    w = config.jaccard_weight
    return w * word_score + (1.0 - w) * gram_score


class TechniqueLike(Protocol):
    id: str
    description: str


@dataclass(frozen=True)
class _MinedProfile:
    """Precomputed normalisation of one technique description."""

    technique_id: str
    stem_set: frozenset[str]
    gram_set: frozenset[str]


def _profile(technique_id: str, description: str, config: SimilarityConfig) -> _MinedProfile:
    tokens = normalize(description, config)
    return _MinedProfile(
        technique_id=technique_id,
        stem_set=frozenset(stem_tokens(tokens)),
        gram_set=frozenset(_gram_set(" ".join(tokens), config.gram_size)),
    )


def _profile_similarity(p: _MinedProfile, q: _MinedProfile, w: float) -> float:
    return w * _set_jaccard(set(p.stem_set), set(q.stem_set)) + (1.0 - w) * _set_jaccard(
        set(p.gram_set), set(q.gram_set)
    )


def mine_hard_negatives(
    techniques: Sequence[TechniqueLike],
    config: SimilarityConfig = SimilarityConfig(),
) -> dict[str, HardNegative]:
    """For every technique, find the most similar distinct technique.

    Output is identical to the exhaustive pairwise scan; ties are broken by
    the lexicographically lowest candidate id so mining is reproducible.
    """
    if len({t.id for t in techniques}) < 2:
        raise InsufficientCorpusError(
            f"hard-negative mining needs at least 2 distinct techniques, got {len(techniques)}"
        )
    ordered = sorted(techniques, key=lambda t: t.id)
    if len(ordered) != len({t.id for t in techniques}):
        raise ValidationError("duplicate technique ids in mining corpus")
    profiles = [_profile(t.id, t.description, config) for t in ordered]
    w = config.jaccard_weight

    best_id: dict[str, str] = {}
    best_score: dict[str, float] = {}
    for i, p in enumerate(profiles):
        for q in profiles[i + 1 :]:
            score = _profile_similarity(p, q, w)
            # Candidates arrive in ascending id order, so a strict > keeps
            # the lowest-id winner on ties.
            if p.technique_id not in best_id or score > best_score[p.technique_id]:
                best_id[p.technique_id] = q.technique_id
                best_score[p.technique_id] = score
            if q.technique_id not in best_id or score > best_score[q.technique_id]:
                best_id[q.technique_id] = p.technique_id
                best_score[q.technique_id] = score

    return {
        tid: HardNegative(
            positive_technique_id=tid,
            negative_technique_id=best_id[tid],
            similarity_score=best_score[tid],
        )
        for tid in sorted(best_id)
    }


def attach_hard_negatives(
    pairs: Iterable[tuple[str, str]],
    mined: Mapping[str, HardNegative],
    techniques: Mapping[str, TechniqueLike],
) -> list[TrainingTriple]:
    """Join (incident text, technique id) pairs with their mined negatives.

    Every pair whose positive is technique t receives t's single mined
    negative; input order is preserved, one triple per pair.
    """
    triples: list[TrainingTriple] = []
    for incident_text, technique_id in pairs:
        entry = mined.get(technique_id)
        if entry is None:
            raise CoverageError(f"no mined hard negative for technique {technique_id}")
        if technique_id not in techniques:
            raise CoverageError(f"technique {technique_id} missing from lookup")
        if entry.negative_technique_id not in techniques:
            raise CoverageError(
                f"mined negative {entry.negative_technique_id} missing from lookup"
            )
        triples.append(
            TrainingTriple(
                anchor=incident_text,
                positive=techniques[technique_id].description,
                hard_negative=techniques[entry.negative_technique_id].description,
                hn_score=entry.similarity_score,
            )
        )
    return triples


def write_mined_jsonl(mined: Mapping[str, HardNegative], stream: IO[str]) -> None:
    """One record per line with the score as 6-decimal fixed point."""
    for tid in sorted(mined):
        entry = mined[tid]
        stream.write(
            '{"positive_id": %s, "negative_id": %s, "score": %.6f}\n'
            % (
                json.dumps(entry.positive_technique_id),
                json.dumps(entry.negative_technique_id),
                entry.similarity_score,
            )
        )


def read_mined_jsonl(stream: IO[str]) -> dict[str, HardNegative]:
    mined: dict[str, HardNegative] = {}
    for line in stream:
        if not line.strip():
            continue
        rec = json.loads(line)
        entry = HardNegative(
            positive_technique_id=rec["positive_id"],
            negative_technique_id=rec["negative_id"],
            similarity_score=float(rec["score"]),
        )
        mined[entry.positive_technique_id] = entry
    return mined
