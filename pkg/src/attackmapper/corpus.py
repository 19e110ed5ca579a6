"""Data records exchanged between pipeline stages, with JSONL codecs.

Files are UTF-8 JSON Lines. Writers emit keys in a fixed order and never
reformat floats, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .catalog import Technique
from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class QualityPair:
    """An original incident text and one machine-generated paraphrase."""

    id: str
    original: str
    augmented: str
    technique_id: str


@dataclass(frozen=True)
class TrainingTriple:
    anchor: str
    positive: str
    hard_negative: str
    hn_score: float

    def __post_init__(self) -> None:
        if self.positive == self.hard_negative:
            raise ValidationError(
                "training triple positive and hard negative must be distinct texts"
            )
        if not 0.0 <= self.hn_score <= 1.0:
            raise ValidationError(f"hn_score must lie in [0, 1], got {self.hn_score}")


def _records(stream: IO[str], required: Sequence[str], kind: str):
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{kind} line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict):
            raise ParseError(f"{kind} line {lineno}: expected an object")
        missing = [key for key in required if key not in rec]
        if missing:
            raise ParseError(f"{kind} line {lineno}: missing keys {missing}")
        yield lineno, rec


def read_pairs_jsonl(stream: IO[str]) -> list[QualityPair]:
    pairs = []
    for _, rec in _records(stream, ("id", "original", "augmented", "technique_id"), "pair"):
        pairs.append(
            QualityPair(
                id=str(rec["id"]),
                original=rec["original"],
                augmented=rec["augmented"],
                technique_id=rec["technique_id"],
            )
        )
    return pairs


def pair_record(pair: QualityPair) -> dict:
    """Plain-dict form of a pair, in canonical key order."""
    return {
        "id": pair.id,
        "original": pair.original,
        "augmented": pair.augmented,
        "technique_id": pair.technique_id,
    }


def write_pairs_jsonl(pairs: Iterable[QualityPair], stream: IO[str]) -> None:
    for pair in pairs:
        stream.write(json.dumps(pair_record(pair), ensure_ascii=False) + "\n")


def read_techniques_jsonl(stream: IO[str]) -> list[Technique]:
    techniques = []
    for _, rec in _records(stream, ("id", "description"), "technique"):
        techniques.append(
            Technique(
                id=rec["id"],
                name=rec.get("name", ""),
                description=rec["description"],
            )
        )
    return techniques


def write_techniques_jsonl(techniques: Iterable[Technique], stream: IO[str]) -> None:
    for t in techniques:
        rec = {"id": t.id, "name": t.name, "description": t.description}
        stream.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_triples_jsonl(stream: IO[str]) -> list[TrainingTriple]:
    triples = []
    for _, rec in _records(stream, ("anchor", "positive", "hard_negative", "hn_score"), "triple"):
        triples.append(
            TrainingTriple(
                anchor=rec["anchor"],
                positive=rec["positive"],
                hard_negative=rec["hard_negative"],
                hn_score=float(rec["hn_score"]),
            )
        )
    return triples


def write_triples_jsonl(triples: Iterable[TrainingTriple], stream: IO[str]) -> None:
    for t in triples:
        rec = {
            "anchor": t.anchor,
            "positive": t.positive,
            "hard_negative": t.hard_negative,
            "hn_score": t.hn_score,
        }
        stream.write(json.dumps(rec, ensure_ascii=False) + "\n")
