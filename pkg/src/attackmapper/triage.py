"""Incident triage and gap analysis over the catalog.

An incident text is embedded, ranked against technique embeddings, and
the surviving techniques are resolved to the controls that counter
them. Scores are cosines mapped to [0, 1] via (c + 1) / 2 so confidence
thresholds read naturally. A triage entry is flagged exactly when its
score falls below the threshold; flagged evidence is kept out of gap
aggregation unless explicitly included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .catalog import TECHNIQUE_ID_RE, Catalog, MetricSpec, control_order_key
from .embedding import EmbeddingStore, ToyEncoder, build_store, nearest_k
from .errors import DomainError, EmptyStoreError, ValidationError


@dataclass(frozen=True)
class TriageConfig:
    k: int = 5
    confidence_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValidationError(
                f"confidence_threshold must lie in [0, 1], got {self.confidence_threshold}"
            )


class TriageSource(Protocol):
    """Anything that can embed incidents and supply technique vectors."""

    @property
    def model_label(self) -> str: ...

    def embed_incident(self, text: str) -> np.ndarray: ...

    def technique_store(self) -> EmbeddingStore: ...


class EncoderSource:
    """Triage source backed by a trainable encoder and the catalog's
    technique descriptions."""

    def __init__(self, encoder: ToyEncoder, catalog: Catalog):
        self._encoder = encoder
        self._store = build_store(
            {t.id: encoder.encode(t.description) for t in catalog.techniques},
            model_label=encoder.model_label,
        )

    @property
    def model_label(self) -> str:
        return self._encoder.model_label

    def embed_incident(self, text: str) -> np.ndarray:
        return self._encoder.encode(text)

    def technique_store(self) -> EmbeddingStore:
        return self._store


class StoreSource:
    """Triage source backed by one precomputed embedding table.

    Keys shaped like technique ids form the ranking universe; any other
    key is a precomputed incident text. Incidents absent from the table
    cannot be embedded, since no model runs in process.
    """

    def __init__(self, store: EmbeddingStore):
        self._store = store
        technique_entries = [
            (key, store.vector(key)) for key in store.keys if TECHNIQUE_ID_RE.match(key)
        ]
        if not technique_entries:
            raise EmptyStoreError(
                f"store {store.model_label!r} holds no technique-id keys"
            )
        self._techniques = build_store(technique_entries, model_label=store.model_label)

    @property
    def model_label(self) -> str:
        return self._store.model_label

    def embed_incident(self, text: str) -> np.ndarray:
        if text in self._store:
            return self._store.vector(text)
        raise DomainError(
            "precomputed store has no embedding for this incident text",
            detail={"model": self._store.model_label},
        )

    def technique_store(self) -> EmbeddingStore:
        return self._techniques


@dataclass(frozen=True)
class TriageEntry:
    technique_id: str
    name: str
    score: float
    flagged: bool
    control_ids: tuple[str, ...]
    warning: str | None = None


@dataclass(frozen=True)
class TriageResult:
    incident_text: str
    model_label: str
    k: int
    threshold: float
    ranked: tuple[TriageEntry, ...]
    flagged_overall: bool


def map_incident(
    text: str, source: TriageSource, catalog: Catalog, config: TriageConfig
) -> TriageResult:
    """Rank techniques for one incident and join their controls."""
    if not text or not text.strip():
        raise ValidationError("incident text is empty", code="validation.empty_incident")
    query = source.embed_incident(text)
    store = source.technique_store()
    entries = []
    for technique_id, cos in nearest_k(store, query, config.k):
        score = (cos + 1.0) / 2.0
        flagged = score < config.confidence_threshold
        if technique_id in catalog.technique_to_controls:
            name = catalog.technique(technique_id).name
            controls = catalog.technique_to_controls[technique_id]
            warning = None
        else:
            name = ""
            controls = ()
            warning = f"technique {technique_id} is not in the catalog"
        entries.append(
            TriageEntry(
                technique_id=technique_id,
                name=name,
                score=score,
                flagged=flagged,
                control_ids=controls,
                warning=warning,
            )
        )
    flagged_overall = entries[0].flagged if entries else True
    return TriageResult(
        incident_text=text,
        model_label=source.model_label,
        k=config.k,
        threshold=config.confidence_threshold,
        ranked=tuple(entries),
        flagged_overall=flagged_overall,
    )


def triage_to_dict(result: TriageResult, catalog: Catalog) -> dict:
    return {
        "schema": "triage.v1",
        "incident_text": result.incident_text,
        "model": result.model_label,
        "k": result.k,
        "threshold": result.threshold,
        "flagged_overall": result.flagged_overall,
        "ranked": [
            {
                "technique_id": e.technique_id,
                "name": e.name,
                "score": e.score,
                "flagged": e.flagged,
                "controls": [
                    {"id": cid, "title": catalog.control(cid).title}
                    for cid in e.control_ids
                ],
                **({"warning": e.warning} if e.warning else {}),
            }
            for e in result.ranked
        ],
    }


@dataclass(frozen=True)
class MetricRef:
    spec_index: int
    formula: str


@dataclass(frozen=True)
class GapEntry:
    control_id: str
    title: str
    techniques: tuple[str, ...]  # observed techniques demanding this control
    metrics: tuple[MetricRef, ...]


@dataclass(frozen=True)
class GapReport:
    observed_techniques: tuple[str, ...]
    required_controls: tuple[str, ...]
    implemented_controls: tuple[str, ...]
    gaps: tuple[GapEntry, ...]
    include_flagged: bool
    warnings: tuple[str, ...]


def _observed_ids(
    observed: Sequence[TriageResult] | Iterable[str], include_flagged: bool
) -> list[str]:
    ids: list[str] = []
    for item in observed:
        if isinstance(item, TriageResult):
            for entry in item.ranked:
                if entry.flagged and not include_flagged:
                    continue
                ids.append(entry.technique_id)
        elif isinstance(item, str):
            ids.append(item)
        else:
            raise ValidationError(
                "observed entries must be triage results or technique ids, "
                f"got {type(item).__name__}"
            )
    return ids


def gap_analysis(
    observed: Sequence[TriageResult] | Iterable[str],
    implemented: Iterable[str],
    catalog: Catalog,
    include_flagged: bool = False,
) -> GapReport:
    """Controls demanded by observed techniques but absent from the
    implemented profile.

    Unknown implemented control ids are rejected; observed techniques
    missing from the catalog are reported as warnings and contribute no
    control demands.
    """
    implemented_set = set(implemented)
    for control_id in sorted(implemented_set):
        if control_id not in catalog.control_to_techniques:
            raise ValidationError(f"implemented profile names unknown control {control_id!r}")

    ids = _observed_ids(observed, include_flagged)
    warnings: list[str] = []
    observed_set = []
    demanded: dict[str, set[str]] = {}
    for technique_id in ids:
        if technique_id in observed_set:
            continue
        if technique_id not in catalog.technique_to_controls:
            warnings.append(f"observed technique {technique_id} is not in the catalog")
            continue
        observed_set.append(technique_id)
        for control_id in catalog.technique_to_controls[technique_id]:
            demanded.setdefault(control_id, set()).add(technique_id)

    required = sorted(demanded, key=control_order_key)
    gaps = []
    for control_id in required:
        if control_id in implemented_set:
            continue
        specs = catalog.metrics_for_control(control_id)
        if not specs:
            warnings.append(f"gap control {control_id} has no metric specs")
        gaps.append(
            GapEntry(
                control_id=control_id,
                title=catalog.control(control_id).title,
                techniques=tuple(sorted(demanded[control_id])),
                metrics=tuple(
                    MetricRef(spec_index=i, formula=s.formula) for i, s in enumerate(specs)
                ),
            )
        )
    return GapReport(
        observed_techniques=tuple(sorted(observed_set)),
        required_controls=tuple(required),
        implemented_controls=tuple(sorted(implemented_set, key=control_order_key)),
        gaps=tuple(gaps),
        include_flagged=include_flagged,
        warnings=tuple(warnings),
    )


def remediation_metrics(gap: GapEntry, catalog: Catalog) -> list[MetricSpec]:
    """The gap control's metric specs, in stored order (may be empty)."""
    return list(catalog.metrics_for_control(gap.control_id))


def gap_to_dict(report: GapReport) -> dict:
    return {
        "schema": "gap.v1",
        "observed_techniques": list(report.observed_techniques),
        "required_controls": list(report.required_controls),
        "implemented_controls": list(report.implemented_controls),
        "include_flagged": report.include_flagged,
        "gaps": [
            {
                "control": {"id": g.control_id, "title": g.title},
                "techniques": list(g.techniques),
                "metrics": [
                    {"spec_index": m.spec_index, "formula": m.formula} for m in g.metrics
                ],
            }
            for g in report.gaps
        ],
        "warnings": list(report.warnings),
    }


def triage_to_json(result: TriageResult, catalog: Catalog) -> str:
    return json.dumps(triage_to_dict(result, catalog), sort_keys=True) + "\n"


def gap_to_json(report: GapReport) -> str:
    return json.dumps(gap_to_dict(report), sort_keys=True) + "\n"
