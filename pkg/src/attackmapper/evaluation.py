"""Correlation and error metrics, interpretation bands, and comparisons.

Everything here is computed from first principles (ranks, two-sided
means) rather than delegated to a stats library, so the exact floating
point behaviour is pinned by this file. The test suite checks the
results against independent library oracles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np

from .corpus import TrainingTriple
from .errors import (
    DomainError,
    EmptySequenceError,
    NotFoundError,
    ParseError,
    ShapeError,
    UndefinedCorrelationError,
)

QUANTILE_POINTS = (5, 25, 50, 75, 95)


def _as_floats(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _paired(predicted: Sequence[float], truth: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    p = _as_floats(predicted, "predicted")
    t = _as_floats(truth, "truth")
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: predicted {p.shape[0]}, truth {t.shape[0]}")
    return p, t


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean of their positions."""
    arr = _as_floats(values, "values")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=np.float64)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        # positions i..j (0-based) share rank mean of (i+1 .. j+1)
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def pearson(predicted: Sequence[float], truth: Sequence[float]) -> float:
    p, t = _paired(predicted, truth)
    n = len(p)
    if n < 2:
        raise UndefinedCorrelationError(f"need at least 2 samples, got {n}")
    dp = p - p.mean()
    dt = t - t.mean()
    sp = math.sqrt(float(np.dot(dp, dp)))
    st = math.sqrt(float(np.dot(dt, dt)))
    if sp == 0.0 or st == 0.0:
        side = "predicted" if sp == 0.0 else "truth"
        raise UndefinedCorrelationError(f"{side} values are constant")
    return float(np.dot(dp, dt)) / (sp * st)


def spearman(predicted: Sequence[float], truth: Sequence[float]) -> float:
    """Pearson correlation of average-fractional ranks."""
    p, t = _paired(predicted, truth)
    if len(p) < 2:
        raise UndefinedCorrelationError(f"need at least 2 samples, got {len(p)}")
    if np.all(p == p[0]) or np.all(t == t[0]):
        side = "predicted" if np.all(p == p[0]) else "truth"
        raise UndefinedCorrelationError(f"{side} values are constant")
    return pearson(average_ranks(p), average_ranks(t))


def mae(predicted: Sequence[float], truth: Sequence[float]) -> float:
    p, t = _paired(predicted, truth)
    if len(p) == 0:
        raise EmptySequenceError("mae needs at least one sample")
    return float(np.mean(np.abs(p - t)))


def mse(predicted: Sequence[float], truth: Sequence[float]) -> float:
    p, t = _paired(predicted, truth)
    if len(p) == 0:
        raise EmptySequenceError("mse needs at least one sample")
    return float(np.mean((p - t) ** 2))


def interpret(rho: float) -> str:
    """Correlation strength band for a coefficient in [-1, 1]."""
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f"correlation {rho} outside [-1, 1]")
    magnitude = abs(rho)
    if magnitude > 0.7:
        return "very strong"
    if magnitude > 0.5:
        return "moderate"
    if magnitude > 0.3:
        return "fair"
    return "poor"


def quantile(sorted_values: np.ndarray, fraction: float) -> float:
    """Linear interpolation between closest ranks on presorted data."""
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    position = (n - 1) * fraction
    low = int(math.floor(position))
    high = min(low + 1, n - 1)
    weight = position - low
    return float(sorted_values[low] * (1.0 - weight) + sorted_values[high] * weight)


@dataclass(frozen=True)
class ErrorDistribution:
    p5: float
    p25: float
    p50: float
    p75: float
    p95: float
    min: float
    max: float
    mean: float

    def as_dict(self) -> dict[str, float]:
        return {
            "p5": self.p5,
            "p25": self.p25,
            "p50": self.p50,
            "p75": self.p75,
            "p95": self.p95,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
        }


def error_distribution(abs_errors: Sequence[float]) -> ErrorDistribution:
    arr = _as_floats(abs_errors, "abs_errors")
    if len(arr) == 0:
        raise EmptySequenceError("error distribution needs at least one value")
    if np.any(arr < 0):
        raise DomainError("absolute errors cannot be negative")
    ordered = np.sort(arr)
    q = {pt: quantile(ordered, pt / 100.0) for pt in QUANTILE_POINTS}
    return ErrorDistribution(
        p5=q[5],
        p25=q[25],
        p50=q[50],
        p75=q[75],
        p95=q[95],
        min=float(ordered[0]),
        max=float(ordered[-1]),
        mean=float(arr.mean()),
    )


@dataclass(frozen=True)
class EvalReport:
    spearman: float
    pearson: float
    mae: float
    mse: float
    n: int
    error_quantiles: ErrorDistribution
    band: str

    def as_dict(self) -> dict:
        return {
            "schema": "eval.v1",
            "spearman": self.spearman,
            "pearson": self.pearson,
            "mae": self.mae,
            "mse": self.mse,
            "n": self.n,
            "band": self.band,
            "error_quantiles": self.error_quantiles.as_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True) + "\n"


def report_from_dict(doc: Mapping) -> EvalReport:
    """Rebuild a report from its as_dict form, e.g. reloaded from disk."""
    if not isinstance(doc, Mapping) or doc.get("schema") != "eval.v1":
        raise ParseError("not an eval.v1 report document")
    try:
        quantiles = ErrorDistribution(**{k: float(v) for k, v in doc["error_quantiles"].items()})
        return EvalReport(
            spearman=float(doc["spearman"]),
            pearson=float(doc["pearson"]),
            mae=float(doc["mae"]),
            mse=float(doc["mse"]),
            n=int(doc["n"]),
            error_quantiles=quantiles,
            band=str(doc["band"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed eval report: {exc}") from None


def evaluate_scores(predicted: Sequence[float], truth: Sequence[float]) -> EvalReport:
    p, t = _paired(predicted, truth)
    rho = spearman(p, t)
    report = EvalReport(
        spearman=rho,
        pearson=pearson(p, t),
        mae=mae(p, t),
        mse=mse(p, t),
        n=len(p),
        error_quantiles=error_distribution(np.abs(p - t)),
        band=interpret(rho),
    )
    # Jensen: mean(|e|)^2 <= mean(e^2); tolerance covers float rounding.
    assert report.mae**2 <= report.mse + 1e-12
    return report


@dataclass(frozen=True)
class LabelledPair:
    """One (anchor, text) pair with its ground-truth similarity label."""

    anchor: str
    text: str
    label: float


def pair_dataset(triples: Sequence[TrainingTriple]) -> list[LabelledPair]:
    """Ground-truth construction for model evaluation.

    Continuous reference similarities are not observable for incident
    text, so truth is defined from the triples themselves: an anchor and
    its positive score 1.0, an anchor and its hard negative score 0.0.
    This convention is deliberately isolated here so an alternative
    labelling can replace it in one place.
    """
    pairs: list[LabelledPair] = []
    for triple in triples:
        pairs.append(LabelledPair(triple.anchor, triple.positive, 1.0))
        pairs.append(LabelledPair(triple.anchor, triple.hard_negative, 0.0))
    return pairs


def model_scores(encode, pairs: Sequence[LabelledPair]) -> tuple[np.ndarray, np.ndarray]:
    """Predicted [0,1] similarities and truth labels for labelled pairs.

    encode: callable text -> unit vector. Predicted score is cosine
    mapped from [-1, 1] to [0, 1] via (c + 1) / 2. Anchor and pair texts
    are encoded once per distinct string.
    """
    cache: dict[str, np.ndarray] = {}

    def vec(text: str) -> np.ndarray:
        if text not in cache:
            cache[text] = encode(text)
        return cache[text]

    predicted = np.empty(len(pairs), dtype=np.float64)
    truth = np.empty(len(pairs), dtype=np.float64)
    for i, pair in enumerate(pairs):
        c = float(np.dot(vec(pair.anchor), vec(pair.text)))
        c = min(1.0, max(-1.0, c))
        predicted[i] = (c + 1.0) / 2.0
        truth[i] = pair.label
    return predicted, truth


@dataclass(frozen=True)
class ComparisonRow:
    model_label: str
    spearman: float
    delta_spearman: float | None  # None on the reference row
    mae: float
    mse: float


def compare(reports: Mapping[str, EvalReport], reference: str) -> list[ComparisonRow]:
    """Rank models against a reference, descending by Spearman.

    delta is reference minus model, so positive values mean the
    reference leads.
    """
    if reference not in reports:
        raise NotFoundError(f"reference model {reference!r} has no report")
    rho_ref = reports[reference].spearman
    rows = []
    for label, report in reports.items():
        delta = None if label == reference else rho_ref - report.spearman
        rows.append(
            ComparisonRow(
                model_label=label,
                spearman=report.spearman,
                delta_spearman=delta,
                mae=report.mae,
                mse=report.mse,
            )
        )
    rows.sort(key=lambda r: -r.spearman)
    return rows


def _format_delta(delta: float | None) -> str:
    return "-" if delta is None else f"{delta:+.4f}"


def render_comparison_table(rows: Sequence[ComparisonRow]) -> str:
    """Aligned text table: model, Spearman, delta vs reference."""
    headers = ("Model", "Spearman", "Delta")
    cells = [
        (row.model_label, f"{row.spearman:.4f}", _format_delta(row.delta_spearman))
        for row in rows
    ]
    return _render_table(headers, cells)


def render_error_table(rows: Sequence[ComparisonRow]) -> str:
    """Aligned text table: model, MAE, MSE."""
    headers = ("Model", "MAE", "MSE")
    cells = [(row.model_label, f"{row.mae:.4f}", f"{row.mse:.4f}") for row in rows]
    return _render_table(headers, cells)


def _render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(headers[col]), *(len(r[col]) for r in rows)) if rows else len(headers[col])
        for col in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def comparison_to_json(rows: Sequence[ComparisonRow]) -> str:
    doc = {
        "schema": "comparison.v1",
        "rows": [
            {
                "model": r.model_label,
                "spearman": r.spearman,
                "delta_spearman": r.delta_spearman,
                "mae": r.mae,
                "mse": r.mse,
            }
            for r in rows
        ],
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def write_errors_csv(model_label: str, abs_errors: Sequence[float], stream: IO[str]) -> None:
    """Per-error rows for external plotting tools."""
    stream.write("model_label,error\n")
    for err in abs_errors:
        stream.write(f"{model_label},{float(err)!r}\n")
