"""Dataset splitting, duplicate-aware batching, contrastive loss, training.

The loss treats every in-batch positive plus every in-batch hard
negative as a candidate for each anchor and takes the mean negative log
softmax weight of the anchor's own positive. Batches never repeat a
text string in any slot, since a repeated string would silently turn a
positive into a negative for some other anchor.

Training is plain SGD on the toy encoder's token rows with a linear
learning-rate warmup, bit-deterministic under a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .corpus import TrainingTriple
from .embedding import ToyEncoder
from .errors import (
    DegenerateSplitError,
    DivergenceError,
    EmptySequenceError,
    SchedulingError,
    ShapeError,
    ValidationError,
)
from .evaluation import model_scores, pair_dataset, spearman


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    validation: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        fractions = (self.train, self.validation, self.test)
        if any(f <= 0 for f in fractions):
            raise ValidationError(f"split fractions must be positive, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {sum(fractions)}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(items: Sequence, spec: SplitSpec) -> tuple[list, list, list]:
    """Seeded shuffle, then partition by rounded validation/test counts.

    Validation and test sizes are round-half-up of their fractions; the
    remainder is the training set. Any empty part raises.
    """
    n = len(items)
    if n == 0:
        raise EmptySequenceError("cannot split an empty dataset")
    n_val = _round_half_up(spec.validation * n)
    n_test = _round_half_up(spec.test * n)
    n_train = n - n_val - n_test
    if n_train <= 0 or n_val <= 0 or n_test <= 0:
        raise DegenerateSplitError(
            f"split of {n} items gives (train={n_train}, val={n_val}, test={n_test})"
        )
    order = np.random.default_rng(spec.seed).permutation(n)
    train = [items[i] for i in order[:n_train]]
    validation = [items[i] for i in order[n_train : n_train + n_val]]
    test = [items[i] for i in order[n_train + n_val :]]
    return train, validation, test


@dataclass(frozen=True)
class Batch:
    triples: tuple[TrainingTriple, ...]

    def __post_init__(self) -> None:
        texts = [t for triple in self.triples for t in
                 (triple.anchor, triple.positive, triple.hard_negative)]
        if len(set(texts)) != len(texts):
            raise ValidationError("batch repeats a text string across its slots")

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def anchors(self) -> list[str]:
        return [t.anchor for t in self.triples]

    @property
    def positives(self) -> list[str]:
        return [t.positive for t in self.triples]

    @property
    def hard_negatives(self) -> list[str]:
        return [t.hard_negative for t in self.triples]


def make_batches(triples: Sequence[TrainingTriple], batch_size: int, seed: int) -> list[Batch]:
    """Greedy duplicate-aware batching over a seeded shuffle.

    Walks the shuffled triples filling one batch at a time; a triple
    whose text already occurs in the open batch is skipped and retried
    for later batches. Every triple lands in exactly one batch.
    """
    if batch_size < 2:
        raise ValidationError(f"batch size must be >= 2, got {batch_size}")
    for index, triple in enumerate(triples):
        # A triple reusing one string in two slots can never be placed.
        if triple.anchor in (triple.positive, triple.hard_negative):
            raise SchedulingError(
                f"triple {index} reuses its anchor text in another slot"
            )
    order = np.random.default_rng(seed).permutation(len(triples))
    remaining = [triples[i] for i in order]
    batches: list[Batch] = []
    while remaining:
        used: set[str] = set()
        taken: list[TrainingTriple] = []
        deferred: list[TrainingTriple] = []
        for triple in remaining:
            texts = (triple.anchor, triple.positive, triple.hard_negative)
            if len(taken) < batch_size and not any(t in used for t in texts):
                taken.append(triple)
                used.update(texts)
            else:
                deferred.append(triple)
        batches.append(Batch(triples=tuple(taken)))
        remaining = deferred
    return batches


def mnrl_loss(
    anchor_vecs: np.ndarray,
    positive_vecs: np.ndarray,
    hard_negative_vecs: np.ndarray | None,
    scale: float,
) -> tuple[float, np.ndarray]:
    """Contrastive loss over in-batch candidates.

    Returns (loss, gradient of loss with respect to the cosine matrix).
    Candidates for every anchor are the B positives followed by the B
    hard negatives (when provided); logits are scale * cosine. The
    gradient per logit is (softmax - onehot) / B, rescaled by `scale` to
    refer to the cosines.
    """
    a = np.asarray(anchor_vecs, dtype=np.float64)
    p = np.asarray(positive_vecs, dtype=np.float64)
    if a.ndim != 2 or p.ndim != 2:
        raise ShapeError("anchor and positive stacks must be 2-d")
    if a.shape[0] == 0:
        raise EmptySequenceError("batch is empty")
    if a.shape != p.shape:
        raise ShapeError(f"anchor shape {a.shape} != positive shape {p.shape}")
    candidates = p
    if hard_negative_vecs is not None:
        h = np.asarray(hard_negative_vecs, dtype=np.float64)
        if h.shape != a.shape:
            raise ShapeError(f"hard negative shape {h.shape} != anchor shape {a.shape}")
        candidates = np.vstack([p, h])

    batch = a.shape[0]
    sims = a @ candidates.T  # (B, C)
    logits = scale * sims
    # log-sum-exp stabilised per row
    row_max = logits.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    own = logits[np.arange(batch), np.arange(batch)]
    loss = float(np.mean(lse - own))
    softmax = np.exp(logits - lse[:, None])
    grad_logits = softmax / batch
    grad_logits[np.arange(batch), np.arange(batch)] -= 1.0 / batch
    return loss, scale * grad_logits


def _forward_text(encoder: ToyEncoder, text: str):
    """Embedding plus the intermediates backprop needs.

    Returns (embedding, pooled_norm, indices, token_count); indices is
    empty for texts with no tokens (fixed basis output, no gradient).
    """
    indices = encoder.token_indices(text)
    if not indices:
        basis = np.zeros(encoder.dim)
        basis[0] = 1.0
        return basis, 0.0, indices, 0
    pooled = encoder.rows[indices].mean(axis=0)
    norm = float(np.linalg.norm(pooled))
    return pooled / norm, norm, indices, len(indices)


def batch_loss_and_gradient(
    encoder: ToyEncoder, batch: Batch, scale: float
) -> tuple[float, np.ndarray]:
    """Loss on one batch and its gradient on the encoder's row matrix."""
    slots = [
        [_forward_text(encoder, t) for t in batch.anchors],
        [_forward_text(encoder, t) for t in batch.positives],
        [_forward_text(encoder, t) for t in batch.hard_negatives],
    ]
    a = np.vstack([f[0] for f in slots[0]])
    p = np.vstack([f[0] for f in slots[1]])
    h = np.vstack([f[0] for f in slots[2]])
    loss, grad_sims = mnrl_loss(a, p, h, scale)

    b = len(batch)
    candidates = np.vstack([p, h])
    grad_embeddings = [
        grad_sims @ candidates,        # d loss / d anchor embeddings (B, d)
        grad_sims[:, :b].T @ a,        # d loss / d positive embeddings
        grad_sims[:, b:].T @ a,        # d loss / d hard negative embeddings
    ]
    grad_rows = np.zeros_like(encoder.rows)
    for slot, forwards in enumerate(slots):
        for i, (embedding, norm, indices, count) in enumerate(forwards):
            if count == 0:
                continue
            g = grad_embeddings[slot][i]
            # back through L2 normalisation, then mean pooling
            g_pooled = (g - float(np.dot(g, embedding)) * embedding) / norm
            per_token = g_pooled / count
            for bucket in indices:
                grad_rows[bucket] += per_token
    return loss, grad_rows


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 16
    epochs: int = 10
    warmup_fraction: float = 0.10
    scale: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValidationError("warmup_fraction must lie in [0, 1)")
        if self.scale <= 0:
            raise ValidationError("scale must be positive")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    val_spearman: float
    val_top1: float | None = None


def learning_rate_at(step: int, warmup_steps: int, base_rate: float) -> float:
    """Linear ramp over the warmup window, then constant."""
    if step < warmup_steps:
        return base_rate * (step + 1) / warmup_steps
    return base_rate


def train(
    encoder: ToyEncoder,
    train_triples: Sequence[TrainingTriple],
    val_triples: Sequence[TrainingTriple],
    config: TrainConfig,
    technique_corpus: Sequence[str] | None = None,
) -> tuple[ToyEncoder, list[EpochRecord]]:
    """SGD over per-epoch batch schedules; returns a new trained encoder.

    The input encoder is never mutated. Epoch e draws its batch order
    from seed + e, and all schedules are drawn up front so the warmup
    window is an exact fraction of the true total step count. When a
    technique corpus is given, each epoch also records the fraction of
    validation anchors whose own positive wins a top-1 ranking over the
    corpus (a retrieval diagnostic; it does not drive training).
    """
    result = encoder.copy()
    if config.epochs == 0:
        return result, []
    if len(train_triples) == 0:
        raise EmptySequenceError("training split is empty")
    if len(val_triples) == 0:
        raise EmptySequenceError("validation split is empty")

    schedules = [
        make_batches(train_triples, config.batch_size, seed=config.seed + epoch)
        for epoch in range(config.epochs)
    ]
    total_steps = sum(len(s) for s in schedules)
    warmup_steps = int(math.floor(config.warmup_fraction * total_steps))

    history: list[EpochRecord] = []
    step = 0
    for epoch, schedule in enumerate(schedules):
        losses = []
        for batch in schedule:
            loss, grad = batch_loss_and_gradient(result, batch, config.scale)
            if not math.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at step {step}", detail={"step": step}
                )
            rate = learning_rate_at(step, warmup_steps, config.learning_rate)
            result.rows -= rate * grad
            losses.append(loss)
            step += 1
        predicted, truth = model_scores(result.encode, pair_dataset(val_triples))
        record = EpochRecord(
            epoch=epoch,
            loss=float(np.mean(losses)),
            val_spearman=spearman(predicted, truth),
            val_top1=_top1_accuracy(result, val_triples, technique_corpus),
        )
        history.append(record)
    return result, history


def _top1_accuracy(
    encoder: ToyEncoder,
    triples: Sequence[TrainingTriple],
    corpus: Sequence[str] | None,
) -> float | None:
    if corpus is None:
        return None
    texts = list(corpus)
    if not texts:
        return None
    matrix = encoder.encode_all(texts)
    by_text = {t: i for i, t in enumerate(texts)}
    hits = 0
    scored = 0
    for triple in triples:
        if triple.positive not in by_text:
            continue
        scores = matrix @ encoder.encode(triple.anchor)
        # ties resolve to the earliest corpus entry, matching argmax
        if int(np.argmax(scores)) == by_text[triple.positive]:
            hits += 1
        scored += 1
    return hits / scored if scored else None


def write_history_csv(history: Sequence[EpochRecord], stream: IO[str]) -> None:
    stream.write("epoch,loss,val_spearman\n")
    for record in history:
        stream.write(f"{record.epoch},{record.loss!r},{record.val_spearman!r}\n")


def read_history_csv(stream: IO[str]) -> list[EpochRecord]:
    header = stream.readline().strip()
    if header != "epoch,loss,val_spearman":
        raise ValidationError(f"unexpected history header {header!r}")
    records = []
    for line in stream:
        if not line.strip():
            continue
        epoch, loss, val = line.strip().split(",")
        records.append(EpochRecord(epoch=int(epoch), loss=float(loss), val_spearman=float(val)))
    return records
