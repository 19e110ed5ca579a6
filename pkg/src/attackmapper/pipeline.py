"""File-based pipeline stages: filter, mine, split, train, evaluate.

The CLI subcommands and the gateway's background jobs both call these
functions, and the one-shot pipeline runner chains them over fixed file
names. Stage outputs are deterministic given input files and seeds, so
running the stages individually or through the runner produces
byte-identical artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import (
    read_pairs_jsonl,
    read_techniques_jsonl,
    read_triples_jsonl,
    write_triples_jsonl,
)
from .embedding import DEFAULT_BUCKETS, DEFAULT_DIM, ToyEncoder, load_encoder, load_store, save_encoder
from .errors import DomainError, ValidationError
from .evaluation import (
    evaluate_scores,
    model_scores,
    pair_dataset,
    write_errors_csv,
)
from .quality import (
    EncoderTokenEmbedder,
    HashTokenEmbedder,
    QualityConfig,
    TableTokenEmbedder,
    TokenEmbedder,
    dedupe_pairs,
    filter_pairs,
    write_scored_jsonl,
)
from .similarity import (
    SimilarityConfig,
    attach_hard_negatives,
    mine_hard_negatives,
    write_mined_jsonl,
)
from .training import SplitSpec, TrainConfig, split_dataset, train, write_history_csv


def make_embedder(spec: str) -> TokenEmbedder:
    """Build a token embedder from a spec string.

    Forms: "table:PATH" (embedding table file), "encoder:PATH" (toy
    encoder file), "hash:DIM" (pure hashed pseudo-embeddings).
    """
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise ValidationError(f"embedder spec {spec!r} must look like kind:argument")
    if kind == "table":
        with open(arg, encoding="utf-8") as f:
            return TableTokenEmbedder(load_store(f))
    if kind == "encoder":
        with open(arg, encoding="utf-8") as f:
            return EncoderTokenEmbedder(load_encoder(f))
    if kind == "hash":
        try:
            return HashTokenEmbedder(int(arg))
        except ValueError:
            raise ValidationError(f"hash embedder dimension {arg!r} is not an integer") from None
    raise ValidationError(f"unknown embedder kind {kind!r}")


def stage_filter(
    pairs_path: str,
    out_kept: str,
    out_rejected: str,
    out_minima: str,
    embedder_spec: str,
    threshold: float = 0.75,
    dedupe: bool = True,
) -> list[str]:
    """Quality-filter a pairs corpus into kept/rejected files plus a
    minima report. Exact-duplicate augmentations are dropped first."""
    with open(pairs_path, encoding="utf-8") as f:
        pairs = read_pairs_jsonl(f)
    if dedupe:
        pairs, _ = dedupe_pairs(pairs)
    config = QualityConfig(token_embedder=make_embedder(embedder_spec), f1_threshold=threshold)
    result = filter_pairs(pairs, config)
    with open(out_kept, "w", encoding="utf-8") as f:
        write_scored_jsonl(result.kept, f)
    with open(out_rejected, "w", encoding="utf-8") as f:
        write_scored_jsonl(result.rejected, f)
    with open(out_minima, "w", encoding="utf-8") as f:
        f.write(result.minima_json())
    return [out_kept, out_rejected, out_minima]


def stage_mine(
    techniques_path: str,
    out_path: str,
    gram_size: int = 4,
    jaccard_weight: float = 0.5,
    pairs_path: str | None = None,
    out_triples: str | None = None,
) -> list[str]:
    """Mine hard negatives for a technique corpus; optionally join them
    onto a kept-pairs file to emit training triples."""
    with open(techniques_path, encoding="utf-8") as f:
        techniques = read_techniques_jsonl(f)
    config = SimilarityConfig(gram_size=gram_size, jaccard_weight=jaccard_weight)
    mined = mine_hard_negatives(techniques, config)
    with open(out_path, "w", encoding="utf-8") as f:
        write_mined_jsonl(mined, f)
    artifacts = [out_path]
    if pairs_path is not None:
        if out_triples is None:
            raise ValidationError("mining with a pairs file requires a triples output path")
        with open(pairs_path, encoding="utf-8") as f:
            pairs = read_pairs_jsonl(f)
        lookup = {t.id: t for t in techniques}
        triples = attach_hard_negatives(
            [(p.augmented, p.technique_id) for p in pairs], mined, lookup
        )
        with open(out_triples, "w", encoding="utf-8") as f:
            write_triples_jsonl(triples, f)
        artifacts.append(out_triples)
    return artifacts


def stage_split(
    triples_path: str,
    out_train: str,
    out_val: str,
    out_test: str,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> list[str]:
    with open(triples_path, encoding="utf-8") as f:
        triples = read_triples_jsonl(f)
    spec = SplitSpec(train=fractions[0], validation=fractions[1], test=fractions[2], seed=seed)
    parts = split_dataset(triples, spec)
    for path, part in zip((out_train, out_val, out_test), parts):
        with open(path, "w", encoding="utf-8") as f:
            write_triples_jsonl(part, f)
    return [out_train, out_val, out_test]


def stage_train(
    train_path: str,
    val_path: str,
    out_encoder: str,
    out_history: str,
    config: TrainConfig,
    buckets: int = DEFAULT_BUCKETS,
    dim: int = DEFAULT_DIM,
    model_label: str = "toy-ft",
    technique_corpus_path: str | None = None,
) -> list[str]:
    """Train a freshly initialised toy encoder on triple files.

    The encoder's initial rows are drawn from the training seed, so one
    seed pins the whole run.
    """
    with open(train_path, encoding="utf-8") as f:
        train_triples = read_triples_jsonl(f)
    with open(val_path, encoding="utf-8") as f:
        val_triples = read_triples_jsonl(f)
    corpus = None
    if technique_corpus_path is not None:
        with open(technique_corpus_path, encoding="utf-8") as f:
            corpus = [t.description for t in read_techniques_jsonl(f)]
    encoder = ToyEncoder.initialize(
        buckets=buckets, dim=dim, seed=config.seed, model_label=model_label
    )
    trained, history = train(encoder, train_triples, val_triples, config, corpus)
    with open(out_encoder, "w", encoding="utf-8") as f:
        save_encoder(trained, f)
    with open(out_history, "w", encoding="utf-8") as f:
        write_history_csv(history, f)
    return [out_encoder, out_history]


def _encode_fn(model_spec: str):
    """Text -> unit vector callable plus its model label."""
    kind, sep, arg = model_spec.partition(":")
    if not sep or not arg:
        raise ValidationError(f"model spec {model_spec!r} must look like kind:path")
    if kind == "encoder":
        with open(arg, encoding="utf-8") as f:
            encoder = load_encoder(f)
        return encoder.encode, encoder.model_label
    if kind == "store":
        with open(arg, encoding="utf-8") as f:
            store = load_store(f)

        def lookup(text: str):
            if text not in store:
                raise DomainError(
                    "store has no embedding for a required text",
                    detail={"model": store.model_label, "text": text[:80]},
                )
            return store.vector(text)

        return lookup, store.model_label
    raise ValidationError(f"unknown model kind {kind!r}")


def stage_eval(
    triples_path: str,
    model_spec: str,
    out_report: str,
    errors_csv: str | None = None,
    label: str | None = None,
) -> list[str]:
    """Score a model over a triples file and write an evaluation report."""
    with open(triples_path, encoding="utf-8") as f:
        triples = read_triples_jsonl(f)
    encode, model_label = _encode_fn(model_spec)
    label = label or model_label
    predicted, truth = model_scores(encode, pair_dataset(triples))
    report = evaluate_scores(predicted, truth)
    doc = report.as_dict()
    doc["model"] = label
    with open(out_report, "w", encoding="utf-8") as f:
        f.write(json.dumps(doc, sort_keys=True) + "\n")
    artifacts = [out_report]
    if errors_csv is not None:
        with open(errors_csv, "w", encoding="utf-8") as f:
            write_errors_csv(label, np.abs(predicted - truth), f)
        artifacts.append(errors_csv)
    return artifacts


PIPELINE_FILES = {
    "kept": "kept.jsonl",
    "rejected": "rejected.jsonl",
    "minima": "minima.json",
    "mined": "mined.jsonl",
    "triples": "triples.jsonl",
    "train": "train.jsonl",
    "val": "val.jsonl",
    "test": "test.jsonl",
    "encoder": "encoder.json",
    "history": "history.csv",
    "report": "eval.json",
    "errors": "errors.csv",
}


def run_pipeline(
    pairs_path: str,
    techniques_path: str,
    workdir: str,
    embedder_spec: str = "hash:64",
    threshold: float = 0.75,
    gram_size: int = 4,
    jaccard_weight: float = 0.5,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    config: TrainConfig | None = None,
    buckets: int = DEFAULT_BUCKETS,
    dim: int = DEFAULT_DIM,
    model_label: str = "toy-ft",
) -> dict[str, str]:
    """Filter -> mine -> split -> train -> evaluate in one call.

    Writes every intermediate artifact under workdir with fixed names
    and returns the name -> path map. Running the same stages manually
    with the same seeds produces byte-identical files.
    """
    config = config or TrainConfig()
    root = Path(workdir)
    root.mkdir(parents=True, exist_ok=True)
    paths = {name: str(root / fname) for name, fname in PIPELINE_FILES.items()}

    stage_filter(
        pairs_path,
        paths["kept"],
        paths["rejected"],
        paths["minima"],
        embedder_spec,
        threshold=threshold,
    )
    stage_mine(
        techniques_path,
        paths["mined"],
        gram_size=gram_size,
        jaccard_weight=jaccard_weight,
        pairs_path=paths["kept"],
        out_triples=paths["triples"],
    )
    stage_split(
        paths["triples"],
        paths["train"],
        paths["val"],
        paths["test"],
        fractions=fractions,
        seed=config.seed,
    )
    stage_train(
        paths["train"],
        paths["val"],
        paths["encoder"],
        paths["history"],
        config,
        buckets=buckets,
        dim=dim,
        model_label=model_label,
        technique_corpus_path=techniques_path,
    )
    stage_eval(
        paths["test"],
        f"encoder:{paths['encoder']}",
        paths["report"],
        errors_csv=paths["errors"],
    )
    return paths
