"""Command-line gateway.

Subcommands mirror the pipeline stages plus catalog queries, triage,
gap analysis, and the HTTP server. Exit codes: 0 on success, 1 when a
typed error is reported on stderr, 2 for usage mistakes.

Defaults resolve flag > config file > built-in. The config file comes
from --config or the ATTACKMAPPER_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .catalog import (
    Catalog,
    controls_for_technique,
    evaluate_metric,
    load_catalog,
    techniques_for_control,
)
from .config import Settings, load_settings
from .embedding import DEFAULT_BUCKETS, DEFAULT_DIM, load_encoder, load_store
from .errors import AttackMapperError, ConflictError, NotFoundError, ValidationError
from .evaluation import (
    compare,
    comparison_to_json,
    render_comparison_table,
    render_error_table,
    report_from_dict,
)
from .pipeline import (
    run_pipeline,
    stage_eval,
    stage_filter,
    stage_mine,
    stage_split,
    stage_train,
)
from .training import TrainConfig, read_history_csv
from .triage import (
    EncoderSource,
    StoreSource,
    TriageConfig,
    TriageSource,
    gap_analysis,
    gap_to_json,
    map_incident,
    triage_to_json,
)


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _count_lines(path: str) -> int:
    with open(path, encoding="utf-8") as f:
        return sum(1 for line in f if line.strip())


def _parse_measures(items: Sequence[str]) -> dict[str, float]:
    measures: dict[str, float] = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ValidationError(f"measure {item!r} must look like NAME=VALUE")
        try:
            measures[name] = float(value)
        except ValueError:
            raise ValidationError(f"measure {item!r} has a non-numeric value") from None
    return measures


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError("fractions must be three comma-separated numbers")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"fractions {text!r} contain a non-numeric part") from None
    return a, b, c


def _split_ids(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _model_source(spec: str, catalog: Catalog) -> TriageSource:
    kind, sep, path = spec.partition(":")
    if not sep or not path:
        raise ValidationError("model spec must look like encoder:PATH or store:PATH")
    if kind == "encoder":
        with open(path, encoding="utf-8") as f:
            return EncoderSource(load_encoder(f), catalog)
    if kind == "store":
        with open(path, encoding="utf-8") as f:
            return StoreSource(load_store(f))
    raise ValidationError(f"unknown model source kind {kind!r}")


def _load_catalog_file(path: str) -> Catalog:
    with open(path, encoding="utf-8", newline="") as f:
        return load_catalog(f)


def _resolve_seed(args: argparse.Namespace, settings: Settings, key: str, default: int) -> int:
    local = getattr(args, "seed", None)
    if local is not None:
        return local
    if args.global_seed is not None:
        return args.global_seed
    return settings.integer(key, None, default)


def _train_config(args: argparse.Namespace, settings: Settings) -> TrainConfig:
    return TrainConfig(
        learning_rate=settings.real("train.learning_rate", args.learning_rate, 2e-5),
        batch_size=settings.integer("train.batch_size", args.batch_size, 16),
        epochs=settings.integer("train.epochs", args.epochs, 10),
        warmup_fraction=settings.real("train.warmup_fraction", args.warmup_fraction, 0.10),
        scale=settings.real("train.scale", args.scale, 20.0),
        seed=_resolve_seed(args, settings, "train.seed", 0),
    )


def _cmd_catalog_validate(args: argparse.Namespace, settings: Settings) -> int:
    catalog = _load_catalog_file(args.path)
    print(f"controls: {len(catalog.controls)}")
    print(f"safeguards: {len(catalog.safeguards)}")
    print(f"techniques: {len(catalog.techniques)}")
    print(f"metric specs: {len(catalog.metric_specs)}")
    for warning in catalog.warnings:
        print(f"warning: {warning}")
    return 0


def _cmd_catalog_query(args: argparse.Namespace, settings: Settings) -> int:
    catalog = _load_catalog_file(args.path)
    if args.controls_for:
        for control in controls_for_technique(catalog, args.controls_for):
            print(f"{control.id}\t{control.title}")
        return 0
    if args.techniques_for:
        for technique in techniques_for_control(catalog, args.techniques_for):
            print(f"{technique.id}\t{technique.name}")
        return 0
    specs = catalog.metrics_for_control(args.metric)
    if args.measures is None:
        for i, spec in enumerate(specs):
            print(f"{i}\t{spec.formula}")
        return 0
    if not 0 <= args.index < len(specs):
        raise NotFoundError(f"control {args.metric} has no metric spec at index {args.index}")
    value = evaluate_metric(specs[args.index], _parse_measures(args.measures))
    print(repr(value))
    return 0


def _cmd_filter(args: argparse.Namespace, settings: Settings) -> int:
    stage_filter(
        args.pairs,
        args.out_kept,
        args.out_rejected,
        args.out_minima,
        settings.text("filter.embedder", args.embedder, "hash:64"),
        settings.real("filter.threshold", args.threshold, 0.75),
        dedupe=not args.no_dedupe,
    )
    print(f"kept: {_count_lines(args.out_kept)}")
    print(f"rejected: {_count_lines(args.out_rejected)}")
    print(f"minima: {Path(args.out_minima).read_text(encoding='utf-8').strip()}")
    return 0


def _cmd_mine(args: argparse.Namespace, settings: Settings) -> int:
    stage_mine(
        args.techniques,
        args.out,
        settings.integer("mine.gram_size", args.gram_size, 4),
        settings.real("mine.jaccard_weight", args.jaccard_weight, 0.5),
        pairs_path=args.pairs,
        out_triples=args.out_triples,
    )
    print(f"mined: {_count_lines(args.out)}")
    if args.out_triples:
        print(f"triples: {_count_lines(args.out_triples)}")
    return 0


def _cmd_split(args: argparse.Namespace, settings: Settings) -> int:
    stage_split(
        args.triples,
        args.out_train,
        args.out_val,
        args.out_test,
        fractions=_parse_fractions(args.fractions),
        seed=_resolve_seed(args, settings, "split.seed", 0),
    )
    for name, path in (("train", args.out_train), ("val", args.out_val), ("test", args.out_test)):
        print(f"{name}: {_count_lines(path)}")
    return 0


def _cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    stage_train(
        args.train,
        args.val,
        args.out_encoder,
        args.out_history,
        _train_config(args, settings),
        buckets=settings.integer("train.buckets", args.buckets, DEFAULT_BUCKETS),
        dim=settings.integer("train.dim", args.dim, DEFAULT_DIM),
        model_label=args.model_label,
        technique_corpus_path=args.technique_corpus,
    )
    with open(args.out_history, encoding="utf-8") as f:
        history = read_history_csv(f)
    for record in history:
        print(
            f"epoch {record.epoch}: loss {record.loss:.6f}"
            f" val_spearman {record.val_spearman:.4f}"
        )
    print(f"encoder: {args.out_encoder}")
    return 0


def _cmd_eval_report(args: argparse.Namespace, settings: Settings) -> int:
    stage_eval(args.triples, args.model, args.out, errors_csv=args.errors_csv, label=args.label)
    doc = json.loads(Path(args.out).read_text(encoding="utf-8"))
    print(f"model: {doc['model']}")
    print(f"spearman: {doc['spearman']:.4f} ({doc['band']})")
    print(f"mae: {doc['mae']:.4f}  mse: {doc['mse']:.4f}")
    return 0


def _cmd_eval_compare(args: argparse.Namespace, settings: Settings) -> int:
    reports = {}
    for path in args.reports:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        label = doc.get("model") or Path(path).stem
        if label in reports:
            raise ConflictError(f"two reports share the label {label!r}")
        reports[label] = report_from_dict(doc)
    rows = compare(reports, args.reference)
    print(render_comparison_table(rows))
    print()
    print(render_error_table(rows))
    if args.out:
        Path(args.out).write_text(comparison_to_json(rows), encoding="utf-8")
    return 0


def _cmd_triage(args: argparse.Namespace, settings: Settings) -> int:
    catalog = _load_catalog_file(args.catalog)
    source = _model_source(args.model, catalog)
    config = TriageConfig(
        k=settings.integer("triage.k", args.k, 5),
        confidence_threshold=settings.real("triage.threshold", args.threshold, 0.5),
    )
    result = map_incident(args.text, source, catalog, config)
    _emit(triage_to_json(result, catalog), args.out)
    return 0


def _cmd_gap(args: argparse.Namespace, settings: Settings) -> int:
    catalog = _load_catalog_file(args.catalog)
    report = gap_analysis(
        _split_ids(args.techniques),
        _split_ids(args.implemented),
        catalog,
        include_flagged=args.include_flagged,
    )
    _emit(gap_to_json(report), args.out)
    return 0


def _cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    import uvicorn

    from .api import GatewaySettings, create_app

    app = create_app(
        GatewaySettings(
            catalog_path=args.catalog,
            store_paths=tuple(args.store or ()),
            encoder_paths=tuple(args.encoder or ()),
            default_model=args.default_model,
            default_k=settings.integer("triage.k", args.k, 5),
            default_threshold=settings.real("triage.threshold", args.threshold, 0.5),
            jobs_dir=args.jobs_dir,
            ui_dir=args.ui_dir,
        )
    )
    uvicorn.run(
        app,
        host=settings.text("serve.host", args.host, "127.0.0.1"),
        port=settings.integer("serve.port", args.port, 8000),
    )
    return 0


def _cmd_pipeline_run(args: argparse.Namespace, settings: Settings) -> int:
    paths = run_pipeline(
        args.pairs,
        args.techniques,
        args.workdir,
        embedder_spec=settings.text("pipeline.embedder", args.embedder, "hash:64"),
        threshold=settings.real("filter.threshold", args.threshold, 0.75),
        gram_size=settings.integer("mine.gram_size", args.gram_size, 4),
        jaccard_weight=settings.real("mine.jaccard_weight", args.jaccard_weight, 0.5),
        fractions=_parse_fractions(args.fractions),
        config=_train_config(args, settings),
        buckets=settings.integer("train.buckets", args.buckets, DEFAULT_BUCKETS),
        dim=settings.integer("train.dim", args.dim, DEFAULT_DIM),
        model_label=args.model_label,
    )
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--warmup-fraction", type=float, default=None)
    parser.add_argument("--scale", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--buckets", type=int, default=None)
    parser.add_argument("--dim", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attackmapper")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--seed", dest="global_seed", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_catalog = sub.add_parser("catalog", help="validate or query a catalog CSV")
    catalog_sub = p_catalog.add_subparsers(dest="catalog_command", required=True)
    p_validate = catalog_sub.add_parser("validate")
    p_validate.add_argument("path")
    p_validate.set_defaults(handler=_cmd_catalog_validate)
    p_query = catalog_sub.add_parser("query")
    p_query.add_argument("path")
    which = p_query.add_mutually_exclusive_group(required=True)
    which.add_argument("--controls-for", metavar="TECHNIQUE_ID")
    which.add_argument("--techniques-for", metavar="CONTROL_ID")
    which.add_argument("--metric", metavar="CONTROL_ID")
    p_query.add_argument("--index", type=int, default=0)
    p_query.add_argument("--measures", nargs="+", metavar="NAME=VALUE", default=None)
    p_query.set_defaults(handler=_cmd_catalog_query)

    p_filter = sub.add_parser("filter", help="quality-filter an augmentation pairs file")
    p_filter.add_argument("--pairs", required=True)
    p_filter.add_argument("--out-kept", required=True)
    p_filter.add_argument("--out-rejected", required=True)
    p_filter.add_argument("--out-minima", required=True)
    p_filter.add_argument("--embedder", default=None, help="table:PATH, encoder:PATH, or hash:DIM")
    p_filter.add_argument("--threshold", type=float, default=None)
    p_filter.add_argument("--no-dedupe", action="store_true")
    p_filter.set_defaults(handler=_cmd_filter)

    p_mine = sub.add_parser("mine", help="mine lexical hard negatives")
    p_mine.add_argument("--techniques", required=True)
    p_mine.add_argument("--out", required=True)
    p_mine.add_argument("--gram-size", type=int, default=None)
    p_mine.add_argument("--jaccard-weight", type=float, default=None)
    p_mine.add_argument("--pairs", default=None, help="kept pairs to join into triples")
    p_mine.add_argument("--out-triples", default=None)
    p_mine.set_defaults(handler=_cmd_mine)

    p_split = sub.add_parser("split", help="split triples into train/val/test")
    p_split.add_argument("--triples", required=True)
    p_split.add_argument("--out-train", required=True)
    p_split.add_argument("--out-val", required=True)
    p_split.add_argument("--out-test", required=True)
    p_split.add_argument("--fractions", default="0.8,0.1,0.1")
    p_split.add_argument("--seed", type=int, default=None)
    p_split.set_defaults(handler=_cmd_split)

    p_train = sub.add_parser("train", help="train a toy encoder on triples")
    p_train.add_argument("--train", required=True)
    p_train.add_argument("--val", required=True)
    p_train.add_argument("--out-encoder", required=True)
    p_train.add_argument("--out-history", required=True)
    p_train.add_argument("--model-label", default="toy-ft")
    p_train.add_argument("--technique-corpus", default=None)
    _add_train_flags(p_train)
    p_train.set_defaults(handler=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate models and compare reports")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_report = eval_sub.add_parser("report")
    p_report.add_argument("--triples", required=True)
    p_report.add_argument("--model", required=True, help="encoder:PATH or store:PATH")
    p_report.add_argument("--out", required=True)
    p_report.add_argument("--errors-csv", default=None)
    p_report.add_argument("--label", default=None)
    p_report.set_defaults(handler=_cmd_eval_report)
    p_compare = eval_sub.add_parser("compare")
    p_compare.add_argument("--reports", nargs="+", required=True)
    p_compare.add_argument("--reference", required=True)
    p_compare.add_argument("--out", default=None)
    p_compare.set_defaults(handler=_cmd_eval_compare)

    p_triage = sub.add_parser("triage", help="map an incident description to techniques")
    p_triage.add_argument("--catalog", required=True)
    p_triage.add_argument("--model", required=True, help="encoder:PATH or store:PATH")
    p_triage.add_argument("--text", required=True)
    p_triage.add_argument("-k", type=int, default=None)
    p_triage.add_argument("--threshold", type=float, default=None)
    p_triage.add_argument("--out", default=None)
    p_triage.set_defaults(handler=_cmd_triage)

    p_gap = sub.add_parser("gap", help="coverage gaps for observed techniques")
    p_gap.add_argument("--catalog", required=True)
    p_gap.add_argument("--techniques", required=True, help="comma-separated technique ids")
    p_gap.add_argument("--implemented", default="", help="comma-separated control ids")
    p_gap.add_argument("--include-flagged", action="store_true")
    p_gap.add_argument("--out", default=None)
    p_gap.set_defaults(handler=_cmd_gap)

    p_serve = sub.add_parser("serve", help="run the HTTP gateway")
    p_serve.add_argument("--catalog", required=True)
    p_serve.add_argument("--store", action="append", default=None)
    p_serve.add_argument("--encoder", action="append", default=None)
    p_serve.add_argument("--default-model", default=None)
    p_serve.add_argument("-k", type=int, default=None)
    p_serve.add_argument("--threshold", type=float, default=None)
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--jobs-dir", default=None)
    p_serve.add_argument("--ui-dir", default=None)
    p_serve.set_defaults(handler=_cmd_serve)

    p_pipeline = sub.add_parser("pipeline", help="composed end-to-end runs")
    pipeline_sub = p_pipeline.add_subparsers(dest="pipeline_command", required=True)
    p_run = pipeline_sub.add_parser("run")
    p_run.add_argument("--pairs", required=True)
    p_run.add_argument("--techniques", required=True)
    p_run.add_argument("--workdir", required=True)
    p_run.add_argument("--embedder", default=None)
    p_run.add_argument("--threshold", type=float, default=None)
    p_run.add_argument("--gram-size", type=int, default=None)
    p_run.add_argument("--jaccard-weight", type=float, default=None)
    p_run.add_argument("--fractions", default="0.8,0.1,0.1")
    p_run.add_argument("--model-label", default="toy-ft")
    _add_train_flags(p_run)
    p_run.set_defaults(handler=_cmd_pipeline_run)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = Settings(load_settings(args.config))
        return args.handler(args, settings)
    except AttackMapperError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io.error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
