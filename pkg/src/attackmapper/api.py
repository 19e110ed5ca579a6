"""HTTP gateway: catalog queries, triage, metrics, and pipeline jobs.

Pure queries (catalog, triage, gap analysis, metric evaluation) respond
inline and are byte-identical across repeated identical requests: every
JSON body is serialized with sorted keys and no hidden state feeds the
handlers. Long-running pipeline work goes through POST /jobs/{kind} and
a single worker thread, so at most one job (training included) runs at
a time.

Each triage response carries a deterministic X-Triage-Id header (a hash
of the request parameters); gap analysis accepts those ids in place of
explicit technique lists.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles

from .catalog import (
    Catalog,
    catalog_to_dict,
    controls_for_technique,
    evaluate_metric,
    load_catalog,
    techniques_for_control,
)
from .embedding import load_encoder, load_store
from .errors import AttackMapperError, ConflictError, NotFoundError, ValidationError
from .jobs import JobQueue
from .pipeline import stage_eval, stage_filter, stage_mine, stage_train
from .training import TrainConfig
from .triage import (
    EncoderSource,
    StoreSource,
    TriageConfig,
    TriageSource,
    gap_analysis,
    gap_to_dict,
    map_incident,
    triage_to_dict,
)

TRIAGE_CACHE_LIMIT = 1024


@dataclass(frozen=True)
class GatewaySettings:
    catalog_path: str
    store_paths: tuple[str, ...] = ()
    encoder_paths: tuple[str, ...] = ()
    default_model: str | None = None
    default_k: int = 5
    default_threshold: float = 0.5
    jobs_dir: str | None = None
    ui_dir: str | None = None


def _json_response(doc: Any, status_code: int = 200) -> Response:
    body = json.dumps(doc, sort_keys=True, ensure_ascii=False, default=str) + "\n"
    return Response(content=body, status_code=status_code, media_type="application/json")


def _require_str(body: dict, key: str) -> str:
    value = body.get(key)
    if not isinstance(value, str) or not value:
        raise ValidationError(f"field {key!r} must be a non-empty string")
    return value


def _opt_int(body: dict, key: str, default: int) -> int:
    value = body.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"field {key!r} must be an integer")
    return value


def _opt_number(body: dict, key: str, default: float) -> float:
    value = body.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"field {key!r} must be a number")
    return float(value)


def _opt_bool(body: dict, key: str, default: bool) -> bool:
    value = body.get(key, default)
    if not isinstance(value, bool):
        raise ValidationError(f"field {key!r} must be a boolean")
    return value


def _opt_str_list(body: dict, key: str) -> list[str] | None:
    if key not in body:
        return None
    value = body[key]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValidationError(f"field {key!r} must be a list of strings")
    return value


def _load_sources(settings: GatewaySettings, catalog: Catalog) -> dict[str, TriageSource]:
    sources: dict[str, TriageSource] = {}

    def register(label: str, source: TriageSource) -> None:
        if label in sources:
            raise ConflictError(f"two models share the label {label!r}")
        sources[label] = source

    for path in settings.store_paths:
        with open(path, encoding="utf-8") as f:
            store = load_store(f)
        register(store.model_label, StoreSource(store))
    for path in settings.encoder_paths:
        with open(path, encoding="utf-8") as f:
            encoder = load_encoder(f)
        register(encoder.model_label, EncoderSource(encoder, catalog))
    if not sources:
        raise ValidationError("gateway needs at least one embedding store or encoder")
    return sources


def triage_request_id(text: str, k: int, threshold: float, model: str) -> str:
    canonical = json.dumps(
        {"text": text, "k": k, "threshold": threshold, "model": model},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def create_app(settings: GatewaySettings) -> FastAPI:
    """Build the gateway, loading catalog and models eagerly so a broken
    configuration aborts startup with the underlying typed error."""
    with open(settings.catalog_path, encoding="utf-8") as f:
        catalog = load_catalog(f)
    sources = _load_sources(settings, catalog)
    default_model = settings.default_model or next(iter(sources))
    if default_model not in sources:
        raise NotFoundError(f"default model {default_model!r} is not configured")

    app = FastAPI(title="attackmapper gateway")
    jobs = JobQueue()
    triage_cache: dict[str, Any] = {}
    jobs_base = Path(settings.jobs_dir) if settings.jobs_dir else Path.cwd()

    app.state.catalog = catalog
    app.state.sources = sources
    app.state.jobs = jobs

    @app.exception_handler(AttackMapperError)
    async def typed_error(request: Request, exc: AttackMapperError) -> Response:
        doc = {"code": exc.code, "message": exc.message, "detail": exc.detail}
        return _json_response(doc, exc.http_status)

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError) -> Response:
        doc = {
            "code": "validation.invalid",
            "message": "malformed request body",
            "detail": exc.errors(),
        }
        return _json_response(doc, 400)

    @app.get("/health")
    def health() -> Response:
        return _json_response(
            {
                "status": "ok",
                "controls": len(catalog.controls),
                "safeguards": len(catalog.safeguards),
                "techniques": len(catalog.techniques),
                "metric_specs": len(catalog.metric_specs),
                "models": sorted(sources),
                "default_model": default_model,
                "catalog_warnings": list(catalog.warnings),
            }
        )

    @app.get("/catalog/controls")
    def catalog_controls() -> Response:
        return _json_response({"controls": catalog_to_dict(catalog)["controls"]})

    @app.get("/catalog/controls/{control_id}/techniques")
    def control_techniques(control_id: str) -> Response:
        control = catalog.control(control_id)
        techniques = techniques_for_control(catalog, control_id)
        return _json_response(
            {
                "control": {"id": control.id, "title": control.title},
                "techniques": [
                    {"id": t.id, "name": t.name, "description": t.description}
                    for t in techniques
                ],
            }
        )

    @app.get("/catalog/techniques/{technique_id}/controls")
    def technique_controls(technique_id: str) -> Response:
        technique = catalog.technique(technique_id)
        controls = controls_for_technique(catalog, technique_id)
        return _json_response(
            {
                "technique": {"id": technique.id, "name": technique.name},
                "controls": [{"id": c.id, "title": c.title} for c in controls],
            }
        )

    @app.get("/catalog/controls/{control_id}/metrics")
    def control_metrics(control_id: str) -> Response:
        specs = catalog.metrics_for_control(control_id)
        return _json_response(
            {
                "control_id": control_id,
                "metrics": [
                    {
                        "spec_index": i,
                        "inputs": [
                            {"name": f.name, "description": f.description} for f in s.inputs
                        ],
                        "operations": list(s.operations),
                        "measures": [
                            {"name": f.name, "description": f.description} for f in s.measures
                        ],
                        "formula": s.formula,
                    }
                    for i, s in enumerate(specs)
                ],
            }
        )

    @app.post("/triage")
    def triage(payload: dict | None = Body(None)) -> Response:
        body = payload or {}
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ValidationError("incident text is empty", code="validation.empty_incident")
        k = _opt_int(body, "k", settings.default_k)
        threshold = _opt_number(body, "threshold", settings.default_threshold)
        model = body.get("model", default_model)
        if not isinstance(model, str):
            raise ValidationError("field 'model' must be a string")
        if model not in sources:
            raise NotFoundError(f"unknown model {model!r}")
        config = TriageConfig(k=k, confidence_threshold=threshold)
        result = map_incident(text, sources[model], catalog, config)
        triage_id = triage_request_id(text, k, threshold, model)
        if triage_id not in triage_cache and len(triage_cache) >= TRIAGE_CACHE_LIMIT:
            triage_cache.pop(next(iter(triage_cache)))
        triage_cache[triage_id] = result
        response = _json_response(triage_to_dict(result, catalog))
        response.headers["X-Triage-Id"] = triage_id
        return response

    @app.post("/gap-analysis")
    def gap(payload: dict | None = Body(None)) -> Response:
        body = payload or {}
        technique_ids = _opt_str_list(body, "technique_ids")
        triage_ids = _opt_str_list(body, "triage_ids")
        if (technique_ids is None) == (triage_ids is None):
            raise ValidationError(
                "provide exactly one of 'technique_ids' or 'triage_ids'"
            )
        implemented = _opt_str_list(body, "implemented_controls")
        if implemented is None:
            raise ValidationError("field 'implemented_controls' is required")
        include_flagged = _opt_bool(body, "include_flagged", False)
        if triage_ids is not None:
            observed = []
            for triage_id in triage_ids:
                if triage_id not in triage_cache:
                    raise NotFoundError(f"unknown triage id {triage_id!r}")
                observed.append(triage_cache[triage_id])
        else:
            observed = technique_ids
        report = gap_analysis(observed, implemented, catalog, include_flagged=include_flagged)
        return _json_response(gap_to_dict(report))

    @app.post("/metrics/evaluate")
    def metrics_evaluate(payload: dict | None = Body(None)) -> Response:
        body = payload or {}
        control_id = _require_str(body, "control_id")
        spec_index = _opt_int(body, "spec_index", 0)
        measures = body.get("measures")
        if not isinstance(measures, dict):
            raise ValidationError("field 'measures' must be an object of name -> number")
        for name, value in measures.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"measure {name!r} must be a number")
        specs = catalog.metrics_for_control(control_id)
        if not 0 <= spec_index < len(specs):
            raise NotFoundError(
                f"control {control_id} has no metric spec at index {spec_index}"
            )
        spec = specs[spec_index]
        value = evaluate_metric(spec, {k: float(v) for k, v in measures.items()})
        return _json_response(
            {
                "control_id": control_id,
                "spec_index": spec_index,
                "formula": spec.formula,
                "value": value,
            }
        )

    def _path(body: dict, key: str, required: bool = True) -> str | None:
        if key not in body:
            if required:
                raise ValidationError(f"job body needs field {key!r}")
            return None
        value = body[key]
        if not isinstance(value, str) or not value:
            raise ValidationError(f"field {key!r} must be a non-empty path")
        p = Path(value)
        return str(p if p.is_absolute() else jobs_base / p)

    def _build_job(kind: str, body: dict):
        if kind == "filter":
            args = (
                _path(body, "pairs"),
                _path(body, "out_kept"),
                _path(body, "out_rejected"),
                _path(body, "out_minima"),
                _require_str(body, "embedder"),
                _opt_number(body, "threshold", 0.75),
                _opt_bool(body, "dedupe", True),
            )
            return lambda: stage_filter(*args)
        if kind == "mine":
            args = (
                _path(body, "techniques"),
                _path(body, "out"),
                _opt_int(body, "gram_size", 4),
                _opt_number(body, "jaccard_weight", 0.5),
                _path(body, "pairs", required=False),
                _path(body, "out_triples", required=False),
            )
            return lambda: stage_mine(*args)
        if kind == "train":
            config = TrainConfig(
                learning_rate=_opt_number(body, "learning_rate", 2e-5),
                batch_size=_opt_int(body, "batch_size", 16),
                epochs=_opt_int(body, "epochs", 10),
                warmup_fraction=_opt_number(body, "warmup_fraction", 0.10),
                scale=_opt_number(body, "scale", 20.0),
                seed=_opt_int(body, "seed", 0),
            )
            args = (
                _path(body, "train"),
                _path(body, "val"),
                _path(body, "out_encoder"),
                _path(body, "out_history"),
                config,
                _opt_int(body, "buckets", 4096),
                _opt_int(body, "dim", 64),
                body.get("model_label", "toy-ft"),
                _path(body, "technique_corpus", required=False),
            )
            return lambda: stage_train(*args)
        if kind == "evaluate":
            args = (
                _path(body, "triples"),
                _require_str(body, "model"),
                _path(body, "out"),
                _path(body, "errors_csv", required=False),
                body.get("label"),
            )
            return lambda: stage_eval(*args)
        raise NotFoundError(f"unknown job kind {kind!r}")

    @app.post("/jobs/{kind}")
    def submit_job(kind: str, payload: dict | None = Body(None)) -> Response:
        work = _build_job(kind, payload or {})
        record = jobs.submit(kind, work)
        return _json_response(record.as_dict(), status_code=202)

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str) -> Response:
        return _json_response(jobs.get(job_id).as_dict())

    if settings.ui_dir and Path(settings.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=settings.ui_dir, html=True), name="ui")

    return app
