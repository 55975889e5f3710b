"""HTTP facade over the analysis pipeline, versioned under /api/v1.

Upload BPMN definitions, launch analysis runs, and review the results.
Review mutations (step edits, label overrides, activity re-analysis) never
touch a stored run: each one creates a child revision through the pipeline
and the parent stays readable forever. Every error response carries a
stable machine code in the body, {"error": {"code", "message"}}, so
clients can branch on codes instead of scraping messages.

Bearer auth is optional: set PROCESSLENS_TOKEN (or pass token=) and every
/api/v1 request must carry "Authorization: Bearer <token>".
"""

from __future__ import annotations

import hmac
import json
import os
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .bpmn import ProcessModel, extract_activities, parse_bpmn
from .datastore import GroundTruthProcess, RunStore, load_corpus
from .errors import (
    DatasetError,
    EmptyStepList,
    ProcessLensError,
    RunNotFound,
    UnknownActivity,
    UnknownStep,
)
from .evaluation import score_run_against_gold
from .gateway import build_gateway
from .pipeline import (
    AnalysisRun,
    edit_step,
    label_distribution,
    override_label,
    reanalyze_activity,
    run_full,
    run_to_csv,
    run_to_json,
)
from .prompts import Phase, PromptCatalog, config_from_spec, load_default_catalog
from .report import confusion_payload

API_PREFIX = "/api/v1"

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>processlens</title></head>
<body><h1>processlens service</h1>
<p>The review UI is not built. The JSON API is available under /api/v1.</p>
</body></html>
"""


class ApiError(Exception):
    """Request failure with a stable machine code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


class RunRequest(BaseModel):
    process_id: str
    breakdown_config: str | dict | None = None
    vaa_config: str | dict | None = None
    provider: str | None = None


class StepPatch(BaseModel):
    text: str
    note: str = ""


class LabelPatch(BaseModel):
    label: str
    note: str = ""


class ReanalyzeRequest(BaseModel):
    note: str = ""
    provider: str | None = None


def _gold_index(corpus) -> dict[str, GroundTruthProcess]:
    if corpus is None:
        return {}
    if isinstance(corpus, (str, Path)):
        corpus = load_corpus(corpus)
    return {p.process_id: p for p in corpus}


def create_app(
    *,
    store: RunStore,
    catalog: PromptCatalog | None = None,
    gateway=None,
    corpus=None,
    static_dir: str | Path | None = None,
    token: str | None = None,
) -> FastAPI:
    """Build the service around an injected store, catalog and gateway.

    corpus (a directory or loaded list) enables GET metrics for processes
    with ground truth. token=None reads PROCESSLENS_TOKEN; "" disables auth.
    """
    catalog = catalog or load_default_catalog()
    default_gateway = gateway if gateway is not None else build_gateway("mock")
    gold = _gold_index(corpus)
    if token is None:
        token = os.environ.get("PROCESSLENS_TOKEN", "")

    app = FastAPI(title="processlens", docs_url=None, redoc_url=None, openapi_url=None)

    # Uploaded definitions, kept as XML next to the runs so a restarted
    # service can still render names and re-analyze historical runs.
    processes: dict[str, ProcessModel] = {}
    xml_dir = store.root / "processes"
    if xml_dir.is_dir():
        for path in sorted(xml_dir.glob("*.bpmn")):
            try:
                model = parse_bpmn(path.read_bytes())
            except ProcessLensError:
                continue
            processes[model.process_id] = model

    # parent run id -> first child run id. Mutations are first-wins per
    # parent: once a child exists, later edits of that parent conflict.
    children: dict[str, str] = {}
    for manifest in store.list_runs():
        parent = manifest.get("parent_run")
        if parent:
            children.setdefault(parent, manifest["run_id"])
    mutation_lock = threading.Lock()

    extra_gateways: dict[str, object] = {}

    def _gateway_for(provider: str | None):
        if provider in (None, ""):
            return default_gateway
        label = getattr(default_gateway, "label", "")
        if provider == label or provider == label.split(":")[0]:
            return default_gateway
        if provider == "mock":
            if "mock" not in extra_gateways:
                extra_gateways["mock"] = build_gateway("mock")
            return extra_gateways["mock"]
        raise ApiError(
            400, "PROVIDER_INVALID", f"provider {provider!r} is not available on this server"
        )

    def _load_run(run_id: str) -> AnalysisRun:
        try:
            return store.load_run(run_id)
        except RunNotFound as exc:
            raise ApiError(404, "RUN_NOT_FOUND", str(exc)) from exc

    def _activity_name(model: ProcessModel | None, activity_id: str) -> str:
        if model is not None:
            try:
                return model.node(activity_id).name or activity_id
            except ProcessLensError:
                pass
        return activity_id

    def _run_payload(run: AnalysisRun) -> dict:
        payload = run_to_json(run)
        payload["created_at"] = run.created_at
        model = processes.get(run.process_id)
        payload["process_name"] = model.name if model is not None else run.process_id
        by_label = {c.step_id: c for c in run.classifications}
        by_activity: dict[str, list] = {}
        for s in run.steps:
            by_activity.setdefault(s.activity_id, []).append(s)
        payload["activities"] = [
            {
                "activity_id": aid,
                "activity_name": _activity_name(model, aid),
                "status": status.value,
                "steps": [
                    {
                        "step_id": s.step_id,
                        "ordinal": s.ordinal,
                        "text": s.text,
                        "label": by_label[s.step_id].label.value
                        if s.step_id in by_label
                        else None,
                        "justification": by_label[s.step_id].justification
                        if s.step_id in by_label
                        else "",
                    }
                    for s in by_activity.get(aid, [])
                ],
            }
            for aid, status in run.statuses.items()
        ]
        payload["child_run"] = children.get(run.run_id)
        payload["distribution"] = {
            label.value: {"count": count, "fraction": fraction}
            for label, (count, fraction) in label_distribution(run).items()
        }
        return payload

    def _configs_from(body: RunRequest):
        try:
            return (
                config_from_spec(catalog, Phase.BREAKDOWN, body.breakdown_config),
                config_from_spec(catalog, Phase.VAA, body.vaa_config),
            )
        except ProcessLensError as exc:
            raise ApiError(400, "CONFIG_INVALID", str(exc)) from exc

    def _mutate(parent_id: str, fn):
        # Serialized check-then-write: concurrent edits of one parent line
        # up here and every one after the first sees the conflict.
        with mutation_lock:
            parent = _load_run(parent_id)
            existing = children.get(parent_id)
            if existing is not None:
                raise ApiError(
                    409,
                    "RUN_CONFLICT",
                    f"run {parent_id} already has child revision {existing}; "
                    "reload and edit the latest revision",
                )
            child = fn(parent)
            children[parent_id] = child.run_id
            return _run_payload(child)

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if token and request.url.path.startswith(API_PREFIX):
            supplied = request.headers.get("authorization", "")
            if not supplied.startswith("Bearer "):
                return _error_response(401, "AUTH_REQUIRED", "missing bearer token")
            if not hmac.compare_digest(supplied[len("Bearer ") :], token):
                return _error_response(401, "AUTH_INVALID", "bearer token does not match")
        return await call_next(request)

    @app.exception_handler(ApiError)
    async def _handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def _handle_validation(request: Request, exc: RequestValidationError):
        detail = "; ".join(
            f"{'.'.join(str(p) for p in err.get('loc', ()))}: {err.get('msg', '')}"
            for err in exc.errors()
        )
        return _error_response(422, "VALIDATION_ERROR", detail or "invalid request body")

    @app.exception_handler(StarletteHTTPException)
    async def _handle_http(request: Request, exc: StarletteHTTPException):
        code = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED"}.get(
            exc.status_code, f"HTTP_{exc.status_code}"
        )
        return _error_response(exc.status_code, code, str(exc.detail))

    @app.exception_handler(ProcessLensError)
    async def _handle_library_error(request: Request, exc: ProcessLensError):
        return _error_response(500, "INTERNAL_ERROR", str(exc))

    @app.post(API_PREFIX + "/processes", status_code=201)
    async def upload_process(request: Request):
        raw = await request.body()
        if not raw.strip():
            raise ApiError(400, "EMPTY_BODY", "request body must be BPMN XML")
        domain_tag = request.query_params.get("domain_tag", "")
        try:
            model = parse_bpmn(raw, domain_tag=domain_tag)
        except ProcessLensError as exc:
            raise ApiError(400, "BPMN_INVALID", str(exc)) from exc
        if model.process_id in processes:
            raise ApiError(
                409, "PROCESS_EXISTS", f"process {model.process_id!r} is already uploaded"
            )
        xml_dir.mkdir(parents=True, exist_ok=True)
        (xml_dir / f"{model.process_id}.bpmn").write_bytes(raw)
        processes[model.process_id] = model
        return _process_payload(model, gold)

    @app.get(API_PREFIX + "/processes")
    def list_processes():
        return {
            "processes": [
                _process_payload(processes[pid], gold) for pid in sorted(processes)
            ]
        }

    @app.post(API_PREFIX + "/runs", status_code=201)
    def create_run(body: RunRequest):
        model = processes.get(body.process_id)
        if model is None:
            raise ApiError(
                404, "PROCESS_NOT_FOUND", f"process {body.process_id!r} is not uploaded"
            )
        breakdown_config, vaa_config = _configs_from(body)
        run = run_full(
            model,
            breakdown_config,
            vaa_config,
            _gateway_for(body.provider),
            store=store,
            catalog=catalog,
        )
        return _run_payload(run)

    @app.get(API_PREFIX + "/runs")
    def list_runs(process_id: str | None = None):
        return {"runs": store.list_runs(process_id=process_id)}

    @app.get(API_PREFIX + "/runs/{run_id}")
    def get_run(run_id: str):
        return _run_payload(_load_run(run_id))

    @app.patch(API_PREFIX + "/runs/{run_id}/steps/{step_id}")
    def patch_step(run_id: str, step_id: str, body: StepPatch):
        def fn(parent: AnalysisRun) -> AnalysisRun:
            try:
                return edit_step(parent, step_id, body.text, note=body.note, store=store)
            except UnknownStep as exc:
                raise ApiError(404, "STEP_NOT_FOUND", str(exc)) from exc
            except EmptyStepList as exc:
                raise ApiError(400, "STEP_TEXT_EMPTY", str(exc)) from exc

        return _mutate(run_id, fn)

    @app.patch(API_PREFIX + "/runs/{run_id}/classifications/{step_id}")
    def patch_classification(run_id: str, step_id: str, body: LabelPatch):
        def fn(parent: AnalysisRun) -> AnalysisRun:
            try:
                return override_label(parent, step_id, body.label, note=body.note, store=store)
            except ValueError as exc:
                raise ApiError(
                    400, "LABEL_INVALID", f"label must be one of VA, BVA, NVA, got {body.label!r}"
                ) from exc
            except UnknownStep as exc:
                raise ApiError(404, "CLASSIFICATION_NOT_FOUND", str(exc)) from exc

        return _mutate(run_id, fn)

    @app.post(API_PREFIX + "/runs/{run_id}/activities/{activity_id}/reanalyze")
    def reanalyze(run_id: str, activity_id: str, body: ReanalyzeRequest | None = None):
        body = body or ReanalyzeRequest()

        def fn(parent: AnalysisRun) -> AnalysisRun:
            model = processes.get(parent.process_id)
            if model is None:
                raise ApiError(
                    409,
                    "PROCESS_NOT_LOADED",
                    f"the definition of process {parent.process_id!r} is not on this "
                    "server; upload it before re-analyzing",
                )
            try:
                return reanalyze_activity(
                    parent,
                    model,
                    activity_id,
                    _gateway_for(body.provider),
                    catalog=catalog,
                    store=store,
                    note=body.note,
                )
            except UnknownActivity as exc:
                raise ApiError(404, "ACTIVITY_NOT_FOUND", str(exc)) from exc

        return _mutate(run_id, fn)

    @app.get(API_PREFIX + "/runs/{run_id}/export")
    def export_run(run_id: str, format: str = "json"):
        run = _load_run(run_id)
        if format == "json":
            text = json.dumps(run_to_json(run), indent=2, sort_keys=True) + "\n"
            return PlainTextResponse(text, media_type="application/json")
        if format == "csv":
            return PlainTextResponse(run_to_csv(run), media_type="text/csv")
        raise ApiError(400, "FORMAT_INVALID", f"format must be json or csv, got {format!r}")

    @app.get(API_PREFIX + "/runs/{run_id}/metrics")
    def run_metrics(run_id: str):
        run = _load_run(run_id)
        gold_process = gold.get(run.process_id)
        if gold_process is None:
            raise ApiError(
                404, "GOLD_NOT_FOUND", f"no ground truth for process {run.process_id!r}"
            )
        try:
            score = score_run_against_gold(run, gold_process, _gateway_for(None))
        except DatasetError as exc:
            raise ApiError(409, "RUN_NOT_SCORABLE", str(exc)) from exc
        return {
            "run_id": run.run_id,
            "process_id": run.process_id,
            "scored_steps": score.scored_steps,
            "unmatched_steps": score.unmatched_steps,
            "ambiguous_steps": score.ambiguous_steps,
            "confusion": confusion_payload(score.matrix),
            "f1": {
                "macro": score.report.macro_f1,
                "per_class": {
                    name: {
                        "precision": line.precision,
                        "recall": line.recall,
                        "f1": line.f1,
                        "support": line.support,
                    }
                    for name, line in score.report.per_class.items()
                },
            },
            "alignment": {
                "counts": {cat.value: n for cat, n in score.alignment.counts.items()},
                "percentages": {
                    cat.value: p for cat, p in score.alignment.percentages.items()
                },
                "total_generated": score.alignment.total_generated,
                "total_ground_truth": score.alignment.total_ground_truth,
            },
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/", include_in_schema=False)
        def index():
            return HTMLResponse(_PLACEHOLDER_PAGE)

    return app


def _process_payload(model: ProcessModel, gold: dict[str, GroundTruthProcess]) -> dict:
    activities = extract_activities(model)
    return {
        "process_id": model.process_id,
        "name": model.name,
        "domain_tag": model.domain_tag,
        "activity_count": len(activities),
        "activities": [
            {"activity_id": a.node_id, "name": a.name, "lane": a.lane} for a in activities
        ],
        "has_gold": model.process_id in gold,
        "warnings": list(model.warnings),
    }
