"""HTTP facade over one immutable (corpus, model, gallery) snapshot.

Every response is plain JSON with fixed field names; errors carry the
offending field where one exists. Scores come straight from the library
retrieve call, so service and library rankings are interchangeable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .corpus import SPLITS, Corpus
from .errors import IgrlabError, NotFoundError, UsageError
from .model import MultiTaskModel
from .retrieval import build_gallery, retrieve
from .triplets import load_templates


def _garment_json(corpus: Corpus, gid: str) -> dict:
    g = corpus.garments[gid]
    return {
        "id": g.id,
        "category": g.category,
        "attributes": dict(g.attributes),
        "split": corpus.split_of[g.id],
    }


def _bad_request(message: str, field: str | None = None) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message, "field": field})


class _FieldError(Exception):
    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


def _require(body: dict, field: str, kind: type, optional: bool = False):
    value = body.get(field)
    if value is None:
        if optional:
            return None
        raise _FieldError(f"missing required field {field!r}", field)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise _FieldError(f"field {field!r} must be {kind.__name__}", field)
    return value


def create_app(
    model: MultiTaskModel,
    corpus: Corpus,
    split: str = "test",
    static_dir: str | None = None,
) -> FastAPI:
    gallery = build_gallery(model, corpus, split)
    templates = load_templates()
    app = FastAPI(title="garment retrieval workbench", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        field = ".".join(str(p) for p in errors[0]["loc"]) if errors else "body"
        return _bad_request(f"malformed request: {errors[0]['msg'] if errors else 'bad body'}", field)

    @app.exception_handler(_FieldError)
    async def on_field_error(request: Request, exc: _FieldError):
        return _bad_request(str(exc), exc.field)

    @app.exception_handler(IgrlabError)
    async def on_library_error(request: Request, exc: IgrlabError):
        status = 404 if isinstance(exc, NotFoundError) else 400
        return JSONResponse(status_code=status, content={"error": str(exc), "field": None})

    @app.get("/api/health")
    async def health():
        return {
            "status": "ok",
            "split": split,
            "gallery_size": len(gallery),
            "garments": len(corpus.garments),
            "d_model": model.config.d_model,
            "splits": list(SPLITS),
        }

    @app.get("/api/garments")
    async def garments(
        split: str | None = None,
        category: str | None = None,
        page: int = 1,
        page_size: int = 24,
    ):
        if split is not None and split not in SPLITS:
            raise _FieldError(f"unknown split {split!r}", "split")
        if category is not None and category not in corpus.categories:
            raise _FieldError(f"unknown category {category!r}", "category")
        if page < 1:
            raise _FieldError("page must be >= 1", "page")
        if not 1 <= page_size <= 200:
            raise _FieldError("page_size must lie in [1, 200]", "page_size")
        ids = sorted(corpus.garments)
        if split is not None:
            ids = [g for g in ids if corpus.split_of[g] == split]
        if category is not None:
            ids = [g for g in ids if corpus.garments[g].category == category]
        lo = (page - 1) * page_size
        items = [_garment_json(corpus, g) for g in ids[lo : lo + page_size]]
        return {"items": items, "page": page, "page_size": page_size, "total": len(ids)}

    @app.get("/api/garments/{garment_id}")
    async def garment(garment_id: str):
        if garment_id not in corpus.garments:
            raise NotFoundError(f"unknown garment id {garment_id!r}")
        return _garment_json(corpus, garment_id)

    @app.get("/api/templates")
    async def template_inventory():
        return {
            "templates": [
                {"task": t.task, "arity": t.arity, "text": t.text, "slots": list(t.slots)}
                for t in templates
            ],
            "categories": list(corpus.categories),
            "attribute_types": {
                t: list(v) for t, v in corpus.schema.values_per_type.items()
            },
        }

    @app.post("/api/retrieve")
    async def api_retrieve(body: dict = Body(...)):
        reference_id = _require(body, "reference_id", str)
        feedback = _require(body, "feedback", str)
        k = _require(body, "k", int)
        branch_override = _require(body, "branch_override", str, optional=True)
        if not feedback.strip():
            raise _FieldError("field 'feedback' must not be empty", "feedback")
        if not 1 <= k <= len(gallery):
            raise _FieldError(f"field 'k' must lie in [1, {len(gallery)}]", "k")
        if branch_override is not None and branch_override not in ("tgr", "vcr"):
            raise _FieldError("field 'branch_override' must be 'tgr' or 'vcr'", "branch_override")
        if reference_id not in corpus.garments:
            raise NotFoundError(f"unknown garment id {reference_id!r}")
        try:
            result = retrieve(
                model, gallery, corpus, reference_id, feedback, k,
                branch_override=branch_override,
            )
        except UsageError as exc:
            raise _FieldError(str(exc), "feedback") from exc
        return {
            "branch": result.branch,
            "branch_logits": [result.branch_logits[0], result.branch_logits[1]],
            "results": [
                {
                    "id": gid,
                    "score": float(score),
                    "category": corpus.garments[gid].category,
                    "attributes": dict(corpus.garments[gid].attributes),
                }
                for gid, score in zip(result.ranked_ids, result.scores)
            ],
        }

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(app: FastAPI, host: str, port: int) -> None:
    import uvicorn

    print(json.dumps({"event": "serving", "host": host, "port": port}), file=sys.stderr)
    uvicorn.run(app, host=host, port=port, log_level="warning", access_log=False)
