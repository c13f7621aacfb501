"""HTTP wiring for the annotation service.

All domain logic lives in SessionStore; this module only translates
requests and errors. Mutating endpoints accept an optional X-Request-Id
header for safe retries.
"""

from __future__ import annotations

from fastapi import FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse

from ..errors import ConflictError, InvalidInputError, NotFoundError
from ..raster import labels_png_bytes
from .registry import ModelRegistry
from .sessions import SessionStore


def create_app(models_dir, state_dir) -> FastAPI:
    registry = ModelRegistry(models_dir)
    store = SessionStore(registry, state_dir)
    app = FastAPI(title="clickseg", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.registry = registry

    for exc_type, code in ((NotFoundError, 404), (InvalidInputError, 422),
                           (ConflictError, 409)):
        def handler(request: Request, exc: Exception, code=code):
            return JSONResponse({"detail": str(exc)}, status_code=code)
        app.add_exception_handler(exc_type, handler)

    @app.get("/api/models")
    def list_models():
        return {"models": registry.list()}

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict,
                       x_request_id: str | None = Header(default=None)):
        model_id = body.get("model_id")
        if not isinstance(model_id, str):
            raise InvalidInputError("body must carry a 'model_id' string")
        return store.create(model_id, request_id=x_request_id)

    @app.get("/api/sessions")
    def list_sessions():
        return {"sessions": store.list()}

    @app.get("/api/sessions/{sid}")
    def session_state(sid: str):
        return store.state(sid)

    @app.put("/api/sessions/{sid}/image")
    async def put_image(sid: str, request: Request,
                        x_request_id: str | None = Header(default=None)):
        png = await request.body()
        if not png:
            raise InvalidInputError("request body must be a PNG image")
        return store.set_image(sid, png, request_id=x_request_id)

    @app.post("/api/sessions/{sid}/objects", status_code=201)
    def annotate(sid: str, guide: dict,
                 x_request_id: str | None = Header(default=None)):
        return store.annotate(sid, guide, request_id=x_request_id)

    @app.patch("/api/sessions/{sid}/objects/{object_id}")
    def revise(sid: str, object_id: int, guide: dict,
               x_request_id: str | None = Header(default=None)):
        return store.revise(sid, object_id, guide, request_id=x_request_id)

    @app.delete("/api/sessions/{sid}/objects/{object_id}")
    def delete_object(sid: str, object_id: int,
                      x_request_id: str | None = Header(default=None)):
        return store.delete_object(sid, object_id, request_id=x_request_id)

    @app.post("/api/sessions/{sid}/undo")
    def undo(sid: str):
        return store.undo(sid)

    @app.get("/api/sessions/{sid}/labelmap")
    def labelmap(sid: str):
        png = labels_png_bytes(store.export_labelmap(sid))
        return Response(content=png, media_type="image/png")

    return app
