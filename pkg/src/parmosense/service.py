"""HTTP/WS service over the engine: the transport the dashboard consumes.

REST resources cover scenario lifecycle, report browsing with pagination,
non-destructive edits, export, ranking, and simulation runs. A WebSocket
endpoint streams each scenario's downlinks (map pins, timeline entries,
reward events) as canonical envelope frames.
"""

from __future__ import annotations

import asyncio

from fastapi import Depends, FastAPI, Header, Query, Request, WebSocket
from fastapi.responses import JSONResponse, Response
from fastapi.websockets import WebSocketDisconnect

from . import sim
from .datastore import EditOp, QueryFilters
from .errors import CATALOGUE, EngineError
from .runtime import Engine
from .scenario import parse_doc, to_doc, validate_scenario

DEFAULT_PAGE_SIZE = 100

# codes that are about a missing resource or an impossible transition
NOT_FOUND_CODES = {"unknown scenario", "unknown report", "unknown participant",
                   "unknown checkpoint", "unknown fixture"}
CONFLICT_CODES = {"illegal transition", "duplicate scenario_id", "duplicate report id",
                  "token consumed"}

EXPORT_MEDIA = {
    "csv": "text/csv; charset=utf-8",
    "json": "application/json",
    "gpx": "application/gpx+xml",
    "kml": "application/vnd.google-earth.kml+xml",
}


def status_for(code: str) -> int:
    if code in NOT_FOUND_CODES:
        return 404
    if code in CONFLICT_CODES:
        return 409
    if code == "unauthorized":
        return 401
    return 400


def create_app(engine: Engine, token: str | None = None) -> FastAPI:
    app = FastAPI(title="parmosense", version="0.1.0")

    def authorized(authorization: str | None = Header(default=None)):
        if token and authorization != f"Bearer {token}":
            raise EngineError("unauthorized", "missing or wrong bearer token")
        return True

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        assert exc.code in CATALOGUE, exc.code
        return JSONResponse(status_code=status_for(exc.code), content=exc.to_doc())

    @app.post("/scenarios", status_code=201)
    async def deploy(body: dict, _=Depends(authorized)):
        scenario = parse_doc(body)
        sid = engine.deploy(scenario)
        return {"scenario_id": sid, "status": engine.instance(sid).status.to_doc()}

    @app.post("/scenarios/validate")
    async def validate(body: dict, _=Depends(authorized)):
        scenario = parse_doc(body)
        return {"violations": [v.to_doc() for v in validate_scenario(scenario)]}

    @app.get("/scenarios")
    async def list_scenarios(_=Depends(authorized)):
        return engine.list_instances()

    @app.get("/scenarios/{sid}")
    async def get_scenario(sid: str, _=Depends(authorized)):
        inst = engine.instance(sid)
        return {"scenario": to_doc(inst.scenario), "status": inst.status.to_doc()}

    @app.delete("/scenarios/{sid}")
    async def delete_scenario(sid: str, _=Depends(authorized)):
        engine.remove(sid)
        return {"scenario_id": sid, "deleted": True}

    @app.post("/scenarios/{sid}/start")
    async def start(sid: str, _=Depends(authorized)):
        return {"scenario_id": sid, "status": engine.start(sid).to_doc()}

    @app.post("/scenarios/{sid}/stop")
    async def stop(sid: str, _=Depends(authorized)):
        return {"scenario_id": sid, "status": engine.stop(sid).to_doc()}

    @app.get("/scenarios/{sid}/status")
    async def status(sid: str, _=Depends(authorized)):
        inst = engine.instance(sid)
        return {"scenario_id": sid, "status": inst.status.to_doc(),
                "participants": len(inst.participants)}

    @app.get("/scenarios/{sid}/joincode")
    async def joincode(sid: str, endpoint: str, _=Depends(authorized)):
        return {"payload": engine.issue_join_code(sid, endpoint).payload}

    @app.get("/scenarios/{sid}/reports")
    async def reports(
        sid: str,
        participant: str | None = None,
        time_from: int | None = Query(default=None, alias="from"),
        time_to: int | None = Query(default=None, alias="to"),
        bbox: str | None = None,
        label: str | None = None,
        include_excluded: bool = False,
        page: int = 1,
        page_size: int = DEFAULT_PAGE_SIZE,
        _=Depends(authorized),
    ):
        parsed_bbox = None
        if bbox is not None:
            parts = bbox.split(",")
            if len(parts) != 4:
                raise EngineError("malformed bbox", bbox)
            try:
                parsed_bbox = tuple(float(x) for x in parts)
            except ValueError as e:
                raise EngineError("malformed bbox", bbox) from e
        filters = QueryFilters(participant, time_from, time_to, parsed_bbox,
                               label, include_excluded)
        rows = engine.instance(sid).dataset.query(filters)
        lo = (page - 1) * page_size
        return {
            "total": len(rows),
            "page": page,
            "page_size": page_size,
            "reports": [r.to_doc() for r in rows[lo:lo + page_size]],
        }

    @app.post("/scenarios/{sid}/edits")
    async def edits(sid: str, body: dict, _=Depends(authorized)):
        dataset = engine.instance(sid).dataset
        op = EditOp(
            op_id=body.get("op_id") or f"api-{len(dataset.edit_log()) + 1}",
            at=body.get("at") or engine.clock_ms(),
            kind=body.get("kind", ""),
            target=body.get("target", ""),
            arg=body.get("arg"),
        )
        return dataset.apply_edit(op)

    @app.post("/scenarios/{sid}/restore")
    async def restore(sid: str, _=Depends(authorized)):
        return {"reverted": engine.instance(sid).dataset.restore()}

    @app.get("/scenarios/{sid}/export")
    async def export(sid: str, format: str, _=Depends(authorized)):
        payload = engine.instance(sid).dataset.export(format)
        return Response(content=payload, media_type=EXPORT_MEDIA.get(format, "text/plain"))

    @app.get("/scenarios/{sid}/ranking")
    async def ranking(sid: str, _=Depends(authorized)):
        return {"ranking": engine.ranking(sid)}

    @app.post("/sim/run")
    async def sim_run(body: dict, _=Depends(authorized)):
        sid = body.get("scenario_id")
        if not sid:
            raise EngineError("invalid sim config", "scenario_id required")
        config = sim.config_from_doc(body.get("config", {}))
        inst = engine.instance(sid)
        result = await asyncio.to_thread(sim.run, inst.scenario, config, engine)
        return result.to_doc()

    @app.websocket("/scenarios/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        if token and ws.query_params.get("token") != token:
            await ws.close(code=4401)
            return
        try:
            engine.instance(sid)
        except EngineError:
            await ws.close(code=4404)
            return
        await ws.accept()
        sub = engine.broker.subscribe(f"pms/{sid}/down/+")
        disconnected = asyncio.Event()

        async def watch_disconnect():
            try:
                while True:
                    await ws.receive_text()
            except WebSocketDisconnect:
                disconnected.set()

        watcher = asyncio.create_task(watch_disconnect())
        try:
            while not disconnected.is_set():
                env = sub.poll()
                if env is None:
                    await asyncio.sleep(0.02)
                    continue
                await ws.send_text(env.wire().decode("utf-8"))
        except RuntimeError:
            pass  # send on a closing socket
        finally:
            watcher.cancel()
            engine.broker.unsubscribe(sub)

    return app
