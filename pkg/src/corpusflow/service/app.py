"""The /v1 HTTP API and the per-workspace event stream.

Commands apply strictly in server arrival order under a per-workspace lock
(last-write-wins on config fields); every committed event broadcasts to all
stream subscribers in seq order, exactly once per connection. A client that
reconnects with from_seq resumes gaplessly.
"""

from __future__ import annotations

import asyncio
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from ..corpus import FieldMap
from ..errors import EngineError, NotFound
from ..projection import coordinates_csv
from .models import (
    CommandRequest,
    CommandResponse,
    CreateCorpusRequest,
    CreateSessionRequest,
    CreateSessionResponse,
    CreateWorkspaceRequest,
    CreateWorkspaceResponse,
    DocumentResponse,
    IngestRequest,
    IngestResponse,
    LogResponse,
    OutputEntry,
    OutputPage,
    SnapshotResponse,
)
from .state import ServerConfig, ServerState, WorkspaceRuntime


def create_app(config: ServerConfig | None = None) -> FastAPI:
    state = ServerState(config or ServerConfig())
    app = FastAPI(title="corpusflow", version="0.1.0")
    app.state.engine = state

    def authorize(authorization: str | None = Header(default=None)) -> Any:
        token = None
        if authorization and authorization.startswith("Bearer "):
            token = authorization[len("Bearer ") :]
        session = state.session_for(token)
        if session is None:
            raise HTTPException(status_code=401, detail="missing or invalid token")
        return session

    def get_runtime(workspace_id: str) -> WorkspaceRuntime:
        try:
            return state.get_workspace(workspace_id)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/v1/sessions", response_model=CreateSessionResponse)
    def create_session(req: CreateSessionRequest):
        session = state.create_session(req.actor_id)
        return CreateSessionResponse(actor_id=session.actor_id, token=session.token)

    @app.post("/v1/corpora")
    def create_corpus(req: CreateCorpusRequest, session=Depends(authorize)):
        try:
            state.create_corpus(req.corpus_id, FieldMap(**req.field_map.model_dump()))
        except EngineError as exc:
            raise HTTPException(status_code=409, detail=exc.to_dict()) from exc
        return {"corpus_id": req.corpus_id}

    @app.post("/v1/corpora/{corpus_id}/ingest", response_model=IngestResponse)
    def ingest(corpus_id: str, req: IngestRequest, session=Depends(authorize)):
        try:
            result = state.ingest_corpus(corpus_id, req.records, req.lenient)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except EngineError as exc:
            raise HTTPException(status_code=409, detail=exc.to_dict()) from exc
        return IngestResponse(
            count=result.count, skipped=result.skipped, first_id=result.first_id, last_id=result.last_id
        )

    @app.post("/v1/workspaces", response_model=CreateWorkspaceResponse)
    def create_workspace(req: CreateWorkspaceRequest, session=Depends(authorize)):
        try:
            runtime = state.create_workspace(req.corpus_id, req.workspace_id, req.seed, session.actor_id)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except EngineError as exc:
            raise HTTPException(status_code=409, detail=exc.to_dict()) from exc
        ws = runtime.workspace
        return CreateWorkspaceResponse(
            workspace_id=ws.workspace_id, corpus_id=ws.ctx.corpus.corpus_id, seed=ws.seed
        )

    @app.get("/v1/workspaces/{workspace_id}/snapshot", response_model=SnapshotResponse)
    def snapshot(workspace_id: str, session=Depends(authorize)):
        runtime = get_runtime(workspace_id)
        with runtime.lock:
            return SnapshotResponse(snapshot=runtime.workspace.snapshot_dict(), seq=len(runtime.workspace.log))

    @app.get("/v1/workspaces/{workspace_id}/log", response_model=LogResponse)
    def read_log(workspace_id: str, from_seq: int = Query(default=1, ge=1), session=Depends(authorize)):
        runtime = get_runtime(workspace_id)
        with runtime.lock:
            events = [e.to_json_dict() for e in runtime.workspace.log.events_from(from_seq)]
        return LogResponse(events=events)

    @app.post("/v1/workspaces/{workspace_id}/commands", response_model=CommandResponse)
    def apply_command(workspace_id: str, req: CommandRequest, session=Depends(authorize)):
        runtime = get_runtime(workspace_id)
        tag_key = (session.token, req.client_tag) if req.client_tag else None
        with runtime.lock:
            if tag_key is not None and tag_key in runtime.client_tags:
                return CommandResponse(**runtime.client_tags[tag_key])  # idempotent retry
            before = len(runtime.workspace.log)
            try:
                response = _dispatch(runtime.workspace, req, session.actor_id)
            except EngineError as exc:
                raise HTTPException(status_code=409, detail=exc.to_dict()) from exc
            new_events = runtime.workspace.log.events[before:]
            for event in new_events:
                runtime.publish(event.to_json_dict())
            pending = runtime.workspace.take_pending_projections()
            if tag_key is not None:
                runtime.client_tags[tag_key] = response
        state.schedule_projections(runtime, pending)
        return CommandResponse(**response)

    @app.get("/v1/workspaces/{workspace_id}/nodes/{node_id}/output", response_model=OutputPage)
    def node_output(
        workspace_id: str,
        node_id: str,
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=100, ge=1, le=10_000),
        session=Depends(authorize),
    ):
        runtime = get_runtime(workspace_id)
        with runtime.lock:
            ws = runtime.workspace
            try:
                result = ws.node_result(node_id)
            except NotFound as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            entries: list[OutputEntry] = []
            total = 0
            stamp = None
            if result.output is not None:
                lists = result.output.lists
                noise_index = len(lists) - 1 if result.output.noise_last else None
                flat: list[OutputEntry] = []
                for li, lst in enumerate(lists):
                    for doc_id, score in lst:
                        flat.append(
                            OutputEntry(
                                list_index=li,
                                doc_id=doc_id,
                                score=score,
                                noise=(li == noise_index),
                            )
                        )
                total = len(flat)
                entries = flat[offset : offset + limit]
                stamp = {"node_id": result.output.stamp[0], "recompute_seq": result.output.stamp[1]}
            return OutputPage(
                node_id=node_id,
                status=result.status,
                stamp=stamp,
                total=total,
                offset=offset,
                limit=limit,
                entries=entries,
                error=result.error,
                blocked_on=result.blocked_on,
                warnings=result.warnings,
            )

    @app.get("/v1/workspaces/{workspace_id}/nodes/{node_id}/coordinates.csv", response_class=PlainTextResponse)
    def node_coordinates(workspace_id: str, node_id: str, session=Depends(authorize)):
        runtime = get_runtime(workspace_id)
        with runtime.lock:
            try:
                result = runtime.workspace.node_result(node_id)
            except NotFound as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            if result.projection is None:
                raise HTTPException(status_code=404, detail="node has no projection coordinates")
            return coordinates_csv(result.projection)

    @app.get("/v1/documents/{doc_id}", response_model=DocumentResponse)
    def get_document(doc_id: str, corpus: str | None = Query(default=None), session=Depends(authorize)):
        try:
            doc = state.find_document(doc_id, corpus)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return DocumentResponse(**doc.to_record())

    @app.websocket("/v1/workspaces/{workspace_id}/stream")
    async def stream(websocket: WebSocket, workspace_id: str, token: str = Query(default=""), from_seq: int = Query(default=1)):
        session = state.session_for(token)
        if session is None:
            await websocket.close(code=4401)
            return
        try:
            runtime = state.get_workspace(workspace_id)
        except NotFound:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        session.subscribed.add(workspace_id)
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()
        with runtime.lock:
            backlog = [e.to_json_dict() for e in runtime.workspace.log.events_from(from_seq)]
            runtime.subscribers.append((queue, loop))
        try:
            for item in backlog:
                await websocket.send_json(item)
            while True:
                item = await queue.get()
                await websocket.send_json(item)
        except WebSocketDisconnect:
            pass
        finally:
            with runtime.lock:
                if (queue, loop) in runtime.subscribers:
                    runtime.subscribers.remove((queue, loop))
            session.subscribed.discard(workspace_id)

    return app


def _dispatch(ws, req: CommandRequest, actor: str) -> dict:
    cmd = req.command
    if cmd == "AddNode":
        node_id = ws.add_node(
            req.node_kind,
            req.config or {},
            position=tuple(req.position or (0.0, 0.0)),
            actor=actor,
            node_id=req.node_id,
        )
        return {"seq": len(ws.log), "command": cmd, "node_id": node_id}
    if cmd == "RemoveNode":
        _require(req.node_id, "node_id")
        ws.remove_node(req.node_id, actor=actor)
        return {"seq": len(ws.log), "command": cmd, "node_id": req.node_id}
    if cmd == "ChangeNodeConfig":
        _require(req.node_id, "node_id")
        ws.change_config(req.node_id, req.config or {}, actor=actor)
        return {"seq": len(ws.log), "command": cmd, "node_id": req.node_id}
    if cmd == "MoveNode":
        _require(req.node_id, "node_id")
        ws.move_node(req.node_id, req.x or 0.0, req.y or 0.0, actor=actor)
        return {"seq": len(ws.log), "command": cmd, "node_id": req.node_id}
    if cmd == "AddEdge":
        _require(req.from_node, "from_node")
        _require(req.to_node, "to_node")
        _require(req.port, "port")
        edge_id = ws.add_edge(req.from_node, req.to_node, req.port, actor=actor, edge_id=req.edge_id)
        return {"seq": len(ws.log), "command": cmd, "edge_id": edge_id}
    if cmd == "RemoveEdge":
        _require(req.edge_id, "edge_id")
        ws.remove_edge(req.edge_id, actor=actor)
        return {"seq": len(ws.log), "command": cmd, "edge_id": req.edge_id}
    if cmd == "GroupAdd":
        _require(req.node_id, "node_id")
        _require(req.doc_id, "doc_id")
        members = ws.group_add(req.node_id, req.doc_id, actor=actor)
        return {"seq": len(ws.log), "command": cmd, "node_id": req.node_id, "members": members}
    if cmd == "GroupRemove":
        _require(req.node_id, "node_id")
        _require(req.doc_id, "doc_id")
        members = ws.group_remove(req.node_id, req.doc_id, actor=actor)
        return {"seq": len(ws.log), "command": cmd, "node_id": req.node_id, "members": members}
    if cmd == "SetSeed":
        ws.set_seed(req.seed or 0, actor=actor)
        return {"seq": len(ws.log), "command": cmd}
    if cmd == "Undo":
        events = ws.undo(actor=actor)
        return {"seq": len(ws.log), "command": cmd, "events": [e.to_json_dict() for e in events]}
    if cmd == "Redo":
        events = ws.redo(actor=actor)
        return {"seq": len(ws.log), "command": cmd, "events": [e.to_json_dict() for e in events]}
    from fastapi import HTTPException as _HTTPException

    raise _HTTPException(status_code=422, detail=f"unknown command {cmd!r}")


def _require(value, name: str) -> None:
    if value is None:
        from fastapi import HTTPException as _HTTPException

        raise _HTTPException(status_code=422, detail=f"command is missing required field {name!r}")
