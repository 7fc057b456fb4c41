"""Workspace command layer: validated mutations, event logging, recomputation.

All mutations are serialized through one writer (the caller holds that
guarantee; the service wraps commands in a per-workspace lock). Each command
validates against the current graph, appends its event(s) durably, applies
them, and recomputes dirty nodes — recompute runs after every single event so
a replayed log reproduces live outputs byte for byte, stamps included.
"""

from __future__ import annotations

from typing import Iterable

from .errors import AlreadyMember, InvalidConfig, NotFound
from .graph import GROUP, PROJECTION, EngineContext, GraphState, NodeResult, normalize_config
from .jsoncanon import canonical_bytes
from .provenance import ActionEvent, MemoryEventLog, UndoManager, invert_event


class Workspace:
    def __init__(
        self,
        workspace_id: str,
        ctx: EngineContext,
        log=None,
        seed: int = 0,
        defer_projections: bool = False,
    ):
        self.workspace_id = workspace_id
        self.ctx = ctx
        self.log = log if log is not None else MemoryEventLog()
        self.graph = GraphState()
        self.seed = seed
        self.undo_manager = UndoManager()
        self.defer_projections = defer_projections
        self.pending_projections: dict[str, int] = {}  # node_id -> triggering seq

    # --- construction -------------------------------------------------------------

    @classmethod
    def create(cls, workspace_id: str, ctx: EngineContext, log=None, seed: int = 0, actor: str = "local", **kw) -> "Workspace":
        ws = cls(workspace_id, ctx, log=log, seed=seed, **kw)
        ws._commit(actor, [("WorkspaceCreated", {"workspace_id": workspace_id, "corpus_id": ctx.corpus.corpus_id, "seed": seed})])
        return ws

    @classmethod
    def replay(cls, events: Iterable[ActionEvent], ctx: EngineContext, log=None, **kw) -> "Workspace":
        """Fold a log from the empty state, recomputing after each event, so the
        result matches the live session that produced the log."""
        ws = cls("", ctx, log=log, **kw)
        for event in events:
            ws._fold(event)
            ws._recompute(event.seq)
        return ws

    # --- internals ----------------------------------------------------------------

    def _fold(self, event: ActionEvent) -> None:
        if event.kind == "WorkspaceCreated":
            self.workspace_id = event.payload["workspace_id"]
            self.seed = event.payload.get("seed", 0)
        elif event.kind == "SeedSet":
            self.seed = event.payload["seed"]
            for node in self.graph.nodes.values():
                if node.kind == PROJECTION:  # derived per-node seeds move with the workspace seed
                    self.graph.mark_dirty(node.node_id)
        else:
            self.graph.apply_event(event.kind, event.payload)

    def _recompute(self, seq: int) -> set[str]:
        if self.defer_projections:
            deferred = [
                nid
                for nid in self.graph.dirty
                if self.graph.nodes.get(nid) is not None and self.graph.nodes[nid].kind == PROJECTION
            ]
            for nid in deferred:
                self.pending_projections[nid] = seq
                self.graph.results[nid] = NodeResult(status="pending")
                self.graph.dirty.discard(nid)
            # stale pending markers for nodes no longer present
            for nid in list(self.pending_projections):
                if nid not in self.graph.nodes:
                    del self.pending_projections[nid]
        return self.graph.recompute(self.ctx, seq, self.seed)

    def _commit(self, actor: str, items: list[tuple[str, dict]], undoable: bool = True) -> list[ActionEvent]:
        events = []
        for kind, payload in items:
            event = self.log.append(actor, kind, payload)
            self._fold(event)
            self._recompute(event.seq)
            events.append(event)
        if undoable:
            self.undo_manager.record_command(events)
        return events

    # --- mutations ------------------------------------------------------------------

    def add_node(self, kind: str, config: dict | None = None, position: tuple[float, float] = (0.0, 0.0), actor: str = "local", node_id: str | None = None) -> str:
        stored = normalize_config(kind, config or {}, self.ctx.corpus)
        if node_id is None:
            node_id = self.graph.fresh_node_id()
        elif node_id in self.graph.nodes:
            raise InvalidConfig(f"node id {node_id!r} already in use")
        payload = {
            "node_id": node_id,
            "kind": kind,
            "config": stored,
            "position": [float(position[0]), float(position[1])],
        }
        self._commit(actor, [("NodeAdded", payload)])
        return node_id

    def remove_node(self, node_id: str, actor: str = "local") -> None:
        node = self.graph.node(node_id)
        edges = [
            {"edge_id": e.edge_id, "from": e.from_node, "to": e.to_node, "port": e.port}
            for e in self.graph.incident_edges(node_id)
        ]
        payload = {
            "node_id": node_id,
            "kind": node.kind,
            "config": dict(node.config),
            "position": [node.position[0], node.position[1]],
            "edges": edges,
        }
        self._commit(actor, [("NodeRemoved", payload)])

    def change_config(self, node_id: str, config: dict, actor: str = "local") -> None:
        node = self.graph.node(node_id)
        stored = normalize_config(node.kind, config, self.ctx.corpus)
        payload = {"node_id": node_id, "config": stored, "prev_config": dict(node.config)}
        self._commit(actor, [("NodeConfigChanged", payload)])

    def move_node(self, node_id: str, x: float, y: float, actor: str = "local") -> None:
        node = self.graph.node(node_id)
        payload = {
            "node_id": node_id,
            "position": [float(x), float(y)],
            "prev_position": [node.position[0], node.position[1]],
        }
        self._commit(actor, [("NodeMoved", payload)])

    def add_edge(self, from_node: str, to_node: str, port: str, actor: str = "local", edge_id: str | None = None) -> str:
        self.graph.check_add_edge(from_node, to_node, port)
        if edge_id is None:
            edge_id = self.graph.fresh_edge_id()
        elif edge_id in self.graph.edges:
            raise InvalidConfig(f"edge id {edge_id!r} already in use")
        payload = {"edge_id": edge_id, "from": from_node, "to": to_node, "port": port}
        self._commit(actor, [("EdgeAdded", payload)])
        return edge_id

    def remove_edge(self, edge_id: str, actor: str = "local") -> None:
        edge = self.graph.edges.get(edge_id)
        if edge is None:
            raise NotFound(f"no such edge: {edge_id}")
        payload = {"edge_id": edge.edge_id, "from": edge.from_node, "to": edge.to_node, "port": edge.port}
        self._commit(actor, [("EdgeRemoved", payload)])

    def group_add(self, group_id: str, doc_id: str, actor: str = "local") -> list[str]:
        node = self.graph.node(group_id)
        if node.kind != GROUP:
            raise InvalidConfig(f"{group_id} is not a Group node")
        self.ctx.corpus.get_document(doc_id)
        if doc_id in node.config.get("members", []):
            raise AlreadyMember(f"{doc_id} is already a member of {group_id}")
        self._commit(actor, [("GroupMemberAdded", {"node_id": group_id, "doc_id": doc_id, "index": None})])
        return list(self.graph.node(group_id).config["members"])

    def group_remove(self, group_id: str, doc_id: str, actor: str = "local") -> list[str]:
        node = self.graph.node(group_id)
        if node.kind != GROUP:
            raise InvalidConfig(f"{group_id} is not a Group node")
        members = node.config.get("members", [])
        if doc_id not in members:
            raise NotFound(f"{doc_id} is not a member of {group_id}")
        index = members.index(doc_id)
        self._commit(actor, [("GroupMemberRemoved", {"node_id": group_id, "doc_id": doc_id, "index": index})])
        return list(self.graph.node(group_id).config["members"])

    def set_seed(self, seed: int, actor: str = "local") -> None:
        self._commit(actor, [("SeedSet", {"seed": int(seed), "prev_seed": self.seed})])

    # --- undo / redo ------------------------------------------------------------------

    def undo(self, actor: str = "local") -> list[ActionEvent]:
        unit = self.undo_manager.pop_undo()
        items: list[tuple[str, dict]] = []
        for event in reversed(unit.events):
            items.extend(invert_event(event, self.graph))
        return self._commit(actor, items, undoable=False)

    def redo(self, actor: str = "local") -> list[ActionEvent]:
        unit = self.undo_manager.pop_redo()
        items = [(e.kind, dict(e.payload)) for e in unit.events]
        events = self._commit(actor, items, undoable=False)
        self.undo_manager.push_redone(events)
        return events

    # --- reads -----------------------------------------------------------------------

    def recompute(self) -> set[str]:
        """Recompute anything still dirty (no-op when clean)."""
        seq = len(self.log)
        return self._recompute(seq)

    def node_result(self, node_id: str) -> NodeResult:
        self.graph.node(node_id)
        return self.graph.results[node_id]

    def snapshot_dict(self) -> dict:
        return self.graph.snapshot_dict(self.workspace_id, self.seed)

    def snapshot_bytes(self) -> bytes:
        return canonical_bytes(self.snapshot_dict())

    def outputs_bytes(self) -> bytes:
        """Canonical serialization of every node's result, for determinism checks."""
        payload = {}
        for node_id in sorted(self.graph.nodes):
            r = self.graph.results.get(node_id)
            if r is None:
                continue
            payload[node_id] = {
                "status": r.status,
                "output": r.output.to_json_dict() if r.output is not None else None,
                "error": r.error,
                "blocked_on": r.blocked_on,
            }
        return canonical_bytes(payload)

    # --- deferred projection support ----------------------------------------------------

    def take_pending_projections(self) -> list[tuple[str, int]]:
        out = sorted(self.pending_projections.items())
        self.pending_projections.clear()
        return out

    def commit_projection_result(self, node_id: str, seq: int, result: NodeResult) -> set[str]:
        """Install a background projection result and wake its downstream."""
        if node_id not in self.graph.nodes:
            return set()
        if result.output is not None:
            result.output.stamp = (node_id, seq)
        self.graph.results[node_id] = result
        refreshed = {node_id}
        for d in self.graph.descendants(node_id):
            self.graph.mark_dirty(d)
        refreshed |= self.graph.recompute(self.ctx, seq, self.seed)
        return refreshed
