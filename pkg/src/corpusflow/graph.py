"""The workspace dataflow graph.

Typed nodes and edges with source/control ports, acyclicity enforcement,
dirty-marking, and deterministic topological recomputation. Node compute is a
pure function of (upstream outputs, config, corpus, vector store, seed), so
identical event logs fold to byte-identical outputs.

Positions are UI-only: moving a node never invalidates an output cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .corpus import Corpus, fnv1a_64
from .embedding import VectorStore
from .errors import (
    ArityError,
    DuplicateEdge,
    EngineError,
    IllegalPort,
    InvalidConfig,
    NotFound,
    ParseError,
    PureNegation,
    WouldCycle,
)
from .operators import RankConfig, rank, set_op
from .projection import ProjectionConfig, ProjectionResult, project
from .query import InvertedIndex, execute_query, parse_query

DOCUMENT = "Document"
SEARCH = "Search"
GROUP = "Group"
NOTE = "Note"
RANK = "Rank"
PROJECTION = "Projection"
UNION = "Union"
INTERSECTION = "Intersection"
DIFFERENCE = "Difference"

NODE_KINDS = (DOCUMENT, SEARCH, GROUP, NOTE, RANK, PROJECTION, UNION, INTERSECTION, DIFFERENCE)

SET_OPS = {UNION, INTERSECTION, DIFFERENCE}
DOC_PRODUCERS = {DOCUMENT, SEARCH, GROUP, RANK, PROJECTION, UNION, INTERSECTION, DIFFERENCE}
SOURCE_TARGETS = {RANK, PROJECTION, UNION, INTERSECTION, DIFFERENCE}
CONTROL_ACCEPTS = {RANK: {DOCUMENT, GROUP, NOTE}, PROJECTION: {GROUP}}

SOURCE = "source"
CONTROL = "control"


@dataclass
class Node:
    node_id: str
    kind: str
    config: dict
    position: tuple[float, float] = (0.0, 0.0)


@dataclass
class Edge:
    edge_id: str
    from_node: str
    to_node: str
    port: str


@dataclass
class DocListsOutput:
    """The unified node output: an ordered list of ordered scored doc lists."""

    lists: list[list[tuple[str, float | None]]]
    noise_last: bool = False
    stamp: tuple[str, int] = ("", 0)

    def flatten(self) -> list[str]:
        seen: dict[str, None] = {}
        for lst in self.lists:
            for doc_id, _ in lst:
                seen.setdefault(doc_id, None)
        return list(seen)

    def to_json_dict(self, include_stamp: bool = True) -> dict:
        entries = []
        for lst in self.lists:
            entries.append(
                [
                    ({"doc_id": d} if s is None else {"doc_id": d, "score": float(s)})
                    for d, s in lst
                ]
            )
        out: dict[str, Any] = {"lists": entries}
        if self.noise_last:
            out["noise"] = True
        if include_stamp:
            out["stamp"] = {"node_id": self.stamp[0], "recompute_seq": self.stamp[1]}
        return out


@dataclass
class NodeResult:
    status: str  # ok | error | blocked | pending
    output: DocListsOutput | None = None
    error: dict | None = None
    blocked_on: str | None = None
    warnings: list[str] = field(default_factory=list)
    note_vec: np.ndarray | None = None
    projection: ProjectionResult | None = None


@dataclass
class EngineContext:
    corpus: Corpus
    vectors: VectorStore
    index: InvertedIndex
    provider: Any
    seed: int = 0


def derive_node_seed(workspace_seed: int, node_id: str) -> int:
    """Per-node seed when a Projection config leaves seed unset."""
    return (workspace_seed ^ fnv1a_64(node_id.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF


# --- config validation / normalization -------------------------------------------


def normalize_config(kind: str, config: dict, corpus: Corpus) -> dict:
    """Validate a node config and return its canonical stored form."""
    if kind not in NODE_KINDS:
        raise InvalidConfig(f"unknown node kind: {kind}")
    config = dict(config or {})
    if kind == DOCUMENT:
        doc_id = config.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise InvalidConfig("Document node needs a doc_id")
        if doc_id not in corpus:
            raise InvalidConfig(f"Document node references unknown doc_id {doc_id!r}")
        return {"doc_id": doc_id}
    if kind == SEARCH:
        query = config.get("query")
        if not isinstance(query, str) or not query.strip():
            raise InvalidConfig("Search node needs a query string")
        try:
            parse_query(query)
        except (ParseError, PureNegation) as exc:
            raise InvalidConfig(f"query does not parse: {exc}") from exc
        return {"query": query}
    if kind == GROUP:
        label = config.get("label", "")
        members = config.get("members", [])
        if not isinstance(label, str):
            raise InvalidConfig("Group label must be a string")
        if not isinstance(members, list) or any(not isinstance(m, str) for m in members):
            raise InvalidConfig("Group members must be a list of doc ids")
        if len(set(members)) != len(members):
            raise InvalidConfig("Group members must be unique")
        for m in members:
            if m not in corpus:
                raise InvalidConfig(f"Group member {m!r} not in corpus")
        return {"label": label, "members": list(members)}
    if kind == NOTE:
        text = config.get("text", "")
        if not isinstance(text, str):
            raise InvalidConfig("Note text must be a string")
        return {"text": text}
    if kind == RANK:
        cfg = RankConfig(
            max_results=int(config.get("max_results", 1000)),
            similarity_floor=float(config.get("similarity_floor", -1.0)),
        )
        cfg.validate()
        return {"max_results": cfg.max_results, "similarity_floor": cfg.similarity_floor}
    if kind == PROJECTION:
        defaults = ProjectionConfig()
        out = {}
        for key in (
            "n_neighbors", "target_dims", "epochs", "negative_sample_rate",
            "min_cluster_size",
        ):
            out[key] = int(config.get(key, getattr(defaults, key)))
        out["min_samples"] = (
            int(config["min_samples"]) if config.get("min_samples") is not None else None
        )
        for key in ("min_dist", "spread", "d_same", "d_diff"):
            out[key] = float(config.get(key, getattr(defaults, key)))
        out["seed"] = int(config["seed"]) if config.get("seed") is not None else None
        probe = ProjectionConfig(**{**out, "seed": out["seed"] or 0})
        probe.validate()
        return out
    if kind == DIFFERENCE:
        left = config.get("left")
        if left is not None and not isinstance(left, str):
            raise InvalidConfig("Difference left input must be a node id")
        return {"left": left}
    # Union / Intersection carry no config
    return {}


def check_edge_legality(from_kind: str, to_kind: str, port: str) -> None:
    if port == SOURCE:
        if from_kind not in DOC_PRODUCERS:
            raise IllegalPort(f"{from_kind} produces no document list output")
        if to_kind not in SOURCE_TARGETS:
            raise IllegalPort(f"{to_kind} accepts no source input")
        return
    if port == CONTROL:
        accepted = CONTROL_ACCEPTS.get(to_kind)
        if accepted is None:
            raise IllegalPort(f"{to_kind} accepts no control input")
        if from_kind not in accepted:
            raise IllegalPort(f"{from_kind} cannot control a {to_kind}")
        return
    raise IllegalPort(f"unknown port {port!r}")


def _numeric_suffix(ident: str) -> tuple[int, str]:
    digits = ""
    for ch in reversed(ident):
        if ch.isdigit():
            digits = ch + digits
        else:
            break
    return (int(digits) if digits else -1, ident)


class GraphState:
    """Nodes + typed edges + cached outputs; structural mutations are applied
    via pre-validated events so live state and replayed state coincide."""

    def __init__(self) -> None:
        self.nodes: dict[str, Node] = {}
        self.edges: dict[str, Edge] = {}
        self.results: dict[str, NodeResult] = {}
        self.dirty: set[str] = set()
        self._next_node = 1
        self._next_edge = 1

    # --- id allocation ---

    def fresh_node_id(self) -> str:
        while f"n{self._next_node}" in self.nodes:
            self._next_node += 1
        return f"n{self._next_node}"

    def fresh_edge_id(self) -> str:
        while f"e{self._next_edge}" in self.edges:
            self._next_edge += 1
        return f"e{self._next_edge}"

    # --- lookups ---

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFound(f"no such node: {node_id}") from None

    def in_edges(self, node_id: str) -> list[Edge]:
        found = [e for e in self.edges.values() if e.to_node == node_id]
        found.sort(key=lambda e: _numeric_suffix(e.edge_id))
        return found

    def out_edges(self, node_id: str) -> list[Edge]:
        found = [e for e in self.edges.values() if e.from_node == node_id]
        found.sort(key=lambda e: _numeric_suffix(e.edge_id))
        return found

    def incident_edges(self, node_id: str) -> list[Edge]:
        found = [e for e in self.edges.values() if node_id in (e.from_node, e.to_node)]
        found.sort(key=lambda e: _numeric_suffix(e.edge_id))
        return found

    def descendants(self, node_id: str) -> set[str]:
        out: set[str] = set()
        stack = [node_id]
        while stack:
            cur = stack.pop()
            for e in self.out_edges(cur):
                if e.to_node not in out:
                    out.add(e.to_node)
                    stack.append(e.to_node)
        return out

    def mark_dirty(self, node_id: str) -> None:
        if node_id in self.nodes:
            self.dirty.add(node_id)
            self.dirty.update(self.descendants(node_id))

    # --- validation for mutations (raise, never mutate) ---

    def check_add_edge(self, from_node: str, to_node: str, port: str) -> None:
        src = self.node(from_node)
        dst = self.node(to_node)
        check_edge_legality(src.kind, dst.kind, port)
        for e in self.edges.values():
            if (e.from_node, e.to_node, e.port) == (from_node, to_node, port):
                raise DuplicateEdge(f"edge {from_node}->{to_node} ({port}) already exists")
        if from_node == to_node or from_node in self.descendants(to_node):
            raise WouldCycle(f"edge {from_node}->{to_node} would create a cycle")

    # --- event application (pre-validated) ---

    def apply_event(self, kind: str, payload: dict) -> None:
        if kind == "NodeAdded":
            node = Node(
                node_id=payload["node_id"],
                kind=payload["kind"],
                config=dict(payload["config"]),
                position=tuple(payload.get("position", (0.0, 0.0))),
            )
            self.nodes[node.node_id] = node
            self.results[node.node_id] = NodeResult(status="pending")
            self.mark_dirty(node.node_id)
        elif kind == "NodeRemoved":
            node_id = payload["node_id"]
            downstream = self.descendants(node_id)
            for e in self.incident_edges(node_id):
                del self.edges[e.edge_id]
            self.nodes.pop(node_id, None)
            self.results.pop(node_id, None)
            self.dirty.discard(node_id)
            for d in downstream:
                self.mark_dirty(d)
        elif kind == "NodeConfigChanged":
            node = self.node(payload["node_id"])
            node.config = dict(payload["config"])
            self.mark_dirty(node.node_id)
        elif kind == "NodeMoved":
            node = self.node(payload["node_id"])
            node.position = tuple(payload["position"])
            # UI-only: no dirty marking
        elif kind == "EdgeAdded":
            edge = Edge(
                edge_id=payload["edge_id"],
                from_node=payload["from"],
                to_node=payload["to"],
                port=payload["port"],
            )
            self.edges[edge.edge_id] = edge
            self.mark_dirty(edge.to_node)
        elif kind == "EdgeRemoved":
            edge = self.edges.pop(payload["edge_id"], None)
            if edge is not None:
                self.mark_dirty(edge.to_node)
        elif kind == "GroupMemberAdded":
            node = self.node(payload["node_id"])
            members = list(node.config.get("members", []))
            index = payload.get("index")
            if index is None:
                members.append(payload["doc_id"])
            else:
                members.insert(index, payload["doc_id"])
            node.config = {**node.config, "members": members}
            self.mark_dirty(node.node_id)
        elif kind == "GroupMemberRemoved":
            node = self.node(payload["node_id"])
            members = list(node.config.get("members", []))
            members.remove(payload["doc_id"])
            node.config = {**node.config, "members": members}
            self.mark_dirty(node.node_id)
        elif kind in ("WorkspaceCreated", "SeedSet"):
            pass  # owned by the workspace wrapper
        else:
            raise NotFound(f"unknown event kind: {kind}")

    # --- recomputation ---

    def topological_order(self) -> list[str]:
        indegree = {nid: 0 for nid in self.nodes}
        for e in self.edges.values():
            indegree[e.to_node] += 1
        ready = sorted(
            (nid for nid, deg in indegree.items() if deg == 0), key=_numeric_suffix
        )
        order: list[str] = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            newly = []
            for e in self.out_edges(nid):
                indegree[e.to_node] -= 1
                if indegree[e.to_node] == 0:
                    newly.append(e.to_node)
            if newly:
                ready = sorted(ready + newly, key=_numeric_suffix)
        if len(order) != len(self.nodes):
            raise WouldCycle("graph contains a cycle")  # unreachable if invariants hold
        return order

    def recompute(self, ctx: EngineContext, recompute_seq: int, workspace_seed: int) -> set[str]:
        """Recompute dirty nodes in topological order; error poisons downstream."""
        refreshed: set[str] = set()
        for node_id in self.topological_order():
            if node_id not in self.dirty:
                continue
            node = self.nodes[node_id]
            result = self._compute_node(node, ctx, workspace_seed)
            if result.output is not None:
                result.output.stamp = (node_id, recompute_seq)
            self.results[node_id] = result
            self.dirty.discard(node_id)
            refreshed.add(node_id)
        return refreshed

    def _upstream_block(self, node: Node) -> NodeResult | None:
        for e in self.in_edges(node.node_id):
            up = self.results.get(e.from_node)
            if up is None or up.status in ("error", "blocked", "pending"):
                return NodeResult(
                    status="blocked",
                    error={"error": "UpstreamError", "message": f"upstream node {e.from_node} is not ready"},
                    blocked_on=e.from_node,
                )
        return None

    def _compute_node(self, node: Node, ctx: EngineContext, workspace_seed: int) -> NodeResult:
        blocked = self._upstream_block(node)
        if blocked is not None:
            return blocked
        try:
            return self._compute_node_inner(node, ctx, workspace_seed)
        except EngineError as exc:
            return NodeResult(status="error", error=exc.to_dict())

    def _source_inputs(self, node: Node) -> list[list[str]]:
        inputs = []
        for e in self.in_edges(node.node_id):
            if e.port != SOURCE:
                continue
            up = self.results[e.from_node]
            assert up.output is not None
            inputs.append(up.output.flatten())
        return inputs

    def _flatten_first_seen(self, inputs: list[list[str]]) -> list[str]:
        seen: dict[str, None] = {}
        for lst in inputs:
            for d in lst:
                seen.setdefault(d, None)
        return list(seen)

    def _control_vectors(self, node: Node, ctx: EngineContext) -> list[np.ndarray]:
        controls: list[np.ndarray] = []
        for e in self.in_edges(node.node_id):
            if e.port != CONTROL:
                continue
            src = self.nodes[e.from_node]
            if src.kind == DOCUMENT:
                controls.append(ctx.vectors.get(src.config["doc_id"]))
            elif src.kind == GROUP:
                controls.extend(ctx.vectors.get(m) for m in src.config.get("members", []))
            elif src.kind == NOTE:
                up = self.results[e.from_node]
                assert up.note_vec is not None
                controls.append(up.note_vec)
        return controls

    def _compute_node_inner(self, node: Node, ctx: EngineContext, workspace_seed: int) -> NodeResult:
        kind = node.kind
        if kind == DOCUMENT:
            doc_id = node.config["doc_id"]
            ctx.corpus.get_document(doc_id)
            return NodeResult(status="ok", output=DocListsOutput(lists=[[(doc_id, None)]]))
        if kind == SEARCH:
            ast = parse_query(node.config["query"])
            ids = execute_query(ast, ctx.index)
            return NodeResult(status="ok", output=DocListsOutput(lists=[[(d, None) for d in ids]]))
        if kind == GROUP:
            members = node.config.get("members", [])
            for m in members:
                ctx.corpus.get_document(m)
            return NodeResult(status="ok", output=DocListsOutput(lists=[[(m, None) for m in members]]))
        if kind == NOTE:
            vec = ctx.provider.embed(node.config.get("text", ""))
            return NodeResult(status="ok", output=DocListsOutput(lists=[]), note_vec=vec)
        if kind == RANK:
            controls = self._control_vectors(node, ctx)
            source_lists = self._source_inputs(node)
            candidates = self._flatten_first_seen(source_lists) if source_lists else None
            cfg = RankConfig(
                max_results=node.config.get("max_results", 1000),
                similarity_floor=node.config.get("similarity_floor", -1.0),
            )
            scored = rank(controls, candidates, cfg, ctx.corpus, ctx.vectors)
            return NodeResult(status="ok", output=DocListsOutput(lists=[scored]))
        if kind in (UNION, INTERSECTION):
            inputs = self._source_inputs(node)
            ids = set_op(kind.lower(), inputs)
            return NodeResult(status="ok", output=DocListsOutput(lists=[[(d, None) for d in ids]]))
        if kind == DIFFERENCE:
            source_edges = [e for e in self.in_edges(node.node_id) if e.port == SOURCE]
            inputs = self._source_inputs(node)
            if len(inputs) < 2:
                raise ArityError("difference needs a designated left input and at least one right input")
            left = node.config.get("left")
            if left is None:
                raise InvalidConfig("Difference node has no designated left input")
            froms = [e.from_node for e in source_edges]
            if left not in froms:
                raise InvalidConfig(f"designated left input {left!r} is not a connected source")
            ids = set_op("difference", inputs, left_index=froms.index(left))
            return NodeResult(status="ok", output=DocListsOutput(lists=[[(d, None) for d in ids]]))
        if kind == PROJECTION:
            source_lists = self._source_inputs(node)
            if not source_lists:
                raise InvalidConfig("Projection needs at least one source input")
            source_ids = self._flatten_first_seen(source_lists)
            groups = []
            for e in self.in_edges(node.node_id):
                if e.port == CONTROL:
                    groups.append(list(self.nodes[e.from_node].config.get("members", [])))
            cfg_dict = dict(node.config)
            seed = cfg_dict.pop("seed", None)
            if seed is None:
                seed = derive_node_seed(workspace_seed, node.node_id)
            cfg = ProjectionConfig(**{**cfg_dict, "seed": seed})
            result = project(
                source_ids, groups, cfg,
                vector_lookup=ctx.vectors.get,
                ingest_seq_of=ctx.corpus.ingest_seq_of,
            )
            lists = [[(d, None) for d in members] for members in result.clusters]
            lists.append([(d, None) for d in result.noise])
            return NodeResult(
                status="ok",
                output=DocListsOutput(lists=lists, noise_last=True),
                warnings=list(result.warnings),
                projection=result,
            )
        raise InvalidConfig(f"unknown node kind: {kind}")

    # --- snapshot ---

    def snapshot_dict(self, workspace_id: str, seed: int) -> dict:
        nodes = [
            {
                "node_id": n.node_id,
                "kind": n.kind,
                "config": n.config,
                "position": [float(n.position[0]), float(n.position[1])],
            }
            for n in sorted(self.nodes.values(), key=lambda n: _numeric_suffix(n.node_id))
        ]
        edges = [
            {"from": e.from_node, "to": e.to_node, "port": e.port}
            for e in sorted(
                self.edges.values(), key=lambda e: (e.from_node, e.to_node, e.port)
            )
        ]
        return {"workspace_id": workspace_id, "seed": seed, "nodes": nodes, "edges": edges}
