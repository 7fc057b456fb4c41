"""Headless workflow execution.

A workflow file is the workspace snapshot schema plus an ``outputs`` list
naming the node ids to export. Running one builds the graph through the same
validating command path as a live session, recomputes everything, writes each
named output as canonical JSON (optionally CSV), and writes a manifest that
pins (events, seed, provider, corpus hash) — enough to reproduce the run
byte-identically. Wall time appears in the manifest but is excluded from the
reproducibility contract.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

from .corpus import Corpus
from .embedding import ReferenceProvider, RemoteProvider, VectorStore
from .errors import EngineError, SchemaError
from .graph import EngineContext
from .jsoncanon import canonical_bytes
from .projection import coordinates_csv
from .query import InvertedIndex, build_index
from .workspace import Workspace

SCHEMA_VERSION = 1


def load_workflow(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read workflow file: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("workflow file must hold a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported workflow schema version {version}")
    nodes = data.get("nodes", [])
    edges = data.get("edges", [])
    outputs = data.get("outputs", [])
    if not isinstance(nodes, list) or not isinstance(edges, list) or not isinstance(outputs, list):
        raise SchemaError("nodes, edges, and outputs must be lists")
    node_ids = [n.get("node_id") for n in nodes]
    if len(set(node_ids)) != len(node_ids):
        raise SchemaError("duplicate node_id in workflow")
    known = set(node_ids)
    for out in outputs:
        if out not in known:
            raise SchemaError(f"outputs references unknown node {out!r}")
    for e in edges:
        if e.get("from") not in known or e.get("to") not in known:
            raise SchemaError(f"edge references unknown node: {e}")
    return data


def open_corpus_context(
    corpus_dir: str | Path,
    provider_url: str | None = None,
    provider_dim: int = 256,
    seed: int = 0,
) -> EngineContext:
    """Load a corpus directory, computing vectors/index if not yet on disk.

    Headless runs use the deterministic reference provider unless a provider
    URL is explicitly passed — reproducibility by default.
    """
    corpus_dir = Path(corpus_dir)
    corpus = Corpus.load(corpus_dir)
    provider = (
        RemoteProvider(provider_url, dim=provider_dim) if provider_url else ReferenceProvider(dim=provider_dim)
    )
    vec_path = corpus_dir / "vectors.telv"
    if vec_path.exists():
        vectors = VectorStore.load(vec_path, corpus, provider_id=provider.provider_id)
    else:
        vectors = provider.embed_corpus(corpus)
    idx_path = corpus_dir / "index.bin"
    index = InvertedIndex.load(idx_path) if idx_path.exists() else build_index(corpus)
    return EngineContext(corpus=corpus, vectors=vectors, index=index, provider=provider, seed=seed)


def corpus_content_hash(corpus_dir: str | Path) -> str:
    docs = Path(corpus_dir) / "docs.jsonl"
    return "sha256:" + hashlib.sha256(docs.read_bytes()).hexdigest()


def run_workflow(
    workflow_path: str | Path,
    corpus_dir: str | Path,
    out_dir: str | Path,
    seed: int | None = None,
    provider_url: str | None = None,
    write_csv: bool = False,
    force: bool = False,
    actor: str = "headless",
) -> dict:
    """Execute a workflow and write outputs + manifest.json under out_dir."""
    data = load_workflow(workflow_path)
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise SchemaError(f"output directory {out_dir} is not empty (use force to overwrite)")
    out_dir.mkdir(parents=True, exist_ok=True)

    effective_seed = seed if seed is not None else int(data.get("seed", 0))
    ctx = open_corpus_context(corpus_dir, provider_url=provider_url, seed=effective_seed)
    workspace_id = data.get("workspace_id", Path(workflow_path).stem)
    ws = Workspace.create(workspace_id, ctx, seed=effective_seed, actor=actor)

    try:
        for n in data.get("nodes", []):
            ws.add_node(
                n["kind"],
                n.get("config", {}),
                position=tuple(n.get("position", (0.0, 0.0))),
                actor=actor,
                node_id=n["node_id"],
            )
        for e in data.get("edges", []):
            ws.add_edge(e["from"], e["to"], e["port"], actor=actor)
    except EngineError as exc:
        raise SchemaError(f"workflow does not build: {exc}") from exc
    except KeyError as exc:
        raise SchemaError(f"workflow entry is missing field {exc}") from exc
    ws.recompute()

    outputs: dict[str, str] = {}
    for node_id in data.get("outputs", []):
        result = ws.node_result(node_id)
        if result.status != "ok":
            raise EngineError(
                f"output node {node_id} is not computable: "
                f"{(result.error or {}).get('error', result.status)} "
                f"({(result.error or {}).get('message', '')})"
            )
        json_name = f"{node_id}.json"
        (out_dir / json_name).write_bytes(canonical_bytes(result.output.to_json_dict()))
        outputs[node_id] = json_name
        if write_csv:
            csv_name = f"{node_id}.csv"
            lines = ["list_index,doc_id,score"]
            for li, lst in enumerate(result.output.lists):
                for doc_id, score in lst:
                    lines.append(f"{li},{doc_id}," + ("" if score is None else repr(float(score))))
            (out_dir / csv_name).write_text("\n".join(lines) + "\n", encoding="utf-8")
            if result.projection is not None:
                (out_dir / f"{node_id}.coords.csv").write_text(
                    coordinates_csv(result.projection), encoding="utf-8"
                )

    manifest = {
        "workspace_id": ws.workspace_id,
        "corpus_id": ctx.corpus.corpus_id,
        "corpus_hash": corpus_content_hash(corpus_dir),
        "seed": effective_seed,
        "provider_id": ctx.provider.provider_id,
        "events": [
            {"seq": e.seq, "actor": e.actor, "kind": e.kind, "payload": e.payload}
            for e in ws.log.events
        ],
        "outputs": outputs,
        "wall_time": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out_dir / "manifest.json").write_bytes(canonical_bytes(manifest))
    return manifest
