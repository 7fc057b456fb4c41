"""Server-side state: sessions, loaded corpora, per-workspace runtimes.

Concurrency model: many connections, one mutation-applying writer per
workspace (a lock serializes commands), lock-free reads of committed results,
and projection jobs on a bounded background pool that commit only when still
current (a newer request supersedes and cancels the old one).
"""

from __future__ import annotations

import json
import os
import secrets
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..corpus import Corpus, FieldMap
from ..embedding import ReferenceProvider, RemoteProvider, VectorStore
from ..errors import Cancelled, EngineError, NotFound
from ..graph import EngineContext, NodeResult
from ..projection import ProjectionConfig, project
from ..provenance import FileEventLog
from ..query import InvertedIndex, build_index
from ..workspace import Workspace


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8488
    data_dir: str = "./data"
    provider_url: str | None = None
    provider_dim: int = 256
    seed: int = 0
    fsync: bool = True
    defer_projections: bool = True
    projection_workers: int = 2

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ServerConfig":
        """Read the single JSON config file, then apply environment overrides."""
        cfg = cls()
        if path is not None:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            for key, value in data.items():
                if hasattr(cfg, key):
                    setattr(cfg, key, value)
        if os.environ.get("TELE_PORT"):
            cfg.port = int(os.environ["TELE_PORT"])
        if os.environ.get("TELE_DATA_DIR"):
            cfg.data_dir = os.environ["TELE_DATA_DIR"]
        if os.environ.get("TELE_PROVIDER_URL"):
            cfg.provider_url = os.environ["TELE_PROVIDER_URL"]
        return cfg


@dataclass
class Session:
    actor_id: str
    token: str
    subscribed: set[str] = field(default_factory=set)


@dataclass
class LoadedCorpus:
    corpus: Corpus
    vectors: VectorStore | None = None
    index: InvertedIndex | None = None


class WorkspaceRuntime:
    def __init__(self, workspace: Workspace):
        self.workspace = workspace
        self.lock = threading.RLock()
        self.subscribers: list[tuple[Any, Any]] = []  # (asyncio queue, loop)
        self.client_tags: dict[tuple[str, str], dict] = {}
        self.proj_generation: dict[str, int] = {}

    def publish(self, payload: dict) -> None:
        for queue, loop in list(self.subscribers):
            try:
                loop.call_soon_threadsafe(queue.put_nowait, payload)
            except RuntimeError:
                pass  # loop already closed; subscriber cleanup happens on disconnect


class ServerState:
    def __init__(self, config: ServerConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.sessions: dict[str, Session] = {}
        self.corpora: dict[str, LoadedCorpus] = {}
        self.workspaces: dict[str, WorkspaceRuntime] = {}
        self._registry_lock = threading.RLock()  # create_workspace re-enters via get_corpus
        self.executor = ThreadPoolExecutor(max_workers=config.projection_workers)
        if config.provider_url:
            self.provider = RemoteProvider(config.provider_url, dim=config.provider_dim)
        else:
            self.provider = ReferenceProvider(dim=config.provider_dim)

    # --- sessions ---------------------------------------------------------------

    def create_session(self, actor_id: str) -> Session:
        token = secrets.token_urlsafe(32)  # 256 bits of entropy
        session = Session(actor_id=actor_id, token=token)
        self.sessions[token] = session
        return session

    def session_for(self, token: str | None) -> Session | None:
        if not token:
            return None
        return self.sessions.get(token)

    # --- corpora ----------------------------------------------------------------

    def corpus_dir(self, corpus_id: str) -> Path:
        return self.data_dir / "corpora" / corpus_id

    def create_corpus(self, corpus_id: str, field_map: FieldMap) -> LoadedCorpus:
        with self._registry_lock:
            if corpus_id in self.corpora or self.corpus_dir(corpus_id).exists():
                raise EngineError(f"corpus {corpus_id!r} already exists")
            loaded = LoadedCorpus(corpus=Corpus(corpus_id, field_map))
            self.corpora[corpus_id] = loaded
            return loaded

    def get_corpus(self, corpus_id: str) -> LoadedCorpus:
        with self._registry_lock:
            loaded = self.corpora.get(corpus_id)
            if loaded is not None:
                return loaded
            directory = self.corpus_dir(corpus_id)
            if not directory.exists():
                raise NotFound(f"no such corpus: {corpus_id}")
            corpus = Corpus.load(directory)
            loaded = LoadedCorpus(corpus=corpus)
            vec_path = directory / "vectors.telv"
            if vec_path.exists():
                loaded.vectors = VectorStore.load(vec_path, corpus, provider_id=self.provider.provider_id)
            idx_path = directory / "index.bin"
            if idx_path.exists():
                loaded.index = InvertedIndex.load(idx_path)
            self.corpora[corpus_id] = loaded
            return loaded

    def ingest_corpus(self, corpus_id: str, records: list[dict], lenient: bool):
        loaded = self.get_corpus(corpus_id)
        for runtime in self.workspaces.values():
            if runtime.workspace.ctx.corpus.corpus_id == corpus_id:
                raise EngineError("corpus is in use by a workspace; ingest must complete before workspaces open")
        result = loaded.corpus.ingest(records, lenient=lenient)
        loaded.vectors = self.provider.embed_corpus(loaded.corpus)
        loaded.index = build_index(loaded.corpus)
        directory = self.corpus_dir(corpus_id)
        loaded.corpus.save(directory)
        loaded.vectors.save(directory / "vectors.telv")
        loaded.index.save(directory / "index.bin")
        return result

    def _context_for(self, corpus_id: str) -> EngineContext:
        loaded = self.get_corpus(corpus_id)
        if loaded.vectors is None or loaded.index is None:
            raise EngineError(f"corpus {corpus_id!r} has no vectors/index yet; ingest first")
        return EngineContext(
            corpus=loaded.corpus,
            vectors=loaded.vectors,
            index=loaded.index,
            provider=self.provider,
            seed=self.config.seed,
        )

    # --- workspaces ----------------------------------------------------------------

    def workspace_dir(self, workspace_id: str) -> Path:
        return self.data_dir / "workspaces" / workspace_id

    def create_workspace(self, corpus_id: str, workspace_id: str | None, seed: int, actor: str) -> WorkspaceRuntime:
        with self._registry_lock:
            if workspace_id is None:
                workspace_id = f"w{len(self.workspaces) + 1}"
                while workspace_id in self.workspaces or self.workspace_dir(workspace_id).exists():
                    workspace_id = f"w{int(workspace_id[1:]) + 1}"
            if workspace_id in self.workspaces or self.workspace_dir(workspace_id).exists():
                raise EngineError(f"workspace {workspace_id!r} already exists")
            ctx = self._context_for(corpus_id)
            log = FileEventLog(
                self.workspace_dir(workspace_id) / "events.jsonl",
                fsync=self.config.fsync,
            )
            ws = Workspace.create(
                workspace_id, ctx, log=log, seed=seed, actor=actor,
                defer_projections=self.config.defer_projections,
            )
            log.snapshot_writer = lambda seq: ws.snapshot_bytes()
            runtime = WorkspaceRuntime(ws)
            self.workspaces[workspace_id] = runtime
            return runtime

    def get_workspace(self, workspace_id: str) -> WorkspaceRuntime:
        with self._registry_lock:
            runtime = self.workspaces.get(workspace_id)
            if runtime is not None:
                return runtime
            directory = self.workspace_dir(workspace_id)
            log_path = directory / "events.jsonl"
            if not log_path.exists():
                raise NotFound(f"no such workspace: {workspace_id}")
            log = FileEventLog.open(log_path, fsync=self.config.fsync, recover=True)
            if not log.events:
                raise NotFound(f"workspace log at {log_path} is empty")
            corpus_id = log.events[0].payload["corpus_id"]
            ctx = self._context_for(corpus_id)
            ws = Workspace.replay(log.events, ctx, defer_projections=self.config.defer_projections)
            ws.log = log
            log.snapshot_writer = lambda seq: ws.snapshot_bytes()
            runtime = WorkspaceRuntime(ws)
            self.workspaces[workspace_id] = runtime
            # projections deferred during replay still need their jobs
            self.schedule_projections(runtime, ws.take_pending_projections())
            return runtime

    def find_document(self, doc_id: str, corpus_id: str | None = None):
        if corpus_id is not None:
            return self.get_corpus(corpus_id).corpus.get_document(doc_id)
        for loaded in self.corpora.values():
            if doc_id in loaded.corpus:
                return loaded.corpus.get_document(doc_id)
        raise NotFound(f"no such document: {doc_id}")

    # --- projection jobs ----------------------------------------------------------------

    def schedule_projections(self, runtime: WorkspaceRuntime, pending: list[tuple[str, int]]) -> None:
        for node_id, seq in pending:
            with runtime.lock:
                generation = runtime.proj_generation.get(node_id, 0) + 1
                runtime.proj_generation[node_id] = generation
            runtime.publish({"kind": "ProjectionStatus", "seq": None, "node_id": node_id, "state": "started"})
            self.executor.submit(self._run_projection, runtime, node_id, seq, generation)

    def _run_projection(self, runtime: WorkspaceRuntime, node_id: str, seq: int, generation: int) -> None:
        ws = runtime.workspace

        def superseded() -> bool:
            return runtime.proj_generation.get(node_id, 0) != generation

        with runtime.lock:
            if superseded() or node_id not in ws.graph.nodes:
                return
            node = ws.graph.nodes[node_id]
            blocked = ws.graph._upstream_block(node)
            if blocked is not None:
                ws.graph.results[node_id] = blocked
                runtime.publish({"kind": "ProjectionStatus", "seq": None, "node_id": node_id, "state": "blocked"})
                return
            source_lists = ws.graph._source_inputs(node)
            groups = [
                list(ws.graph.nodes[e.from_node].config.get("members", []))
                for e in ws.graph.in_edges(node_id)
                if e.port == "control"
            ]
            cfg_dict = dict(node.config)
            node_seed = cfg_dict.pop("seed", None)
            if node_seed is None:
                from ..graph import derive_node_seed

                node_seed = derive_node_seed(ws.seed, node_id)
            source_ids = ws.graph._flatten_first_seen(source_lists)
            ctx = ws.ctx

        try:
            if not source_lists:
                raise EngineError("Projection needs at least one source input")
            cfg = ProjectionConfig(**{**cfg_dict, "seed": node_seed})
            result = project(
                source_ids, groups, cfg,
                vector_lookup=ctx.vectors.get,
                ingest_seq_of=ctx.corpus.ingest_seq_of,
                should_abort=superseded,
            )
            lists = [[(d, None) for d in members] for members in result.clusters]
            lists.append([(d, None) for d in result.noise])
            from ..graph import DocListsOutput

            node_result = NodeResult(
                status="ok",
                output=DocListsOutput(lists=lists, noise_last=True),
                warnings=list(result.warnings),
                projection=result,
            )
        except Cancelled:
            runtime.publish({"kind": "ProjectionStatus", "seq": None, "node_id": node_id, "state": "superseded"})
            return
        except EngineError as exc:
            node_result = NodeResult(status="error", error=exc.to_dict())

        with runtime.lock:
            if superseded():
                runtime.publish({"kind": "ProjectionStatus", "seq": None, "node_id": node_id, "state": "superseded"})
                return
            ws.commit_projection_result(node_id, seq, node_result)
        runtime.publish(
            {
                "kind": "ProjectionStatus",
                "seq": None,
                "node_id": node_id,
                "state": "completed" if node_result.status == "ok" else "failed",
                "stamp": {"node_id": node_id, "recompute_seq": seq},
            }
        )
