"""Pydantic request/response models for the /v1 API."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class CreateSessionRequest(BaseModel):
    actor_id: str = Field(min_length=1)


class CreateSessionResponse(BaseModel):
    actor_id: str
    token: str


class FieldMapModel(BaseModel):
    body_field: str
    title_field: str | None = None
    id_field: str | None = None
    metadata_fields: list[str] = Field(default_factory=list)


class CreateCorpusRequest(BaseModel):
    corpus_id: str = Field(min_length=1)
    field_map: FieldMapModel


class IngestRequest(BaseModel):
    records: list[dict[str, Any]]
    lenient: bool = False


class IngestResponse(BaseModel):
    count: int
    skipped: int
    first_id: str | None
    last_id: str | None


class CreateWorkspaceRequest(BaseModel):
    corpus_id: str
    workspace_id: str | None = None
    seed: int = 0


class CreateWorkspaceResponse(BaseModel):
    workspace_id: str
    corpus_id: str
    seed: int


class CommandRequest(BaseModel):
    """One mutation; kinds mirror the provenance event kinds plus Undo/Redo."""

    command: str
    client_tag: str | None = None
    based_on_seq: int | None = None  # advisory staleness hint, never compare-and-swap

    node_kind: str | None = None
    config: dict[str, Any] | None = None
    position: list[float] | None = None
    node_id: str | None = None
    from_node: str | None = None
    to_node: str | None = None
    port: str | None = None
    edge_id: str | None = None
    doc_id: str | None = None
    x: float | None = None
    y: float | None = None
    seed: int | None = None


class CommandResponse(BaseModel):
    seq: int
    command: str
    node_id: str | None = None
    edge_id: str | None = None
    members: list[str] | None = None
    events: list[dict] | None = None


class DocumentResponse(BaseModel):
    doc_id: str
    title: str
    body: str
    metadata: dict[str, str]
    ingest_seq: int


class OutputEntry(BaseModel):
    list_index: int
    doc_id: str
    score: float | None = None
    noise: bool = False


class OutputPage(BaseModel):
    node_id: str
    status: str
    stamp: dict | None = None
    total: int
    offset: int
    limit: int
    entries: list[OutputEntry]
    error: dict | None = None
    blocked_on: str | None = None
    warnings: list[str] = Field(default_factory=list)


class SnapshotResponse(BaseModel):
    snapshot: dict
    seq: int


class LogResponse(BaseModel):
    events: list[dict]
