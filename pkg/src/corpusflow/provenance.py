"""Append-only event log, undo/redo bookkeeping, and replay support.

Every accepted workspace mutation is recorded as an ActionEvent before it is
acknowledged; workspace state is a pure fold over these events. The log never
rewinds: undo appends inverse events, redo appends re-applications.

Wall time is informational only and excluded from replay semantics. On load,
a fresh session starts with empty undo/redo stacks; undo history is a live
session affordance, the log is the durable record.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import CorruptLog, NotFound, NothingToRedo, NothingToUndo, StorageFailure

EVENT_KINDS = (
    "WorkspaceCreated",
    "NodeAdded",
    "NodeRemoved",
    "NodeConfigChanged",
    "NodeMoved",
    "EdgeAdded",
    "EdgeRemoved",
    "GroupMemberAdded",
    "GroupMemberRemoved",
    "SeedSet",
)


@dataclass(frozen=True)
class ActionEvent:
    seq: int
    actor: str
    ts: float
    kind: str
    payload: dict

    def to_json_dict(self) -> dict:
        return {"seq": self.seq, "actor": self.actor, "ts": self.ts, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ActionEvent":
        return cls(seq=d["seq"], actor=d["actor"], ts=d["ts"], kind=d["kind"], payload=d["payload"])


class MemoryEventLog:
    """In-process log for embedded/test use."""

    def __init__(self) -> None:
        self.events: list[ActionEvent] = []

    def __len__(self) -> int:
        return len(self.events)

    def append(self, actor: str, kind: str, payload: dict, ts: float | None = None) -> ActionEvent:
        if kind not in EVENT_KINDS:
            raise NotFound(f"unknown event kind: {kind}")
        event = ActionEvent(
            seq=len(self.events) + 1,
            actor=actor,
            ts=time.time() if ts is None else ts,
            kind=kind,
            payload=payload,
        )
        self.events.append(event)
        return event

    def events_from(self, from_seq: int) -> list[ActionEvent]:
        return [e for e in self.events if e.seq >= from_seq]

    def close(self) -> None:
        pass


class FileEventLog:
    """Line-delimited JSON log, one event per line, fsync before ack.

    Every ``snapshot_every`` events a snapshot callback may write a cache file
    next to the log (snap-<seq>.json); snapshots are caches, never
    authoritative.
    """

    def __init__(
        self,
        path: str | Path,
        fsync: bool = True,
        snapshot_every: int = 500,
        snapshot_writer: Callable[[int], bytes] | None = None,
    ):
        self.path = Path(path)
        self.fsync = fsync
        self.snapshot_every = snapshot_every
        self.snapshot_writer = snapshot_writer
        self.events: list[ActionEvent] = []
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def __len__(self) -> int:
        return len(self.events)

    @classmethod
    def open(
        cls,
        path: str | Path,
        fsync: bool = True,
        recover: bool = False,
        snapshot_every: int = 500,
        snapshot_writer: Callable[[int], bytes] | None = None,
    ) -> "FileEventLog":
        """Open an existing log, folding its events into memory.

        A gap or an undecodable event raises CorruptLog carrying the good
        prefix; with ``recover=True`` an undecodable *final* line (a torn
        write that was never acknowledged) is dropped and the file truncated
        to the last good event instead.
        """
        path = Path(path)
        events: list[ActionEvent] = []
        good_bytes = 0
        corrupt: str | None = None
        recoverable = False
        if path.exists():
            raw = path.read_bytes()
            lines = raw.splitlines(keepends=True)
            for li, line in enumerate(lines):
                is_last = li == len(lines) - 1
                text = line.decode("utf-8", errors="replace").strip()
                if not text:
                    good_bytes += len(line)
                    continue
                try:
                    event = ActionEvent.from_json_dict(json.loads(text))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    corrupt = f"undecodable event after seq {len(events)}"
                    recoverable = is_last  # a torn, never-acknowledged write
                    break
                if event.seq != len(events) + 1:
                    corrupt = f"sequence gap: expected {len(events) + 1}, found {event.seq}"
                    recoverable = False
                    break
                if not line.endswith(b"\n"):
                    corrupt = f"torn final write after seq {len(events)}"
                    recoverable = True
                    break
                events.append(event)
                good_bytes += len(line)
            if corrupt is not None:
                if not (recover and recoverable):
                    raise CorruptLog(corrupt, last_good_seq=len(events), good_events=events)
                with open(path, "r+b") as fh:
                    fh.truncate(good_bytes)
        log = cls(path, fsync=fsync, snapshot_every=snapshot_every, snapshot_writer=snapshot_writer)
        log.events = events
        return log

    def append(self, actor: str, kind: str, payload: dict, ts: float | None = None) -> ActionEvent:
        if kind not in EVENT_KINDS:
            raise NotFound(f"unknown event kind: {kind}")
        event = ActionEvent(
            seq=len(self.events) + 1,
            actor=actor,
            ts=time.time() if ts is None else ts,
            kind=kind,
            payload=payload,
        )
        try:
            self._fh.write(json.dumps(event.to_json_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"could not persist event: {exc}") from exc
        self.events.append(event)
        if self.snapshot_writer is not None and event.seq % self.snapshot_every == 0:
            snap_path = self.path.parent / f"snap-{event.seq}.json"
            try:
                snap_path.write_bytes(self.snapshot_writer(event.seq))
            except OSError:
                pass  # a snapshot is a cache; losing one is harmless
        return event

    def events_from(self, from_seq: int) -> list[ActionEvent]:
        return [e for e in self.events if e.seq >= from_seq]

    def close(self) -> None:
        self._fh.close()


# --- undo / redo ------------------------------------------------------------------


@dataclass
class UndoUnit:
    """One undoable user command: the events it appended."""

    events: list[ActionEvent]

    @property
    def is_move(self) -> bool:
        return len(self.events) >= 1 and all(e.kind == "NodeMoved" for e in self.events)


MOVE_COALESCE_WINDOW = 2.0  # seconds


class UndoManager:
    """Linear global undo/redo per workspace.

    NodeMoved commands coalesce per node within a 2-second window so a drag
    gesture undoes as one step. Undo-produced events never enter the undo
    stack (they feed the redo stack); any fresh mutation clears redo.
    """

    def __init__(self) -> None:
        self.undo_stack: list[UndoUnit] = []
        self.redo_stack: list[UndoUnit] = []

    def record_command(self, events: list[ActionEvent]) -> None:
        if not events:
            return
        if all(e.kind == "WorkspaceCreated" for e in events):
            return  # workspace creation is not undoable
        self.redo_stack.clear()
        unit = UndoUnit(list(events))
        if unit.is_move and self.undo_stack:
            top = self.undo_stack[-1]
            if (
                top.is_move
                and top.events[-1].payload["node_id"] == events[0].payload["node_id"]
                and events[0].ts - top.events[-1].ts <= MOVE_COALESCE_WINDOW
            ):
                top.events.extend(events)
                return
        self.undo_stack.append(unit)

    def pop_undo(self) -> UndoUnit:
        if not self.undo_stack:
            raise NothingToUndo("nothing to undo")
        unit = self.undo_stack.pop()
        self.redo_stack.append(unit)
        return unit

    def pop_redo(self) -> UndoUnit:
        if not self.redo_stack:
            raise NothingToRedo("nothing to redo")
        return self.redo_stack.pop()

    def push_redone(self, events: list[ActionEvent]) -> None:
        self.undo_stack.append(UndoUnit(list(events)))


def invert_event(event: ActionEvent, graph) -> list[tuple[str, dict]]:
    """(kind, payload) list that undoes ``event`` given the current graph."""
    kind, p = event.kind, event.payload
    if kind == "NodeAdded":
        node = graph.node(p["node_id"])
        edges = [
            {"edge_id": e.edge_id, "from": e.from_node, "to": e.to_node, "port": e.port}
            for e in graph.incident_edges(node.node_id)
        ]
        return [
            (
                "NodeRemoved",
                {
                    "node_id": node.node_id,
                    "kind": node.kind,
                    "config": dict(node.config),
                    "position": [node.position[0], node.position[1]],
                    "edges": edges,
                },
            )
        ]
    if kind == "NodeRemoved":
        out = [
            (
                "NodeAdded",
                {
                    "node_id": p["node_id"],
                    "kind": p["kind"],
                    "config": dict(p["config"]),
                    "position": list(p["position"]),
                },
            )
        ]
        for e in p.get("edges", []):
            out.append(("EdgeAdded", dict(e)))
        return out
    if kind == "NodeConfigChanged":
        return [
            (
                "NodeConfigChanged",
                {"node_id": p["node_id"], "config": dict(p["prev_config"]), "prev_config": dict(p["config"])},
            )
        ]
    if kind == "NodeMoved":
        return [
            (
                "NodeMoved",
                {"node_id": p["node_id"], "position": list(p["prev_position"]), "prev_position": list(p["position"])},
            )
        ]
    if kind == "EdgeAdded":
        return [("EdgeRemoved", dict(p))]
    if kind == "EdgeRemoved":
        return [("EdgeAdded", dict(p))]
    if kind == "GroupMemberAdded":
        members = graph.node(p["node_id"]).config.get("members", [])
        index = members.index(p["doc_id"]) if p["doc_id"] in members else None
        return [("GroupMemberRemoved", {"node_id": p["node_id"], "doc_id": p["doc_id"], "index": index})]
    if kind == "GroupMemberRemoved":
        return [("GroupMemberAdded", {"node_id": p["node_id"], "doc_id": p["doc_id"], "index": p.get("index")})]
    if kind == "SeedSet":
        return [("SeedSet", {"seed": p["prev_seed"], "prev_seed": p["seed"]})]
    raise NotFound(f"event kind {kind} has no inverse")
