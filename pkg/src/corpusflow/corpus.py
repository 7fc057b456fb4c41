"""Document ingest, storage, retrieval, and export.

A corpus is the single source of truth for text and metadata. Documents are
immutable after ingest; ingest is single-writer, after which the corpus is
safely readable from any number of concurrent readers.

On-disk layout (one directory per corpus):
    corpus.meta   JSON: {corpus_id, count, field_map}
    docs.jsonl    one document per line, ordered by ingest_seq
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from threading import Lock
from typing import Callable, Iterable, Iterator

from .errors import DuplicateId, MalformedRecord, MissingField, NotFound

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def content_doc_id(title: str, body: str) -> str:
    """Derive a doc_id as a 64-bit content hash rendered hex.

    Deterministic without coordination; used when the field map names no id
    column.
    """
    payload = title.encode("utf-8") + b"\x00" + body.encode("utf-8")
    return format(fnv1a_64(payload), "016x")


@dataclass(frozen=True)
class Document:
    """Immutable corpus record."""

    doc_id: str
    title: str
    body: str
    metadata: dict[str, str]
    ingest_seq: int

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "body": self.body,
            "metadata": self.metadata,
            "ingest_seq": self.ingest_seq,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        return cls(
            doc_id=rec["doc_id"],
            title=rec["title"],
            body=rec["body"],
            metadata=dict(rec.get("metadata", {})),
            ingest_seq=rec["ingest_seq"],
        )


@dataclass(frozen=True)
class FieldMap:
    """Maps input-file columns onto {id, title, body, metadata}; fixed at creation."""

    body_field: str
    title_field: str | None = None
    id_field: str | None = None
    metadata_fields: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "body_field": self.body_field,
            "title_field": self.title_field,
            "id_field": self.id_field,
            "metadata_fields": list(self.metadata_fields),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FieldMap":
        return cls(
            body_field=d["body_field"],
            title_field=d.get("title_field"),
            id_field=d.get("id_field"),
            metadata_fields=tuple(d.get("metadata_fields", ())),
        )


@dataclass
class IngestResult:
    count: int
    skipped: int
    first_id: str | None
    last_id: str | None


class Corpus:
    """An append-once document store.

    Nested comment threads are not supported: each input record becomes an
    independent document.
    """

    def __init__(self, corpus_id: str, field_map: FieldMap):
        self.corpus_id = corpus_id
        self.field_map = field_map
        self._docs: list[Document] = []
        self._by_id: dict[str, Document] = {}
        self._ingest_lock = Lock()

    def __len__(self) -> int:
        return len(self._docs)

    @property
    def count(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def doc_ids(self) -> list[str]:
        """All doc_ids in ingest_seq order (the corpus id table)."""
        return [d.doc_id for d in self._docs]

    def iter_documents(self) -> Iterator[Document]:
        """Deterministic total order: ingest_seq ascending."""
        return iter(self._docs)

    def ingest_seq_of(self, doc_id: str) -> int:
        return self.get_document(doc_id).ingest_seq

    def ingest(
        self,
        stream: Iterable[dict | MalformedRecord],
        lenient: bool = False,
        predicate: Callable[[dict], bool] | None = None,
    ) -> IngestResult:
        """Store each record of ``stream`` as a Document with a fresh ingest_seq.

        ``predicate`` is a user-supplied ingest-time filter: records for which
        it returns False are skipped (counted, never an error). In lenient
        mode, malformed records and records with a missing/empty body are
        skipped and counted instead of raising.
        """
        with self._ingest_lock:
            count = 0
            skipped = 0
            first_id: str | None = None
            last_id: str | None = None
            for rec in stream:
                try:
                    if isinstance(rec, MalformedRecord):
                        raise rec
                    if not isinstance(rec, dict):
                        raise MalformedRecord(f"record is not an object: {rec!r}")
                    if predicate is not None and not predicate(rec):
                        skipped += 1
                        continue
                    doc = self._record_to_document(rec)
                except (MalformedRecord, MissingField):
                    if lenient:
                        skipped += 1
                        continue
                    raise
                if doc.doc_id in self._by_id:
                    raise DuplicateId(f"doc_id already present: {doc.doc_id}")
                self._docs.append(doc)
                self._by_id[doc.doc_id] = doc
                count += 1
                if first_id is None:
                    first_id = doc.doc_id
                last_id = doc.doc_id
            return IngestResult(count=count, skipped=skipped, first_id=first_id, last_id=last_id)

    def _record_to_document(self, rec: dict) -> Document:
        fm = self.field_map
        if fm.body_field not in rec:
            raise MissingField(f"body field {fm.body_field!r} absent")
        body = str(rec[fm.body_field])
        if not body.strip():
            # downstream embedding requires tokens, so empty bodies are rejected
            raise MissingField(f"body field {fm.body_field!r} empty after trimming")
        title = str(rec.get(fm.title_field, "")) if fm.title_field else ""
        if fm.id_field is not None:
            if fm.id_field not in rec:
                raise MissingField(f"id field {fm.id_field!r} absent")
            doc_id = str(rec[fm.id_field])
        else:
            doc_id = content_doc_id(title, body)
        metadata = {k: str(rec[k]) for k in fm.metadata_fields if k in rec}
        return Document(
            doc_id=doc_id,
            title=title,
            body=body,
            metadata=metadata,
            ingest_seq=len(self._docs) + 1,
        )

    def get_document(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise NotFound(f"no such document: {doc_id}") from None

    def export_docs(self, doc_ids: list[str], format: str = "json") -> bytes:
        """Export the given documents in input order; any missing id exports nothing."""
        docs = [self.get_document(d) for d in doc_ids]
        if format == "json":
            payload = [
                {"doc_id": d.doc_id, "title": d.title, "body": d.body, "metadata": d.metadata}
                for d in docs
            ]
            return (json.dumps(payload, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
        if format == "csv":
            meta_keys = sorted({k for d in docs for k in d.metadata})
            buf = io.StringIO()
            writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            writer.writerow(["doc_id", "title", "body", *meta_keys])
            for d in docs:
                writer.writerow([d.doc_id, d.title, d.body, *[d.metadata.get(k, "") for k in meta_keys]])
            return buf.getvalue().encode("utf-8")
        raise MalformedRecord(f"unknown export format: {format}")

    # --- persistence ---

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "corpus_id": self.corpus_id,
            "count": self.count,
            "field_map": self.field_map.to_dict(),
        }
        (directory / "corpus.meta").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        with open(directory / "docs.jsonl", "w", encoding="utf-8") as f:
            for doc in self._docs:
                f.write(json.dumps(doc.to_record(), ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)
        meta_path = directory / "corpus.meta"
        if not meta_path.exists():
            raise NotFound(f"no corpus at {directory}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        corpus = cls(meta["corpus_id"], FieldMap.from_dict(meta["field_map"]))
        with open(directory / "docs.jsonl", "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                doc = Document.from_record(json.loads(line))
                corpus._docs.append(doc)
                corpus._by_id[doc.doc_id] = doc
        if corpus.count != meta["count"]:
            raise MalformedRecord(
                f"corpus.meta count {meta['count']} != stored documents {corpus.count}"
            )
        return corpus


def read_jsonl(path: str | Path) -> Iterator[dict | MalformedRecord]:
    """Yield records from a line-delimited JSON file.

    Unparseable lines yield a MalformedRecord marker so Corpus.ingest can
    count them in lenient mode or raise when lenient is off.
    """
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield MalformedRecord(f"line {lineno}: {exc}")
                continue
            if not isinstance(obj, dict):
                yield MalformedRecord(f"line {lineno}: not a JSON object")
                continue
            yield obj


def read_csv(path: str | Path) -> Iterator[dict]:
    """Yield records from a CSV file with a header row."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            yield dict(row)
