"""Text-to-vector providers, the vector store, and similarity primitives.

Two providers:

* ``ReferenceProvider`` — a deterministic, dependency-free stand-in for an
  exogenous language model. Each token occurrence hashes to a 64-bit FNV-1a
  value which seeds a SplitMix64 stream; the stream's bits become a ±1 sign
  vector; token vectors are summed over occurrences and L2-normalized.
  Bit-stable across runs and platforms.
* ``RemoteProvider`` — an HTTP client for a real embedding model. POST of a
  JSON array of strings, response JSON array of float arrays, one round trip
  per batch of at most 64 texts. Non-unit responses are renormalized.

Vectors are float32 and unit-norm; cosine is computed with float64
accumulation so the optimized path agrees with a naive scalar loop.
"""

from __future__ import annotations

import struct
import time
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import Corpus, fnv1a_64
from .errors import DegenerateMean, DimMismatch, EmptyControl, EmptyText, NotFound, ProviderUnavailable
from .tokens import tokenize

_MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_DIM = 256

# embed title and body concatenated with a single space (unverified against
# any particular upstream system; controlled here so search and rank agree)
EMBED_TITLE_AND_BODY = True


def splitmix64(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of a SplitMix64 stream seeded with ``seed``."""
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
        out.append(z)
    return out


def token_sign_vector(token: str, dim: int) -> np.ndarray:
    """±1 sign vector for one token.

    The token's FNV-1a hash seeds a SplitMix64 stream; successive 64-bit
    outputs are consumed least-significant-bit first, one bit per component
    (bit=1 -> +1, bit=0 -> -1).
    """
    seed = fnv1a_64(token.encode("utf-8"))
    n_words = (dim + 63) // 64
    words = splitmix64(seed, n_words)
    vec = np.empty(dim, dtype=np.int32)
    for i in range(dim):
        bit = (words[i >> 6] >> (i & 63)) & 1
        vec[i] = 1 if bit else -1
    return vec


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int
    deterministic: bool

    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class ReferenceProvider:
    """Deterministic hashed sign-vector embedder (default dim 256).

    Term weighting is raw occurrence counts; semantic quality is the remote
    provider's job, oracle-checkability is this one's.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        self.provider_id = f"reference-{dim}"
        self.dim = dim
        self.deterministic = True
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            vec = token_sign_vector(token, self.dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        toks = tokenize(text)
        if not toks:
            raise EmptyText("no tokens after tokenization")
        acc = np.zeros(self.dim, dtype=np.int64)
        for tok in toks:
            acc += self._token_vector(tok)
        norm = float(np.sqrt(np.dot(acc.astype(np.float64), acc.astype(np.float64))))
        if norm == 0.0:
            # opposing sign vectors cancelled exactly; treat like empty input
            raise EmptyText("token vectors cancel to the zero vector")
        return (acc.astype(np.float64) / norm).astype(np.float32)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]

    def embed_corpus(self, corpus: Corpus) -> "VectorStore":
        """Embed every document (batch, at ingest time) into a VectorStore.

        Uses a sparse count matrix multiply so 100K+ document corpora embed
        without materializing per-token intermediates.
        """
        from scipy.sparse import csr_matrix

        vocab: dict[str, int] = {}
        indptr = [0]
        indices: list[int] = []
        data: list[int] = []
        for doc in corpus.iter_documents():
            text = f"{doc.title} {doc.body}" if EMBED_TITLE_AND_BODY else doc.body
            counts: dict[int, int] = {}
            for tok in tokenize(text):
                tid = vocab.setdefault(tok, len(vocab))
                counts[tid] = counts.get(tid, 0) + 1
            for tid, c in sorted(counts.items()):
                indices.append(tid)
                data.append(c)
            indptr.append(len(indices))
        n = corpus.count
        token_matrix = np.empty((len(vocab), self.dim), dtype=np.float64)
        for tok, tid in vocab.items():
            token_matrix[tid] = self._token_vector(tok)
        counts_mat = csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=(n, len(vocab)),
        )
        sums = counts_mat.dot(token_matrix)
        norms = np.sqrt((sums * sums).sum(axis=1))
        if np.any(norms == 0.0):
            bad = int(np.argmax(norms == 0.0))
            doc_id = corpus.doc_ids()[bad]
            raise EmptyText(f"document {doc_id} embeds to the zero vector")
        matrix = (sums / norms[:, None]).astype(np.float32)
        return VectorStore(corpus.doc_ids(), matrix, provider_id=self.provider_id)


class RemoteProvider:
    """Client for an external embedding endpoint.

    Transport failures are retried with capped exponential backoff, then
    surfaced as ProviderUnavailable.
    """

    MAX_BATCH = 64

    def __init__(
        self,
        url: str,
        dim: int,
        retries: int = 3,
        backoff_base: float = 0.25,
        backoff_cap: float = 4.0,
        timeout: float = 30.0,
    ):
        self.provider_id = f"remote:{url}"
        self.url = url
        self.dim = dim
        self.deterministic = False
        self.retries = retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.MAX_BATCH):
            out.extend(self._post_batch(list(texts[start : start + self.MAX_BATCH])))
        return out

    def _post_batch(self, batch: list[str]) -> list[np.ndarray]:
        import httpx

        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = httpx.post(self.url, json=batch, timeout=self.timeout)
                resp.raise_for_status()
                rows = resp.json()
                break
            except Exception as exc:  # transport or HTTP-status failure
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(min(self.backoff_base * (2**attempt), self.backoff_cap))
        else:
            raise ProviderUnavailable(f"provider at {self.url} unavailable after {self.retries} retries: {last_exc}")
        if not isinstance(rows, list) or len(rows) != len(batch):
            raise ProviderUnavailable(f"provider returned {len(rows) if isinstance(rows, list) else 'non-list'} rows for {len(batch)} texts")
        vectors = []
        for row in rows:
            vec = np.asarray(row, dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] != self.dim:
                raise DimMismatch(f"provider returned dim {vec.shape[-1] if vec.ndim else 0}, expected {self.dim}")
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise ProviderUnavailable("provider returned a zero vector")
            vectors.append((vec / norm).astype(np.float32))
        return vectors

    def embed_corpus(self, corpus: Corpus) -> "VectorStore":
        texts = [
            (f"{d.title} {d.body}" if EMBED_TITLE_AND_BODY else d.body)
            for d in corpus.iter_documents()
        ]
        vecs = self.embed_batch(texts)
        matrix = np.stack(vecs).astype(np.float32) if vecs else np.zeros((0, self.dim), dtype=np.float32)
        return VectorStore(corpus.doc_ids(), matrix, provider_id=self.provider_id)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of two unit vectors, accumulated in float64; symmetric."""
    if u.shape != v.shape:
        raise DimMismatch(f"dims differ: {u.shape} vs {v.shape}")
    return float(np.dot(u.astype(np.float64), v.astype(np.float64)))


def mean_vector(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise mean, L2-renormalized.

    A degenerate (near-zero) mean is an error rather than a fallback vector:
    silently ranking by an arbitrary direction would corrupt provenance
    semantics.
    """
    if len(vectors) == 0:
        raise EmptyControl("mean of zero vectors")
    dim = vectors[0].shape[0]
    for v in vectors[1:]:
        if v.shape[0] != dim:
            raise DimMismatch(f"dims differ: {dim} vs {v.shape[0]}")
    acc = np.zeros(dim, dtype=np.float64)
    for v in vectors:
        acc += v.astype(np.float64)
    acc /= len(vectors)
    norm = float(np.linalg.norm(acc))
    if norm < 1e-9:
        raise DegenerateMean(f"mean vector norm {norm} below 1e-9")
    return (acc / norm).astype(np.float32)


_TELV_MAGIC = b"TELV"


class VectorStore:
    """One unit vector per document, write-once at ingest then read-only.

    File format (little-endian): magic ``TELV``, u32 dim, u64 count, then
    ``count`` records of (u32 doc-ref, dim x f32). The doc-ref is the row's
    index into the corpus id table (doc_ids in ingest_seq order).
    """

    def __init__(self, doc_ids: list[str], matrix: np.ndarray, provider_id: str):
        if matrix.shape[0] != len(doc_ids):
            raise DimMismatch(f"{len(doc_ids)} ids vs {matrix.shape[0]} vectors")
        self.doc_ids = list(doc_ids)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.provider_id = provider_id
        self.dim = int(matrix.shape[1]) if matrix.ndim == 2 else 0
        self._row: dict[str, int] = {d: i for i, d in enumerate(self.doc_ids)}

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._row

    def get(self, doc_id: str) -> np.ndarray:
        try:
            return self.matrix[self._row[doc_id]]
        except KeyError:
            raise NotFound(f"no vector for document: {doc_id}") from None

    def rows_for(self, doc_ids: Iterable[str]) -> np.ndarray:
        return np.asarray([self._row[d] for d in doc_ids], dtype=np.int64)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as f:
            f.write(_TELV_MAGIC)
            f.write(struct.pack("<I", self.dim))
            f.write(struct.pack("<Q", len(self.doc_ids)))
            for i in range(len(self.doc_ids)):
                f.write(struct.pack("<I", i))
                f.write(self.matrix[i].astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path, corpus: Corpus, provider_id: str = "") -> "VectorStore":
        path = Path(path)
        raw = path.read_bytes()
        if raw[:4] != _TELV_MAGIC:
            raise DimMismatch(f"{path} is not a vector file (bad magic)")
        dim = struct.unpack_from("<I", raw, 4)[0]
        count = struct.unpack_from("<Q", raw, 8)[0]
        id_table = corpus.doc_ids()
        if count != len(id_table):
            raise DimMismatch(f"vector file holds {count} records, corpus has {len(id_table)}")
        matrix = np.empty((count, dim), dtype=np.float32)
        doc_ids: list[str] = [""] * count
        offset = 16
        rec_size = 4 + dim * 4
        for i in range(count):
            ref = struct.unpack_from("<I", raw, offset)[0]
            vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset + 4)
            matrix[i] = vec
            doc_ids[i] = id_table[ref]
            offset += rec_size
        return cls(doc_ids, matrix, provider_id=provider_id)
