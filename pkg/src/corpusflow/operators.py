"""Rank and set-operation node computations; the example-based search core.

All functions here are pure over immutable inputs and freely parallel across
nodes. Scores are accumulated in float64 so the optimized path agrees with a
naive scalar loop within 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import VectorStore, mean_vector
from .errors import ArityError, EmptyControl, InvalidConfig
from .corpus import Corpus


@dataclass(frozen=True)
class RankConfig:
    """Both a count cap and an optional score floor; interactive paging stays bounded."""

    max_results: int = 1000
    similarity_floor: float = -1.0  # -1 disables the floor

    def validate(self) -> None:
        if self.max_results < 1:
            raise InvalidConfig(f"max_results must be >= 1, got {self.max_results}")
        if not (-1.0 <= self.similarity_floor <= 1.0):
            raise InvalidConfig(f"similarity_floor must be in [-1, 1], got {self.similarity_floor}")


def rank(
    controls: Sequence[np.ndarray],
    source_ids: list[str] | None,
    config: RankConfig,
    corpus: Corpus,
    vectors: VectorStore,
) -> list[tuple[str, float]]:
    """Order candidates by cosine similarity to the mean of the control vectors.

    With no source the whole corpus is ranked; with a source, only that
    source. Control weighting is a uniform mean over every contributed vector,
    so a duplicated control shifts the target toward it. Ties break by
    ingest_seq ascending.
    """
    if len(controls) == 0:
        raise EmptyControl("rank requires at least one control vector")
    config.validate()
    target = mean_vector(controls).astype(np.float64)

    if source_ids is None:
        candidate_ids = vectors.doc_ids
        rows = np.arange(len(candidate_ids), dtype=np.int64)
    else:
        candidate_ids = source_ids
        rows = vectors.rows_for(candidate_ids)
    if len(candidate_ids) == 0:
        return []

    scores = vectors.matrix[rows].astype(np.float64) @ target
    seqs = np.asarray([corpus.ingest_seq_of(d) for d in candidate_ids], dtype=np.int64)
    order = np.lexsort((seqs, -scores))

    out: list[tuple[str, float]] = []
    floor = config.similarity_floor
    for idx in order:
        score = float(scores[idx])
        if floor > -1.0 and score < floor:
            break  # sorted descending; nothing below the floor follows
        out.append((candidate_ids[int(idx)], score))
        if len(out) >= config.max_results:
            break
    return out


def note_vector(note_text: str, provider) -> np.ndarray:
    """Vectorize a note under the active provider; recomputed on every edit."""
    return provider.embed(note_text)


def union(inputs: Sequence[Sequence[str]]) -> list[str]:
    if len(inputs) < 2:
        raise ArityError(f"union requires >= 2 inputs, got {len(inputs)}")
    seen: dict[str, None] = {}
    for seq in inputs:
        for d in seq:
            seen.setdefault(d, None)
    return list(seen)


def intersection(inputs: Sequence[Sequence[str]]) -> list[str]:
    if len(inputs) < 2:
        raise ArityError(f"intersection requires >= 2 inputs, got {len(inputs)}")
    common = set(inputs[0])
    for seq in inputs[1:]:
        common &= set(seq)
    out, seen = [], set()
    for d in inputs[0]:
        if d in common and d not in seen:
            seen.add(d)
            out.append(d)
    return out


def difference(left: Sequence[str], rights: Sequence[Sequence[str]]) -> list[str]:
    if len(rights) < 1:
        raise ArityError("difference requires a designated left input and >= 1 right input")
    removed = set()
    for seq in rights:
        removed.update(seq)
    out, seen = [], set()
    for d in left:
        if d not in removed and d not in seen:
            seen.add(d)
            out.append(d)
    return out


def set_op(kind: str, inputs: Sequence[Sequence[str]], left_index: int = 0) -> list[str]:
    """Set semantics on doc ids; order is first-seen scanning the left/first
    input then subsequent inputs; scores are dropped by the caller."""
    if kind == "union":
        return union(inputs)
    if kind == "intersection":
        return intersection(inputs)
    if kind == "difference":
        if not inputs:
            raise ArityError("difference requires inputs")
        left = inputs[left_index]
        rights = [seq for i, seq in enumerate(inputs) if i != left_index]
        return difference(left, rights)
    raise InvalidConfig(f"unknown set operation: {kind}")
