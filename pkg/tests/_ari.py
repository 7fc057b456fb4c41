"""Adjusted Rand Index for the projection harness (noise is one label)."""

from __future__ import annotations

from collections import Counter


def adjusted_rand_index(labels_a, labels_b) -> float:
    assert len(labels_a) == len(labels_b)
    n = len(labels_a)

    def comb2(x: int) -> int:
        return x * (x - 1) // 2

    pair_counts = Counter(zip(labels_a, labels_b))
    a_counts = Counter(labels_a)
    b_counts = Counter(labels_b)
    sum_ij = sum(comb2(c) for c in pair_counts.values())
    sum_a = sum(comb2(c) for c in a_counts.values())
    sum_b = sum(comb2(c) for c in b_counts.values())
    expected = sum_a * sum_b / comb2(n)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)
