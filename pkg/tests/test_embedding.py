"""Reference provider, similarity primitives, and the vector store.

The reference embedding recipe is checked against an independent scripted
implementation (pure-Python ints and struct, no shared code with the engine),
and one vector is frozen by content hash so any drift in the recipe is caught.
"""

from __future__ import annotations

import hashlib
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusflow.embedding import (
    ReferenceProvider,
    VectorStore,
    cosine,
    mean_vector,
)
from corpusflow.errors import DegenerateMean, DimMismatch, EmptyControl, EmptyText

from _synth import make_corpus, synthetic_records


# --- independent oracle: same recipe, separately scripted ---------------------

def oracle_embed(text: str, dim: int = 256) -> bytes:
    """Recompute the reference embedding with no shared code, returning f32 bytes."""
    # lowercase; split on any character outside [a-z0-9]
    tokens, current = [], []
    for ch in text.lower():
        if ("a" <= ch <= "z") or ("0" <= ch <= "9"):
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    if not tokens:
        raise ValueError("empty")

    mask = (1 << 64) - 1
    sums = [0] * dim
    for tok in tokens:
        # FNV-1a 64 over UTF-8 bytes
        h = 14695981039346656037
        for byte in tok.encode("utf-8"):
            h = ((h ^ byte) * 1099511628211) & mask
        # SplitMix64 stream seeded with the hash; LSB-first bits become signs
        state = h
        bits = []
        while len(bits) < dim:
            state = (state + 0x9E3779B97F4A7C15) & mask
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
            z ^= z >> 31
            for i in range(64):
                bits.append((z >> i) & 1)
        for c in range(dim):
            sums[c] += 1 if bits[c] else -1
    norm = math.sqrt(sum(s * s for s in sums))
    return b"".join(struct.pack("<f", s / norm) for s in sums)


FROZEN_TEXT = "mom snooped my phone"
# recorded once from oracle_embed(FROZEN_TEXT); the recipe must never drift
FROZEN_SHA256 = "4a5b8e07a0e69f9b220a82e8bf3767ece9cacc51357f4c4c3214e7f88c10cd54"


def test_oracle_vector_frozen():
    assert hashlib.sha256(oracle_embed(FROZEN_TEXT)).hexdigest() == FROZEN_SHA256


def test_engine_matches_oracle_bit_for_bit():
    provider = ReferenceProvider()
    engine = provider.embed(FROZEN_TEXT).tobytes()
    assert engine == oracle_embed(FROZEN_TEXT)
    assert hashlib.sha256(engine).hexdigest() == FROZEN_SHA256


@pytest.mark.parametrize("text", ["wifi", "a b c", "password reuse is bad", "ALL CAPS 123"])
def test_engine_matches_oracle_more_texts(text):
    assert ReferenceProvider().embed(text).tobytes() == oracle_embed(text)


# --- trivial contracts ---------------------------------------------------------

def test_empty_text_rejected():
    with pytest.raises(EmptyText):
        ReferenceProvider().embed("")
    with pytest.raises(EmptyText):
        ReferenceProvider().embed("!!! ---")


def test_single_token_components():
    v = ReferenceProvider().embed("wifi")
    assert v.dtype == np.float32
    assert np.all(np.abs(v) == np.float32(1.0 / 16.0))  # 1/sqrt(256)


def test_repeated_token_is_scaling_then_normalizing():
    p = ReferenceProvider()
    assert np.array_equal(p.embed("wifi wifi"), p.embed("wifi"))


def test_case_and_punctuation_insensitive():
    p = ReferenceProvider()
    assert np.array_equal(p.embed("WiFi!"), p.embed("wifi"))


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=1, max_size=80))
def test_unit_norm_property(text):
    p = ReferenceProvider()
    try:
        v = p.embed(text)
    except EmptyText:
        return
    assert abs(float(np.linalg.norm(v.astype(np.float64))) - 1.0) <= 1e-6


def test_determinism_within_process():
    p1, p2 = ReferenceProvider(), ReferenceProvider()
    for text in ("alpha beta", "gamma", "one two three four"):
        assert p1.embed(text).tobytes() == p2.embed(text).tobytes()


# --- cosine / mean_vector ------------------------------------------------------

def test_cosine_self_and_negation():
    v = ReferenceProvider().embed("hello world")
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)
    assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-6)


def test_cosine_dim_mismatch():
    with pytest.raises(DimMismatch):
        cosine(np.ones(4, dtype=np.float32), np.ones(8, dtype=np.float32))


def test_cosine_matches_naive_scalar_loop():
    p = ReferenceProvider()
    u = p.embed("alpha beta")
    v = p.embed("gamma delta")
    naive = 0.0
    for a, b in zip(u.tolist(), v.tolist()):
        naive += a * b
    assert cosine(u, v) == pytest.approx(naive, abs=1e-6)


def test_cosine_naive_loop_1000_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        u = rng.normal(size=16)
        u = (u / np.linalg.norm(u)).astype(np.float32)
        v = rng.normal(size=16)
        v = (v / np.linalg.norm(v)).astype(np.float32)
        naive = sum(a * b for a, b in zip(u.tolist(), v.tolist()))
        assert abs(cosine(u, v) - naive) <= 1e-6


def test_mean_vector_identity():
    v = ReferenceProvider().embed("solo")
    assert np.array_equal(mean_vector([v]), v)


def test_mean_vector_degenerate():
    v = ReferenceProvider().embed("solo")
    with pytest.raises(DegenerateMean):
        mean_vector([v, -v])


def test_mean_vector_empty():
    with pytest.raises(EmptyControl):
        mean_vector([])


def test_mean_vector_matches_naive():
    p = ReferenceProvider()
    vs = [p.embed(t) for t in ("one two", "three four five", "six")]
    naive = np.zeros(256)
    for v in vs:
        naive += v.astype(np.float64)
    naive /= 3
    naive /= np.linalg.norm(naive)
    assert np.allclose(mean_vector(vs).astype(np.float64), naive, atol=1e-6)


def test_mean_vector_permutation_invariant():
    p = ReferenceProvider()
    vs = [p.embed(t) for t in ("one", "two", "three", "four")]
    a = mean_vector(vs)
    b = mean_vector(list(reversed(vs)))
    assert np.array_equal(a, b)


# --- vector store --------------------------------------------------------------

def test_embed_corpus_matches_per_doc_embed():
    records = synthetic_records(50, seed=3)
    corpus = make_corpus(records)
    provider = ReferenceProvider()
    store = provider.embed_corpus(corpus)
    for doc in corpus.iter_documents():
        expected = provider.embed(f"{doc.title} {doc.body}")
        assert np.allclose(store.get(doc.doc_id), expected, atol=1e-6)


def test_vector_store_save_load_round_trip(tmp_path):
    records = synthetic_records(20, seed=9)
    corpus = make_corpus(records)
    store = ReferenceProvider().embed_corpus(corpus)
    store.save(tmp_path / "vectors.telv")
    loaded = VectorStore.load(tmp_path / "vectors.telv", corpus, provider_id=store.provider_id)
    assert loaded.dim == store.dim
    assert loaded.doc_ids == store.doc_ids
    assert np.array_equal(loaded.matrix, store.matrix)


def test_vector_file_magic_and_layout(tmp_path):
    corpus = make_corpus([{"id": "a", "title": "", "body": "x y z"}])
    store = ReferenceProvider(dim=8).embed_corpus(corpus)
    path = tmp_path / "v.telv"
    store.save(path)
    raw = path.read_bytes()
    assert raw[:4] == b"TELV"
    assert struct.unpack_from("<I", raw, 4)[0] == 8
    assert struct.unpack_from("<Q", raw, 8)[0] == 1
    assert len(raw) == 16 + 1 * (4 + 8 * 4)
