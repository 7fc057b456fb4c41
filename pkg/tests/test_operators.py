"""Rank and set operations against a naive full-scan oracle."""

from __future__ import annotations

import random

import pytest

from corpusflow.embedding import ReferenceProvider, cosine, mean_vector
from corpusflow.errors import ArityError, DegenerateMean, EmptyControl, InvalidConfig
from corpusflow.operators import RankConfig, difference, intersection, rank, set_op, union

from _synth import make_corpus, synthetic_records


def naive_rank(controls, candidate_ids, corpus, vectors, max_results, floor):
    """Scalar-loop oracle: per-component mean, per-doc dot product, stable sort."""
    dim = vectors.dim
    mean = [0.0] * dim
    for v in controls:
        for i, x in enumerate(v.tolist()):
            mean[i] += x
    mean = [x / len(controls) for x in mean]
    norm = sum(x * x for x in mean) ** 0.5
    target = [x / norm for x in mean]
    scored = []
    for doc_id in candidate_ids:
        vec = vectors.get(doc_id).tolist()
        score = 0.0
        for a, b in zip(vec, target):
            score += a * b
        scored.append((-score, corpus.ingest_seq_of(doc_id), doc_id, score))
    scored.sort()
    out = []
    for _, _, doc_id, score in scored:
        if floor > -1.0 and score < floor:
            break
        out.append((doc_id, score))
        if len(out) >= max_results:
            break
    return out


@pytest.fixture(scope="module")
def ranked_world():
    corpus = make_corpus(synthetic_records(1000, seed=17))
    vectors = ReferenceProvider().embed_corpus(corpus)
    return corpus, vectors


def test_self_control_ranks_first(ranked_world):
    corpus, vectors = ranked_world
    doc_id = corpus.doc_ids()[5]
    out = rank([vectors.get(doc_id)], None, RankConfig(), corpus, vectors)
    assert out[0][0] == doc_id
    assert out[0][1] == pytest.approx(1.0, abs=1e-6)


def test_source_restriction(ranked_world):
    corpus, vectors = ranked_world
    ids = corpus.doc_ids()
    control_doc = ids[0]
    source = ids[10:13]  # excludes the control doc itself (most similar)
    out = rank([vectors.get(control_doc)], source, RankConfig(), corpus, vectors)
    assert {d for d, _ in out} == set(source)


def test_rank_oracle_equivalence_random_controls(ranked_world):
    corpus, vectors = ranked_world
    ids = corpus.doc_ids()
    rng = random.Random(23)
    for _ in range(20):
        controls = [vectors.get(rng.choice(ids)) for _ in range(rng.randint(1, 4))]
        restrict = rng.random() < 0.5
        candidates = rng.sample(ids, 200) if restrict else None
        cfg = RankConfig(max_results=rng.choice([10, 50, 1000]),
                         similarity_floor=rng.choice([-1.0, 0.0, 0.2]))
        engine = rank(controls, candidates, cfg, corpus, vectors)
        naive = naive_rank(controls, candidates if candidates is not None else ids,
                           corpus, vectors, cfg.max_results, cfg.similarity_floor)
        assert [d for d, _ in engine] == [d for d, _ in naive]
        for (_, a), (_, b) in zip(engine, naive):
            assert abs(a - b) <= 1e-6


def test_total_reordering_when_unbounded(ranked_world):
    corpus, vectors = ranked_world
    ids = corpus.doc_ids()[:50]
    out = rank([vectors.get(ids[0])], ids, RankConfig(max_results=1000), corpus, vectors)
    assert sorted(d for d, _ in out) == sorted(ids)


def test_scores_monotone_non_increasing(ranked_world):
    corpus, vectors = ranked_world
    out = rank([vectors.get(corpus.doc_ids()[3])], None, RankConfig(max_results=200), corpus, vectors)
    scores = [s for _, s in out]
    assert all(a >= b for a, b in zip(scores, scores[1:]))


def test_control_permutation_invariant(ranked_world):
    corpus, vectors = ranked_world
    ids = corpus.doc_ids()
    controls = [vectors.get(ids[i]) for i in (2, 7, 19)]
    a = rank(controls, None, RankConfig(max_results=30), corpus, vectors)
    b = rank(list(reversed(controls)), None, RankConfig(max_results=30), corpus, vectors)
    assert a == b


def test_duplicate_control_weights_toward_it(ranked_world):
    corpus, vectors = ranked_world
    ids = corpus.doc_ids()
    u, v = vectors.get(ids[0]), vectors.get(ids[1])
    target_single = mean_vector([u, v])
    target_double = mean_vector([u, u, v])
    assert cosine(target_double, u) >= cosine(target_single, u) - 1e-12


def test_empty_control_rejected(ranked_world):
    corpus, vectors = ranked_world
    with pytest.raises(EmptyControl):
        rank([], None, RankConfig(), corpus, vectors)


def test_degenerate_mean_rejected(ranked_world):
    corpus, vectors = ranked_world
    v = vectors.get(corpus.doc_ids()[0])
    with pytest.raises(DegenerateMean):
        rank([v, -v], None, RankConfig(), corpus, vectors)


def test_similarity_floor_cuts(ranked_world):
    corpus, vectors = ranked_world
    out = rank([vectors.get(corpus.doc_ids()[0])], None,
               RankConfig(max_results=10_000, similarity_floor=0.5), corpus, vectors)
    assert all(s >= 0.5 for _, s in out)


def test_rank_config_validation():
    with pytest.raises(InvalidConfig):
        RankConfig(max_results=0).validate()
    with pytest.raises(InvalidConfig):
        RankConfig(similarity_floor=1.5).validate()


def test_empty_source_is_empty_result(ranked_world):
    corpus, vectors = ranked_world
    out = rank([vectors.get(corpus.doc_ids()[0])], [], RankConfig(), corpus, vectors)
    assert out == []


# --- archetype flow: a note as sole control surfaces planted-token documents ----

def test_note_control_ranks_planted_tokens_first():
    snoop_docs = [
        {"id": f"s{i}", "title": "", "body": f"mom snoops through my messages constantly {i}"}
        for i in range(10)
    ]
    other_docs = [
        {"id": f"o{i}", "title": "", "body": f"quarterly budget spreadsheet review item {i}"}
        for i in range(10)
    ]
    corpus = make_corpus(snoop_docs + other_docs)
    provider = ReferenceProvider()
    vectors = provider.embed_corpus(corpus)
    note = provider.embed("mom always snoops through my messages")
    out = rank([note], None, RankConfig(), corpus, vectors)
    top_ten = {d for d, _ in out[:10]}
    assert top_ten == {f"s{i}" for i in range(10)}


# --- set operations -------------------------------------------------------------

def test_union_first_seen_order():
    assert union([["a", "b"], ["b", "c"]]) == ["a", "b", "c"]


def test_intersection_order_from_first():
    assert intersection([["a", "b", "c"], ["c", "a"]]) == ["a", "c"]


def test_difference():
    assert difference(["a", "b", "c"], [["b"], ["x"]]) == ["a", "c"]


def test_set_op_arity():
    with pytest.raises(ArityError):
        union([["a"]])
    with pytest.raises(ArityError):
        intersection([["a"]])
    with pytest.raises(ArityError):
        difference(["a"], [])


def test_union_intersection_commutative_as_sets():
    rng = random.Random(5)
    for _ in range(50):
        a = [f"d{rng.randint(0, 20)}" for _ in range(rng.randint(0, 10))]
        b = [f"d{rng.randint(0, 20)}" for _ in range(rng.randint(0, 10))]
        assert set(union([a, b])) == set(union([b, a]))
        assert set(intersection([a, b])) == set(intersection([b, a]))


def test_difference_not_commutative():
    assert difference(["a", "b"], [["b"]]) != difference(["b"], [["a", "b"]])


def test_set_op_dispatch_left_designation():
    inputs = [["x", "y"], ["a", "b", "x"], ["b"]]
    # left is the second input: {a,b,x} - ({x,y} | {b}) = [a]
    assert set_op("difference", inputs, left_index=1) == ["a"]
