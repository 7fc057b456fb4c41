"""Workspace graph: node kinds, the port legality matrix, DAG enforcement,
dirty propagation, and incremental-equals-from-scratch recomputation."""

from __future__ import annotations

import random

import pytest

from corpusflow.errors import (
    AlreadyMember,
    DuplicateEdge,
    IllegalPort,
    InvalidConfig,
    NotFound,
    WouldCycle,
)
from corpusflow.graph import (
    CONTROL,
    SOURCE,
    check_edge_legality,
)

from _world import build_workspace


# --- add_node and config validation ------------------------------------------------

def test_add_group_outputs_members():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": [ids[0], ids[1]]})
    result = ws.node_result(g)
    assert result.status == "ok"
    assert result.output.lists == [[(ids[0], None), (ids[1], None)]]


def test_add_search_delegates_to_query():
    ws = build_workspace()
    s = ws.add_node("Search", {"query": "wifi"})
    result = ws.node_result(s)
    assert result.status == "ok"
    from corpusflow.query import execute_query, parse_query

    expected = execute_query(parse_query("wifi"), ws.ctx.index)
    assert [d for d, _ in result.output.lists[0]] == expected


def test_add_rank_invalid_config():
    ws = build_workspace()
    with pytest.raises(InvalidConfig):
        ws.add_node("Rank", {"max_results": 0})


def test_add_document_node_requires_known_doc():
    ws = build_workspace()
    with pytest.raises(InvalidConfig):
        ws.add_node("Document", {"doc_id": "zzz"})


def test_add_search_validates_query():
    ws = build_workspace()
    with pytest.raises(InvalidConfig):
        ws.add_node("Search", {"query": "NOT wifi"})
    with pytest.raises(InvalidConfig):
        ws.add_node("Search", {"query": '"unterminated'})


def test_unknown_kind_rejected():
    ws = build_workspace()
    with pytest.raises(InvalidConfig):
        ws.add_node("Blob", {})


# --- edge legality matrix -------------------------------------------------------------

def test_legality_matrix_exhaustive():
    doc_producers = {"Document", "Search", "Group", "Rank", "Projection", "Union", "Intersection", "Difference"}
    source_targets = {"Rank", "Projection", "Union", "Intersection", "Difference"}
    control_accepts = {"Rank": {"Document", "Group", "Note"}, "Projection": {"Group"}}
    kinds = ("Document", "Search", "Group", "Note", "Rank", "Projection", "Union", "Intersection", "Difference")
    for frm in kinds:
        for to in kinds:
            for port, should_pass in (
                (SOURCE, frm in doc_producers and to in source_targets),
                (CONTROL, frm in control_accepts.get(to, set())),
            ):
                if should_pass:
                    check_edge_legality(frm, to, port)
                else:
                    with pytest.raises(IllegalPort):
                        check_edge_legality(frm, to, port)


def test_group_to_rank_control_accepted():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": ids[:3]})
    r = ws.add_node("Rank", {})
    ws.add_edge(g, r, CONTROL)
    assert ws.node_result(r).status == "ok"


def test_note_to_projection_control_rejected():
    ws = build_workspace()
    n = ws.add_node("Note", {"text": "some note"})
    p = ws.add_node("Projection", {})
    with pytest.raises(IllegalPort):
        ws.add_edge(n, p, CONTROL)


def test_rank_into_group_rejected():
    ws = build_workspace()
    r = ws.add_node("Rank", {})
    g = ws.add_node("Group", {"label": "g", "members": []})
    with pytest.raises(IllegalPort):
        ws.add_edge(r, g, SOURCE)
    with pytest.raises(IllegalPort):
        ws.add_edge(r, g, CONTROL)


def test_note_produces_no_source_edges():
    ws = build_workspace()
    n = ws.add_node("Note", {"text": "note"})
    u = ws.add_node("Union", {})
    with pytest.raises(IllegalPort):
        ws.add_edge(n, u, SOURCE)


def test_duplicate_edge_rejected():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": ids[:2]})
    r = ws.add_node("Rank", {})
    ws.add_edge(g, r, CONTROL)
    with pytest.raises(DuplicateEdge):
        ws.add_edge(g, r, CONTROL)


def test_cycle_rejected():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    a = ws.add_node("Group", {"label": "a", "members": ids[:2]})
    b = ws.add_node("Union", {})
    c = ws.add_node("Union", {})
    ws.add_edge(a, b, SOURCE)
    ws.add_edge(b, c, SOURCE)
    with pytest.raises(WouldCycle):
        ws.add_edge(c, b, SOURCE)
    with pytest.raises(WouldCycle):
        ws.add_edge(b, b, SOURCE)


# --- node computation ------------------------------------------------------------------

def test_document_node_output():
    ws = build_workspace()
    d = ws.ctx.corpus.doc_ids()[0]
    n = ws.add_node("Document", {"doc_id": d})
    assert ws.node_result(n).output.lists == [[(d, None)]]


def test_rank_with_no_source_ranks_whole_corpus():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    d = ws.add_node("Document", {"doc_id": ids[0]})
    r = ws.add_node("Rank", {})
    ws.add_edge(d, r, CONTROL)
    out = ws.node_result(r).output.lists[0]
    assert len(out) == len(ids)
    assert out[0][0] == ids[0]  # self-similarity tops the list


def test_rank_with_source_restricted():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    d = ws.add_node("Document", {"doc_id": ids[0]})
    g = ws.add_node("Group", {"label": "src", "members": ids[5:9]})
    r = ws.add_node("Rank", {})
    ws.add_edge(d, r, CONTROL)
    ws.add_edge(g, r, SOURCE)
    out = ws.node_result(r).output.lists[0]
    assert {x for x, _ in out} == set(ids[5:9])


def test_rank_without_control_errors():
    ws = build_workspace()
    r = ws.add_node("Rank", {})
    result = ws.node_result(r)
    assert result.status == "error"
    assert result.error["error"] == "EmptyControl"


def test_set_op_nodes():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g1 = ws.add_node("Group", {"label": "a", "members": [ids[0], ids[1]]})
    g2 = ws.add_node("Group", {"label": "b", "members": [ids[1], ids[2]]})
    u = ws.add_node("Union", {})
    ws.add_edge(g1, u, SOURCE)
    ws.add_edge(g2, u, SOURCE)
    assert [d for d, _ in ws.node_result(u).output.lists[0]] == [ids[0], ids[1], ids[2]]

    i = ws.add_node("Intersection", {})
    ws.add_edge(g1, i, SOURCE)
    ws.add_edge(g2, i, SOURCE)
    assert [d for d, _ in ws.node_result(i).output.lists[0]] == [ids[1]]

    diff = ws.add_node("Difference", {"left": g1})
    ws.add_edge(g1, diff, SOURCE)
    ws.add_edge(g2, diff, SOURCE)
    assert [d for d, _ in ws.node_result(diff).output.lists[0]] == [ids[0]]


def test_union_with_single_input_errors():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "a", "members": [ids[0]]})
    u = ws.add_node("Union", {})
    ws.add_edge(g, u, SOURCE)
    result = ws.node_result(u)
    assert result.status == "error"
    assert result.error["error"] == "ArityError"


def test_difference_requires_designated_left():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g1 = ws.add_node("Group", {"label": "a", "members": [ids[0]]})
    g2 = ws.add_node("Group", {"label": "b", "members": [ids[1]]})
    d = ws.add_node("Difference", {})
    ws.add_edge(g1, d, SOURCE)
    ws.add_edge(g2, d, SOURCE)
    result = ws.node_result(d)
    assert result.status == "error"
    assert result.error["error"] == "InvalidConfig"


def test_error_poisons_downstream_as_blocked():
    ws = build_workspace()
    r = ws.add_node("Rank", {})  # no control -> error
    u = ws.add_node("Union", {})
    ws.add_edge(r, u, SOURCE)
    result = ws.node_result(u)
    assert result.status == "blocked"
    assert result.blocked_on == r
    assert result.output is None  # no stale data
    assert result.error["error"] == "UpstreamError"


def test_note_vectorized_and_controls_rank():
    ws = build_workspace()
    note = ws.add_node("Note", {"text": "wifi password sharing"})
    r = ws.add_node("Rank", {})
    ws.add_edge(note, r, CONTROL)
    result = ws.node_result(r)
    assert result.status == "ok"
    assert len(result.output.lists[0]) == ws.ctx.corpus.count


def test_empty_note_is_error_state():
    ws = build_workspace()
    note = ws.add_node("Note", {"text": ""})
    result = ws.node_result(note)
    assert result.status == "error"
    assert result.error["error"] == "EmptyText"


# --- group membership ops ---------------------------------------------------------------

def test_group_add_twice_rejected():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": []})
    ws.group_add(g, ids[4])
    with pytest.raises(AlreadyMember):
        ws.group_add(g, ids[4])


def test_group_remove_then_add_moves_to_end():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": ids[:3]})
    ws.group_remove(g, ids[0])
    members = ws.group_add(g, ids[0])
    assert members == [ids[1], ids[2], ids[0]]


def test_group_remove_nonmember():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": [ids[0]]})
    with pytest.raises(NotFound):
        ws.group_remove(g, ids[5])


def test_group_change_flows_into_rank():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": [ids[0]]})
    r = ws.add_node("Rank", {})
    ws.add_edge(g, r, CONTROL)
    before = ws.node_result(r).output.lists[0]
    ws.group_add(g, ids[7])
    after = ws.node_result(r).output.lists[0]
    assert before != after  # mean vector moved


# --- dirty propagation --------------------------------------------------------------------

def test_dirty_propagation_only_downstream():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    s = ws.add_node("Search", {"query": "wifi"})
    g = ws.add_node("Group", {"label": "g", "members": ids[:2]})
    r = ws.add_node("Rank", {})
    ws.add_edge(s, r, SOURCE)
    ws.add_edge(g, r, CONTROL)
    unrelated = ws.add_node("Group", {"label": "u", "members": [ids[9]]})

    stamp_r = ws.node_result(r).output.stamp
    stamp_u = ws.node_result(unrelated).output.stamp
    ws.change_config(s, {"query": "password"})
    assert ws.node_result(r).output.stamp != stamp_r  # recomputed
    assert ws.node_result(unrelated).output.stamp == stamp_u  # untouched


def test_removing_control_edge_recomputes_with_remaining():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    d1 = ws.add_node("Document", {"doc_id": ids[0]})
    d2 = ws.add_node("Document", {"doc_id": ids[1]})
    r = ws.add_node("Rank", {})
    e1 = ws.add_edge(d1, r, CONTROL)
    ws.add_edge(d2, r, CONTROL)
    two = ws.node_result(r).output.lists[0]
    ws.remove_edge(e1)
    one = ws.node_result(r).output.lists[0]
    assert one[0][0] == ids[1]
    assert two != one


def test_position_change_never_touches_outputs():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": ids[:2]})
    stamp = ws.node_result(g).output.stamp
    ws.move_node(g, 120.0, 45.5)
    assert ws.node_result(g).output.stamp == stamp
    assert ws.graph.node(g).position == (120.0, 45.5)


def test_node_deletion_cascades_edges_dirties_downstream():
    ws = build_workspace()
    ids = ws.ctx.corpus.doc_ids()
    g = ws.add_node("Group", {"label": "g", "members": ids[:2]})
    g2 = ws.add_node("Group", {"label": "h", "members": [ids[3]]})
    u = ws.add_node("Union", {})
    ws.add_edge(g, u, SOURCE)
    ws.add_edge(g2, u, SOURCE)
    assert ws.node_result(u).status == "ok"
    ws.remove_node(g)
    assert len(ws.graph.edges) == 1
    result = ws.node_result(u)
    assert result.status == "error"  # union arity now 1
    # the deleted group's documents are unaffected
    assert ws.ctx.corpus.get_document(ids[0]).doc_id == ids[0]


# --- incremental equals from-scratch fuzz ----------------------------------------------------

def _random_mutation(ws, rng: random.Random) -> bool:
    """Apply one random mutation; returns False when rejected by validation."""
    from corpusflow.errors import EngineError

    ids = ws.ctx.corpus.doc_ids()
    nodes = list(ws.graph.nodes)
    try:
        roll = rng.random()
        if roll < 0.3 or not nodes:
            kind = rng.choice(["Group", "Search", "Note", "Rank", "Union", "Intersection", "Difference", "Document"])
            config = {
                "Group": {"label": "g", "members": rng.sample(ids, rng.randint(0, 4))},
                "Search": {"query": rng.choice(["wifi", "password", "netflix OR wifi", "mom snoop*"])},
                "Note": {"text": rng.choice(["", "snooping mom", "account sharing"])},
                "Rank": {"max_results": rng.choice([5, 20, 1000])},
                "Union": {},
                "Intersection": {},
                "Difference": {},
                "Document": {"doc_id": rng.choice(ids)},
            }[kind]
            ws.add_node(kind, config)
        elif roll < 0.55:
            frm, to = rng.choice(nodes), rng.choice(nodes)
            port = rng.choice([SOURCE, CONTROL])
            ws.add_edge(frm, to, port)
        elif roll < 0.65:
            ws.remove_edge(rng.choice(list(ws.graph.edges)) if ws.graph.edges else "none")
        elif roll < 0.75:
            ws.remove_node(rng.choice(nodes))
        elif roll < 0.85:
            node = ws.graph.node(rng.choice(nodes))
            if node.kind == "Group":
                ws.group_add(node.node_id, rng.choice(ids))
            elif node.kind == "Search":
                ws.change_config(node.node_id, {"query": rng.choice(["bill", "privacy", "phone"])})
            elif node.kind == "Difference":
                sources = [e.from_node for e in ws.graph.in_edges(node.node_id) if e.port == SOURCE]
                ws.change_config(node.node_id, {"left": rng.choice(sources) if sources else None})
            else:
                ws.move_node(node.node_id, rng.uniform(-50, 50), rng.uniform(-50, 50))
        else:
            node = ws.graph.node(rng.choice(nodes))
            if node.kind == "Group" and node.config.get("members"):
                ws.group_remove(node.node_id, rng.choice(node.config["members"]))
            else:
                ws.move_node(node.node_id, rng.uniform(-50, 50), rng.uniform(-50, 50))
        return True
    except EngineError:
        return False


def _outputs_by_node(ws):
    return {
        nid: (r.status, r.output.lists if r.output else None)
        for nid, r in ws.graph.results.items()
    }


def test_incremental_recompute_equals_from_scratch_fuzz():
    ws = build_workspace(n_docs=25)
    rng = random.Random(424242)
    for step in range(300):
        _random_mutation(ws, rng)
        incremental = _outputs_by_node(ws)
        # from scratch: mark everything dirty and recompute on the same graph
        for nid in ws.graph.nodes:
            ws.graph.dirty.add(nid)
        ws.graph.recompute(ws.ctx, len(ws.log), ws.seed)
        scratch = _outputs_by_node(ws)
        assert incremental == scratch, f"divergence after step {step}"


def test_dag_safety_fuzz_no_cycle_ever_committed():
    ws = build_workspace(n_docs=15)
    rng = random.Random(777)
    ids = ws.ctx.corpus.doc_ids()
    node_ids = [ws.add_node("Group", {"label": f"g{i}", "members": [ids[i]]}) for i in range(3)]
    node_ids += [ws.add_node(k, {}) for k in ("Union", "Intersection", "Rank", "Union", "Intersection")]
    for step in range(1000):
        frm, to = rng.choice(node_ids), rng.choice(node_ids)
        port = rng.choice([SOURCE, CONTROL])
        before = ws.snapshot_bytes()
        try:
            ws.add_edge(frm, to, port)
        except WouldCycle:
            assert ws.snapshot_bytes() == before, f"WouldCycle mutated state at step {step}"
        except Exception:
            pass
        # committed graph must stay topologically sortable
        ws.graph.topological_order()
        if ws.graph.edges and rng.random() < 0.4:
            ws.remove_edge(rng.choice(list(ws.graph.edges)))
