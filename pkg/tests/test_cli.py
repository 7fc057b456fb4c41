"""CLI subcommands and headless workflow runs."""

from __future__ import annotations

import json
import socket

import pytest
from click.testing import CliRunner

from corpusflow.cli import main
from corpusflow.workflow import load_workflow, run_workflow
from corpusflow.errors import SchemaError

from _synth import synthetic_records


@pytest.fixture()
def data_env(tmp_path):
    records = synthetic_records(60, seed=41)
    src = tmp_path / "data.jsonl"
    src.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return tmp_path, src, records


def _cli(tmp_path, *args):
    runner = CliRunner()
    return runner.invoke(main, ["--data-dir", str(tmp_path / "data"), *args], catch_exceptions=False)


def test_ingest_prints_summary(data_env):
    tmp_path, src, records = data_env
    result = _cli(tmp_path, "ingest", str(src), "--corpus", "c1",
                  "--body-field", "body", "--title-field", "title", "--id-field", "id")
    assert result.exit_code == 0, result.output
    assert "ingested 60 documents, skipped 0" in result.output
    assert (tmp_path / "data" / "corpora" / "c1" / "docs.jsonl").exists()


def test_ingest_missing_file_exit_1(tmp_path):
    runner = CliRunner()
    result = runner.invoke(main, ["ingest", str(tmp_path / "nope.jsonl"), "--corpus", "c", "--body-field", "b"])
    assert result.exit_code != 0


def test_ingest_lenient_counts_skips(data_env):
    tmp_path, src, _ = data_env
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "title": "", "body": "ok"}\nnot json\n{"id": "b"}\n', encoding="utf-8")
    result = _cli(tmp_path, "ingest", str(bad), "--corpus", "c2",
                  "--body-field", "body", "--title-field", "title", "--id-field", "id", "--lenient")
    assert result.exit_code == 0
    assert "ingested 1 documents, skipped 2" in result.output


def test_ingest_duplicate_corpus_json_errors(data_env):
    tmp_path, src, _ = data_env
    assert _cli(tmp_path, "ingest", str(src), "--corpus", "c1", "--body-field", "body",
                "--title-field", "title", "--id-field", "id").exit_code == 0
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["--data-dir", str(tmp_path / "data"), "--json-errors", "ingest", str(src),
         "--corpus", "c1", "--body-field", "body", "--id-field", "id"],
    )
    assert result.exit_code == 1
    err = json.loads(result.output.strip().splitlines()[-1])
    assert err["error"] == "EngineError"


def test_index_and_embed(data_env):
    tmp_path, src, _ = data_env
    _cli(tmp_path, "ingest", str(src), "--corpus", "c1", "--body-field", "body",
         "--title-field", "title", "--id-field", "id")
    r = _cli(tmp_path, "embed", "--corpus", "c1")
    assert r.exit_code == 0 and "embedded 60 documents" in r.output
    r = _cli(tmp_path, "index", "--corpus", "c1")
    assert r.exit_code == 0 and "indexed 60 documents" in r.output
    corpus_dir = tmp_path / "data" / "corpora" / "c1"
    assert (corpus_dir / "vectors.telv").exists()
    assert (corpus_dir / "index.bin").exists()


def test_export_json_and_csv(data_env):
    tmp_path, src, records = data_env
    _cli(tmp_path, "ingest", str(src), "--corpus", "c1", "--body-field", "body",
         "--title-field", "title", "--id-field", "id")
    out = tmp_path / "out.json"
    r = _cli(tmp_path, "export", "--corpus", "c1", "--ids", "d1,d3", "-o", str(out))
    assert r.exit_code == 0
    docs = json.loads(out.read_text())
    assert [d["doc_id"] for d in docs] == ["d1", "d3"]
    r = _cli(tmp_path, "export", "--corpus", "c1", "--format", "csv", "--ids", "d2")
    assert r.exit_code == 0
    assert r.output.splitlines()[0] == "doc_id,title,body"


# --- workflow files -------------------------------------------------------------------

FIG7_WORKFLOW = {
    "workspace_id": "headless-demo",
    "seed": 11,
    "nodes": [
        {"node_id": "search1", "kind": "Search", "config": {"query": "wifi OR password OR netflix"}, "position": [0, 0]},
        {"node_id": "group1", "kind": "Group", "config": {"label": "seed docs", "members": ["d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8", "d9", "d10"]}, "position": [0, 100]},
        {"node_id": "rank1", "kind": "Rank", "config": {"max_results": 25}, "position": [200, 0]},
        {"node_id": "proj1", "kind": "Projection", "config": {"n_neighbors": 6, "epochs": 30, "min_cluster_size": 4}, "position": [200, 200]},
    ],
    "edges": [
        {"from": "search1", "to": "rank1", "port": "source"},
        {"from": "group1", "to": "rank1", "port": "control"},
        {"from": "search1", "to": "proj1", "port": "source"},
        {"from": "group1", "to": "proj1", "port": "control"},
    ],
    "outputs": ["rank1", "proj1"],
}


def _prepare_corpus(tmp_path, src):
    _cli(tmp_path, "ingest", str(src), "--corpus", "c1", "--body-field", "body",
         "--title-field", "title", "--id-field", "id")
    _cli(tmp_path, "embed", "--corpus", "c1")
    _cli(tmp_path, "index", "--corpus", "c1")


def test_run_workflow_writes_outputs_and_manifest(data_env):
    tmp_path, src, _ = data_env
    _prepare_corpus(tmp_path, src)
    wf = tmp_path / "wf.json"
    wf.write_text(json.dumps(FIG7_WORKFLOW), encoding="utf-8")
    out_dir = tmp_path / "out"
    r = _cli(tmp_path, "run", str(wf), "--corpus", "c1", "--out", str(out_dir), "--csv")
    assert r.exit_code == 0, r.output
    ranked = json.loads((out_dir / "rank1.json").read_text())
    assert len(ranked["lists"][0]) == 25
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["corpus_hash"].startswith("sha256:")
    assert manifest["provider_id"] == "reference-256"
    assert manifest["outputs"] == {"proj1": "proj1.json", "rank1": "rank1.json"}
    assert all("ts" not in e for e in manifest["events"])
    assert (out_dir / "rank1.csv").exists()
    assert (out_dir / "proj1.coords.csv").exists()


def test_run_twice_byte_identical_modulo_wall_time(data_env):
    tmp_path, src, _ = data_env
    _prepare_corpus(tmp_path, src)
    wf = tmp_path / "wf.json"
    wf.write_text(json.dumps(FIG7_WORKFLOW), encoding="utf-8")
    out1, out2 = tmp_path / "out1", tmp_path / "out2"
    assert _cli(tmp_path, "run", str(wf), "--corpus", "c1", "--out", str(out1)).exit_code == 0
    assert _cli(tmp_path, "run", str(wf), "--corpus", "c1", "--out", str(out2)).exit_code == 0
    for name in ("rank1.json", "proj1.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def strip_wall_time(path):
        data = json.loads(path.read_text())
        data.pop("wall_time")
        return json.dumps(data, sort_keys=True)

    assert strip_wall_time(out1 / "manifest.json") == strip_wall_time(out2 / "manifest.json")


def test_run_refuses_nonempty_out_dir_without_force(data_env):
    tmp_path, src, _ = data_env
    _prepare_corpus(tmp_path, src)
    wf = tmp_path / "wf.json"
    wf.write_text(json.dumps(FIG7_WORKFLOW), encoding="utf-8")
    out_dir = tmp_path / "out"
    out_dir.mkdir()
    (out_dir / "precious.txt").write_text("do not clobber")
    runner = CliRunner()
    r = runner.invoke(main, ["--data-dir", str(tmp_path / "data"), "run", str(wf),
                             "--corpus", "c1", "--out", str(out_dir)])
    assert r.exit_code == 1
    r = _cli(tmp_path, "run", str(wf), "--corpus", "c1", "--out", str(out_dir), "--force")
    assert r.exit_code == 0


def test_workflow_unknown_output_schema_error(data_env):
    tmp_path, src, _ = data_env
    wf = dict(FIG7_WORKFLOW, outputs=["ghost"])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(wf), encoding="utf-8")
    with pytest.raises(SchemaError):
        load_workflow(path)
    runner = CliRunner()
    _prepare_corpus(tmp_path, src)
    r = runner.invoke(main, ["--data-dir", str(tmp_path / "data"), "--json-errors", "run",
                             str(path), "--corpus", "c1", "--out", str(tmp_path / "o")])
    assert r.exit_code == 1
    err = json.loads(r.output.strip().splitlines()[-1])
    assert err["error"] == "SchemaError"


def test_workflow_illegal_edge_schema_error(data_env):
    tmp_path, src, _ = data_env
    _prepare_corpus(tmp_path, src)
    wf = {
        "nodes": [
            {"node_id": "a", "kind": "Note", "config": {"text": "x"}},
            {"node_id": "b", "kind": "Projection", "config": {}},
        ],
        "edges": [{"from": "a", "to": "b", "port": "control"}],
        "outputs": [],
    }
    path = tmp_path / "bad2.json"
    path.write_text(json.dumps(wf), encoding="utf-8")
    with pytest.raises(SchemaError):
        run_workflow(path, tmp_path / "data" / "corpora" / "c1", tmp_path / "o2")


def test_serve_port_in_use_exit_1(tmp_path):
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        runner = CliRunner()
        r = runner.invoke(main, ["--data-dir", str(tmp_path), "serve", "--port", str(port)])
        assert r.exit_code == 1
        assert "cannot listen" in r.output
    finally:
        blocker.close()


def test_serve_ready_line_then_clean_interrupt(tmp_path):
    import signal
    import subprocess
    import sys as _sys
    import time as _time

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    proc = subprocess.Popen(
        [_sys.executable, "-m", "corpusflow.cli", "--data-dir", str(tmp_path / "data"),
         "serve", "--port", str(port)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    try:
        line = proc.stdout.readline()
        assert f"listening on 127.0.0.1:{port}" in line
        deadline = _time.time() + 10
        import httpx

        while _time.time() < deadline:
            try:
                r = httpx.post(f"http://127.0.0.1:{port}/v1/sessions", json={"actor_id": "x"}, timeout=1.0)
                if r.status_code == 200:
                    break
            except httpx.HTTPError:
                _time.sleep(0.1)
        else:
            raise AssertionError("server never answered")
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=15) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
