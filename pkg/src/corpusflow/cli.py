"""Operator and headless-research command line.

Thin wrappers over the core package: ingest/index/embed prepare a corpus
directory, run executes a workflow file hermetically, serve starts the HTTP
service, export writes curated documents. Every failure path exits nonzero;
with --json-errors the error is machine-parseable JSON on stderr.
"""

from __future__ import annotations

import json
import socket
import sys
import time
from pathlib import Path

import click

from .corpus import Corpus, FieldMap, read_csv, read_jsonl
from .embedding import ReferenceProvider, RemoteProvider
from .errors import EngineError
from .query import build_index
from .workflow import run_workflow


class Settings:
    def __init__(self, data_dir: str, seed: int, provider_url: str | None, json_errors: bool):
        self.data_dir = Path(data_dir)
        self.seed = seed
        self.provider_url = provider_url
        self.json_errors = json_errors

    def corpus_dir(self, name: str) -> Path:
        return self.data_dir / "corpora" / name

    def provider(self, dim: int = 256):
        if self.provider_url:
            return RemoteProvider(self.provider_url, dim=dim)
        return ReferenceProvider(dim=dim)


pass_settings = click.make_pass_decorator(Settings)


def _fail(settings: Settings, exc: Exception) -> None:
    if settings.json_errors:
        if isinstance(exc, EngineError):
            payload = exc.to_dict()
        else:
            payload = {"error": type(exc).__name__, "message": str(exc)}
        click.echo(json.dumps(payload, sort_keys=True), err=True)
    else:
        click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
@click.option("--data-dir", default="./data", show_default=True, help="Root directory for corpora and workspaces.")
@click.option("--seed", default=0, show_default=True, type=int, help="Workspace seed for deterministic runs.")
@click.option("--provider-url", default=None, help="Remote embedding endpoint (default: deterministic reference provider).")
@click.option("--json-errors", is_flag=True, help="Emit machine-parseable JSON errors on stderr.")
@click.pass_context
def main(ctx, data_dir, seed, provider_url, json_errors):
    """corpusflow: thematic curation workspaces over embedded text corpora."""
    ctx.obj = Settings(data_dir, seed, provider_url, json_errors)


@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_name", required=True, help="Corpus name under the data dir.")
@click.option("--body-field", required=True)
@click.option("--title-field", default=None)
@click.option("--id-field", default=None)
@click.option("--metadata-field", "metadata_fields", multiple=True)
@click.option("--lenient", is_flag=True, help="Skip malformed records instead of failing.")
@pass_settings
def ingest(settings, input_file, corpus_name, body_field, title_field, id_field, metadata_fields, lenient):
    """Ingest line-delimited JSON or CSV records into a new corpus."""
    try:
        field_map = FieldMap(
            body_field=body_field,
            title_field=title_field,
            id_field=id_field,
            metadata_fields=tuple(metadata_fields),
        )
        directory = settings.corpus_dir(corpus_name)
        if directory.exists():
            raise EngineError(f"corpus {corpus_name!r} already exists at {directory}")
        corpus = Corpus(corpus_name, field_map)
        stream = read_csv(input_file) if input_file.endswith(".csv") else read_jsonl(input_file)
        started = time.time()
        result = corpus.ingest(stream, lenient=lenient)
        corpus.save(directory)
        elapsed = time.time() - started
        click.echo(f"ingested {result.count} documents, skipped {result.skipped} ({elapsed:.1f}s)")
    except Exception as exc:
        _fail(settings, exc)


@main.command()
@click.option("--corpus", "corpus_name", required=True)
@pass_settings
def index(settings, corpus_name):
    """Build the inverted index (index.bin) for a corpus."""
    try:
        directory = settings.corpus_dir(corpus_name)
        corpus = Corpus.load(directory)
        idx = build_index(corpus)
        idx.save(directory / "index.bin")
        click.echo(f"indexed {corpus.count} documents, {len(idx.postings)} tokens")
    except Exception as exc:
        _fail(settings, exc)


@main.command()
@click.option("--corpus", "corpus_name", required=True)
@click.option("--dim", default=256, show_default=True, type=int)
@pass_settings
def embed(settings, corpus_name, dim):
    """Compute document vectors (vectors.telv) for a corpus."""
    try:
        directory = settings.corpus_dir(corpus_name)
        corpus = Corpus.load(directory)
        provider = settings.provider(dim=dim)
        started = time.time()
        store = provider.embed_corpus(corpus)
        store.save(directory / "vectors.telv")
        click.echo(f"embedded {corpus.count} documents with {provider.provider_id} ({time.time() - started:.1f}s)")
    except Exception as exc:
        _fail(settings, exc)


@main.command()
@click.argument("workflow_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_name", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--csv", "write_csv", is_flag=True, help="Also write CSV exports next to the JSON outputs.")
@click.option("--force", is_flag=True, help="Allow writing into a non-empty output directory.")
@pass_settings
def run(settings, workflow_file, corpus_name, out_dir, write_csv, force):
    """Execute a workflow file headlessly and export its named outputs."""
    try:
        manifest = run_workflow(
            workflow_file,
            settings.corpus_dir(corpus_name),
            out_dir,
            seed=settings.seed,
            provider_url=settings.provider_url,
            write_csv=write_csv,
            force=force,
        )
        click.echo(f"wrote {len(manifest['outputs'])} outputs and manifest.json to {out_dir}")
    except Exception as exc:
        _fail(settings, exc)


@main.command()
@click.option("--corpus", "corpus_name", required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--ids", "ids_arg", default=None, help="Comma-separated document ids.")
@click.option("--ids-file", default=None, type=click.Path(exists=True, dir_okay=False), help="File with one doc id per line.")
@click.option("-o", "--output", "output_path", default=None, type=click.Path(dir_okay=False))
@pass_settings
def export(settings, corpus_name, fmt, ids_arg, ids_file, output_path):
    """Export documents (a curated group, a ranked list) as JSON or CSV."""
    try:
        if (ids_arg is None) == (ids_file is None):
            raise EngineError("provide exactly one of --ids or --ids-file")
        if ids_arg is not None:
            doc_ids = [d for d in ids_arg.split(",") if d]
        else:
            doc_ids = [line.strip() for line in Path(ids_file).read_text(encoding="utf-8").splitlines() if line.strip()]
        corpus = Corpus.load(settings.corpus_dir(corpus_name))
        payload = corpus.export_docs(doc_ids, fmt)
        if output_path:
            Path(output_path).write_bytes(payload)
            click.echo(f"exported {len(doc_ids)} documents to {output_path}")
        else:
            sys.stdout.buffer.write(payload)
    except Exception as exc:
        _fail(settings, exc)


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@pass_settings
def serve(settings, config_path, host, port):
    """Start the workspace server (config file + TELE_* environment overrides)."""
    try:
        from .service import ServerConfig, create_app

        config = ServerConfig.load(config_path)
        if host is not None:
            config.host = host
        if port is not None:
            config.port = port
        if settings.provider_url:
            config.provider_url = settings.provider_url
        if settings.data_dir != Path("./data"):
            config.data_dir = str(settings.data_dir)

        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            probe.bind((config.host, config.port))
        except OSError as exc:
            raise EngineError(f"cannot listen on {config.host}:{config.port}: {exc}") from exc
        finally:
            probe.close()

        app = create_app(config)
        click.echo(f"listening on {config.host}:{config.port}")
        import uvicorn

        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    except EngineError as exc:
        _fail(settings, exc)


if __name__ == "__main__":
    main()
