"""The ks command line: server launcher plus a client for every protocol
operation.

Exit codes: 0 success, 1 usage error, 2 network failure, 3 server-reported
error (4xx/5xx). Endpoint and token default from KS_ENDPOINT and KS_TOKEN.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from knowspace import identifiers
from knowspace.client import KnowledgeSpaceClient, NetworkError, ServerError
from knowspace.query import term_json
from knowspace.rdf import Graph, parse_ntriples, serialize_ntriples, term_text
from knowspace.server import KnowledgeSpaceServer, ServerConfig


@dataclass
class CliConfig:
    endpoint: str
    token: str | None
    output: str | None  # ntriples | json | table; None picks per-command default

    def client(self) -> KnowledgeSpaceClient:
        return KnowledgeSpaceClient(self.endpoint, token=self.token)


@click.group()
@click.option("--endpoint", envvar="KS_ENDPOINT", default="http://127.0.0.1:8080",
              show_default=True, help="Server base URL.")
@click.option("--token", envvar="KS_TOKEN", default=None, help="Bearer token.")
@click.option("--output", type=click.Choice(["ntriples", "json", "table"]), default=None,
              help="Output format (default depends on the command).")
@click.pass_context
def cli(ctx: click.Context, endpoint: str, token: str | None, output: str | None) -> None:
    """Knowledge-space client and server."""
    ctx.obj = CliConfig(endpoint=endpoint.rstrip("/"), token=token, output=output)


@cli.command()
@click.option("--addr", default="127.0.0.1:8080", show_default=True, help="host:port to listen on.")
@click.option("--store", "store_dir", type=click.Path(file_okay=False), default=None,
              help="Store directory (in-memory when omitted).")
@click.option("--token", default=None, envvar="KS_TOKEN", help="Require this bearer token.")
@click.option("--rules", "rules_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Rule file enabling the inference wrapper.")
@click.option("--geo", is_flag=True, help="Enable geospatial containment derivation.")
@click.option("--fulltext", is_flag=True, help="Enable the full-text index and /search.")
@click.option("--acl", is_flag=True, help="Enable hierarchical access control.")
@click.option("--auth-reads", is_flag=True, help="Require the token on reads too.")
@click.option("--inferred-mget", is_flag=True, help="Include derived triples in MGET by default.")
def serve(addr: str, store_dir: str | None, token: str | None, rules_path: str | None,
          geo: bool, fulltext: bool, acl: bool, auth_reads: bool, inferred_mget: bool) -> None:
    """Run the protocol server over the configured context stack."""
    host, _, port_text = addr.partition(":")
    try:
        port = int(port_text or "8080")
    except ValueError:
        raise click.UsageError(f"malformed --addr {addr!r}") from None
    config = ServerConfig(
        host=host or "127.0.0.1",
        port=port,
        store_dir=store_dir,
        token=token,
        require_auth_reads=auth_reads,
        principals={token: token} if token else {},
        rules_path=rules_path,
        enable_geo=geo,
        enable_fulltext=fulltext,
        enable_acl=acl,
        mget_inferred_default=inferred_mget,
    )
    server = KnowledgeSpaceServer(config)
    click.echo(f"serving on {server.endpoint}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def _print_graph(g: Graph, output: str | None) -> None:
    if output == "json":
        records = [
            {"subject": term_json(t.subject), "predicate": term_json(t.predicate),
             "object": term_json(t.object)}
            for t in sorted(g, key=lambda t: (term_text(t.subject), term_text(t.predicate), term_text(t.object)))
        ]
        click.echo(json.dumps(records, indent=2))
    elif output == "table":
        rows = sorted(
            (term_text(t.subject), term_text(t.predicate), term_text(t.object)) for t in g
        )
        _print_table(["subject", "predicate", "object"], rows)
    else:
        click.echo(serialize_ntriples(g), nl=False)


def _print_table(headers: list[str], rows: list[tuple[str, ...]]) -> None:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    click.echo(line.rstrip())
    click.echo("  ".join("-" * w for w in widths))
    for row in rows:
        click.echo("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


@cli.command()
@click.argument("uri")
@click.option("--inferred", is_flag=True, help="Include rule-derived statements.")
@click.pass_obj
def describe(config: CliConfig, uri: str, inferred: bool) -> None:
    """Print the stored description of URI (MGET)."""
    _print_graph(config.client().describe(uri, inferred=inferred), config.output)


@cli.command(name="assert")
@click.option("-f", "--file", "path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="N-Triples file to assert.")
@click.pass_obj
def assert_cmd(config: CliConfig, path: str) -> None:
    """Assert all triples from an N-Triples file (MPUT)."""
    graph = parse_ntriples(Path(path).read_text(encoding="utf-8"))
    config.client().assert_triples(graph)


@cli.command()
@click.option("-f", "--file", "path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="N-Triples file of exact triples to retract.")
@click.option("--uri", default=None, help="Retract every triple with this subject.")
@click.pass_obj
def retract(config: CliConfig, path: str | None, uri: str | None) -> None:
    """Retract triples by file (exact) or by subject URI (MDELETE)."""
    if (path is None) == (uri is None):
        raise click.UsageError("provide exactly one of -f/--file or --uri")
    client = config.client()
    if path is not None:
        client.retract_triples(parse_ntriples(Path(path).read_text(encoding="utf-8")))
    else:
        client.retract_subject(uri)


@cli.command()
@click.option("-f", "--file", "path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="File containing the SELECT query.")
@click.pass_obj
def query(config: CliConfig, path: str) -> None:
    """Evaluate a SELECT query on the server (POST /query)."""
    results = config.client().query(Path(path).read_text(encoding="utf-8"))
    if config.output == "json":
        click.echo(json.dumps(results.to_json(), indent=2))
    else:
        rows = [
            tuple(term_text(row[v]) for v in results.variables) for row in results.rows
        ]
        _print_table([f"?{v}" for v in results.variables], rows)


@cli.group()
def blob() -> None:
    """Binary content operations."""


@blob.command(name="put")
@click.argument("uri")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--type", "content_type", default="application/octet-stream", show_default=True,
              help="Declared media type.")
@click.pass_obj
def blob_put(config: CliConfig, uri: str, file: str, content_type: str) -> None:
    """Upload FILE as the blob identified by URI."""
    config.client().blob_put(uri, Path(file).read_bytes(), content_type)


@blob.command(name="get")
@click.argument("uri")
@click.option("-o", "--output", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write bytes here instead of stdout.")
@click.pass_obj
def blob_get(config: CliConfig, uri: str, out_path: str | None) -> None:
    """Download the blob identified by URI."""
    data, _ = config.client().blob_get(uri)
    if out_path is None:
        sys.stdout.buffer.write(data)
    else:
        Path(out_path).write_bytes(data)


@blob.command(name="rm")
@click.argument("uri")
@click.pass_obj
def blob_rm(config: CliConfig, uri: str) -> None:
    """Delete the blob identified by URI."""
    config.client().blob_delete(uri)


@cli.command()
@click.option("--curator", required=True, help="Curator component of the new identifier.")
@click.option("--entropy-bits", default=40, show_default=True)
def mint(curator: str, entropy_bits: int) -> None:
    """Mint a new persistent identifier locally and print it."""
    try:
        click.echo(str(identifiers.mint(curator, entropy_bits)))
    except identifiers.KnowledgeIdError as e:
        raise click.UsageError(str(e)) from None


@cli.command()
@click.argument("terms", nargs=-1, required=True)
@click.pass_obj
def search(config: CliConfig, terms: tuple[str, ...]) -> None:
    """Full-text search; prints matching subject IRIs (POST /search)."""
    found = config.client().search(list(terms))
    if config.output == "json":
        click.echo(json.dumps(found, indent=2))
    else:
        for uri in found:
            click.echo(uri)


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping failures onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except NetworkError as e:
        click.echo(f"network error: {e}", err=True)
        return 2
    except ServerError as e:
        click.echo(f"server error: {e}", err=True)
        return 3
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
