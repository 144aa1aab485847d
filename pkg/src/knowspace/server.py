"""HTTP protocol server: URIQA-style metadata methods over a Context stack.

Endpoints (all metadata bodies are UTF-8 N-Triples):

    MGET    /meta?uri=<pct>[&inferred=true]  -> 200 n-triples | 404 | 400 | 401
    MPUT    /meta  (n-triples body)          -> 204 | 400 | 401 | 403
    MDELETE /meta?uri=<pct> | (body)         -> 204 | 400 | 401 | 403
    GET|PUT|DELETE /blob?uri=<pct>           -> 200/204/404
    POST    /query (application/sparql-query)-> 200 sparql-results+json | 400
    POST    /search (JSON term array)        -> 200 JSON IRI array
    GET     /kid/<curator>/<baseId>          -> 303 to /meta?uri=... | 404
    POST    /meta + X-KS-Method header       -> same as the custom methods

Authentication is a bearer token; TLS termination is left to a fronting
proxy. Clients that cannot emit nonstandard HTTP methods use the POST
override, which behaves byte-identically.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, quote, urlsplit

from knowspace import vocab
from knowspace.acl import AclContext
from knowspace.contexts import Context, FileContext, MemoryContext
from knowspace.identifiers import KnowledgeId, KnowledgeIdError
from knowspace.inference import FullTextContext, GeoContext, RuleContext, parse_rules
from knowspace.operations import (
    NOT_FOUND,
    UNSUPPORTED,
    BlobDeleteOp,
    BlobReadOp,
    BlobWriteOp,
    MetadataMatchOp,
    MetadataWriteOp,
    TextSearchOp,
)
from knowspace.query import QueryEvaluationError, QueryParseError, evaluate, parse_query
from knowspace.rdf import (
    ANY,
    BlankNode,
    Graph,
    IriRef,
    Literal,
    NTriplesParseError,
    Triple,
    TriplePattern,
    parse_ntriples,
    serialize_ntriples,
)

logger = logging.getLogger(__name__)

NTRIPLES_TYPE = "application/n-triples"
SPARQL_QUERY_TYPE = "application/sparql-query"
SPARQL_RESULTS_TYPE = "application/sparql-results+json"
DEFAULT_BLOB_TYPE = "application/octet-stream"


@dataclass
class ServerConfig:
    """Listen address, store location, auth, and the context-stack recipe."""

    host: str = "127.0.0.1"
    port: int = 8080
    store_dir: str | Path | None = None  # None keeps everything in memory
    token: str | None = None
    require_auth_reads: bool = False
    principals: dict[str, str] = field(default_factory=dict)
    rules_path: str | Path | None = None
    enable_geo: bool = False
    enable_fulltext: bool = False
    enable_acl: bool = False
    mget_inferred_default: bool = False


def build_context(config: ServerConfig) -> Context:
    """Compose the configured wrapper stack over the base store.

    Order, innermost out: store, full-text index, geo derivation, rules,
    access control. ACL is outermost so policy filters derived statements too.
    """
    ctx: Context = FileContext(config.store_dir) if config.store_dir else MemoryContext()
    if config.enable_fulltext:
        ctx = FullTextContext(ctx)
    if config.enable_geo:
        ctx = GeoContext(ctx)
    if config.rules_path:
        rules = parse_rules(Path(config.rules_path).read_text(encoding="utf-8"))
        ctx = RuleContext(ctx, rules)
    if config.enable_acl:
        ctx = AclContext(ctx)
    return ctx


class _OpFailed(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


def concise_description(
    ctx: Context, uri: IriRef, include_derived: bool, principal: str | None = None
) -> Graph:
    """Subject triples of uri plus, recursively, the subject triples of blank
    nodes reachable as objects of included triples."""
    g = Graph()
    queue: list = [uri]
    seen: set = {uri}
    while queue:
        subject = queue.pop(0)
        op = MetadataMatchOp(TriplePattern(subject, ANY, ANY), include_derived=include_derived)
        op.principal = principal
        ctx.perform(op)
        if op.failed:
            raise _OpFailed(op.failure_reason or "match failed")
        for t in op.results:
            g.add(t)
            if isinstance(t.object, BlankNode) and t.object not in seen:
                seen.add(t.object)
                queue.append(t.object)
    return g


def _relabel_blanks(g: Graph) -> set[Triple]:
    """Give incoming blank nodes store-unique labels so documents from
    different clients never collide."""
    mapping: dict[BlankNode, BlankNode] = {}

    def fresh(node: BlankNode) -> BlankNode:
        if node not in mapping:
            mapping[node] = BlankNode("b" + uuid.uuid4().hex)
        return mapping[node]

    out = set()
    for t in g:
        s = fresh(t.subject) if isinstance(t.subject, BlankNode) else t.subject
        o = fresh(t.object) if isinstance(t.object, BlankNode) else t.object
        out.add(Triple(s, t.predicate, o))
    return out


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "KnowledgeSpaceServer"

    # -- plumbing ---------------------------------------------------------

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        logger.debug("%s - %s", self.address_string(), format % args)

    def _send(self, status: int, body: bytes = b"", content_type: str = "text/plain; charset=utf-8",
              headers: dict[str, str] | None = None) -> None:
        self.send_response(status)
        for k, v in (headers or {}).items():
            self.send_header(k, v)
        if body or status not in (204, 303):
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _text(self, status: int, message: str) -> None:
        self._send(status, (message.rstrip("\n") + "\n").encode("utf-8"))

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length > 0 else b""

    def _params(self) -> dict[str, str]:
        parsed = parse_qs(urlsplit(self.path).query, keep_blank_values=True)
        return {k: v[0] for k, v in parsed.items()}

    @property
    def _route(self) -> str:
        return urlsplit(self.path).path

    def _presented_token(self) -> str | None:
        header = self.headers.get("Authorization") or ""
        if header.startswith("Bearer "):
            return header[len("Bearer ") :]
        return None

    def _authorize(self, mutating: bool) -> tuple[bool, str | None]:
        config = self.server.config
        presented = self._presented_token()
        principal = config.principals.get(presented) if presented is not None else None
        if config.token is not None and (mutating or config.require_auth_reads):
            if presented != config.token:
                return False, principal
        return True, principal

    def _uri_param(self) -> IriRef | None:
        raw = self._params().get("uri")
        if raw is None:
            return None
        try:
            return IriRef(raw)
        except ValueError:
            return None

    def _guarded(self, handler) -> None:
        try:
            handler()
        except _OpFailed as e:
            self._text(500, f"operation failed: {e.reason}")
        except BrokenPipeError:
            raise
        except Exception as e:  # noqa: BLE001 - last-resort diagnostic
            logger.exception("unhandled error serving %s %s", self.command, self.path)
            self._text(500, f"internal error: {type(e).__name__}: {e}")

    # -- method dispatch ---------------------------------------------------

    def do_MGET(self) -> None:  # noqa: N802
        if self._route != "/meta":
            return self._text(404, f"unknown path {self._route}")
        self._guarded(self._handle_mget)

    def do_MPUT(self) -> None:  # noqa: N802
        if self._route != "/meta":
            return self._text(404, f"unknown path {self._route}")
        self._guarded(self._handle_mput)

    def do_MDELETE(self) -> None:  # noqa: N802
        if self._route != "/meta":
            return self._text(404, f"unknown path {self._route}")
        self._guarded(self._handle_mdelete)

    def do_GET(self) -> None:  # noqa: N802
        if self._route == "/blob":
            self._guarded(self._handle_blob_get)
        elif self._route.startswith("/kid/"):
            self._guarded(self._handle_kid)
        else:
            self._text(404, f"unknown path {self._route}")

    def do_PUT(self) -> None:  # noqa: N802
        if self._route != "/blob":
            return self._text(404, f"unknown path {self._route}")
        self._guarded(self._handle_blob_put)

    def do_DELETE(self) -> None:  # noqa: N802
        if self._route != "/blob":
            return self._text(404, f"unknown path {self._route}")
        self._guarded(self._handle_blob_delete)

    def do_POST(self) -> None:  # noqa: N802
        route = self._route
        if route == "/meta":
            method = self.headers.get("X-KS-Method", "")
            dispatch = {
                "MGET": self._handle_mget,
                "MPUT": self._handle_mput,
                "MDELETE": self._handle_mdelete,
            }.get(method)
            if dispatch is None:
                return self._text(400, f"X-KS-Method must be MGET, MPUT, or MDELETE (got {method!r})")
            self._guarded(dispatch)
        elif route == "/query":
            self._guarded(self._handle_query)
        elif route == "/search":
            self._guarded(self._handle_search)
        else:
            self._text(404, f"unknown path {route}")

    # -- handlers ----------------------------------------------------------

    def _handle_mget(self) -> None:
        ok, principal = self._authorize(mutating=False)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        self._body()  # drain any override-form body
        uri = self._uri_param()
        if uri is None:
            return self._text(400, "missing or malformed 'uri' parameter")
        inferred = self._params().get("inferred")
        include_derived = (
            inferred in ("true", "1")
            if inferred is not None
            else self.server.config.mget_inferred_default
        )
        description = concise_description(self.server.context, uri, include_derived, principal)
        if not len(description):
            return self._text(404, f"no statements about {uri}")
        self._send(200, serialize_ntriples(description).encode("utf-8"), NTRIPLES_TYPE)

    def _handle_mput(self) -> None:
        ok, principal = self._authorize(mutating=True)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        try:
            incoming = parse_ntriples(self._body().decode("utf-8"))
        except (NTriplesParseError, UnicodeDecodeError) as e:
            return self._text(400, f"unparsable N-Triples body: {e}")
        op = MetadataWriteOp(assertions=_relabel_blanks(incoming))
        op.principal = principal
        self.server.context.perform(op)
        self._finish_write(op)

    def _handle_mdelete(self) -> None:
        ok, principal = self._authorize(mutating=True)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        body = self._body()
        uri = self._uri_param()
        has_uri = "uri" in self._params()
        if has_uri and uri is None:
            return self._text(400, "malformed 'uri' parameter")
        if has_uri == bool(body):
            return self._text(400, "provide exactly one of the 'uri' parameter or an N-Triples body")
        if has_uri:
            scan = MetadataMatchOp(TriplePattern(uri, ANY, ANY), include_derived=False)
            scan.principal = principal
            self.server.context.perform(scan)
            if scan.failed:
                raise _OpFailed(scan.failure_reason or "match failed")
            retractions = scan.results
        else:
            try:
                retractions = set(parse_ntriples(body.decode("utf-8")))
            except (NTriplesParseError, UnicodeDecodeError) as e:
                return self._text(400, f"unparsable N-Triples body: {e}")
        op = MetadataWriteOp(retractions=retractions)
        op.principal = principal
        self.server.context.perform(op)
        self._finish_write(op)

    def _finish_write(self, op) -> None:
        if op.succeeded:
            return self._send(204)
        reason = op.failure_reason or "failed"
        if reason.startswith("forbidden") or reason.startswith("strict hierarchy violated"):
            return self._text(403, reason)
        self._text(500, f"write failed: {reason}")

    def _handle_blob_get(self) -> None:
        ok, principal = self._authorize(mutating=False)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        uri = self._uri_param()
        if uri is None:
            return self._text(400, "missing or malformed 'uri' parameter")
        op = BlobReadOp(uri)
        op.principal = principal
        self.server.context.perform(op)
        if op.succeeded:
            return self._send(200, op.data or b"", op.declared_type or DEFAULT_BLOB_TYPE)
        reason = op.failure_reason or "failed"
        if reason == NOT_FOUND:
            return self._text(404, f"no blob stored at {uri}")
        if reason.startswith("forbidden"):
            return self._text(403, reason)
        self._text(500, f"blob read failed: {reason}")

    def _handle_blob_put(self) -> None:
        ok, principal = self._authorize(mutating=True)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        uri = self._uri_param()
        if uri is None:
            return self._text(400, "missing or malformed 'uri' parameter")
        declared = self.headers.get("Content-Type") or DEFAULT_BLOB_TYPE
        op = BlobWriteOp(uri, self._body(), declared)
        op.principal = principal
        self.server.context.perform(op)
        if op.failed:
            reason = op.failure_reason or "failed"
            if reason.startswith("forbidden") or reason.startswith("strict hierarchy violated"):
                return self._text(403, reason)
            return self._text(500, f"blob write failed: {reason}")
        note = self._replace_mime_triple(uri, declared, principal)
        if note is not None:
            return self._text(500, f"blob stored but type statement failed: {note}")
        self._send(204)

    def _replace_mime_triple(self, uri: IriRef, declared: str | None, principal: str | None) -> str | None:
        scan = MetadataMatchOp(TriplePattern(uri, vocab.KS_MIME_TYPE, ANY), include_derived=False)
        scan.principal = principal
        self.server.context.perform(scan)
        if scan.failed:
            return scan.failure_reason
        new = {Triple(uri, vocab.KS_MIME_TYPE, Literal(declared))} if declared else set()
        op = MetadataWriteOp(assertions=new - scan.results, retractions=scan.results - new)
        op.principal = principal
        self.server.context.perform(op)
        return op.failure_reason if op.failed else None

    def _handle_blob_delete(self) -> None:
        ok, principal = self._authorize(mutating=True)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        uri = self._uri_param()
        if uri is None:
            return self._text(400, "missing or malformed 'uri' parameter")
        op = BlobDeleteOp(uri)
        op.principal = principal
        self.server.context.perform(op)
        if op.failed:
            reason = op.failure_reason or "failed"
            if reason.startswith("forbidden") or reason.startswith("strict hierarchy violated"):
                return self._text(403, reason)
            return self._text(500, f"blob delete failed: {reason}")
        note = self._replace_mime_triple(uri, None, principal)
        if note is not None:
            return self._text(500, f"blob removed but type statement cleanup failed: {note}")
        self._send(204)

    def _handle_query(self) -> None:
        ok, principal = self._authorize(mutating=False)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        try:
            text = self._body().decode("utf-8")
        except UnicodeDecodeError as e:
            return self._text(400, f"query body is not UTF-8: {e}")
        try:
            q = parse_query(text)
        except QueryParseError as e:
            return self._text(400, f"query parse error: {e}")
        try:
            results = evaluate(q, self.server.context, principal=principal)
        except QueryEvaluationError as e:
            return self._text(500, f"query evaluation failed: {e}")
        body = json.dumps(results.to_json(), separators=(",", ":")).encode("utf-8")
        self._send(200, body, SPARQL_RESULTS_TYPE)

    def _handle_search(self) -> None:
        ok, principal = self._authorize(mutating=False)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        try:
            terms = json.loads(self._body().decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return self._text(400, f"search body must be a JSON array of terms: {e}")
        if (
            not isinstance(terms, list)
            or not terms
            or not all(isinstance(t, str) and t for t in terms)
        ):
            return self._text(400, "search body must be a non-empty JSON array of non-empty strings")
        op = TextSearchOp(terms)
        op.principal = principal
        self.server.context.perform(op)
        if op.failed:
            if op.failure_reason == UNSUPPORTED:
                return self._text(501, "text search is not enabled on this server")
            return self._text(500, f"search failed: {op.failure_reason}")
        body = json.dumps(sorted(u.value for u in op.results), separators=(",", ":")).encode("utf-8")
        self._send(200, body, "application/json")

    def _handle_kid(self) -> None:
        ok, principal = self._authorize(mutating=False)
        if not ok:
            return self._text(401, "missing or invalid bearer token")
        segments = [s for s in self._route.split("/") if s]
        if len(segments) != 3:
            return self._text(404, "expected /kid/<curator>/<baseId>")
        try:
            kid = KnowledgeId(segments[1], segments[2])
        except KnowledgeIdError as e:
            return self._text(404, f"malformed identifier: {e}")
        op = MetadataMatchOp(TriplePattern(IriRef(str(kid)), vocab.KS_IDENTIFIES, ANY))
        op.principal = principal
        self.server.context.perform(op)
        if op.failed:
            raise _OpFailed(op.failure_reason or "match failed")
        targets = sorted(
            (t.object.value for t in op.results if isinstance(t.object, IriRef)),
        )
        if not targets:
            return self._text(404, f"nothing identified by {kid}")
        location = f"/meta?uri={quote(targets[0], safe='')}"
        self._send(303, b"", headers={"Location": location})


class KnowledgeSpaceServer(ThreadingHTTPServer):
    """Threaded HTTP server over a composed Context stack.

    Pass an explicit context to serve a stack built elsewhere (tests do this
    to compare wire behavior against direct in-process calls).
    """

    daemon_threads = True

    def __init__(self, config: ServerConfig, context: Context | None = None) -> None:
        self.config = config
        self.context = context if context is not None else build_context(config)
        super().__init__((config.host, config.port), _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
