"""HTTP client for the knowledge-space protocol; the CLI is a thin shell
around this.

Every method maps to exactly one protocol request. Errors are typed:
NetworkError for transport problems, ServerError (with status and the
server's diagnostic) for 4xx/5xx, and NotFoundError for 404s so callers can
tell an absent description from transport success.
"""

from __future__ import annotations

import json
from urllib.parse import quote

import requests

from knowspace.query import ResultSet
from knowspace.rdf import (
    BlankNode,
    Graph,
    IriRef,
    Literal,
    Term,
    parse_ntriples,
    serialize_ntriples,
)


def term_from_json(payload: dict) -> Term:
    """Decode one SPARQL-results JSON term object."""
    kind, value = payload["type"], payload["value"]
    if kind == "uri":
        return IriRef(value)
    if kind == "bnode":
        return BlankNode(value)
    if kind == "literal":
        datatype = payload.get("datatype")
        return Literal(
            value,
            datatype=IriRef(datatype) if datatype else None,
            language=payload.get("xml:lang"),
        )
    raise ValueError(f"unknown term type {kind!r}")


class ClientError(Exception):
    """Base class for client-side failures."""


class NetworkError(ClientError):
    """The server could not be reached or the connection broke."""


class ServerError(ClientError):
    """The server answered with a 4xx/5xx status."""

    def __init__(self, status: int, detail: str) -> None:
        super().__init__(f"server returned {status}: {detail.strip()}")
        self.status = status
        self.detail = detail


class NotFoundError(ServerError):
    """404: the resource has no stored description (or no blob/identifier)."""


class KnowledgeSpaceClient:
    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 30.0) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.token = token
        self.timeout = timeout
        self._session = requests.Session()

    # -- wire plumbing ------------------------------------------------------

    def _headers(self, content_type: str | None = None) -> dict[str, str]:
        headers = {}
        if content_type is not None:
            headers["Content-Type"] = content_type
        if self.token is not None:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _request(self, method: str, path: str, *, body: bytes | None = None,
                 content_type: str | None = None, expect: tuple[int, ...] = (200,),
                 allow_redirects: bool = False) -> requests.Response:
        url = self.endpoint + path
        try:
            response = self._session.request(
                method,
                url,
                data=body,
                headers=self._headers(content_type),
                timeout=self.timeout,
                allow_redirects=allow_redirects,
            )
        except requests.RequestException as e:
            raise NetworkError(f"cannot reach {url}: {e}") from e
        if response.status_code not in expect:
            detail = response.text or response.reason or ""
            if response.status_code == 404:
                raise NotFoundError(404, detail)
            raise ServerError(response.status_code, detail)
        return response

    @staticmethod
    def _uri_query(uri: str, **extra: str) -> str:
        parts = [f"uri={quote(uri, safe='')}"]
        parts += [f"{k}={quote(v, safe='')}" for k, v in extra.items()]
        return "?" + "&".join(parts)

    # -- protocol operations -------------------------------------------------

    def describe(self, uri: str, inferred: bool = False) -> Graph:
        """MGET: the concise bounded description of uri as a Graph."""
        query = self._uri_query(uri, inferred="true") if inferred else self._uri_query(uri)
        response = self._request("MGET", "/meta" + query)
        try:
            # N-Triples is UTF-8 by definition; never trust charset guessing
            return parse_ntriples(response.content.decode("utf-8"))
        except ValueError as e:
            raise ClientError(f"unparsable MGET response: {e}") from e

    def assert_triples(self, graph: Graph) -> None:
        """MPUT: assert every triple in the graph atomically."""
        self._request(
            "MPUT",
            "/meta",
            body=serialize_ntriples(graph).encode("utf-8"),
            content_type="application/n-triples",
            expect=(204,),
        )

    def retract_triples(self, graph: Graph) -> None:
        """MDELETE (body form): retract exactly these triples."""
        self._request(
            "MDELETE",
            "/meta",
            body=serialize_ntriples(graph).encode("utf-8"),
            content_type="application/n-triples",
            expect=(204,),
        )

    def retract_subject(self, uri: str) -> None:
        """MDELETE (uri form): retract all triples with this subject."""
        self._request("MDELETE", "/meta" + self._uri_query(uri), expect=(204,))

    def query(self, text: str) -> ResultSet:
        """POST /query: evaluate a SELECT query; rows carry raw JSON terms."""
        response = self._request(
            "POST", "/query", body=text.encode("utf-8"), content_type="application/sparql-query"
        )
        try:
            payload = response.json()
            variables = list(payload["head"]["vars"])
            rows = [
                {v: term_from_json(binding[v]) for v in variables}
                for binding in payload["results"]["bindings"]
            ]
            return ResultSet(variables, rows)
        except (ValueError, KeyError, TypeError) as e:
            raise ClientError(f"unparsable query response: {e}") from e

    def blob_put(self, uri: str, data: bytes, content_type: str = "application/octet-stream") -> None:
        self._request(
            "PUT", "/blob" + self._uri_query(uri), body=data, content_type=content_type, expect=(204,)
        )

    def blob_get(self, uri: str) -> tuple[bytes, str]:
        response = self._request("GET", "/blob" + self._uri_query(uri))
        return response.content, response.headers.get("Content-Type", "application/octet-stream")

    def blob_delete(self, uri: str) -> None:
        self._request("DELETE", "/blob" + self._uri_query(uri), expect=(204,))

    def search(self, terms: list[str]) -> list[str]:
        """POST /search: subjects whose literals contain every term."""
        response = self._request(
            "POST",
            "/search",
            body=json.dumps(terms, separators=(",", ":")).encode("utf-8"),
            content_type="application/json",
        )
        try:
            found = response.json()
            if not isinstance(found, list):
                raise ValueError("expected a JSON array")
            return [str(u) for u in found]
        except ValueError as e:
            raise ClientError(f"unparsable search response: {e}") from e

    def resolve_kid(self, kid: str) -> str:
        """GET /kid/...: the /meta URL (Location header) the identifier resolves to."""
        from knowspace.identifiers import parse as parse_kid

        k = parse_kid(kid)
        response = self._request("GET", f"/kid/{k.curator}/{k.base_id}", expect=(303,))
        return response.headers.get("Location", "")
