"""A canned-response HTTP server that records every request it serves.

Used to freeze the exact wire requests the CLI emits (golden tests) and to
let the secondary-language client replay the same goldens.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

CANNED_NTRIPLES = '<http://ex.org/a> <http://ex.org/p> "v" .\n'
CANNED_QUERY_JSON = {
    "head": {"vars": ["s"]},
    "results": {"bindings": [{"s": {"type": "uri", "value": "http://ex.org/a"}}]},
}


class _RecordingHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # noqa: A002
        pass

    def _record_and_reply(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        self.server.captured.append(
            {
                "method": self.command,
                "target": self.path,
                "content_type": self.headers.get("Content-Type"),
                "authorization": self.headers.get("Authorization"),
                "body_b64": base64.b64encode(body).decode("ascii"),
            }
        )
        status, content_type, payload = self._canned_response()
        self.send_response(status)
        if payload:
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        if payload:
            self.wfile.write(payload)

    def _canned_response(self):
        path = self.path.split("?")[0]
        if self.command == "MGET" or (self.command == "POST" and self.headers.get("X-KS-Method") == "MGET"):
            return 200, "application/n-triples", CANNED_NTRIPLES.encode()
        if self.command in ("MPUT", "MDELETE"):
            return 204, None, b""
        if path == "/blob" and self.command == "GET":
            return 200, "text/plain", b"BLOB-BYTES"
        if path == "/blob":
            return 204, None, b""
        if path == "/query":
            return 200, "application/sparql-results+json", json.dumps(CANNED_QUERY_JSON).encode()
        if path == "/search":
            return 200, "application/json", b'["http://ex.org/a"]'
        return 404, "text/plain", b"unknown\n"

    def __getattr__(self, name):
        if name.startswith("do_"):
            return self._record_and_reply
        raise AttributeError(name)


class RecordingServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self):
        self.captured: list[dict] = []
        super().__init__(("127.0.0.1", 0), _RecordingHandler)

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
