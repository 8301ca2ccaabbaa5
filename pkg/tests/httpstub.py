"""Tiny in-process HTTP server implementing the generator wire protocol
(backed by the deterministic mock) for exercising the remote client."""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from edgetex.generator import decode_generate_request, encode_generate_response, mock_generate


class _Handler(BaseHTTPRequestHandler):
    fail_mode: str | None = None  # "500", "bad-json", "wrong-dims"

    def log_message(self, *args):  # silence test output
        pass

    def _reply(self, code: int, body: bytes, ctype: str = "application/json"):
        self.send_response(code)
        self.send_header("content-type", ctype)
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._reply(200, json.dumps({"status": "ok", "backend": "stub"}).encode())
        else:
            self._reply(404, b'{"detail": "not found"}')

    def do_POST(self):
        n = int(self.headers.get("content-length", 0))
        body = self.rfile.read(n)
        if self.fail_mode == "500":
            self._reply(500, b'{"detail": "backend exploded"}')
            return
        if self.path == "/generate":
            if self.fail_mode == "bad-json":
                self._reply(200, b"not json at all")
                return
            req = decode_generate_request(body)
            resp = mock_generate(req)
            payload = encode_generate_response(resp)
            if self.fail_mode == "wrong-dims":
                import numpy as np

                from edgetex.generator import GeneratorResponse
                from edgetex.generator import encode_generate_response as enc

                small = GeneratorResponse(
                    image=np.zeros((4, 4, 3), dtype=np.uint8), seed_used=0, backend="stub"
                )
                payload = enc(small)
            self._reply(200, payload)
        elif self.path == "/invert":
            doc = json.loads(body)
            if doc.get("steps", 0) < 1:
                self._reply(400, b'{"detail": "steps must be >= 1"}')
                return
            digest = hashlib.sha256(doc["image"].encode()).hexdigest()[:16]
            self._reply(200, json.dumps({"concept_id": f"stub-{digest}"}).encode())
        else:
            self._reply(404, b'{"detail": "not found"}')


class StubServer:
    """Context manager running the stub on an ephemeral port."""

    def __init__(self, fail_mode: str | None = None):
        handler = type("Handler", (_Handler,), {"fail_mode": fail_mode})
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubServer":
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
