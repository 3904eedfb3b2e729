"""Local stand-in for a watttime-like or carbonsdk-like MOER endpoint.

Serves ``GET /?region=<code>`` (watttime-like) or ``GET /?location=<code>``
(carbonsdk-like) from any :class:`~carbonsched.carbon.CarbonProvider`.
"""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .carbon import WATTTIME, CarbonFetchError, render_carbonsdk_body, render_watttime_body


class MockCarbonAPI:
    def __init__(self, provider, wire_format=WATTTIME, clock=time.time, token=None,
                 host="127.0.0.1", port=0):
        self.provider = provider
        self.wire_format = wire_format
        self.clock = clock
        self.token = token
        self.requests = 0
        self.fail_with = None  # set to an HTTP status to simulate an outage
        self.server = ThreadingHTTPServer((host, port), self._handler())
        self.server.daemon_threads = True
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/"

    def _handler(self):
        api = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                api.requests += 1
                if api.fail_with:
                    return self._send(api.fail_with, {"error": "unavailable"})
                if api.token and self.headers.get("Authorization") != f"Bearer {api.token}":
                    return self._send(401, {"error": "unauthorized"})
                q = parse_qs(urlparse(self.path).query)
                key = "region" if api.wire_format == WATTTIME else "location"
                if key not in q:
                    return self._send(400, {"error": f"missing {key}"})
                try:
                    sample = api.provider.fetch(q[key][0], api.clock())
                except CarbonFetchError as e:
                    return self._send(404, {"error": str(e)})
                render = render_watttime_body if api.wire_format == WATTTIME else render_carbonsdk_body
                self._send(200, render(sample))

            def _send(self, status, payload):
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        return Handler

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
