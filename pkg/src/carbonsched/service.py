"""REST metrics service exposing normalized carbon scores.

Routes::

    GET /v1/scores            -> {"computed_at": float, "scores": [entry, ...]}
    GET /v1/scores/{region}   -> entry
    GET /healthz              -> {"status": "ok"}

where ``entry = {"region", "score", "raw_g_per_kwh", "source"}``. A failed
carbon fetch for any region yields 502 with ``{"error", "failed_regions"}``;
an unknown region yields 404.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence

from .carbon import CachedCarbonSource, ScoreTableError, build_score_table

log = logging.getLogger(__name__)


class UnknownRegion(KeyError):
    pass


class MetricsService:
    def __init__(self, source: CachedCarbonSource, regions: Sequence[str],
                 clock: Callable[[], float] = time.time):
        self.source = source
        self.regions = list(regions)
        self.clock = clock

    def _entries(self, now):
        table = build_score_table(self.source, self.regions, now)
        tag = self.source.provider.kind
        return table.computed_at, [
            {"region": r, "score": table.entries[r].score,
             "raw_g_per_kwh": table.entries[r].raw_g_per_kwh, "source": tag}
            for r in self.regions
        ]

    def get_scores(self, now: float = None) -> dict:
        computed_at, entries = self._entries(self.clock() if now is None else now)
        return {"computed_at": computed_at, "scores": entries}

    def get_region_score(self, region: str, now: float = None) -> dict:
        if region not in self.regions:
            raise UnknownRegion(region)
        _, entries = self._entries(self.clock() if now is None else now)
        return next(e for e in entries if e["region"] == region)

    def healthz(self) -> dict:
        return {"status": "ok"}


def _handler_for(service: MetricsService):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status, payload):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            path = self.path.split("?", 1)[0].rstrip("/")
            try:
                if path == "/healthz":
                    self._send(200, service.healthz())
                elif path == "/v1/scores":
                    self._send(200, service.get_scores())
                elif path.startswith("/v1/scores/"):
                    self._send(200, service.get_region_score(path[len("/v1/scores/"):]))
                else:
                    self._send(404, {"error": "not found", "path": path})
            except UnknownRegion as e:
                self._send(404, {"error": "unknown region", "region": e.args[0]})
            except ScoreTableError as e:
                self._send(502, {"error": "carbon fetch failed", "failed_regions": e.failed_regions})

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    return Handler


def make_server(service: MetricsService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """Bind (raises OSError on failure) without starting the loop."""
    server = ThreadingHTTPServer((host, port), _handler_for(service))
    server.daemon_threads = True
    return server


class BackgroundServer:
    """Run a server on a daemon thread; handy for tests and in-process clients."""

    def __init__(self, service: MetricsService, host="127.0.0.1", port=0):
        self.server = make_server(service, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()

    def shutdown(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)
