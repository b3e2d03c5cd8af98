"""JSON suggestion service over stdlib HTTP.

Endpoints:

* ``POST /suggest``  {message, ranker, params{alpha, beta, k, s, seed?, ...}}
* ``POST /compare``  {message, params} -> all rankers side by side
* ``POST /click``    {message, chosen_text, ranker} -> appended to a
  JSON-lines click log (one line per call, never interleaved)
* ``GET /health``    {status, model_hash}
* ``GET /config``    active pipeline defaults

The model and artifact are read-only after startup; every request owns its
RNG (seeded from the request or the configured default), so responses
depend only on (model, artifact, body). CORS headers are always emitted so
the browser playground can call from another origin; with ``static_dir``
set, GET serves the playground files too.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import ContractError
from .inference import RANKERS, SuggestEngine

log = logging.getLogger(__name__)

MAX_MESSAGE_CHARS = 1000

# request "params" keys -> PipelineConfig overrides ("s" is the wire name
# for the sample count)
_PARAM_KEYS = {
    "alpha": "alpha",
    "beta": "beta",
    "k": "k",
    "s": "samples",
    "seed": "seed",
    "use_mmr_preselect": "use_mmr_preselect",
}


class RequestError(Exception):
    def __init__(self, status: int, error: str, fld: str | None = None) -> None:
        super().__init__(error)
        self.status = status
        self.payload = {"error": error}
        if fld is not None:
            self.payload["field"] = fld


@dataclass
class ServiceState:
    engine: SuggestEngine
    click_log_path: Path
    max_message_chars: int = MAX_MESSAGE_CHARS
    static_dir: Path | None = None
    click_lock: threading.Lock = field(default_factory=threading.Lock)


def _parse_params(doc: dict) -> dict:
    raw = doc.get("params", {})
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise RequestError(400, "params must be an object", "params")
    overrides = {}
    for key, value in raw.items():
        if key not in _PARAM_KEYS:
            raise RequestError(400, f"unknown parameter {key!r}", f"params.{key}")
        overrides[_PARAM_KEYS[key]] = value
    for name in ("alpha", "beta"):
        if name in overrides and not isinstance(overrides[name], (int, float)):
            raise RequestError(400, f"{name} must be a number", f"params.{name}")
    for name in ("k", "samples", "seed"):
        if name in overrides and not isinstance(overrides[name], int):
            raise RequestError(400, "must be an integer", f"params.{name}")
    return overrides


def _require_message(state: ServiceState, doc: dict) -> str:
    message = doc.get("message")
    if not isinstance(message, str) or not message.strip():
        raise RequestError(400, "message must be a nonempty string", "message")
    if len(message) > state.max_message_chars:
        raise RequestError(413, f"message exceeds {state.max_message_chars} characters", "message")
    return message


def handle_suggest(state: ServiceState, doc: dict) -> dict:
    message = _require_message(state, doc)
    ranker = doc.get("ranker", "matching")
    if ranker not in RANKERS:
        raise RequestError(400, f"ranker must be one of {list(RANKERS)}", "ranker")
    overrides = _parse_params(doc)
    try:
        result = state.engine.suggest(message, ranker, overrides)
    except ContractError as exc:
        raise RequestError(400, str(exc)) from None
    return result.to_dict()


def handle_compare(state: ServiceState, doc: dict) -> dict:
    message = _require_message(state, doc)
    overrides = _parse_params(doc)
    try:
        results = state.engine.compare(message, overrides)
    except ContractError as exc:
        raise RequestError(400, str(exc)) from None
    return {"message": message, "rankers": {name: r.to_dict() for name, r in results.items()}}


def handle_click(state: ServiceState, doc: dict) -> dict:
    message = _require_message(state, doc)
    chosen = doc.get("chosen_text")
    if not isinstance(chosen, str) or not chosen:
        raise RequestError(400, "chosen_text must be a nonempty string", "chosen_text")
    ranker = doc.get("ranker")
    if ranker is not None and ranker not in RANKERS:
        raise RequestError(400, f"ranker must be one of {list(RANKERS)}", "ranker")
    entry = {"ts": time.time(), "message": message, "chosen_text": chosen, "ranker": ranker}
    line = json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n"
    with state.click_lock:
        with open(state.click_log_path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
    return {"logged": True}


class _Handler(BaseHTTPRequestHandler):
    server_version = "smartreply"
    protocol_version = "HTTP/1.1"

    @property
    def state(self) -> ServiceState:
        return self.server.state  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet: route through logging
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        if self.path == "/health":
            self._send_json(200, {"status": "ok", "model_hash": self.state.engine.model_hash})
            return
        if self.path == "/config":
            self._send_json(200, self.state.engine.defaults.to_dict())
            return
        if self.state.static_dir is not None:
            self._serve_static()
            return
        self._send_json(404, {"error": f"no such endpoint {self.path}"})

    def _serve_static(self) -> None:
        root = self.state.static_dir.resolve()
        rel = self.path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            self._send_json(404, {"error": f"no such file {self.path}"})
            return
        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:
        routes = {"/suggest": handle_suggest, "/compare": handle_compare, "/click": handle_click}
        handler = routes.get(self.path)
        if handler is None:
            self._send_json(404, {"error": f"no such endpoint {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            try:
                doc = json.loads(raw.decode("utf-8")) if raw else {}
            except (json.JSONDecodeError, UnicodeDecodeError):
                raise RequestError(400, "body is not valid JSON") from None
            if not isinstance(doc, dict):
                raise RequestError(400, "body must be a JSON object")
            self._send_json(200, handler(self.state, doc))
        except RequestError as exc:
            self._send_json(exc.status, exc.payload)
        except Exception:  # never leak a stack trace to the wire
            log.exception("unhandled error on %s", self.path)
            self._send_json(500, {"error": "internal error"})


def make_server(state: ServiceState, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.state = state  # type: ignore[attr-defined]
    return server


def serve(
    engine: SuggestEngine,
    click_log_path: str | Path,
    host: str = "127.0.0.1",
    port: int = 8080,
    static_dir: str | Path | None = None,
) -> None:
    state = ServiceState(
        engine=engine,
        click_log_path=Path(click_log_path),
        static_dir=Path(static_dir) if static_dir else None,
    )
    server = make_server(state, host, port)
    log.info("serving on http://%s:%d (click log: %s)", host, port, click_log_path)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
