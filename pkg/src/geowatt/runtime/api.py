"""Thin JSON HTTP layer over a Runtime.

Stdlib http.server is enough here: the pipeline itself is serialized by one
lock, so a threading server only buys concurrent reads and long-polls, which
is exactly what the dashboard needs. Endpoints:

    POST /api/location                  {user, nmea | lat+lon}
    GET  /api/presence/<user>
    GET  /api/devices
    POST /api/devices/<id>/state        {state: "on"|"off"}
    GET  /api/policies
    PUT  /api/policies/<rule-id>        {realm, devices, action, when}
    POST /api/users/<user>/mode         {mode: name} or {mode: {name, fractions}}
    GET  /api/report/energy?from=&to=   ISO timestamps, default whole run
    GET  /api/report/rollup
    GET  /api/events?since=N&wait=SECS  long-poll for the event feed

If the deployment config carries a token, mutating requests must send
"Authorization: Bearer <token>".
"""

from __future__ import annotations

import json
import re
import threading
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from ..errors import ConfigError, ValidationError
from .pipeline import Runtime

MAX_BODY_BYTES = 64 * 1024
MAX_WAIT_SECONDS = 30.0

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
    ".ico": "image/x-icon",
}


class ApiError(Exception):
    def __init__(self, status: int, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.body = {"error": message, **extra}


class _Handler(BaseHTTPRequestHandler):
    server_version = "geowatt"
    protocol_version = "HTTP/1.1"

    # silence the default stderr access log; the event log is the record
    def log_message(self, fmt, *args):
        pass

    @property
    def runtime(self) -> Runtime:
        return self.server.runtime  # type: ignore[attr-defined]

    # -- plumbing -----------------------------------------------------------

    def _send(self, status: int, payload: dict | list, content_type: str = "application/json") -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            raise ApiError(413, "request body too large")
        raw = self.rfile.read(length) if length else b"{}"
        try:
            doc = json.loads(raw.decode("utf-8") or "{}")
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ApiError(400, f"invalid JSON body: {exc}") from exc
        if not isinstance(doc, dict):
            raise ApiError(400, "body must be a JSON object")
        return doc

    def _check_auth(self) -> None:
        token = self.runtime.config.token
        if token is None:
            return
        header = self.headers.get("Authorization", "")
        if header != f"Bearer {token}":
            raise ApiError(401, "missing or wrong bearer token")

    # -- HTTP methods --------------------------------------------------------

    def do_OPTIONS(self):  # CORS preflight for the dashboard dev server
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Authorization")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def _dispatch(self, method: str) -> None:
        try:
            url = urlparse(self.path)
            query = {k: v[-1] for k, v in parse_qs(url.query).items()}
            self._route(method, url.path, query)
        except ApiError as exc:
            self._send(exc.status, exc.body)
        except ValidationError as exc:
            self._send(400, {"error": str(exc)})
        except BrokenPipeError:
            pass
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._send(500, {"error": f"{type(exc).__name__}: {exc}"})

    # -- routing -------------------------------------------------------------

    def _route(self, method: str, path: str, query: dict[str, str]) -> None:
        rt = self.runtime
        if method in ("POST", "PUT"):
            self._check_auth()

        if method == "GET" and path == "/api/devices":
            self._send(200, {"devices": rt.devices_view()})
        elif method == "GET" and (m := re.fullmatch(r"/api/presence/([^/]+)", path)):
            user = m.group(1)
            if user not in rt.config.users:
                raise ApiError(404, f"unknown user {user!r}")
            self._send(200, rt.presence_view(user))
        elif method == "GET" and path == "/api/policies":
            self._send(200, rt.policies_view())
        elif method == "GET" and path == "/api/report/energy":
            self._send(200, self._energy_report(query))
        elif method == "GET" and path == "/api/report/rollup":
            report = self._energy_report(query)
            self._send(200, {"window": report["window"], "rollup": report["rollup"]})
        elif method == "GET" and path == "/api/events":
            self._events(query)
        elif method == "POST" and path == "/api/location":
            body = self._read_json()
            result = rt.post_location(
                str(body.get("user", "")),
                nmea=body.get("nmea"),
                lat=body.get("lat"),
                lon=body.get("lon"),
            )
            self._send(200 if result["accepted"] else 422, result)
        elif method == "POST" and (m := re.fullmatch(r"/api/devices/([^/]+)/state", path)):
            self._set_device(m.group(1), self._read_json())
        elif method == "POST" and (m := re.fullmatch(r"/api/users/([^/]+)/mode", path)):
            body = self._read_json()
            mode = body.get("mode")
            if not isinstance(mode, (str, dict)):
                raise ApiError(400, "mode must be a name or an object with fractions")
            try:
                self._send(200, rt.set_user_mode(m.group(1), mode))
            except (KeyError, ConfigError, ValidationError) as exc:
                raise ApiError(400, str(exc)) from exc
        elif method == "PUT" and (m := re.fullmatch(r"/api/policies/([^/]+)", path)):
            body = self._read_json()
            body["id"] = m.group(1)
            try:
                self._send(200, rt.upsert_rule(body))
            except ConfigError as exc:
                raise ApiError(400, str(exc)) from exc
        elif method == "GET":
            self._static(path)
        else:
            raise ApiError(404, f"no route for {method} {path}")

    def _set_device(self, device_id: str, body: dict) -> None:
        state = str(body.get("state", "")).lower()
        if state not in ("on", "off"):
            raise ApiError(400, "state must be 'on' or 'off'")
        result = self.runtime.set_device_state(device_id, state == "on", origin="api")
        if result.get("ok"):
            self._send(200, result)
        elif result.get("error") == "unknown_device":
            raise ApiError(404, f"unknown device {device_id!r}")
        elif result.get("error") == "exempt":
            raise ApiError(403, f"device {device_id!r} is exempt from remote control")
        elif result.get("error") == "mandated":
            raise ApiError(
                409,
                "an organizational rule currently mandates the opposite state",
                provenance=result.get("provenance", []),
            )
        else:
            raise ApiError(400, result.get("error", "rejected"))

    def _energy_report(self, query: dict[str, str]) -> dict:
        rt = self.runtime
        try:
            t0 = datetime.fromisoformat(query["from"]) if "from" in query else rt.fleet.started_at
            t1 = datetime.fromisoformat(query["to"]) if "to" in query else rt.clock.now()
        except ValueError as exc:
            raise ApiError(400, f"bad timestamp: {exc}") from exc
        if t1 < t0:
            raise ApiError(400, "window ends before it starts")
        return rt.report_bundle((t0, t1))

    def _events(self, query: dict[str, str]) -> None:
        try:
            since = int(query.get("since", "0"))
            wait = min(float(query.get("wait", "0")), MAX_WAIT_SECONDS)
        except ValueError as exc:
            raise ApiError(400, f"bad query parameter: {exc}") from exc
        log = self.runtime.log
        if wait > 0:
            log.wait_for(since, timeout=wait)
        records = log.since(since)
        self._send(
            200,
            {
                "events": [
                    {"seq": r.seq, "at": r.at.isoformat(), "kind": r.kind, "payload": r.payload}
                    for r in records
                ],
                "next": records[-1].seq if records else since,
            },
        )

    def _static(self, path: str) -> None:
        root = self.server.static_dir  # type: ignore[attr-defined]
        if root is None:
            raise ApiError(404, f"no route for GET {path}")
        name = path.lstrip("/") or "index.html"
        target = (root / name).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            raise ApiError(404, f"no such file {path!r}")
        ctype = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), ctype)


class ApiServer:
    """Wraps ThreadingHTTPServer with a background serve loop."""

    def __init__(self, runtime: Runtime, host: str = "127.0.0.1", port: int = 0,
                 static_dir: str | Path | None = None):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.daemon_threads = True
        self._httpd.runtime = runtime  # type: ignore[attr-defined]
        self._httpd.static_dir = Path(static_dir) if static_dir else None  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def runtime(self) -> Runtime:
        return self._httpd.runtime  # type: ignore[attr-defined]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
