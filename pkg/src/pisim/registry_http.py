"""JSON-over-HTTP front end for :class:`~pisim.registry.Registry`.

Every endpoint expects ``Authorization: Bearer <provider credential>``.

    POST /v1/validate          {packageName, certHash, clientId, includeCert}
    POST /v1/partners          {packageName, certHash, clientId}
    POST /v1/partners/rotate   {packageName, clientId, newCertHash}
    POST /v1/partners/revoke   {packageName, clientId}
    POST /v1/partners/lookup   {packageName, clientId}
    GET  /v1/audit[?packageName=&clientId=&verdict=]
"""
from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from .errors import BadProviderCredential, DuplicateActive, NotFound, SimError, TransportError
from .registry import AuditEntry, PartnerRecord, Registry, Triple

log = logging.getLogger(__name__)


def wall_clock_ms() -> int:
    return int(time.time() * 1000)


class _BadRequest(Exception):
    pass


class RegistryHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], registry: Registry, db_path: str | Path | None = None) -> None:
        super().__init__(address, _Handler)
        self.registry = registry
        self.db_path = Path(db_path) if db_path else None
        self._persist_lock = threading.Lock()

    def persist(self) -> None:
        if self.db_path is not None:
            with self._persist_lock:
                self.registry.persist(self.db_path)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


_POST_ROUTES = {"/v1/validate", "/v1/partners", "/v1/partners/rotate", "/v1/partners/revoke", "/v1/partners/lookup"}


class _Handler(BaseHTTPRequestHandler):
    server: RegistryHTTPServer
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _bearer(self) -> str | None:
        auth = self.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            return auth[len("Bearer "):]
        return None

    def _send(self, status: int, body: dict[str, Any]) -> None:
        data = json.dumps(body, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _body(self) -> dict[str, Any]:
        n = int(self.headers.get("Content-Length") or 0)
        try:
            doc = json.loads(self.rfile.read(n) or b"{}")
        except json.JSONDecodeError as exc:
            raise _BadRequest(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise _BadRequest("body must be a JSON object")
        return doc

    @staticmethod
    def _field(doc: dict[str, Any], name: str) -> str:
        v = doc.get(name)
        if not isinstance(v, str) or not v:
            raise _BadRequest(f"missing field {name!r}")
        return v

    def do_GET(self) -> None:
        url = urllib.parse.urlsplit(self.path)
        if url.path != "/v1/audit":
            return self._send(HTTPStatus.NOT_FOUND, {"error": "NOT_FOUND"})
        reg = self.server.registry
        if not reg.check_credential(self._bearer()):
            return self._send(HTTPStatus.UNAUTHORIZED, {"error": "BAD_PROVIDER_CREDENTIAL"})
        q = {k: v[-1] for k, v in urllib.parse.parse_qs(url.query).items()}
        try:
            entries = reg.list_audit(q.get("packageName"), q.get("clientId"), q.get("verdict"))
        except ValueError:
            return self._send(HTTPStatus.BAD_REQUEST, {"error": "BAD_REQUEST", "detail": "unknown verdict"})
        self._send(HTTPStatus.OK, {"audit": [e.to_dict() for e in entries]})

    def do_POST(self) -> None:
        path = urllib.parse.urlsplit(self.path).path
        reg = self.server.registry
        if path not in _POST_ROUTES:
            return self._send(HTTPStatus.NOT_FOUND, {"error": "NOT_FOUND"})
        try:
            body = self._body()
            if path == "/v1/validate":
                triple = Triple(self._field(body, "packageName"), body.get("certHash"), self._field(body, "clientId"))
                include_cert = bool(body.get("includeCert", True))
                try:
                    entry = reg.validate(triple, self._bearer(), include_cert)
                finally:
                    self.server.persist()
                return self._send(HTTPStatus.OK, entry.to_dict())
            if not reg.check_credential(self._bearer()):
                return self._send(HTTPStatus.UNAUTHORIZED, {"error": "BAD_PROVIDER_CREDENTIAL"})
            pkg, client = self._field(body, "packageName"), self._field(body, "clientId")
            if path == "/v1/partners":
                rec = reg.register_partner(pkg, self._field(body, "certHash"), client)
                self.server.persist()
                return self._send(HTTPStatus.CREATED, rec.to_dict())
            if path == "/v1/partners/rotate":
                rec = reg.rotate_certificate(pkg, client, self._field(body, "newCertHash"))
                self.server.persist()
                return self._send(HTTPStatus.OK, rec.to_dict())
            if path == "/v1/partners/revoke":
                reg.revoke_partner(pkg, client)
                self.server.persist()
                return self._send(HTTPStatus.OK, {"status": "REVOKED"})
            hashes = reg.active_cert_hashes(pkg, client, self._bearer())
            return self._send(HTTPStatus.OK, {"certHashes": sorted(hashes)})
        except _BadRequest as exc:
            self._send(HTTPStatus.BAD_REQUEST, {"error": "BAD_REQUEST", "detail": str(exc)})
        except BadProviderCredential:
            self._send(HTTPStatus.UNAUTHORIZED, {"error": "BAD_PROVIDER_CREDENTIAL"})
        except DuplicateActive as exc:
            self._send(HTTPStatus.CONFLICT, {"error": "DUPLICATE_ACTIVE", "detail": str(exc)})
        except NotFound as exc:
            self._send(HTTPStatus.NOT_FOUND, {"error": "NOT_FOUND", "detail": str(exc)})


def make_server(
    registry: Registry, host: str = "127.0.0.1", port: int = 0, db_path: str | Path | None = None
) -> RegistryHTTPServer:
    return RegistryHTTPServer((host, port), registry, db_path)


def serve_in_thread(server: RegistryHTTPServer) -> threading.Thread:
    t = threading.Thread(target=server.serve_forever, name="registry-http", daemon=True)
    t.start()
    return t


class HttpRegistryClient:
    """Provider-side registry client over HTTP. Network failures surface as TransportError."""

    def __init__(self, base_url: str, timeout: float = 5.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, method: str, path: str, credential: str | None, body: dict[str, Any] | None = None) -> dict:
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method)
        req.add_header("Content-Type", "application/json")
        if credential is not None:
            req.add_header("Authorization", f"Bearer {credential}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            detail = json.loads(exc.read() or b"{}")
            code = detail.get("error")
            if exc.code == HTTPStatus.UNAUTHORIZED:
                raise BadProviderCredential("registry refused provider credential") from None
            if code == "DUPLICATE_ACTIVE":
                raise DuplicateActive(detail.get("detail", "")) from None
            if code == "NOT_FOUND":
                raise NotFound(detail.get("detail", path)) from None
            raise SimError(f"registry HTTP {exc.code}: {detail}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"registry unreachable: {exc}") from exc

    def validate(self, triple: Triple, provider_credential: str | None, include_cert: bool = True) -> AuditEntry:
        body = triple.to_dict() | {"includeCert": include_cert}
        return AuditEntry.from_dict(self._call("POST", "/v1/validate", provider_credential, body))

    def active_cert_hashes(self, package_name: str, client_id: str, provider_credential: str | None) -> set[str]:
        body = {"packageName": package_name, "clientId": client_id}
        return set(self._call("POST", "/v1/partners/lookup", provider_credential, body)["certHashes"])

    def register_partner(self, credential: str, package_name: str, cert_hash: str, client_id: str) -> PartnerRecord:
        body = {"packageName": package_name, "certHash": cert_hash, "clientId": client_id}
        return PartnerRecord.from_dict(self._call("POST", "/v1/partners", credential, body))

    def rotate_certificate(self, credential: str, package_name: str, client_id: str, new_cert_hash: str) -> PartnerRecord:
        body = {"packageName": package_name, "clientId": client_id, "newCertHash": new_cert_hash}
        return PartnerRecord.from_dict(self._call("POST", "/v1/partners/rotate", credential, body))

    def revoke_partner(self, credential: str, package_name: str, client_id: str) -> None:
        self._call("POST", "/v1/partners/revoke", credential, {"packageName": package_name, "clientId": client_id})

    def list_audit(self, credential: str, **filters: str) -> list[AuditEntry]:
        query = urllib.parse.urlencode({k: v for k, v in filters.items() if v is not None})
        doc = self._call("GET", "/v1/audit" + (f"?{query}" if query else ""), credential)
        return [AuditEntry.from_dict(d) for d in doc["audit"]]
