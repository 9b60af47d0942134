"""Intercepting HTTP forward proxy.

Plain HTTP requests are fetched upstream, buffered (the bottom-up endpoint
scan needs the whole document), decoded (transfer and content encodings,
then charset), filtered, and re-sent. Clean responses forward the original
bytes untouched with their original encoding; sanitized responses go out
identity-encoded with a corrected Content-Length; blocked responses become
a 403 block page naming the signature.

HTTPS is tunneled through CONNECT untouched by default. With a CA
directory configured, CONNECT is intercepted instead: the proxy serves a
per-host leaf certificate minted from a local CA and filters the decrypted
exchange exactly like plain HTTP. Generating certificates requires the
`cryptography` package (the only non-stdlib dependency, and only for this
mode).

Subresponses are routed to armed XHR listeners by session key
(client address, page URL without query), using the Referer header to
find the arming page; lacking one, any of the client's active sessions
with a matching listener applies.
"""

from __future__ import annotations

import gzip
import http.client
import logging
import re
import socket
import ssl
import threading
import zlib
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit, urlunsplit

from .model import SignatureDatabase, load_database
from .pipeline import (
    DEFAULT_SESSION_TTL,
    SessionStore,
    Verdict,
    filter_subresponse,
    register_listeners,
    verify_response,
)

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_PAGE = """<!DOCTYPE html>
<html><head><title>Response blocked</title></head>
<body>
<h1>Response blocked</h1>
<p>This response matched a known-exploit signature and was withheld: {reason}</p>
</body></html>
"""

SKIP_HEADER = "X-Sigfilter"

_HOP_BY_HOP = {
    "connection", "keep-alive", "proxy-authenticate", "proxy-authorization",
    "proxy-connection", "te", "trailer", "trailers", "transfer-encoding", "upgrade",
}

_CHARSET_RE = re.compile(r"charset=\"?([A-Za-z0-9_.:+-]+)\"?", re.IGNORECASE)


@dataclass
class ProxyConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    database_path: str | None = None
    database: SignatureDatabase | None = None
    block_page_template: str = DEFAULT_BLOCK_PAGE
    max_body_bytes: int = 10 * 1024 * 1024
    content_type_allowlist: frozenset[str] = frozenset({"text/html"})
    fail_closed_size: bool = False
    session_ttl: float = DEFAULT_SESSION_TTL
    intercept_tls_dir: str | None = None
    upstream_tls_verify: bool = True
    upstream_timeout: float = 30.0

    def __post_init__(self):
        if self.max_body_bytes <= 0:
            raise ValueError("max_body_bytes must be positive")


def _strip_query(url: str) -> str:
    parts = urlsplit(url)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, "", ""))


def _decode_content_encoding(raw: bytes, encoding: str) -> bytes | None:
    """Decode a Content-Encoding; None means we cannot (unknown coding, or
    brotli without the optional module)."""
    coding = (encoding or "identity").strip().lower()
    try:
        if coding in ("", "identity"):
            return raw
        if coding in ("gzip", "x-gzip"):
            return gzip.decompress(raw)
        if coding == "deflate":
            try:
                return zlib.decompress(raw)
            except zlib.error:
                return zlib.decompress(raw, -zlib.MAX_WBITS)
        if coding == "br":
            try:
                import brotli  # optional; not always available
            except ImportError:
                return None
            return brotli.decompress(raw)
    except Exception:
        logger.warning("failed to decode Content-Encoding %r", coding)
        return None
    return None


def _charset_of(content_type: str | None) -> str | None:
    if not content_type:
        return None
    match = _CHARSET_RE.search(content_type)
    return match.group(1) if match else None


def _decode_charset(raw: bytes, content_type: str | None) -> tuple[str, str]:
    """Decode body bytes to text. The declared charset is tried strictly,
    then UTF-8, then latin-1 (lossless single-byte mapping, so unfiltered
    regions re-encode bit-exactly)."""
    declared = _charset_of(content_type)
    for codec in filter(None, (declared, "utf-8")):
        try:
            return raw.decode(codec), codec
        except (UnicodeDecodeError, LookupError):
            continue
    return raw.decode("latin-1"), "latin-1"


class _UpstreamResponse:
    def __init__(self, status: int, reason: str, headers: list[tuple[str, str]], body: bytes):
        self.status = status
        self.reason = reason
        self.headers = headers
        self.body = body

    def header(self, name: str) -> str | None:
        lowered = name.lower()
        for key, value in self.headers:
            if key.lower() == lowered:
                return value
        return None


class FilterProxy:
    """The proxy service object: owns the database, session store, listen
    socket, and (optionally) the TLS interception CA."""

    def __init__(self, config: ProxyConfig):
        self.config = config
        if config.database is not None:
            self.db = config.database
        elif config.database_path is not None:
            self.db = load_database(config.database_path)
        else:
            raise ValueError("ProxyConfig needs database or database_path")
        self.sessions = SessionStore(ttl_seconds=config.session_ttl)
        self.interceptor = None
        if config.intercept_tls_dir is not None:
            from .tlsmitm import TlsInterceptor

            self.interceptor = TlsInterceptor(Path(config.intercept_tls_dir))
        proxy = self

        class _BoundHandler(_ProxyHandler):
            filter_proxy = proxy

        self._server = ThreadingHTTPServer((config.listen_host, config.listen_port), _BoundHandler)
        self._server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[0], self._server.server_address[1]

    def start(self) -> tuple[str, int]:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self.address

    def serve_forever(self) -> None:
        logger.info("proxy listening on %s:%d", *self.address)
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    # -- upstream fetch ----------------------------------------------------

    def fetch(self, scheme: str, host: str, port: int, method: str, path: str,
              headers: list[tuple[str, str]], body: bytes | None) -> _UpstreamResponse:
        if scheme == "https":
            context = ssl.create_default_context()
            if not self.config.upstream_tls_verify:
                context.check_hostname = False
                context.verify_mode = ssl.CERT_NONE
            conn = http.client.HTTPSConnection(host, port, timeout=self.config.upstream_timeout,
                                               context=context)
        else:
            conn = http.client.HTTPConnection(host, port, timeout=self.config.upstream_timeout)
        try:
            out_headers = {}
            for key, value in headers:
                if key.lower() in _HOP_BY_HOP:
                    continue
                if key.lower() == "accept-encoding":
                    continue  # replaced below with codings we can decode
                out_headers[key] = value
            out_headers["Accept-Encoding"] = "gzip, deflate"
            out_headers["Connection"] = "close"
            conn.request(method, path, body=body, headers=out_headers)
            response = conn.getresponse()
            raw = response.read()
            resp_headers = [(k, v) for k, v in response.getheaders()]
            return _UpstreamResponse(response.status, response.reason, resp_headers, raw)
        finally:
            conn.close()


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    filter_proxy: FilterProxy  # bound by FilterProxy.__init__

    # Origin server details for intercepted (TLS) connections; plain
    # forward-proxy requests carry absolute URLs instead.
    intercept_host: str | None = None
    intercept_port: int = 443

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        logger.debug("%s - %s", self.address_string(), format % args)

    # -- request entry points ----------------------------------------------

    def do_GET(self):
        self._proxy_request()

    do_POST = do_PUT = do_DELETE = do_PATCH = do_OPTIONS = do_HEAD = do_GET

    def do_CONNECT(self):
        proxy = self.filter_proxy
        host, _, port_text = self.path.partition(":")
        port = int(port_text or 443)
        if proxy.interceptor is not None:
            self._intercept_tls(host, port)
            return
        try:
            upstream = socket.create_connection((host, port), timeout=proxy.config.upstream_timeout)
        except OSError as exc:
            self.send_error(502, f"CONNECT failed: {exc}")
            return
        self.send_response(200, "Connection Established")
        self.end_headers()
        _relay_sockets(self.connection, upstream)
        self.close_connection = True

    def _intercept_tls(self, host: str, port: int):
        proxy = self.filter_proxy
        self.send_response(200, "Connection Established")
        self.end_headers()
        try:
            context = proxy.interceptor.server_context(host)
            tls_sock = context.wrap_socket(self.connection, server_side=True)
        except (ssl.SSLError, OSError) as exc:
            logger.warning("TLS interception handshake with %s failed: %s", host, exc)
            self.close_connection = True
            return

        class _Intercepted(_ProxyHandler):
            filter_proxy = proxy
            intercept_host = host
            intercept_port = port

        try:
            _Intercepted(tls_sock, self.client_address, self.server)
        finally:
            try:
                tls_sock.close()
            except OSError:
                pass
        self.close_connection = True

    # -- core --------------------------------------------------------------

    def _read_request_body(self) -> bytes | None:
        length = self.headers.get("Content-Length")
        if length is None:
            return None
        return self.rfile.read(int(length))

    def _request_url(self) -> tuple[str, str, int, str] | None:
        """Returns (full_url, host, port, origin_path) or None on a bad request."""
        if self.intercept_host is not None:
            host, port = self.intercept_host, self.intercept_port
            url = f"https://{host}{'' if port == 443 else f':{port}'}{self.path}"
            return url, host, port, self.path
        parts = urlsplit(self.path)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            return None
        port = parts.port or (443 if parts.scheme == "https" else 80)
        origin_path = urlunsplit(("", "", parts.path or "/", parts.query, ""))
        return self.path, parts.hostname or "", port, origin_path or "/"

    def _proxy_request(self):
        proxy = self.filter_proxy
        target = self._request_url()
        if target is None:
            self.send_error(400, "proxy requests need an absolute URL")
            return
        url, host, port, origin_path = target
        scheme = "https" if self.intercept_host is not None else urlsplit(url).scheme
        body = self._read_request_body()
        request_headers = [(k, v) for k, v in self.headers.items()]
        try:
            upstream = proxy.fetch(scheme, host, port, self.command, origin_path,
                                   request_headers, body)
        except (OSError, http.client.HTTPException) as exc:
            self.send_error(502, f"upstream fetch failed: {exc}")
            return
        try:
            self._filter_and_respond(url, upstream)
        except Exception:
            logger.exception("filtering failed; failing closed")
            self._respond_block("internal filter error")

    def _filter_and_respond(self, url: str, upstream: _UpstreamResponse):
        proxy = self.filter_proxy
        config = proxy.config
        client = self.client_address[0]
        raw = upstream.body

        if self.command == "HEAD" or upstream.status in (204, 304) or not raw:
            self._respond_passthrough(upstream)
            return

        if upstream.status == 206:
            # A partial body is a fragment; the whole-document endpoint scan
            # would see false boundaries. Skip, visibly.
            self._respond_passthrough(upstream, skip_note="skipped-partial")
            return

        if len(raw) > config.max_body_bytes:
            if config.fail_closed_size:
                self._respond_block(f"body of {len(raw)} bytes exceeds the filter limit")
            else:
                self._respond_passthrough(upstream, skip_note="skipped-size")
            return

        listener_key = self._find_listener_key(client, url)
        content_type = (upstream.header("Content-Type") or "").split(";")[0].strip().lower()
        is_document = content_type in config.content_type_allowlist

        if listener_key is None and not is_document:
            self._respond_passthrough(upstream)
            return

        encoding = upstream.header("Content-Encoding") or "identity"
        decoded = _decode_content_encoding(raw, encoding)
        if decoded is None:
            self._respond_passthrough(upstream, skip_note="skipped-encoding")
            return
        text, codec = _decode_charset(decoded, upstream.header("Content-Type"))

        if listener_key is not None:
            outcome = filter_subresponse(text, self.command, url, proxy.sessions, listener_key)
        else:
            outcome, listeners = verify_response(text, url, proxy.db)
            if outcome.verdict is not Verdict.BLOCKED:
                register_listeners(proxy.sessions, (client, _strip_query(url)), listeners)

        if outcome.verdict is Verdict.BLOCKED:
            self._respond_block(outcome.block_reason or "matched a blocking signature")
        elif outcome.verdict is Verdict.SANITIZED:
            self._respond_rewritten(upstream, (outcome.body or "").encode(codec))
        else:
            self._respond_passthrough(upstream)

    def _find_listener_key(self, client: str, url: str):
        """Session key whose armed listeners match this request, if any.
        The Referer-derived key is preferred; the paper's extension used
        tab identity, which a proxy does not have."""
        proxy = self.filter_proxy
        candidates = []
        referer = self.headers.get("Referer")
        if referer:
            candidates.append((client, _strip_query(referer)))
        for key, _ in proxy.sessions.active_items():
            if isinstance(key, tuple) and key and key[0] == client and key not in candidates:
                candidates.append(key)
        for key in candidates:
            for listener in proxy.sessions.get(key):
                if listener.spec.method_matches(self.command) and listener.spec.listener_url.matches(url):
                    return key
        return None

    # -- responses ----------------------------------------------------------

    def _send_head(self, status: int, reason: str, headers: list[tuple[str, str]],
                   content_length: int, extra: list[tuple[str, str]] = ()):
        self.send_response(status, reason)
        seen_type = False
        for key, value in headers:
            lowered = key.lower()
            if lowered in _HOP_BY_HOP or lowered == "content-length":
                continue
            if lowered == "content-type":
                seen_type = True
            self.send_header(key, value)
        for key, value in extra:
            self.send_header(key, value)
        if not seen_type and status == 403:
            self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(content_length))
        self.end_headers()

    def _respond_passthrough(self, upstream: _UpstreamResponse, skip_note: str | None = None):
        extra = [(SKIP_HEADER, skip_note)] if skip_note else []
        self._send_head(upstream.status, upstream.reason, upstream.headers,
                        len(upstream.body), extra)
        if self.command != "HEAD":
            self.wfile.write(upstream.body)

    def _respond_rewritten(self, upstream: _UpstreamResponse, body: bytes):
        headers = [(k, v) for k, v in upstream.headers if k.lower() != "content-encoding"]
        headers.append(("Content-Encoding", "identity"))
        self._send_head(upstream.status, upstream.reason, headers, len(body))
        self.wfile.write(body)

    def _respond_block(self, reason: str):
        page = self.filter_proxy.config.block_page_template.format(reason=reason)
        body = page.encode("utf-8")
        self.send_response(403, "Forbidden")
        self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def _relay_sockets(a: socket.socket, b: socket.socket) -> None:
    """Blind bidirectional byte relay for CONNECT tunnels."""

    def pump(src: socket.socket, dst: socket.socket):
        try:
            while True:
                chunk = src.recv(65536)
                if not chunk:
                    break
                dst.sendall(chunk)
        except OSError:
            pass
        finally:
            try:
                dst.shutdown(socket.SHUT_WR)
            except OSError:
                pass

    threads = [threading.Thread(target=pump, args=(a, b), daemon=True),
               threading.Thread(target=pump, args=(b, a), daemon=True)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()


def serve_proxy(config: ProxyConfig) -> None:
    """Run the proxy until interrupted (the CLI entry point)."""
    FilterProxy(config).serve_forever()


__all__ = ["ProxyConfig", "FilterProxy", "serve_proxy", "DEFAULT_BLOCK_PAGE", "SKIP_HEADER"]
