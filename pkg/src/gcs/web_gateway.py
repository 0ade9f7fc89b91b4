"""WebSocket gateway: one browser connection <-> one TCP client connection.

Each WebSocket text message is exactly one protocol line (minus the
newline) and vice versa; frames cross unmodified, in order, 1:1, so a
session through the gateway is indistinguishable from direct TCP. The
same port also serves the static browser console over plain HTTP.
"""

from __future__ import annotations

import argparse
import asyncio
import mimetypes
import socket
import sys
import threading
from http import HTTPStatus
from pathlib import Path

from websockets.asyncio.server import serve
from websockets.datastructures import Headers
from websockets.http11 import Response

from .server import BindError

WS_PATH = "/ws"

_FALLBACK_PAGE = b"""<!doctype html>
<html><head><meta charset="utf-8"><title>gcs gateway</title></head>
<body><h1>gcs gateway</h1>
<p>The gateway is running and bridging <code>/ws</code> to the chat server.</p>
<p>No console assets are configured; start the gateway with
<code>--console-dir</code> pointing at the built web console.</p>
</body></html>
"""


def _http_response(status: HTTPStatus, body: bytes, content_type: str) -> Response:
    headers = Headers(
        [
            ("Content-Type", content_type),
            ("Content-Length", str(len(body))),
            ("Connection", "close"),
        ]
    )
    return Response(status.value, status.phrase, headers, body)


class GcsGateway:
    """Bridge listener with a synchronous start/stop facade."""

    def __init__(
        self,
        listen_port: int,
        server_host: str,
        server_port: int,
        *,
        listen_host: str = "127.0.0.1",
        console_dir: str | Path | None = None,
    ):
        self.listen_host = listen_host
        self.listen_port = listen_port
        self.server_host = server_host
        self.server_port = server_port
        self.console_dir = Path(console_dir) if console_dir is not None else None
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stop_event: asyncio.Event | None = None
        self._ready = threading.Event()
        self._started = False

    @property
    def port(self) -> int:
        if self._sock is None:
            raise RuntimeError("gateway is not started")
        return self._sock.getsockname()[1]

    def start(self) -> "GcsGateway":
        if self._started:
            raise RuntimeError("gateway already started")
        endpoint = f"{self.listen_host}:{self.listen_port}"
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.listen_host, self.listen_port))
            sock.listen(128)
        except OSError as exc:
            sock.close()
            raise BindError.from_oserror(endpoint, exc) from exc
        self._sock = sock
        self._started = True
        self._thread = threading.Thread(target=self._run_loop, name="gcs-gateway", daemon=True)
        self._thread.start()
        self._ready.wait()
        return self

    def _run_loop(self) -> None:
        try:
            asyncio.run(self._main())
        finally:
            self._ready.set()

    async def _main(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._stop_event = asyncio.Event()
        server = await serve(self._bridge, sock=self._sock, process_request=self._process_request)
        self._ready.set()
        try:
            await self._stop_event.wait()
        finally:
            server.close(close_connections=True)
            try:
                # bounded: a lingering HTTP client must not wedge shutdown
                await asyncio.wait_for(server.wait_closed(), timeout=1)
            except asyncio.TimeoutError:
                pass

    def stop(self) -> None:
        if not self._started:
            return
        self._ready.wait()
        if self._loop is not None and self._loop.is_running():
            self._loop.call_soon_threadsafe(self._stop_event.set)
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._started = False

    # -- HTTP side (console assets) ----------------------------------------

    def _process_request(self, connection, request):
        path = request.path.split("?", 1)[0]
        if path == WS_PATH:
            return None  # continue the WebSocket handshake
        if request.headers.get("Upgrade", "").lower() == "websocket":
            body = b"WebSocket endpoint is /ws\n"
            return _http_response(HTTPStatus.NOT_FOUND, body, "text/plain; charset=utf-8")
        return self._serve_static(path)

    def _serve_static(self, path: str) -> Response:
        if path in ("", "/"):
            path = "/index.html"
        if self.console_dir is None:
            if path == "/index.html":
                return _http_response(HTTPStatus.OK, _FALLBACK_PAGE, "text/html; charset=utf-8")
            return _http_response(HTTPStatus.NOT_FOUND, b"not found\n", "text/plain; charset=utf-8")
        root = self.console_dir.resolve()
        candidate = (root / path.lstrip("/")).resolve()
        if root not in candidate.parents and candidate != root:
            return _http_response(HTTPStatus.FORBIDDEN, b"forbidden\n", "text/plain; charset=utf-8")
        if not candidate.is_file():
            return _http_response(HTTPStatus.NOT_FOUND, b"not found\n", "text/plain; charset=utf-8")
        content_type = mimetypes.guess_type(candidate.name)[0] or "application/octet-stream"
        if content_type.startswith("text/") or content_type == "application/javascript":
            content_type += "; charset=utf-8"
        return _http_response(HTTPStatus.OK, candidate.read_bytes(), content_type)

    # -- WebSocket side ------------------------------------------------------

    async def _bridge(self, ws) -> None:
        try:
            reader, writer = await asyncio.open_connection(self.server_host, self.server_port)
        except OSError:
            await ws.close(code=1011, reason="upstream_unreachable")
            return

        async def ws_to_tcp() -> None:
            try:
                async for message in ws:
                    if isinstance(message, (bytes, bytearray)):
                        await ws.close(code=1003, reason="text_frames_only")
                        break
                    writer.write((message + "\n").encode("utf-8"))
                    await writer.drain()
            except (ConnectionError, OSError):
                pass
            finally:
                writer.close()

        async def tcp_to_ws() -> None:
            try:
                while True:
                    line = await reader.readline()
                    if not line or not line.endswith(b"\n"):
                        break
                    await ws.send(line[:-1].decode("utf-8").rstrip("\r"))
            except (ConnectionError, OSError, UnicodeDecodeError):
                pass
            finally:
                try:
                    await ws.close(code=1000, reason="upstream_closed")
                except (ConnectionError, OSError):
                    pass

        await asyncio.gather(ws_to_tcp(), tcp_to_ws(), return_exceptions=True)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gcs-gateway", description="Bridge WebSocket clients to a chat server."
    )
    parser.add_argument("--listen", type=int, default=8800)
    parser.add_argument("--listen-host", default="127.0.0.1")
    parser.add_argument("--server-host", default="127.0.0.1")
    parser.add_argument("--server-port", type=int, default=5000)
    parser.add_argument("--console-dir", default=None, help="directory of built console assets")
    args = parser.parse_args(argv)
    try:
        gateway = GcsGateway(
            listen_port=args.listen,
            server_host=args.server_host,
            server_port=args.server_port,
            listen_host=args.listen_host,
            console_dir=args.console_dir,
        )
        gateway.start()
    except BindError as exc:
        print(f"gcs-gateway: {exc}", file=sys.stderr)
        return 1
    print(
        f"gcs-gateway: ws://{args.listen_host}:{gateway.port}{WS_PATH} -> "
        f"{args.server_host}:{args.server_port}",
        flush=True,
    )
    try:
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        gateway.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
