"""Gateway tests: ws<->tcp transparency, close reasons, static console."""

import socket
import urllib.request

import pytest
from websockets.exceptions import ConnectionClosed
from websockets.sync.client import connect as ws_connect

from gcs.server import BindError, GcsServer, ServerConfig
from gcs.web_gateway import GcsGateway

FIXED_NOW = 1709287200.0


@pytest.fixture
def stack():
    server = GcsServer(
        ServerConfig(bind_port=0, heartbeat_interval=30), clock=lambda: FIXED_NOW
    )
    server.start()
    gateway = GcsGateway(listen_port=0, server_host="127.0.0.1", server_port=server.port)
    gateway.start()
    yield server, gateway
    gateway.stop()
    server.stop()


def tcp_session(port, lines):
    """Run a scripted session over direct TCP; returns all received lines.

    TCP ordering makes the reply sequence independent of read pacing, so
    the script is sent up front and everything is read back until EOF
    (the scripts end in QUIT, which closes the connection).
    """
    sock = socket.create_connection(("127.0.0.1", port))
    sock.settimeout(5)
    recv = sock.makefile("rb")
    for line in lines:
        sock.sendall((line + "\n").encode())
    received = []
    while True:
        raw = recv.readline()
        if not raw:
            break
        received.append(raw.rstrip(b"\n").decode())
    sock.close()
    return received


def ws_session(port, lines):
    """The same script through the gateway; returns all received messages."""
    received = []
    with ws_connect(f"ws://127.0.0.1:{port}/ws") as ws:
        for line in lines:
            ws.send(line)
        try:
            while True:
                received.append(ws.recv(timeout=5))
        except ConnectionClosed:
            pass
    return received


SCRIPT = [
    "JOIN scripted",
    "MSG a body with several spaces",
    "PRIV scripted note to self",
    "@oops not-a-frame",
    "QUIT",
]


class TestTransparency:
    def test_gateway_transcript_equals_direct_tcp(self, stack):
        server, gateway = stack
        direct = tcp_session(server.port, SCRIPT)
        bridged = ws_session(gateway.port, SCRIPT)
        assert direct == bridged
        assert any(line.startswith("WELCOME scripted") for line in direct)
        assert any(line.startswith("ERR bad_frame") for line in direct)

    def test_one_message_per_line_with_spaces(self, stack):
        server, gateway = stack
        with ws_connect(f"ws://127.0.0.1:{gateway.port}/ws") as ws:
            ws.send("JOIN spacey")
            assert ws.recv(timeout=2) == "WELCOME spacey spacey"
            assert ws.recv(timeout=2) == "COORD spacey"
            ws.send("MSG   leading and   internal   spaces")
            echoed = ws.recv(timeout=2)
            assert echoed == "BCAST 2024-03-01 10:00:00 spacey   leading and   internal   spaces"

    def test_upstream_close_reason(self, stack):
        server, gateway = stack
        ws = ws_connect(f"ws://127.0.0.1:{gateway.port}/ws")
        ws.send("JOIN fleeting")
        ws.recv(timeout=2)
        ws.recv(timeout=2)
        ws.send("QUIT")  # server closes the TCP side
        with pytest.raises(ConnectionClosed) as excinfo:
            while True:
                ws.recv(timeout=2)
        assert excinfo.value.rcvd.reason == "upstream_closed"
        assert excinfo.value.rcvd.code == 1000

    def test_upstream_unreachable(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        gateway = GcsGateway(listen_port=0, server_host="127.0.0.1", server_port=dead_port)
        gateway.start()
        try:
            ws = ws_connect(f"ws://127.0.0.1:{gateway.port}/ws")
            with pytest.raises(ConnectionClosed) as excinfo:
                ws.recv(timeout=3)
            assert excinfo.value.rcvd.reason == "upstream_unreachable"
        finally:
            gateway.stop()


class TestStatic:
    def test_fallback_page_without_console_dir(self, stack):
        _, gateway = stack
        page = urllib.request.urlopen(f"http://127.0.0.1:{gateway.port}/").read()
        assert b"gateway" in page

    def test_serves_console_assets(self, tmp_path):
        (tmp_path / "index.html").write_text("<html>console here</html>")
        (tmp_path / "app.js").write_text("export {};")
        gateway = GcsGateway(
            listen_port=0, server_host="127.0.0.1", server_port=1, console_dir=tmp_path
        )
        gateway.start()
        try:
            base = f"http://127.0.0.1:{gateway.port}"
            assert b"console here" in urllib.request.urlopen(base + "/").read()
            assert b"export" in urllib.request.urlopen(base + "/app.js").read()
            with pytest.raises(urllib.error.HTTPError) as excinfo:
                urllib.request.urlopen(base + "/missing.js")
            assert excinfo.value.code == 404
        finally:
            gateway.stop()

    def test_path_traversal_refused(self, tmp_path):
        (tmp_path / "index.html").write_text("ok")
        gateway = GcsGateway(
            listen_port=0, server_host="127.0.0.1", server_port=1, console_dir=tmp_path
        )
        gateway.start()
        try:
            base = f"http://127.0.0.1:{gateway.port}"
            with pytest.raises(urllib.error.HTTPError) as excinfo:
                urllib.request.urlopen(base + "/../secrets.txt")
            assert excinfo.value.code in (403, 404)
        finally:
            gateway.stop()


class TestBind:
    def test_gateway_port_clash_is_bind_error(self, stack):
        _, gateway = stack
        with pytest.raises(BindError) as excinfo:
            GcsGateway(listen_port=gateway.port, server_host="127.0.0.1", server_port=1).start()
        assert excinfo.value.cause == "port-in-use"
