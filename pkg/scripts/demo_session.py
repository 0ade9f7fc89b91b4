#!/usr/bin/env python3
"""End-to-end demo on loopback TCP: server + three scripted clients.

Starts a server on an ephemeral port, walks three clients through joins,
broadcasts, private messages, a member-details request, a graceful quit
and an abrupt crash, then prints each client's view and the server log.

    python scripts/demo_session.py
"""

import sys
import tempfile
import time
from pathlib import Path

from gcs.client_core import connect_and_join
from gcs.cli_client import render_event
from gcs.server import GcsServer, ServerConfig


def drain(conn, out, timeout=0.4):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        event = conn.next_event(timeout=0.05)
        if event is not None:
            out.append(render_event(event))


def main() -> int:
    log_path = Path(tempfile.mkdtemp()) / "demo.log"
    server = GcsServer(ServerConfig(bind_port=0, heartbeat_interval=2, log_path=log_path))
    server.start()
    ip, port = server.endpoint
    print(f"server on {ip}:{port}\n")

    views = {"alice": [], "bob": [], "carol": []}
    alice = connect_and_join(ip, port, "alice")
    bob = connect_and_join(ip, port, "bob")
    carol = connect_and_join(ip, port, "carol")
    conns = {"alice": alice, "bob": bob, "carol": carol}

    alice.submit("good morning all")
    bob.submit("@carol fancy lunch later?")
    carol.submit("@alice /memberdetails")
    for name, conn in conns.items():
        drain(conn, views[name])

    bob.submit("/quit")
    time.sleep(0.2)
    alice.close()  # crash: no QUIT, the server announces LEFT(error)
    for name in ("alice", "bob", "carol"):
        drain(conns[name], views[name], timeout=0.6)

    for name, lines in views.items():
        print(f"--- {name}'s view ---")
        for line in lines:
            print(f"  {line}")
        print()

    carol.submit("/quit")
    time.sleep(0.2)
    for conn in conns.values():
        conn.close()
    server.stop()

    print("--- server log ---")
    print(log_path.read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
