"""Interactive terminal client.

Plain line-oriented output (no screen control) so transcripts are
capturable: incoming events print as they arrive, user input is read line
by line, `/quit` or EOF leaves gracefully. Exit codes: 0 graceful quit,
1 connection trouble, 2 protocol error.
"""

from __future__ import annotations

import argparse
import sys
import threading

from .client_core import (
    ClientEvent,
    Disconnected,
    Error,
    HandshakeTimeout,
    Joined,
    JoinRejected,
    Message,
    NewCoordinator,
    PeerJoined,
    PeerLeft,
    ProtocolViolation,
    Roster,
    connect_and_join,
)
from .protocol import valid_member_id

EXIT_OK = 0
EXIT_CONNECTION = 1
EXIT_PROTOCOL = 2


def render_event(event: ClientEvent) -> str:
    """One stable rendering per event variant (pinned by the golden table)."""
    if isinstance(event, Joined):
        return f"*** joined as {event.own_id}; coordinator is {event.coordinator}"
    if isinstance(event, PeerJoined):
        return f"*** {event.id} joined"
    if isinstance(event, PeerLeft):
        return f"*** {event.id} left ({event.reason})"
    if isinstance(event, NewCoordinator):
        return f"*** {event.id} is now the coordinator"
    if isinstance(event, Message):
        if event.kind == "private":
            return f"[{event.ts}] {event.sender} (private): {event.body}"
        return f"[{event.ts}] {event.sender}: {event.body}"
    if isinstance(event, Roster):
        return "\n".join(f"- {i} {ip}:{port}" for i, ip, port in event.entries)
    if isinstance(event, Error):
        return f"!!! {event.code}: {event.text}"
    if isinstance(event, Disconnected):
        return f"*** disconnected: {event.reason}"
    raise TypeError(f"not a client event: {event!r}")


def run(host: str, port: int, member_id: str, *, input_lines=None, write=print) -> int:
    """Join, pump events to `write` and input lines to the session.

    `input_lines` defaults to stdin; passing an iterable scripts the
    session for tests.
    """
    try:
        conn = connect_and_join(host, port, member_id)
    except ConnectionRefusedError:
        write(f"!!! connection refused: {host}:{port}")
        return EXIT_CONNECTION
    except JoinRejected as exc:
        write(f"!!! join rejected: {exc.code}: {exc.text}")
        return EXIT_CONNECTION
    except HandshakeTimeout:
        write(f"!!! handshake timeout: no WELCOME from {host}:{port}")
        return EXIT_CONNECTION
    except ProtocolViolation as exc:
        write(f"!!! protocol error: {exc}")
        return EXIT_PROTOCOL
    except OSError as exc:
        write(f"!!! connection failed: {exc}")
        return EXIT_CONNECTION

    done = threading.Event()
    final_reason = {}

    def pump_events() -> None:
        while True:
            event = conn.next_event(timeout=0.25)
            if event is None:
                if done.is_set():
                    return
                continue
            write(render_event(event))
            if isinstance(event, Disconnected):
                final_reason["reason"] = event.reason
                done.set()
                return

    printer = threading.Thread(target=pump_events, daemon=True)
    printer.start()

    lines = input_lines if input_lines is not None else sys.stdin
    try:
        for line in lines:
            if done.is_set():
                break
            conn.submit(line.rstrip("\n"))
            if conn.state.phase == "closed":
                break
    except KeyboardInterrupt:
        pass
    if conn.state.phase != "closed":
        conn.submit("/quit")  # EOF on input leaves gracefully
    done.wait(timeout=5)
    done.set()
    printer.join(timeout=2)
    conn.close()

    reason = final_reason.get("reason", "connection_lost")
    if reason == "quit":
        return EXIT_OK
    if reason == "protocol_error":
        return EXIT_PROTOCOL
    return EXIT_CONNECTION


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gcs-client", description="Join a group chat.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=5000)
    parser.add_argument("--id", dest="member_id", default=None)
    args = parser.parse_args(argv)
    member_id = args.member_id
    while member_id is None or not valid_member_id(member_id):
        if member_id is not None:
            print("ids are 1-32 chars of A-Z a-z 0-9 _ -", file=sys.stderr)
        try:
            member_id = input("member id: ").strip()
        except EOFError:
            return EXIT_CONNECTION
    return run(args.host, args.port, member_id)


if __name__ == "__main__":
    raise SystemExit(main())
