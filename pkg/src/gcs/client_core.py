"""Client session state machine, shared by the terminal client and tests.

The pure half (`submit_input`, `apply_server_frame`) maps user input and
server frames onto state transitions and UI-facing events; the transport
half (`connect_and_join` / `ClientConnection`) runs it over a real TCP
socket with a reader thread. Callers of the pure functions must serialize
invocations; `ClientConnection` does that with an internal lock.
"""

from __future__ import annotations

import queue
import socket
import threading
from dataclasses import dataclass, replace

from . import protocol as wire
from .protocol import (
    Broadcast,
    DetailsRequest,
    InputError,
    Private,
    QuitCommand,
    decode_frame,
    encode_frame,
    parse_user_input,
    valid_member_id,
    MEMBER_DETAILS_BODY,
)

HANDSHAKE_TIMEOUT = 10.0

PHASE_CONNECTING = "connecting"
PHASE_JOINING = "joining"
PHASE_ACTIVE = "active"
PHASE_CLOSED = "closed"


class JoinRejected(Exception):
    """Server refused the JOIN (ERR before WELCOME), e.g. duplicate_id."""

    def __init__(self, code: str, text: str):
        self.code = code
        self.text = text
        super().__init__(f"{code}: {text}")


class HandshakeTimeout(Exception):
    pass


class ProtocolViolation(Exception):
    pass


@dataclass(frozen=True)
class ClientState:
    phase: str = PHASE_CONNECTING
    proposed_id: str | None = None
    own_id: str | None = None
    coordinator: str | None = None
    roster: tuple[tuple[str, str, int], ...] | None = None
    close_reason: str | None = None


def joining_state(proposed_id: str) -> ClientState:
    return ClientState(phase=PHASE_JOINING, proposed_id=proposed_id)


# UI-facing events, emitted in the order the causing frames arrived.
@dataclass(frozen=True)
class Joined:
    own_id: str
    coordinator: str


@dataclass(frozen=True)
class PeerJoined:
    id: str


@dataclass(frozen=True)
class PeerLeft:
    id: str
    reason: str


@dataclass(frozen=True)
class NewCoordinator:
    id: str


@dataclass(frozen=True)
class Message:
    ts: str
    sender: str
    body: str
    kind: str  # public | private


@dataclass(frozen=True)
class Roster:
    entries: tuple[tuple[str, str, int], ...]


@dataclass(frozen=True)
class Error:
    code: str
    text: str


@dataclass(frozen=True)
class Disconnected:
    reason: str  # quit | connection_lost | protocol_error | timeout


ClientEvent = Joined | PeerJoined | PeerLeft | NewCoordinator | Message | Roster | Error | Disconnected


def submit_input(
    state: ClientState, text: str
) -> tuple[ClientState, wire.WireFrame | None, tuple[ClientEvent, ...]]:
    """Turn one line of user input into an outbound frame (or a local error).

    Parse errors never reach the wire; after the session is closed nothing
    does.
    """
    if state.phase != PHASE_ACTIVE:
        return state, None, (Error("not_active", "not connected to a group"),)
    try:
        command = parse_user_input(text, state.coordinator)
    except InputError as exc:
        return state, None, (Error(exc.code, str(exc)),)
    if isinstance(command, Broadcast):
        return state, wire.Msg(command.body), ()
    if isinstance(command, Private):
        return state, wire.Priv(command.target, command.body), ()
    if isinstance(command, DetailsRequest):
        # Addressed to whatever id the user named; the server adjudicates
        # whether that id is the coordinator.
        return state, wire.Priv(command.target, MEMBER_DETAILS_BODY), ()
    assert isinstance(command, QuitCommand)
    return replace(state, phase=PHASE_CLOSED, close_reason="quit"), wire.Quit(), ()


def apply_server_frame(
    state: ClientState, frame: wire.WireFrame
) -> tuple[ClientState, tuple[ClientEvent, ...], wire.WireFrame | None]:
    """Apply one server frame; returns (state, events, automatic reply).

    PING is answered with PONG and is invisible to the user. Frames a
    server must never send (client->server verbs) close the session as a
    protocol error.
    """
    if isinstance(frame, wire.Ping):
        return state, (), wire.Pong(frame.nonce)
    if isinstance(frame, wire.Welcome):
        new = replace(
            state, phase=PHASE_ACTIVE, own_id=frame.own_id, coordinator=frame.coordinator
        )
        return new, (Joined(frame.own_id, frame.coordinator),), None
    if isinstance(frame, wire.Joined):
        return state, (PeerJoined(frame.id),), None
    if isinstance(frame, wire.Left):
        return state, (PeerLeft(frame.id, frame.reason),), None
    if isinstance(frame, wire.Coord):
        return replace(state, coordinator=frame.id), (NewCoordinator(frame.id),), None
    if isinstance(frame, wire.Bcast):
        return state, (Message(frame.ts, frame.sender, frame.body, "public"),), None
    if isinstance(frame, wire.Privmsg):
        return state, (Message(frame.ts, frame.sender, frame.body, "private"),), None
    if isinstance(frame, wire.Members):
        return replace(state, roster=frame.entries), (Roster(frame.entries),), None
    if isinstance(frame, wire.Err):
        return state, (Error(frame.code, frame.text),), None
    closed = replace(state, phase=PHASE_CLOSED, close_reason="protocol_error")
    return closed, (Disconnected("protocol_error"),), None


class ClientConnection:
    """A joined TCP session: send user input, consume events.

    A daemon reader thread decodes server lines, applies them to the state
    machine and queues the resulting events; PONGs go out automatically.
    """

    def __init__(self, sock: socket.socket, state: ClientState, recv_file, initial_events=()):
        self._sock = sock
        self._recv = recv_file
        self._state = state
        self._lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._events: queue.Queue[ClientEvent] = queue.Queue()
        for event in initial_events:  # handshake events precede anything the reader sees
            self._events.put(event)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    @property
    def state(self) -> ClientState:
        with self._lock:
            return self._state

    def submit(self, text: str) -> None:
        with self._lock:
            self._state, frame, events = submit_input(self._state, text)
        for event in events:
            self._events.put(event)
        if frame is not None:
            self._send(frame)

    def next_event(self, timeout: float | None = None) -> ClientEvent | None:
        try:
            return self._events.get(timeout=timeout)
        except queue.Empty:
            return None

    def _send(self, frame) -> None:
        try:
            with self._send_lock:
                self._sock.sendall(encode_frame(frame).encode("utf-8"))
        except OSError:
            pass  # the reader loop reports the loss

    def _read_loop(self) -> None:
        reason = "connection_lost"
        try:
            while True:
                raw = self._recv.readline()
                if not raw or not raw.endswith(b"\n"):
                    break
                line = raw[:-1].decode("utf-8").rstrip("\r")
                frame = decode_frame(line)
                with self._lock:
                    self._state, events, auto_reply = apply_server_frame(self._state, frame)
                for event in events:
                    self._events.put(event)
                if auto_reply is not None:
                    self._send(auto_reply)
                if any(isinstance(e, Disconnected) for e in events):
                    return  # protocol violation: Disconnected already emitted
        except (wire.BadFrame, UnicodeDecodeError):
            reason = "protocol_error"
        except OSError:
            pass
        with self._lock:
            if self._state.close_reason == "quit":
                reason = "quit"
            self._state = replace(self._state, phase=PHASE_CLOSED,
                                  close_reason=self._state.close_reason or reason)
        self._events.put(Disconnected(reason))
        try:
            self._sock.close()
        except OSError:
            pass

    def close(self) -> None:
        # shutdown (not just close) so the FIN reaches the server and the
        # blocked reader thread wakes even while makefile holds an io-ref
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
        self._reader.join(timeout=2)


def connect_and_join(
    host: str, port: int, member_id: str, *, handshake_timeout: float = HANDSHAKE_TIMEOUT
) -> ClientConnection:
    """Dial the server, send JOIN and wait for WELCOME.

    Raises ConnectionRefusedError (unreachable), JoinRejected (server ERR,
    e.g. duplicate_id) or HandshakeTimeout (no WELCOME in time).
    """
    if not valid_member_id(member_id):
        raise ValueError(f"invalid member id: {member_id!r}")
    sock = socket.create_connection((host, port), timeout=handshake_timeout)
    try:
        sock.settimeout(handshake_timeout)
        sock.sendall(encode_frame(wire.Join(member_id)).encode("utf-8"))
        recv = sock.makefile("rb")
        state = joining_state(member_id)
        while True:
            try:
                raw = recv.readline()
            except (socket.timeout, TimeoutError) as exc:
                raise HandshakeTimeout(f"no WELCOME within {handshake_timeout}s") from exc
            if not raw:
                raise ConnectionError("server closed the connection during the handshake")
            frame = decode_frame(raw[:-1].decode("utf-8").rstrip("\r"))
            if isinstance(frame, wire.Ping):
                sock.sendall(encode_frame(wire.Pong(frame.nonce)).encode("utf-8"))
                continue
            if isinstance(frame, wire.Err):
                raise JoinRejected(frame.code, frame.text)
            if isinstance(frame, wire.Welcome):
                state, events, _ = apply_server_frame(state, frame)
                break
            raise ProtocolViolation(f"unexpected frame before WELCOME: {frame!r}")
        sock.settimeout(None)
    except BaseException:
        sock.close()
        raise
    return ClientConnection(sock, state, recv, initial_events=events)
