"""The centralized server: TCP listener, per-connection handlers, sequencer.

Connection handlers only do transport I/O; every decoded frame is handed
to the `ServerEngine`, the single sequencer that owns the registry, the
session table and the log. Running all handlers plus the heartbeat
sweeper on one asyncio loop serializes the engine by construction and
gives a global delivery order. A synchronous facade (`GcsServer`) runs
that loop in a background thread so scripts and tests can drive it
directly.
"""

from __future__ import annotations

import argparse
import asyncio
import errno
import os
import socket
import sys
import threading
import time
from dataclasses import dataclass, field

from . import registry as reg
from . import routing
from .protocol import (
    BadFrame,
    Ping,
    decode_frame,
    encode_frame,
    format_timestamp,
    valid_ip,
    valid_port,
)
from .routing import Effects, LogEntry, Phase, SessionState, ToAllMembers, ToMember, ToSelf


class ConfigError(ValueError):
    pass


class BindError(Exception):
    """Listener could not be established; names the endpoint exactly.

    ``cause`` is one of: port-in-use, permission-denied,
    address-unavailable, bind-failed.
    """

    def __init__(self, endpoint: str, cause: str, oserror: OSError | None = None):
        self.endpoint = endpoint
        self.cause = cause
        self.oserror = oserror
        detail = f" ({oserror.strerror})" if oserror is not None and oserror.strerror else ""
        super().__init__(f"cannot bind {endpoint}: {cause}{detail}")

    @classmethod
    def from_oserror(cls, endpoint: str, exc: OSError) -> "BindError":
        if exc.errno == errno.EADDRINUSE:
            cause = "port-in-use"
        elif exc.errno in (errno.EACCES, errno.EPERM):
            cause = "permission-denied"
        elif exc.errno == errno.EADDRNOTAVAIL:
            cause = "address-unavailable"
        else:
            cause = "bind-failed"
        return cls(endpoint, cause, exc)


class ServerInstanceError(RuntimeError):
    """A second server instance was refused by the process-level guard."""


@dataclass
class ServerConfig:
    bind_ip: str = "127.0.0.1"
    bind_port: int = 5000
    heartbeat_interval: float = 5.0
    heartbeat_misses: int = 2
    log_path: str | os.PathLike | None = None
    gateway_port: int | None = None

    def validate(self) -> None:
        if not valid_ip(self.bind_ip):
            raise ConfigError(f"bind_ip must be a dotted quad, got {self.bind_ip!r}")
        if not valid_port(self.bind_port):
            raise ConfigError(f"bind_port must be 0..65535, got {self.bind_port!r}")
        if not self.heartbeat_interval > 0:
            raise ConfigError("heartbeat_interval must be > 0")
        if self.heartbeat_misses < 1:
            raise ConfigError("heartbeat_misses must be >= 1")
        if self.gateway_port is not None and not valid_port(self.gateway_port):
            raise ConfigError(f"gateway_port must be 0..65535, got {self.gateway_port!r}")


class LogSink:
    """Append-only interaction log: one line per entry, flushed immediately.

    With a path, lines go to that file; file I/O trouble degrades to
    standard output with a one-time warning and never interrupts routing.
    Without a path, lines go to standard output. ``retain=True`` keeps
    entries in memory for transcript assertions.
    """

    def __init__(self, path: str | os.PathLike | None = None, retain: bool = False):
        self._lock = threading.Lock()
        self._warned = False
        self._stream = None
        self.entries: list[LogEntry] | None = [] if retain else None
        if path is not None:
            try:
                self._stream = open(path, "a", encoding="utf-8")
            except OSError as exc:
                self._warn(exc)

    def _warn(self, exc: OSError) -> None:
        if not self._warned:
            self._warned = True
            print(f"gcs: log sink unavailable, falling back to stdout: {exc}", file=sys.stderr)

    def append(self, entry: LogEntry) -> None:
        line = entry.line()
        with self._lock:
            if self.entries is not None:
                self.entries.append(entry)
            if self._stream is not None:
                try:
                    self._stream.write(line + "\n")
                    self._stream.flush()
                    return
                except OSError as exc:
                    self._stream = None
                    self._warn(exc)
            print(line, flush=True)

    def lines(self) -> list[str]:
        if self.entries is None:
            raise RuntimeError("LogSink was not created with retain=True")
        return [e.line() for e in self.entries]

    def close(self) -> None:
        with self._lock:
            if self._stream is not None:
                try:
                    self._stream.close()
                except OSError:
                    pass
                self._stream = None


@dataclass
class Dispatch:
    """Concrete transport work produced by one engine call."""

    sends: list[tuple[int, object]] = field(default_factory=list)
    closes: list[int] = field(default_factory=list)

    def extend(self, other: "Dispatch") -> None:
        self.sends.extend(other.sends)
        self.closes.extend(other.closes)


class ServerEngine:
    """The single sequencer: registry + session table + log.

    Callers (one asyncio loop, or the simulation harness) must serialize
    calls; the engine itself takes no locks. Each method applies the pure
    routing core and resolves symbolic destinations to connection ids.
    """

    def __init__(self, *, heartbeat_misses: int = 2, clock=time.time, log: LogSink | None = None):
        self.registry = reg.Registry()
        self.sessions: dict[int, SessionState] = {}
        self.log = log if log is not None else LogSink()
        self.clock = clock
        self.heartbeat_misses = heartbeat_misses
        self._conn_by_member: dict[str, int] = {}
        self._next_conn = 1
        self._next_nonce = 1

    def now(self) -> str:
        return format_timestamp(self.clock())

    def log_event(self, kind: str, detail: str) -> None:
        self.log.append(LogEntry(self.now(), kind, detail))

    def on_connect(self, peer_ip: str, peer_port: int) -> int:
        conn_id = self._next_conn
        self._next_conn += 1
        self.sessions[conn_id] = SessionState(peer_ip=peer_ip, peer_port=peer_port)
        return conn_id

    def on_line(self, conn_id: int, raw: bytes | str) -> Dispatch:
        session = self.sessions.get(conn_id)
        if session is None:
            return Dispatch()
        if isinstance(raw, bytes):
            if raw.endswith(b"\n"):
                raw = raw[:-1]
            if raw.endswith(b"\r"):
                raw = raw[:-1]
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                new_session, effects = routing.handle_bad_frame(
                    session, self.registry, "bad_encoding", self.now()
                )
                return self._apply(conn_id, session, new_session, effects)
        else:
            line = raw
        try:
            frame = decode_frame(line)
        except BadFrame as exc:
            new_session, effects = routing.handle_bad_frame(
                session, self.registry, exc.reason, self.now()
            )
            return self._apply(conn_id, session, new_session, effects)
        return self.on_frame(conn_id, frame)

    def on_frame(self, conn_id: int, frame) -> Dispatch:
        session = self.sessions.get(conn_id)
        if session is None:
            return Dispatch()
        new_session, effects = routing.handle_frame(session, frame, self.registry, self.now())
        return self._apply(conn_id, session, new_session, effects)

    def on_disconnect(self, conn_id: int, reason: str) -> Dispatch:
        """Transport loss. Idempotent: unknown or already-closed ids are no-ops."""
        session = self.sessions.get(conn_id)
        if session is None:
            return Dispatch()
        effects = routing.on_disconnect(session, self.registry, reason, self.now())
        new_session = SessionState(
            peer_ip=session.peer_ip, peer_port=session.peer_port, phase=Phase.CLOSED
        )
        return self._apply(conn_id, session, new_session, effects, transport_gone=True)

    def sweep(self) -> Dispatch:
        """Heartbeat pass: PING live sessions, condemn silent ones."""
        result = routing.heartbeat_sweep(self.sessions, self.heartbeat_misses, self._next_nonce)
        self._next_nonce = result.next_nonce
        self.sessions.update(result.sessions)
        dispatch = Dispatch()
        for conn_id, nonce in result.pings:
            dispatch.sends.append((conn_id, Ping(nonce)))
        for conn_id in result.condemned:
            session = self.sessions[conn_id]
            self.log_event("ping_timeout", f"id={session.member_id} missed={session.missed_pings}")
            dispatch.extend(self.on_disconnect(conn_id, "timeout"))
            dispatch.closes.append(conn_id)
        return dispatch

    def _apply(
        self,
        conn_id: int,
        old_session: SessionState,
        new_session: SessionState,
        effects: Effects,
        transport_gone: bool = False,
    ) -> Dispatch:
        self.registry = effects.registry
        self.sessions[conn_id] = new_session
        if new_session.phase is Phase.JOINED and old_session.phase is not Phase.JOINED:
            self._conn_by_member[new_session.member_id] = conn_id

        # Log before sending: the audit trail never lags a delivered frame.
        for entry in effects.logs:
            self.log.append(entry)

        dispatch = Dispatch()
        for destination, frame in effects.outbound:
            if isinstance(destination, ToSelf):
                dispatch.sends.append((conn_id, frame))
            elif isinstance(destination, ToMember):
                target_conn = self._conn_by_member.get(destination.member_id)
                if target_conn is not None:
                    dispatch.sends.append((target_conn, frame))
            elif isinstance(destination, ToAllMembers):
                for member in effects.registry.members:
                    member_conn = self._conn_by_member.get(member.id)
                    if member_conn is not None:
                        dispatch.sends.append((member_conn, frame))

        closed = effects.close is not None or new_session.phase is Phase.CLOSED
        if closed:
            if old_session.member_id is not None:
                mapped = self._conn_by_member.get(old_session.member_id)
                if mapped == conn_id:
                    del self._conn_by_member[old_session.member_id]
            del self.sessions[conn_id]
            if not transport_gone:
                dispatch.closes.append(conn_id)
        return dispatch


_GUARD_LOCK = threading.Lock()
_LIVE_SERVERS: set = set()


class GcsServer:
    """Socket-level server with a synchronous start/stop facade.

    `start()` binds synchronously (so endpoint conflicts surface as
    BindError right there), then runs the accept loop, per-connection
    readers and the heartbeat sweeper on an asyncio loop in a background
    thread. Only one instance may run per process.
    """

    def __init__(self, config: ServerConfig, *, clock=time.time):
        config.validate()
        self.config = config
        self.engine: ServerEngine | None = None
        self._clock = clock
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stop_event: asyncio.Event | None = None
        self._ready = threading.Event()
        self._writers: dict[int, asyncio.StreamWriter] = {}
        self._log: LogSink | None = None
        self._gateway = None
        self._started = False

    @property
    def endpoint(self) -> tuple[str, int]:
        if self._sock is None:
            raise RuntimeError("server is not started")
        name = self._sock.getsockname()
        return name[0], name[1]

    @property
    def port(self) -> int:
        return self.endpoint[1]

    def start(self) -> "GcsServer":
        if self._started:
            raise RuntimeError("server already started")
        endpoint = f"{self.config.bind_ip}:{self.config.bind_port}"
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.config.bind_ip, self.config.bind_port))
            sock.listen(128)
        except OSError as exc:
            sock.close()
            raise BindError.from_oserror(endpoint, exc) from exc
        # The bind is adjudicated by the OS first so a same-endpoint clash is
        # always reported as port-in-use; the guard then refuses any second
        # instance in this process.
        with _GUARD_LOCK:
            if _LIVE_SERVERS:
                sock.close()
                raise ServerInstanceError(
                    "another server instance is already running in this process"
                )
            _LIVE_SERVERS.add(self)
        self._sock = sock
        self._started = True
        ip, port = self.endpoint
        self._log = LogSink(self.config.log_path)
        self.engine = ServerEngine(
            heartbeat_misses=self.config.heartbeat_misses, clock=self._clock, log=self._log
        )
        self.engine.log_event("bind", f"endpoint={ip}:{port}")
        self._thread = threading.Thread(target=self._run_loop, name="gcs-server", daemon=True)
        self._thread.start()
        self._ready.wait()
        if self.config.gateway_port is not None:
            from .web_gateway import GcsGateway

            self._gateway = GcsGateway(
                listen_port=self.config.gateway_port, server_host=ip, server_port=port
            )
            self._gateway.start()
        return self

    def _run_loop(self) -> None:
        try:
            asyncio.run(self._main())
        finally:
            self._ready.set()  # never leave start() waiting if the loop dies early

    async def _main(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._stop_event = asyncio.Event()
        server = await asyncio.start_server(self._handle_conn, sock=self._sock)
        sweeper = asyncio.create_task(self._sweeper())
        self._ready.set()
        try:
            await self._stop_event.wait()
        finally:
            sweeper.cancel()
            server.close()
            for writer in list(self._writers.values()):
                writer.close()
            await server.wait_closed()

    async def _sweeper(self) -> None:
        try:
            while True:
                await asyncio.sleep(self.config.heartbeat_interval)
                await self._dispatch(self.engine.sweep())
        except asyncio.CancelledError:
            pass

    async def _handle_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername") or ("0.0.0.0", 0)
        conn_id = self.engine.on_connect(peer[0], peer[1])
        self._writers[conn_id] = writer
        try:
            while True:
                try:
                    raw = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    break  # oversized line: treat as a broken peer
                if not raw or not raw.endswith(b"\n"):
                    break  # EOF (possibly mid-line)
                closed = await self._dispatch(self.engine.on_line(conn_id, raw), own=conn_id)
                if closed:
                    return
        except (ConnectionError, OSError):
            pass
        finally:
            await self._dispatch(self.engine.on_disconnect(conn_id, "error"))
            self._writers.pop(conn_id, None)
            writer.close()

    async def _dispatch(self, dispatch: Dispatch, own: int | None = None) -> bool:
        own_closed = False
        for conn_id, frame in dispatch.sends:
            writer = self._writers.get(conn_id)
            if writer is None or writer.is_closing():
                continue
            try:
                writer.write(encode_frame(frame).encode("utf-8"))
            except (ConnectionError, OSError):
                continue
        for conn_id in dispatch.closes:
            writer = self._writers.pop(conn_id, None)
            if writer is not None and not writer.is_closing():
                try:
                    await writer.drain()
                except (ConnectionError, OSError):
                    pass
                writer.close()
            if conn_id == own:
                own_closed = True
        return own_closed

    def stop(self) -> None:
        if not self._started:
            return
        if self._gateway is not None:
            self._gateway.stop()
            self._gateway = None
        self._ready.wait()
        if self._loop is not None and self._loop.is_running():
            self._loop.call_soon_threadsafe(self._stop_event.set)
        if self._thread is not None:
            self._thread.join(timeout=5)
        with _GUARD_LOCK:
            _LIVE_SERVERS.discard(self)
        if self._log is not None:
            self._log.close()
        self._started = False


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gcs-server", description="Run the group chat server.")
    parser.add_argument("--ip", default=os.environ.get("GCS_IP", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("GCS_PORT", "5000")))
    parser.add_argument("--heartbeat-interval", type=float, default=5.0)
    parser.add_argument("--heartbeat-misses", type=int, default=2)
    parser.add_argument("--log", default=None, help="append log lines to this file")
    parser.add_argument("--gateway-port", type=int, default=None,
                        help="also serve a WebSocket gateway on this port")
    args = parser.parse_args(argv)
    config = ServerConfig(
        bind_ip=args.ip,
        bind_port=args.port,
        heartbeat_interval=args.heartbeat_interval,
        heartbeat_misses=args.heartbeat_misses,
        log_path=args.log,
        gateway_port=args.gateway_port,
    )
    try:
        server = GcsServer(config)
        server.start()
    except (ConfigError, BindError, ServerInstanceError) as exc:
        print(f"gcs-server: {exc}", file=sys.stderr)
        return 1
    ip, port = server.endpoint
    print(f"gcs-server: listening on {ip}:{port}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
