"""Deterministic in-memory network for scripted protocol scenarios.

The harness owns a virtual clock and a single frame queue; it IS the
scheduler. Each simulated client pairs a server-side session (via the
real `ServerEngine`) with the real client state machine, so a scenario
exercises exactly the code paths production runs, minus sockets. With a
fixed script the transcript is bit-identical across runs; an optional
seeded-shuffle mode reorders across channels while preserving per-channel
FIFO.
"""

from __future__ import annotations

import hashlib
import random
from collections import deque
from dataclasses import dataclass, field, replace

from . import client_core
from . import protocol as wire
from .client_core import ClientEvent, ClientState, Disconnected, apply_server_frame, submit_input
from .server import Dispatch, LogSink, ServerEngine

TO_SERVER = "c2s"
TO_CLIENT = "s2c"

_SIM_IP = "127.0.0.1"
_SIM_PORT_BASE = 40000


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    time: float
    direction: str  # c2s | s2c
    endpoint: str  # simulation client id
    kind: str  # frame | line | close
    frame: wire.WireFrame | None = None
    raw: str | None = None

    def line(self) -> str:
        if self.kind == "close":
            payload = "<close>"
        elif self.kind == "line":
            payload = f"<line {self.raw!r}>"
        else:
            payload = wire.encode_frame(self.frame).rstrip("\n")
        return f"{self.seq} t={self.time:.3f} {self.direction} {self.endpoint} {payload}"


@dataclass
class SimClient:
    """One simulated participant: endpoint + the real client state machine."""

    sim_id: str
    wire_id: str
    conn_id: int
    state: ClientState
    events: list[ClientEvent] = field(default_factory=list)
    received: list[wire.WireFrame] = field(default_factory=list)
    responsive: bool = True
    alive: bool = True
    _network: "SimNetwork" = None

    def send_input(self, text: str) -> None:
        """Feed one line of user input through the client state machine."""
        if not self.alive:
            raise RuntimeError(f"client {self.sim_id} is no longer connected")
        self.state, frame, events = submit_input(self.state, text)
        self.events.extend(events)
        if frame is not None:
            self._network._enqueue(TO_SERVER, self.sim_id, ("frame", frame))

    def send_frame(self, frame: wire.WireFrame) -> None:
        if not self.alive:
            raise RuntimeError(f"client {self.sim_id} is no longer connected")
        self._network._enqueue(TO_SERVER, self.sim_id, ("frame", frame))

    def send_line(self, raw: str) -> None:
        """Put a raw (possibly malformed) line on the wire."""
        if not self.alive:
            raise RuntimeError(f"client {self.sim_id} is no longer connected")
        self._network._enqueue(TO_SERVER, self.sim_id, ("line", raw))

    def frames(self, frame_type=None) -> list:
        if frame_type is None:
            return list(self.received)
        return [f for f in self.received if isinstance(f, frame_type)]


class SimNetwork:
    """Virtual clock + FIFO channels around a real ServerEngine."""

    def __init__(
        self,
        *,
        heartbeat_interval: float = 5.0,
        heartbeat_misses: int = 2,
        start_time: float = 0.0,
        shuffle_seed: int | None = None,
    ):
        self.heartbeat_interval = heartbeat_interval
        self._now = float(start_time)
        self._next_sweep = float(start_time) + heartbeat_interval
        self.log = LogSink(retain=True)
        self.engine = ServerEngine(
            heartbeat_misses=heartbeat_misses, clock=lambda: self._now, log=self.log
        )
        self.clients: dict[str, SimClient] = {}
        self.transcript: list[TranscriptEntry] = []
        self._channels: dict[tuple[str, str], deque] = {}
        self._sim_by_conn: dict[int, str] = {}
        self._seq = 0
        self._next_port = _SIM_PORT_BASE
        self._rng = random.Random(shuffle_seed) if shuffle_seed is not None else None

    @property
    def virtual_now(self) -> float:
        return self._now

    # -- wiring -------------------------------------------------------------

    def connect_client(self, sim_id: str, wire_id: str | None = None) -> SimClient:
        """Open a channel pair and enqueue the JOIN handshake."""
        if sim_id in self.clients:
            raise ValueError(f"duplicate simulation id: {sim_id}")
        wire_id = wire_id if wire_id is not None else sim_id
        self._next_port += 1
        conn_id = self.engine.on_connect(_SIM_IP, self._next_port)
        client = SimClient(
            sim_id=sim_id,
            wire_id=wire_id,
            conn_id=conn_id,
            state=client_core.joining_state(wire_id),
            _network=self,
        )
        self.clients[sim_id] = client
        self._sim_by_conn[conn_id] = sim_id
        self._channels[(sim_id, TO_SERVER)] = deque()
        self._channels[(sim_id, TO_CLIENT)] = deque()
        self._enqueue(TO_SERVER, sim_id, ("frame", wire.Join(wire_id)))
        return client

    def client(self, sim_id: str) -> SimClient:
        return self.clients[sim_id]

    def silence(self, sim_id: str, silent: bool = True) -> None:
        """Model a wedged client: it still receives but never replies."""
        self.clients[sim_id].responsive = not silent

    def drop_connection(self, sim_id: str) -> None:
        """Sever the channel abruptly (no QUIT): the server sees a reset."""
        client = self.clients[sim_id]
        if not client.alive:
            raise ValueError(f"client {sim_id} is not connected")
        self._kill_endpoint(sim_id)
        self._enqueue_dispatch(self.engine.on_disconnect(client.conn_id, "error"))

    # -- scheduling ---------------------------------------------------------

    def step(self):
        """Deliver exactly the oldest pending frame; None when quiescent."""
        picked = self._pop_next()
        if picked is None:
            return None
        channel, (seq, payload) = picked
        sim_id, direction = channel
        if direction == TO_SERVER:
            return self._deliver_to_server(seq, sim_id, payload)
        return self._deliver_to_client(seq, sim_id, payload)

    def run(self, limit: int = 100_000) -> int:
        """Deliver until quiescent; returns the number of deliveries."""
        delivered = 0
        while delivered < limit:
            if self.step() is None:
                return delivered
            delivered += 1
        raise RuntimeError(f"network did not quiesce within {limit} deliveries")

    def advance_time(self, dt: float) -> None:
        """Advance the virtual clock, firing the heartbeat sweep at every
        crossed interval boundary (in-flight frames are drained first, so
        PONGs already on the wire count for the sweep they precede)."""
        if dt < 0:
            raise ValueError("dt must be >= 0")
        target = self._now + dt
        while self._next_sweep <= target:
            self._now = self._next_sweep
            self.run()
            self._enqueue_dispatch(self.engine.sweep())
            self._next_sweep += self.heartbeat_interval
        self._now = target

    # -- observations -------------------------------------------------------

    def received(self, sim_id: str, frame_type=None) -> list:
        return self.clients[sim_id].frames(frame_type)

    def events(self, sim_id: str) -> list[ClientEvent]:
        return list(self.clients[sim_id].events)

    def deliveries(self, direction: str | None = None, kind: str = "frame") -> list[TranscriptEntry]:
        return [
            e
            for e in self.transcript
            if (direction is None or e.direction == direction) and e.kind == kind
        ]

    def log_lines(self) -> list[str]:
        return self.log.lines()

    def transcript_digest(self) -> str:
        blob = "\n".join(entry.line() for entry in self.transcript)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- internals ----------------------------------------------------------

    def _enqueue(self, direction: str, sim_id: str, payload) -> None:
        client = self.clients.get(sim_id)
        if client is None or not client.alive:
            return
        self._channels[(sim_id, direction)].append((self._seq, payload))
        self._seq += 1

    def _enqueue_dispatch(self, dispatch: Dispatch) -> None:
        for conn_id, frame in dispatch.sends:
            sim_id = self._sim_by_conn.get(conn_id)
            if sim_id is not None:
                self._enqueue(TO_CLIENT, sim_id, ("frame", frame))
        for conn_id in dispatch.closes:
            sim_id = self._sim_by_conn.get(conn_id)
            if sim_id is not None:
                self._enqueue(TO_CLIENT, sim_id, ("close",))

    def _pop_next(self):
        ready = [(key, chan) for key, chan in sorted(self._channels.items()) if chan]
        if not ready:
            return None
        if self._rng is None:
            key, chan = min(ready, key=lambda item: item[1][0][0])
        else:
            key, chan = self._rng.choice(ready)
        return key, chan.popleft()

    def _deliver_to_server(self, seq: int, sim_id: str, payload) -> TranscriptEntry:
        client = self.clients[sim_id]
        if payload[0] == "frame":
            entry = TranscriptEntry(seq, self._now, TO_SERVER, sim_id, "frame", frame=payload[1])
            dispatch = self.engine.on_frame(client.conn_id, payload[1])
        else:
            entry = TranscriptEntry(seq, self._now, TO_SERVER, sim_id, "line", raw=payload[1])
            dispatch = self.engine.on_line(client.conn_id, payload[1])
        self.transcript.append(entry)
        self._enqueue_dispatch(dispatch)
        return entry

    def _deliver_to_client(self, seq: int, sim_id: str, payload) -> TranscriptEntry:
        client = self.clients[sim_id]
        if payload[0] == "close":
            entry = TranscriptEntry(seq, self._now, TO_CLIENT, sim_id, "close")
            self.transcript.append(entry)
            reason = "quit" if client.state.close_reason == "quit" else "connection_lost"
            client.events.append(Disconnected(reason))
            if client.state.phase != client_core.PHASE_CLOSED:
                client.state = replace(
                    client.state, phase=client_core.PHASE_CLOSED, close_reason=reason
                )
            self._kill_endpoint(sim_id)
            return entry
        frame = payload[1]
        entry = TranscriptEntry(seq, self._now, TO_CLIENT, sim_id, "frame", frame=frame)
        self.transcript.append(entry)
        client.received.append(frame)
        client.state, events, auto_reply = apply_server_frame(client.state, frame)
        client.events.extend(events)
        if auto_reply is not None and client.responsive and client.alive:
            self._enqueue(TO_SERVER, sim_id, ("frame", auto_reply))
        return entry

    def _kill_endpoint(self, sim_id: str) -> None:
        client = self.clients[sim_id]
        client.alive = False
        self._channels[(sim_id, TO_SERVER)].clear()
        self._channels[(sim_id, TO_CLIENT)].clear()
