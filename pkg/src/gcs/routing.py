"""Pure routing core of the server.

`handle_frame`, `on_disconnect`, `handle_bad_frame` and `heartbeat_sweep`
are pure functions from (session, registry, event) to (new session,
Effects). The Effects value names destinations symbolically (this
connection, one member, all members); the owning sequencer — the TCP
runtime or the simulation harness — resolves them to transports, applies
the registry transition and writes the log. Keeping the core pure is what
makes every routing decision replayable and directly testable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from . import registry as reg
from .protocol import (
    Bcast,
    Coord,
    Err,
    Join,
    Joined,
    Left,
    Members,
    Msg,
    Ping,
    Pong,
    Priv,
    Privmsg,
    Quit,
    Welcome,
    WireFrame,
    MEMBER_DETAILS_BODY,
    frame_verb,
)

LOG_KINDS = (
    "join", "leave", "broadcast", "private", "details",
    "coord_change", "error", "ping_timeout", "bind",
)

# A session is closed after this many malformed frames.
BAD_FRAME_LIMIT = 2


class Phase(Enum):
    AWAITING_JOIN = "awaiting_join"
    JOINED = "joined"
    CLOSED = "closed"


@dataclass(frozen=True)
class SessionState:
    peer_ip: str
    peer_port: int
    phase: Phase = Phase.AWAITING_JOIN
    member_id: str | None = None
    missed_pings: int = 0
    last_nonce: int | None = None
    bad_frames: int = 0

    @property
    def peer(self) -> str:
        return f"{self.peer_ip}:{self.peer_port}"


# Symbolic frame destinations, resolved by the sequencer.
@dataclass(frozen=True)
class ToSelf:
    """The originating connection (valid even before it joined)."""


@dataclass(frozen=True)
class ToMember:
    member_id: str


@dataclass(frozen=True)
class ToAllMembers:
    """Every member of the post-transition registry, in join order."""


Destination = ToSelf | ToMember | ToAllMembers

TO_SELF = ToSelf()
TO_ALL = ToAllMembers()


@dataclass(frozen=True)
class LogEntry:
    ts: str
    kind: str
    detail: str

    def line(self) -> str:
        return f"[{self.ts}] {self.kind.upper()} {self.detail}"


@dataclass(frozen=True)
class Effects:
    """Everything one event asks the sequencer to do, in order."""

    registry: reg.Registry
    outbound: tuple[tuple[Destination, WireFrame], ...] = ()
    logs: tuple[LogEntry, ...] = ()
    close: str | None = None  # close the originating connection (reason)


def _err(code: str, text: str) -> tuple[Destination, WireFrame]:
    return (TO_SELF, Err(code, text))


def _departure_frames(removal: reg.Removal) -> tuple[tuple[Destination, WireFrame], ...]:
    out: list[tuple[Destination, WireFrame]] = [
        (TO_ALL, Left(removal.removed.id, removal.reason))
    ]
    if removal.was_coordinator and removal.new_coordinator is not None:
        out.append((TO_ALL, Coord(removal.new_coordinator)))
    return tuple(out)


def _departure_logs(removal: reg.Removal, now: str) -> tuple[LogEntry, ...]:
    logs = [LogEntry(now, "leave", f"id={removal.removed.id} reason={removal.reason}")]
    if removal.was_coordinator and removal.new_coordinator is not None:
        logs.append(LogEntry(now, "coord_change", f"new={removal.new_coordinator}"))
    return tuple(logs)


def handle_frame(
    session: SessionState,
    frame: WireFrame,
    registry: reg.Registry,
    now: str,
) -> tuple[SessionState, Effects]:
    """Route one decoded client frame; returns the new session plus effects.

    Pre-join only JOIN (and PONG, which is phase-independent) is honored;
    MSG/PRIV/QUIT draw ERR(not_joined). Server-to-client verbs arriving
    here are malformed peer behavior and count toward the bad-frame limit.
    """
    if isinstance(frame, Pong):
        if session.last_nonce is not None and frame.nonce == session.last_nonce:
            return replace(session, missed_pings=0), Effects(registry=registry)
        return session, Effects(registry=registry)

    if isinstance(frame, Join):
        if session.phase is not Phase.AWAITING_JOIN:
            return session, Effects(
                registry=registry,
                outbound=(_err("bad_frame", "already joined"),),
                logs=(LogEntry(now, "error", f"code=bad_frame detail=rejoin peer={session.peer}"),),
            )
        try:
            admission = reg.add_member(registry, frame.id, session.peer_ip, session.peer_port, now)
        except reg.DuplicateIdError:
            return replace(session, phase=Phase.CLOSED), Effects(
                registry=registry,
                outbound=(_err("duplicate_id", f"id already in use: {frame.id}"),),
                logs=(LogEntry(now, "error", f"code=duplicate_id id={frame.id} peer={session.peer}"),),
                close="duplicate_id",
            )
        member = admission.member
        out: list[tuple[Destination, WireFrame]] = [
            (TO_SELF, Welcome(member.id, admission.registry.coordinator)),
        ]
        for other in admission.registry.members:
            if other.id != member.id:
                out.append((ToMember(other.id), Joined(member.id, member.ip, member.port)))
        logs = [LogEntry(now, "join", f"id={member.id} ip={member.ip} port={member.port}")]
        if admission.became_coordinator:
            out.append((TO_ALL, Coord(member.id)))
            logs.append(LogEntry(now, "coord_change", f"new={member.id}"))
        return (
            replace(session, phase=Phase.JOINED, member_id=member.id),
            Effects(registry=admission.registry, outbound=tuple(out), logs=tuple(logs)),
        )

    if isinstance(frame, (Msg, Priv, Quit)):
        if session.phase is not Phase.JOINED:
            return session, Effects(
                registry=registry,
                outbound=(_err("not_joined", "join first"),),
                logs=(
                    LogEntry(
                        now,
                        "error",
                        f"code=not_joined verb={frame_verb(frame)} peer={session.peer}",
                    ),
                ),
            )
        sender = session.member_id

        if isinstance(frame, Msg):
            return session, Effects(
                registry=registry,
                outbound=((TO_ALL, Bcast(now, sender, frame.body)),),
                logs=(LogEntry(now, "broadcast", f"from={sender} len={len(frame.body)}"),),
            )

        if isinstance(frame, Priv):
            if frame.body == MEMBER_DETAILS_BODY:
                if frame.target == registry.coordinator:
                    return session, Effects(
                        registry=registry,
                        outbound=((TO_SELF, Members(reg.member_details(registry))),),
                        logs=(
                            LogEntry(
                                now,
                                "details",
                                f"from={sender} coordinator={frame.target} count={len(registry)}",
                            ),
                        ),
                    )
                return session, Effects(
                    registry=registry,
                    outbound=(_err("not_coordinator", f"{frame.target} is not the coordinator"),),
                    logs=(
                        LogEntry(now, "error", f"code=not_coordinator from={sender} target={frame.target}"),
                    ),
                )
            try:
                target = reg.resolve_target(registry, frame.target)
            except reg.UnknownTargetError:
                return session, Effects(
                    registry=registry,
                    outbound=(_err("unknown_target", f"no such member: {frame.target}"),),
                    logs=(
                        LogEntry(now, "error", f"code=unknown_target from={sender} target={frame.target}"),
                    ),
                )
            return session, Effects(
                registry=registry,
                outbound=((ToMember(target.id), Privmsg(now, sender, frame.body)),),
                logs=(LogEntry(now, "private", f"from={sender} to={target.id} len={len(frame.body)}"),),
            )

        # Quit
        removal = reg.remove_member(registry, sender, "quit")
        return replace(session, phase=Phase.CLOSED), Effects(
            registry=removal.registry,
            outbound=_departure_frames(removal),
            logs=_departure_logs(removal, now),
            close="quit",
        )

    # Decoded fine but not a client->server verb: misbehaving peer.
    return handle_bad_frame(session, registry, f"unexpected verb {frame_verb(frame)}", now)


def handle_bad_frame(
    session: SessionState,
    registry: reg.Registry,
    detail: str,
    now: str,
) -> tuple[SessionState, Effects]:
    """ERR(bad_frame) for a malformed line; repeat offenders are dropped."""
    session = replace(session, bad_frames=session.bad_frames + 1)
    out: list[tuple[Destination, WireFrame]] = [_err("bad_frame", f"malformed frame ({detail})")]
    logs = [LogEntry(now, "error", f"code=bad_frame detail={detail} peer={session.peer}")]
    if session.bad_frames < BAD_FRAME_LIMIT:
        return session, Effects(registry=registry, outbound=tuple(out), logs=tuple(logs))
    close_reason = "error"
    if session.phase is Phase.JOINED:
        removal = reg.remove_member(registry, session.member_id, "error")
        out.extend(_departure_frames(removal))
        logs.extend(_departure_logs(removal, now))
        registry = removal.registry
    return replace(session, phase=Phase.CLOSED), Effects(
        registry=registry,
        outbound=tuple(out),
        logs=tuple(logs),
        close=close_reason,
    )


def on_disconnect(
    session: SessionState,
    registry: reg.Registry,
    reason: str,
    now: str,
) -> Effects:
    """Transport loss (EOF/reset) or heartbeat condemnation.

    A joined member is removed and survivors told; a connection that never
    joined is cleaned up with a log entry only.
    """
    if session.phase is Phase.JOINED and session.member_id in registry:
        removal = reg.remove_member(registry, session.member_id, reason)
        return Effects(
            registry=removal.registry,
            outbound=_departure_frames(removal),
            logs=_departure_logs(removal, now),
        )
    return Effects(
        registry=registry,
        logs=(LogEntry(now, "leave", f"peer={session.peer} phase={session.phase.value} reason={reason}"),),
    )


@dataclass(frozen=True)
class SweepResult:
    sessions: dict
    pings: tuple[tuple[object, int], ...]  # (session key, nonce)
    condemned: tuple[object, ...]  # session keys past the miss budget
    next_nonce: int


def heartbeat_sweep(sessions: dict, misses_allowed: int, nonce_start: int) -> SweepResult:
    """One liveness pass over the session table.

    Every joined session's miss counter is incremented; sessions past the
    tolerated budget are condemned (no ping), the rest get PING with a
    fresh nonce. A matching PONG resets the counter before the next sweep,
    so a silent client is condemned within (misses+1) intervals of its
    last PONG.
    """
    updated: dict = {}
    pings: list[tuple[object, int]] = []
    condemned: list = []
    nonce = nonce_start
    for key, session in sessions.items():
        if session.phase is not Phase.JOINED:
            updated[key] = session
            continue
        missed = session.missed_pings + 1
        if missed > misses_allowed:
            updated[key] = replace(session, missed_pings=missed)
            condemned.append(key)
            continue
        updated[key] = replace(session, missed_pings=missed, last_nonce=nonce)
        pings.append((key, nonce))
        nonce += 1
    return SweepResult(
        sessions=updated,
        pings=tuple(pings),
        condemned=tuple(condemned),
        next_nonce=nonce,
    )
