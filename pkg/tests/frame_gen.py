"""Seeded random generators for wire frames and their building blocks.

Used by the round-trip acceptance check (10k frames), the golden-vector
export script and the soak script; hypothesis strategies live in
conftest.py.
"""

from __future__ import annotations

import random
import string

from gcs import protocol as wire

ID_CHARS = string.ascii_letters + string.digits + "_-"
BODY_ASCII = string.ascii_letters + string.digits + string.punctuation + " "
BODY_UNICODE = "äöüßéπλЖ中文😀✓"


def random_member_id(rng: random.Random) -> str:
    return "".join(rng.choice(ID_CHARS) for _ in range(rng.randint(1, 32)))


def random_body(rng: random.Random) -> str:
    chars = BODY_ASCII + (BODY_UNICODE if rng.random() < 0.3 else "")
    body = "".join(rng.choice(chars) for _ in range(rng.randint(1, 60)))
    if rng.random() < 0.15:
        body = " " + body  # leading spaces must survive the trip
    if rng.random() < 0.15:
        body = body + " "
    return body


def random_ts(rng: random.Random) -> str:
    return wire.format_timestamp(rng.randrange(0, 2**31))


def random_ip(rng: random.Random) -> str:
    return ".".join(str(rng.randint(0, 255)) for _ in range(4))


def random_port(rng: random.Random) -> int:
    return rng.randint(0, 65535)


def random_nonce(rng: random.Random) -> int:
    if rng.random() < 0.2:
        return rng.choice([0, 1, wire.MAX_NONCE, wire.MAX_NONCE - 1])
    return rng.randrange(0, wire.MAX_NONCE + 1)


def random_entries(rng: random.Random, max_entries: int = 5) -> tuple:
    return tuple(
        (random_member_id(rng), random_ip(rng), random_port(rng))
        for _ in range(rng.randint(0, max_entries))
    )


def random_frame(rng: random.Random) -> wire.WireFrame:
    kind = rng.randrange(14)
    if kind == 0:
        return wire.Join(random_member_id(rng))
    if kind == 1:
        return wire.Msg(random_body(rng))
    if kind == 2:
        return wire.Priv(random_member_id(rng), random_body(rng))
    if kind == 3:
        return wire.Quit()
    if kind == 4:
        return wire.Pong(random_nonce(rng))
    if kind == 5:
        return wire.Welcome(random_member_id(rng), random_member_id(rng))
    if kind == 6:
        return wire.Joined(random_member_id(rng), random_ip(rng), random_port(rng))
    if kind == 7:
        return wire.Left(random_member_id(rng), rng.choice(wire.LEFT_REASONS))
    if kind == 8:
        return wire.Coord(random_member_id(rng))
    if kind == 9:
        return wire.Bcast(random_ts(rng), random_member_id(rng), random_body(rng))
    if kind == 10:
        return wire.Privmsg(random_ts(rng), random_member_id(rng), random_body(rng))
    if kind == 11:
        return wire.Members(random_entries(rng))
    if kind == 12:
        return wire.Err(rng.choice(wire.ERR_CODES), random_body(rng))
    return wire.Ping(random_nonce(rng))


def random_frames(seed: int, count: int):
    rng = random.Random(seed)
    for _ in range(count):
        yield random_frame(rng)


# One malformed line per failure mode, with the exact rejection reason.
MALFORMED_CORPUS = [
    ("", "empty_line"),
    ("JOIN", "missing_field"),
    ("JOIN ", "missing_field"),
    ("JOIN alice bob", "extra_field"),
    ("JOIN al:ce", "bad_id"),
    ("JOIN " + "a" * 33, "bad_id"),
    ("join alice", "unknown_verb"),
    ("XYZZY whatever", "unknown_verb"),
    ("MSG", "missing_field"),
    ("MSG ", "empty_body"),
    ("PRIV bob", "missing_field"),
    ("PRIV bob ", "empty_body"),
    ("PRIV b@d hi", "bad_id"),
    ("QUIT now", "extra_field"),
    ("QUIT ", "extra_field"),
    ("PONG", "missing_field"),
    ("PONG abc", "bad_nonce"),
    ("PONG -1", "bad_nonce"),
    ("PONG 007", "bad_nonce"),
    ("PONG 18446744073709551616", "bad_nonce"),
    ("PING 1 2", "extra_field"),
    ("WELCOME alice", "missing_field"),
    ("JOINED alice 999.0.0.1 5", "bad_ip"),
    ("JOINED alice 1.2.3.04 5", "bad_ip"),
    ("JOINED alice 1.2.3.4 70000", "bad_port"),
    ("LEFT alice vanished", "bad_reason"),
    ("COORD", "missing_field"),
    ("BCAST 2024-3-01 10:00:00 alice hi", "bad_timestamp"),
    ("BCAST 2024-03-01 alice hi", "missing_field"),
    ("PRIVMSG 2024-03-01 10:00:00 alice", "missing_field"),
    ("MEMBERS ", "bad_members"),
    ("MEMBERS alice,1.2.3.4", "bad_members"),
    ("MEMBERS alice,1.2.3.4,5001;", "bad_members"),
    ("ERR nope broken", "bad_code"),
    ("ERR bad_frame", "missing_field"),
    ("MSG hi\rthere", "embedded_newline"),
    ("MSG hi\nthere", "embedded_newline"),
]


def frame_to_json(frame: wire.WireFrame) -> dict:
    """Language-neutral frame representation for the shared golden vectors.

    Nonces are strings because u64 exceeds JSON's safe integer range.
    """
    if isinstance(frame, wire.Join):
        return {"type": "JOIN", "id": frame.id}
    if isinstance(frame, wire.Msg):
        return {"type": "MSG", "body": frame.body}
    if isinstance(frame, wire.Priv):
        return {"type": "PRIV", "target": frame.target, "body": frame.body}
    if isinstance(frame, wire.Quit):
        return {"type": "QUIT"}
    if isinstance(frame, wire.Pong):
        return {"type": "PONG", "nonce": str(frame.nonce)}
    if isinstance(frame, wire.Welcome):
        return {"type": "WELCOME", "own_id": frame.own_id, "coordinator": frame.coordinator}
    if isinstance(frame, wire.Joined):
        return {"type": "JOINED", "id": frame.id, "ip": frame.ip, "port": frame.port}
    if isinstance(frame, wire.Left):
        return {"type": "LEFT", "id": frame.id, "reason": frame.reason}
    if isinstance(frame, wire.Coord):
        return {"type": "COORD", "id": frame.id}
    if isinstance(frame, wire.Bcast):
        return {"type": "BCAST", "ts": frame.ts, "from": frame.sender, "body": frame.body}
    if isinstance(frame, wire.Privmsg):
        return {"type": "PRIVMSG", "ts": frame.ts, "from": frame.sender, "body": frame.body}
    if isinstance(frame, wire.Members):
        return {"type": "MEMBERS", "entries": [list(e) for e in frame.entries]}
    if isinstance(frame, wire.Err):
        return {"type": "ERR", "code": frame.code, "text": frame.text}
    if isinstance(frame, wire.Ping):
        return {"type": "PING", "nonce": str(frame.nonce)}
    raise TypeError(f"not a wire frame: {frame!r}")
