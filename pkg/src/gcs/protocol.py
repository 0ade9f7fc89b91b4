"""Line-oriented wire grammar shared by server, clients, gateway and tests.

One frame per UTF-8 line terminated by ``\\n``: the verb comes first,
space-separated fields follow, and the body (when a verb has one) is the
final field so it may contain internal spaces. Encoding and decoding are
exact inverses for every valid frame, and decoding is strict: a line that
decodes successfully re-encodes to the identical line.

Client->server verbs:  JOIN MSG PRIV QUIT PONG
Server->client verbs:  WELCOME JOINED LEFT COORD BCAST PRIVMSG MEMBERS ERR PING

Everything in this module is a pure function over values; there is no
shared mutable state.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone

__all__ = [
    "BadFrame",
    "InputError",
    "EmptyInput",
    "BadTarget",
    "EmbeddedNewline",
    "Join",
    "Msg",
    "Priv",
    "Quit",
    "Pong",
    "Welcome",
    "Joined",
    "Left",
    "Coord",
    "Bcast",
    "Privmsg",
    "Members",
    "Err",
    "Ping",
    "WireFrame",
    "Broadcast",
    "Private",
    "DetailsRequest",
    "QuitCommand",
    "ClientCommand",
    "encode_frame",
    "decode_frame",
    "parse_user_input",
    "format_timestamp",
    "frame_verb",
    "valid_member_id",
    "valid_ip",
    "valid_port",
    "valid_timestamp",
    "LEFT_REASONS",
    "ERR_CODES",
    "MEMBER_DETAILS_BODY",
    "MAX_NONCE",
]

ID_PATTERN = re.compile(r"^[A-Za-z0-9_-]{1,32}$")
TIMESTAMP_PATTERN = re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}$")
_UINT_PATTERN = re.compile(r"^(?:0|[1-9][0-9]*)$")

LEFT_REASONS = ("quit", "timeout", "error")
ERR_CODES = ("duplicate_id", "unknown_target", "not_coordinator", "bad_frame", "not_joined")

MEMBER_DETAILS_BODY = "/memberdetails"
QUIT_INPUT = "/quit"

MAX_NONCE = 2**64 - 1
MAX_PORT = 65535


class BadFrame(ValueError):
    """A line (or frame field) that violates the wire grammar.

    ``reason`` is a stable slug from a closed taxonomy:
    empty_line, embedded_newline, bad_encoding, unknown_verb,
    missing_field, extra_field, bad_id, bad_nonce, bad_ip, bad_port,
    bad_reason, bad_code, bad_timestamp, empty_body, bad_body,
    bad_members.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


def valid_member_id(value: object) -> bool:
    return isinstance(value, str) and bool(ID_PATTERN.match(value))


def valid_ip(value: object) -> bool:
    """Dotted-quad IPv4 in canonical form (no leading zeros)."""
    if not isinstance(value, str):
        return False
    parts = value.split(".")
    if len(parts) != 4:
        return False
    for part in parts:
        if not _UINT_PATTERN.match(part) or int(part) > 255:
            return False
    return True


def valid_port(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 0 <= value <= MAX_PORT


def valid_nonce(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 0 <= value <= MAX_NONCE


def valid_timestamp(value: object) -> bool:
    return isinstance(value, str) and bool(TIMESTAMP_PATTERN.match(value))


def _check_id(value: object, what: str) -> None:
    if not valid_member_id(value):
        raise BadFrame("bad_id", f"invalid {what}: {value!r}")


def _check_body(value: object, what: str = "body") -> None:
    if not isinstance(value, str) or value == "":
        raise BadFrame("empty_body", f"{what} must be non-empty text")
    if "\n" in value or "\r" in value:
        raise BadFrame("bad_body", f"{what} must not contain line breaks")


def _check_ts(value: object) -> None:
    if not valid_timestamp(value):
        raise BadFrame("bad_timestamp", f"expected YYYY-MM-DD HH:MM:SS, got {value!r}")


# ---------------------------------------------------------------------------
# Wire frames. Frozen dataclasses; constructors enforce the grammar so an
# invalid frame is unrepresentable and encode_frame can never fail.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Join:
    id: str

    def __post_init__(self):
        _check_id(self.id, "member id")


@dataclass(frozen=True)
class Msg:
    body: str

    def __post_init__(self):
        _check_body(self.body)


@dataclass(frozen=True)
class Priv:
    target: str
    body: str

    def __post_init__(self):
        _check_id(self.target, "target id")
        _check_body(self.body)


@dataclass(frozen=True)
class Quit:
    pass


@dataclass(frozen=True)
class Pong:
    nonce: int

    def __post_init__(self):
        if not valid_nonce(self.nonce):
            raise BadFrame("bad_nonce", f"nonce out of range: {self.nonce!r}")


@dataclass(frozen=True)
class Welcome:
    own_id: str
    coordinator: str

    def __post_init__(self):
        _check_id(self.own_id, "own id")
        _check_id(self.coordinator, "coordinator id")


@dataclass(frozen=True)
class Joined:
    id: str
    ip: str
    port: int

    def __post_init__(self):
        _check_id(self.id, "member id")
        if not valid_ip(self.ip):
            raise BadFrame("bad_ip", f"invalid ip: {self.ip!r}")
        if not valid_port(self.port):
            raise BadFrame("bad_port", f"invalid port: {self.port!r}")


@dataclass(frozen=True)
class Left:
    id: str
    reason: str

    def __post_init__(self):
        _check_id(self.id, "member id")
        if self.reason not in LEFT_REASONS:
            raise BadFrame("bad_reason", f"invalid leave reason: {self.reason!r}")


@dataclass(frozen=True)
class Coord:
    id: str

    def __post_init__(self):
        _check_id(self.id, "coordinator id")


@dataclass(frozen=True)
class Bcast:
    ts: str
    sender: str
    body: str

    def __post_init__(self):
        _check_ts(self.ts)
        _check_id(self.sender, "sender id")
        _check_body(self.body)


@dataclass(frozen=True)
class Privmsg:
    ts: str
    sender: str
    body: str

    def __post_init__(self):
        _check_ts(self.ts)
        _check_id(self.sender, "sender id")
        _check_body(self.body)


@dataclass(frozen=True)
class Members:
    entries: tuple[tuple[str, str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))
        for entry in self.entries:
            if len(entry) != 3:
                raise BadFrame("bad_members", f"entry is not (id, ip, port): {entry!r}")
            member_id, ip, port = entry
            _check_id(member_id, "member id")
            if not valid_ip(ip):
                raise BadFrame("bad_ip", f"invalid ip: {ip!r}")
            if not valid_port(port):
                raise BadFrame("bad_port", f"invalid port: {port!r}")


@dataclass(frozen=True)
class Err:
    code: str
    text: str

    def __post_init__(self):
        if self.code not in ERR_CODES:
            raise BadFrame("bad_code", f"invalid error code: {self.code!r}")
        _check_body(self.text, "error text")


@dataclass(frozen=True)
class Ping:
    nonce: int

    def __post_init__(self):
        if not valid_nonce(self.nonce):
            raise BadFrame("bad_nonce", f"nonce out of range: {self.nonce!r}")


WireFrame = (
    Join | Msg | Priv | Quit | Pong
    | Welcome | Joined | Left | Coord | Bcast | Privmsg | Members | Err | Ping
)

CLIENT_FRAMES = (Join, Msg, Priv, Quit, Pong)
SERVER_FRAMES = (Welcome, Joined, Left, Coord, Bcast, Privmsg, Members, Err, Ping)

_VERBS = {
    Join: "JOIN", Msg: "MSG", Priv: "PRIV", Quit: "QUIT", Pong: "PONG",
    Welcome: "WELCOME", Joined: "JOINED", Left: "LEFT", Coord: "COORD",
    Bcast: "BCAST", Privmsg: "PRIVMSG", Members: "MEMBERS", Err: "ERR",
    Ping: "PING",
}


def frame_verb(frame: WireFrame) -> str:
    return _VERBS[type(frame)]


def encode_frame(frame: WireFrame) -> str:
    """Render a frame as its unique wire line, including the trailing newline."""
    match frame:
        case Join(id=member_id):
            return f"JOIN {member_id}\n"
        case Msg(body=body):
            return f"MSG {body}\n"
        case Priv(target=target, body=body):
            return f"PRIV {target} {body}\n"
        case Quit():
            return "QUIT\n"
        case Pong(nonce=nonce):
            return f"PONG {nonce}\n"
        case Welcome(own_id=own, coordinator=coord):
            return f"WELCOME {own} {coord}\n"
        case Joined(id=member_id, ip=ip, port=port):
            return f"JOINED {member_id} {ip} {port}\n"
        case Left(id=member_id, reason=reason):
            return f"LEFT {member_id} {reason}\n"
        case Coord(id=member_id):
            return f"COORD {member_id}\n"
        case Bcast(ts=ts, sender=sender, body=body):
            return f"BCAST {ts} {sender} {body}\n"
        case Privmsg(ts=ts, sender=sender, body=body):
            return f"PRIVMSG {ts} {sender} {body}\n"
        case Members(entries=entries):
            if not entries:
                return "MEMBERS\n"
            blob = ";".join(f"{i},{ip},{port}" for i, ip, port in entries)
            return f"MEMBERS {blob}\n"
        case Err(code=code, text=text):
            return f"ERR {code} {text}\n"
        case Ping(nonce=nonce):
            return f"PING {nonce}\n"
    raise TypeError(f"not a wire frame: {frame!r}")


def _exact_fields(rest: str, has_rest: bool, count: int, verb: str) -> list[str]:
    if not has_rest:
        raise BadFrame("missing_field", f"{verb} needs {count} field(s)")
    parts = rest.split(" ")
    if len(parts) > count:
        raise BadFrame("extra_field", f"{verb} takes exactly {count} field(s)")
    if len(parts) < count or any(p == "" for p in parts):
        raise BadFrame("missing_field", f"{verb} needs {count} field(s)")
    return parts


def _fixed_then_body(rest: str, has_rest: bool, nfixed: int, verb: str) -> tuple[list[str], str]:
    if not has_rest:
        raise BadFrame("missing_field", f"{verb} needs a body")
    parts = rest.split(" ", nfixed)
    if len(parts) < nfixed + 1:
        raise BadFrame("missing_field", f"{verb} needs {nfixed} field(s) plus a body")
    fixed, body = parts[:nfixed], parts[nfixed]
    if any(p == "" for p in fixed):
        raise BadFrame("missing_field", f"{verb} needs {nfixed} field(s) plus a body")
    if body == "":
        raise BadFrame("empty_body", f"{verb} body must be non-empty")
    return fixed, body


def _parse_uint(token: str, reason: str, limit: int) -> int:
    if not _UINT_PATTERN.match(token):
        raise BadFrame(reason, f"not a canonical unsigned integer: {token!r}")
    value = int(token)
    if value > limit:
        raise BadFrame(reason, f"value out of range: {token}")
    return value


def _parse_ts(date: str, time_: str) -> str:
    ts = f"{date} {time_}"
    _check_ts(ts)
    return ts


def decode_frame(line: str) -> WireFrame:
    """Parse one newline-free record into the unique frame that encodes to it.

    Raises BadFrame for unknown verbs, arity violations, or invalid fields;
    the server answers those with ERR(bad_frame) and disconnects repeat
    offenders.
    """
    if not isinstance(line, str):
        raise BadFrame("bad_encoding", "expected text")
    if "\n" in line or "\r" in line:
        raise BadFrame("embedded_newline", "frame must be a single line")
    if line == "":
        raise BadFrame("empty_line", "blank line")

    verb, sep, rest = line.partition(" ")
    has_rest = sep == " "

    if verb == "JOIN":
        (member_id,) = _exact_fields(rest, has_rest, 1, verb)
        return Join(member_id)
    if verb == "MSG":
        _, body = _fixed_then_body(rest, has_rest, 0, verb)
        return Msg(body)
    if verb == "PRIV":
        (target,), body = _fixed_then_body(rest, has_rest, 1, verb)
        return Priv(target, body)
    if verb == "QUIT":
        if has_rest:
            raise BadFrame("extra_field", "QUIT takes no fields")
        return Quit()
    if verb == "PONG":
        (token,) = _exact_fields(rest, has_rest, 1, verb)
        return Pong(_parse_uint(token, "bad_nonce", MAX_NONCE))
    if verb == "WELCOME":
        own, coord = _exact_fields(rest, has_rest, 2, verb)
        return Welcome(own, coord)
    if verb == "JOINED":
        member_id, ip, port = _exact_fields(rest, has_rest, 3, verb)
        return Joined(member_id, ip, _parse_uint(port, "bad_port", MAX_PORT))
    if verb == "LEFT":
        member_id, reason = _exact_fields(rest, has_rest, 2, verb)
        return Left(member_id, reason)
    if verb == "COORD":
        (member_id,) = _exact_fields(rest, has_rest, 1, verb)
        return Coord(member_id)
    if verb == "BCAST":
        (date, time_, sender), body = _fixed_then_body(rest, has_rest, 3, verb)
        return Bcast(_parse_ts(date, time_), sender, body)
    if verb == "PRIVMSG":
        (date, time_, sender), body = _fixed_then_body(rest, has_rest, 3, verb)
        return Privmsg(_parse_ts(date, time_), sender, body)
    if verb == "MEMBERS":
        if not has_rest:
            return Members(())
        if rest == "":
            raise BadFrame("bad_members", "empty entry list")
        entries = []
        for chunk in rest.split(";"):
            fields = chunk.split(",")
            if len(fields) != 3 or any(f == "" for f in fields):
                raise BadFrame("bad_members", f"entry is not id,ip,port: {chunk!r}")
            member_id, ip, port = fields
            entries.append((member_id, ip, _parse_uint(port, "bad_port", MAX_PORT)))
        return Members(tuple(entries))
    if verb == "ERR":
        (code,), text = _fixed_then_body(rest, has_rest, 1, verb)
        return Err(code, text)
    if verb == "PING":
        (token,) = _exact_fields(rest, has_rest, 1, verb)
        return Ping(_parse_uint(token, "bad_nonce", MAX_NONCE))

    raise BadFrame("unknown_verb", f"unknown verb: {verb!r}")


# ---------------------------------------------------------------------------
# Human input classification (client side).
# ---------------------------------------------------------------------------


class InputError(ValueError):
    """Base for user-input classification errors; ``code`` is a stable slug."""

    code = "input_error"


class EmptyInput(InputError):
    code = "empty_input"


class BadTarget(InputError):
    code = "bad_target"


class EmbeddedNewline(InputError):
    code = "embedded_newline"


@dataclass(frozen=True)
class Broadcast:
    body: str


@dataclass(frozen=True)
class Private:
    target: str
    body: str


@dataclass(frozen=True)
class DetailsRequest:
    target: str


@dataclass(frozen=True)
class QuitCommand:
    pass


ClientCommand = Broadcast | Private | DetailsRequest | QuitCommand


def parse_user_input(text: str, coordinator: str | None = None) -> ClientCommand:
    """Classify one line of human input.

    ``/quit`` quits; ``@id /memberdetails`` (remainder exactly that) asks for
    the roster; ``@id <body>`` is a private message; anything else non-empty
    is a broadcast. The known coordinator is accepted for interface parity
    but classification never depends on it: the server adjudicates details
    requests against the real coordinator.
    """
    del coordinator
    stripped = text.strip()
    if stripped == "":
        raise EmptyInput("nothing to send")
    if "\n" in stripped or "\r" in stripped:
        raise EmbeddedNewline("input must be a single line")
    if stripped == QUIT_INPUT:
        return QuitCommand()
    if stripped.startswith("@"):
        target, sep, remainder = stripped[1:].partition(" ")
        if not valid_member_id(target):
            raise BadTarget(f"not a valid member id: {target!r}")
        if remainder == MEMBER_DETAILS_BODY:
            return DetailsRequest(target)
        if sep and remainder:
            return Private(target, remainder)
        # bare "@id" carries no message; it falls through to the broadcast
        # catch-all like any other plain text
    return Broadcast(stripped)


def format_timestamp(instant: float) -> str:
    """Render an epoch instant as ``YYYY-MM-DD HH:MM:SS`` in UTC."""
    return datetime.fromtimestamp(instant, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
