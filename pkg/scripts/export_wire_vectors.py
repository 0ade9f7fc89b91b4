#!/usr/bin/env python3
"""Regenerate tests/golden/wire_vectors.json.

The vectors pin the wire grammar for every codec implementation: each
valid entry pairs one line with its language-neutral frame value, each
malformed entry pairs a line with its exact rejection reason. The browser
console's test suite consumes the same file.
"""

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "tests"))

from frame_gen import MALFORMED_CORPUS, frame_to_json, random_frames  # noqa: E402

from gcs import protocol as wire  # noqa: E402

# Deterministic exemplars: cover every verb and the documented edge shapes.
HANDPICKED = [
    wire.Join("alice"),
    wire.Msg("good morning all"),
    wire.Msg(" leading and trailing "),
    wire.Priv("bob", "hello there"),
    wire.Priv("alice", "/memberdetails"),
    wire.Quit(),
    wire.Pong(0),
    wire.Pong(wire.MAX_NONCE),
    wire.Welcome("alice", "alice"),
    wire.Welcome("bob", "alice"),
    wire.Joined("bob", "127.0.0.1", 5002),
    wire.Left("bob", "quit"),
    wire.Left("carol", "timeout"),
    wire.Left("dave", "error"),
    wire.Coord("bob"),
    wire.Bcast("2024-03-01 10:00:00", "alice", "hi everyone"),
    wire.Privmsg("2024-03-01 10:00:00", "bob", "see you at 5"),
    wire.Members(()),
    wire.Members((("alice", "127.0.0.1", 5001), ("bob", "127.0.0.1", 5002))),
    wire.Err("duplicate_id", "id already in use: alice"),
    wire.Err("not_coordinator", "bob is not the coordinator"),
    wire.Ping(7),
]


def main() -> int:
    frames = list(HANDPICKED)
    seen = {wire.encode_frame(f) for f in frames}
    for frame in random_frames(seed=1959, count=120):
        line = wire.encode_frame(frame)
        if line not in seen:
            seen.add(line)
            frames.append(frame)

    vectors = {
        "valid": [
            {"line": wire.encode_frame(f)[:-1], "frame": frame_to_json(f)} for f in frames
        ],
        "malformed": [
            {"line": line, "reason": reason} for line, reason in MALFORMED_CORPUS
        ],
    }
    out = REPO / "tests" / "golden" / "wire_vectors.json"
    out.write_text(json.dumps(vectors, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out}: {len(vectors['valid'])} valid, {len(vectors['malformed'])} malformed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
