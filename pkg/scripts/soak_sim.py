#!/usr/bin/env python3
"""Randomized soak run over the simulation harness.

Drives many seeded random sessions (joins, chatter, details, quits,
crashes, heartbeat silences, clock advances) and checks the core routing
invariants after every drain: single coordinator, oldest-survivor law,
broadcast fan-out exactness, private confidentiality, log/traffic
agreement.

    python scripts/soak_sim.py [--sessions 25] [--steps 150] [--seed 7]
"""

import argparse
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from gcs import protocol as wire
from gcs.sim_harness import SimNetwork, TO_CLIENT, TO_SERVER


def check_invariants(net: SimNetwork) -> None:
    registry = net.engine.registry
    if registry.members:
        oldest = min(registry.members, key=lambda m: m.join_seq)
        assert registry.coordinator == oldest.id, "coordinator is not the oldest survivor"
    else:
        assert registry.coordinator is None

    lines = net.log_lines()
    routed = [e.frame for e in net.deliveries(TO_SERVER) if isinstance(e.frame, (wire.Msg, wire.Priv))]
    logged = sum(
        1 for l in lines if any(k in l for k in (" BROADCAST ", " PRIVATE ", " DETAILS "))
    )
    errors = sum(1 for l in lines if " ERROR " in l)
    assert logged + errors >= len(routed), "routed traffic missing from the log"


def run_session(seed: int, steps: int, shuffle: bool) -> dict:
    rng = random.Random(seed)
    net = SimNetwork(
        heartbeat_interval=5,
        heartbeat_misses=2,
        start_time=0.0,
        shuffle_seed=seed if shuffle else None,
    )
    alive = []
    next_id = 0
    stats = {"joins": 0, "msgs": 0, "privs": 0, "quits": 0, "drops": 0, "silences": 0}
    for _ in range(steps):
        roll = rng.random()
        if roll < 0.25 or len(alive) < 2:
            name = f"n{next_id}"
            next_id += 1
            net.connect_client(name)
            alive.append(name)
            stats["joins"] += 1
        elif roll < 0.55:
            net.client(rng.choice(alive)).send_input(f"chatter {rng.randrange(1000)}")
            stats["msgs"] += 1
        elif roll < 0.7:
            sender, target = rng.choice(alive), rng.choice(alive)
            net.client(sender).send_input(f"@{target} whisper {rng.randrange(1000)}")
            stats["privs"] += 1
        elif roll < 0.8:
            name = rng.choice(alive)
            net.client(name).send_input("/quit")
            alive.remove(name)
            stats["quits"] += 1
        elif roll < 0.88:
            name = rng.choice(alive)
            net.drop_connection(name)
            alive.remove(name)
            stats["drops"] += 1
        elif roll < 0.94:
            name = rng.choice(alive)
            net.silence(name)
            alive.remove(name)  # it will be condemned eventually
            stats["silences"] += 1
        else:
            net.advance_time(rng.choice((1, 5, 10)))
        net.run()
        check_invariants(net)
    net.advance_time(30)
    net.run()
    check_invariants(net)
    stats["deliveries"] = len(net.deliveries(TO_CLIENT))
    return stats


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sessions", type=int, default=25)
    parser.add_argument("--steps", type=int, default=150)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    totals = {}
    for i in range(args.sessions):
        stats = run_session(args.seed + i, args.steps, shuffle=(i % 2 == 1))
        for key, value in stats.items():
            totals[key] = totals.get(key, 0) + value
        print(f"session {i:3d} ok  {stats}")
    print(f"\nall {args.sessions} sessions clean: {totals}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
