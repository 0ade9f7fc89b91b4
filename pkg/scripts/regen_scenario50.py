#!/usr/bin/env python3
"""Regenerate tests/golden/scenario50.log from the scripted scenario.

Run after an intentional change to the log schema or the scenario, then
review the diff by hand before committing.
"""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "tests"))

from scenarios import scenario50_network  # noqa: E402


def main() -> int:
    net = scenario50_network()
    out = REPO / "tests" / "golden" / "scenario50.log"
    out.write_text("\n".join(net.log_lines()) + "\n", encoding="utf-8")
    print(f"wrote {out}: {len(net.log_lines())} lines")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
