#!/usr/bin/env python3
"""Regenerate the golden fixtures under tests/fixtures/.

Every fixture is a (bundle, verification context) pair produced by the
deterministic simulator, so reruns must be byte-identical; the acceptance
suite enforces that. Regenerate only when the wire format itself changes,
and expect the format tests to tell you loudly when the bytes move.
"""

import pathlib
import sys

from dcea import cli

FIXTURE_DIR = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"
FIXTURE_SEED = 1000

CASES = (
    ("honest", "S1", "honest_s1"),
    ("honest", "S2", "honest_s2"),
    ("A5_ak_clone", "S2", "a5_ak_clone"),
)


def main() -> int:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    for scenario, deployment, name in CASES:
        rc = cli.main([
            "run",
            "--scenario", scenario,
            "--deployment", deployment,
            "--seed", str(FIXTURE_SEED),
            "--out", str(FIXTURE_DIR / f"{name}.dcea.json"),
            "--policy", str(FIXTURE_DIR / f"{name}.policy.json"),
        ])
        if rc != 0:
            print(f"unexpected outcome for {name} (rc={rc})", file=sys.stderr)
            return 1
        print(f"wrote {name}.dcea.json + {name}.policy.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
