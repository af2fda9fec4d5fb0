"""Command-line front end.

Subcommands:

* ``run``    -- simulate one attestation round (honest or a named attack
  scenario), print the verdict, optionally write the bundle and the
  verification context (policy + challenge + registry) to files.
* ``verify`` -- offline verification: a ``*.dcea.json`` bundle against a
  context file written by ``run``.
* ``matrix`` -- every scenario crossed with both deployments.
* ``list-scenarios`` -- the scenario catalog.

Exit codes: 0 when the outcome matches expectation (honest accepted,
attack rejected; for ``verify``, bundle accepted), 1 on the contrary
outcome, 2 for usage, I/O, or parse errors.

``--seed`` falls back to the ``DCEA_SEED`` environment variable, then 0.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import List, Optional

from . import evidence
from .adversary import (
    SCENARIOS,
    Deployment,
    WorldConfig,
    attest_attack,
    attest_honest,
    build_world,
)
from .errors import DceaError
from .verifier import (
    AkRegistry,
    challenge_to_obj,
    obj_to_challenge,
    obj_to_policy,
    obj_to_registry,
    policy_to_obj,
    registry_register,
    registry_to_obj,
    verify_bundle,
)

EXIT_OK = 0
EXIT_CONTRARY = 1
EXIT_USAGE = 2


class _Usage(Exception):
    pass


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    raw = os.environ.get("DCEA_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise _Usage(f"DCEA_SEED must be an integer, got {raw!r}")


def _verdict_obj(verdict) -> dict:
    obj = verdict.to_obj()
    obj["failed_checks"] = list(verdict.failed_checks())
    return obj


def _verdict_md(verdict) -> List[str]:
    lines = []
    status = "accepted" if verdict.accepted else "rejected"
    flags = ", ".join(sorted(verdict.attack_flags)) or "none"
    lines.append(f"verdict: {status} (attack flags: {flags})")
    for c in verdict.checks:
        mark = "pass" if c.passed else "FAIL"
        lines.append(f"- {c.check_id} {c.name}: {mark} -- {c.detail}")
    broken = [g for g, ok in verdict.goals.items() if not ok]
    lines.append("goals at risk: " + (", ".join(broken) if broken else "none"))
    return lines


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _context_obj(outcome, world) -> dict:
    registry = AkRegistry()
    for ak_pub, entry in world.registrations:
        registry_register(registry, ak_pub, entry)
    return {
        "policy": policy_to_obj(outcome.policy),
        "challenge": challenge_to_obj(outcome.challenge),
        "registry": registry_to_obj(registry),
    }


def cmd_run(args) -> int:
    seed = _resolve_seed(args)
    deployment = Deployment(args.deployment)
    world = build_world(WorldConfig(seed=seed, deployment=deployment))
    if args.scenario == "honest":
        outcome = attest_honest(world)
        expected_accept = True
    else:
        outcome = attest_attack(world, args.scenario)
        expected_accept = False

    as_expected = outcome.verdict.accepted == expected_accept
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(evidence.serialize(outcome.bundle))
    if args.policy:
        _write_text(
            args.policy,
            json.dumps(_context_obj(outcome, world), sort_keys=True, indent=2) + "\n",
        )

    if args.format == "md":
        print(f"# {outcome.scenario_id} ({deployment.value}, seed {seed})")
        print("\n".join(_verdict_md(outcome.verdict)))
        print(f"as expected: {'yes' if as_expected else 'NO'}")
    else:
        obj = {
            "scenario": outcome.scenario_id,
            "deployment": deployment.value,
            "seed": seed,
            "expected": "accept" if expected_accept else "reject",
            "as_expected": as_expected,
        }
        obj.update(_verdict_obj(outcome.verdict))
        print(json.dumps(obj, indent=2))
    return EXIT_OK if as_expected else EXIT_CONTRARY


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _load_context(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            ctx = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _Usage(f"{path}: not valid JSON: {exc}")
    if not isinstance(ctx, dict) or "policy" not in ctx or "challenge" not in ctx:
        raise _Usage(f"{path}: context file needs 'policy' and 'challenge' objects")
    policy = obj_to_policy(ctx["policy"])
    challenge = obj_to_challenge(ctx["challenge"])
    registry = obj_to_registry(ctx["registry"]) if ctx.get("registry") else None
    return policy, challenge, registry


def cmd_verify(args) -> int:
    with open(args.bundle, "rb") as fh:
        bundle = evidence.deserialize(fh.read())
    policy, challenge, registry = _load_context(args.policy)
    verdict = verify_bundle(bundle, policy, challenge, registry=registry)
    if args.format == "md":
        print(f"# {args.bundle}")
        print("\n".join(_verdict_md(verdict)))
    else:
        print(json.dumps(_verdict_obj(verdict), indent=2))
    return EXIT_OK if verdict.accepted else EXIT_CONTRARY


# ---------------------------------------------------------------------------
# matrix
# ---------------------------------------------------------------------------

DEPLOYMENT_ORDER = (Deployment.S1, Deployment.S2)


def matrix_rows(seed: int, seeds: int = 1) -> List[dict]:
    """Run honest plus every scenario under both deployments.

    Scenario/deployment pairs outside a scenario's applicability are
    reported as ``n/a`` rather than executed.
    """
    rows = []
    for sid in ["honest"] + list(SCENARIOS):
        for deployment in DEPLOYMENT_ORDER:
            relevant = sid == "honest" or deployment in SCENARIOS[sid].deployments
            if not relevant:
                rows.append({
                    "scenario": sid, "deployment": deployment.value,
                    "expected": "-", "result": "n/a", "failed_checks": "",
                    "runs": 0, "ok_runs": 0, "as_expected": "n/a",
                })
                continue
            expected_accept = sid == "honest"
            ok_runs = 0
            failed = ()
            last_accepted = None
            for s in range(seed, seed + seeds):
                world = build_world(WorldConfig(seed=s, deployment=deployment))
                outcome = (
                    attest_honest(world)
                    if expected_accept
                    else attest_attack(world, sid)
                )
                if outcome.verdict.accepted == expected_accept:
                    ok_runs += 1
                failed = outcome.verdict.failed_checks()
                last_accepted = outcome.verdict.accepted
            rows.append({
                "scenario": sid, "deployment": deployment.value,
                "expected": "accept" if expected_accept else "reject",
                "result": "accepted" if last_accepted else "rejected",
                "failed_checks": ",".join(failed),
                "runs": seeds, "ok_runs": ok_runs,
                "as_expected": "yes" if ok_runs == seeds else "no",
            })
    return rows


def _matrix_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf,
        fieldnames=[
            "scenario", "deployment", "expected", "result",
            "failed_checks", "runs", "ok_runs", "as_expected",
        ],
        lineterminator="\n",
    )
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _matrix_md(rows: List[dict], seeds: int) -> str:
    by_cell = {(r["scenario"], r["deployment"]): r for r in rows}
    scenarios = ["honest"] + list(SCENARIOS)

    def cell(row):
        if row["result"] == "n/a":
            return "n/a"
        text = row["result"]
        if row["failed_checks"]:
            text += f" ({row['failed_checks']})"
        if seeds > 1:
            text += f" {row['ok_runs']}/{row['runs']}"
        if row["as_expected"] == "no":
            text = "UNEXPECTED: " + text
        return text

    lines = ["| scenario | S1 | S2 |", "|---|---|---|"]
    for sid in scenarios:
        s1 = cell(by_cell[(sid, "S1")])
        s2 = cell(by_cell[(sid, "S2")])
        lines.append(f"| {sid} | {s1} | {s2} |")
    return "\n".join(lines) + "\n"


def cmd_matrix(args) -> int:
    seed = _resolve_seed(args)
    rows = matrix_rows(seed, args.seeds)
    if args.format == "csv":
        text = _matrix_csv(rows)
    elif args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        text = _matrix_md(rows, args.seeds)
    sys.stdout.write(text)
    if args.out:
        _write_text(args.out, text)
    clean = all(r["as_expected"] in ("yes", "n/a") for r in rows)
    return EXIT_OK if clean else EXIT_CONTRARY


# ---------------------------------------------------------------------------
# list-scenarios
# ---------------------------------------------------------------------------

def cmd_list_scenarios(args) -> int:
    if args.format == "json":
        rows = [
            {
                "id": sc.scenario_id,
                "declared_attack": sc.declared_attack,
                "targeted_check": sc.targeted_check,
                "deployments": [d.value for d in sc.deployments],
                "policy_overrides": dict(sc.policy_overrides),
                "description": sc.description,
            }
            for sc in SCENARIOS.values()
        ]
        print(json.dumps(rows, indent=2))
    else:
        print("| scenario | attack | check | deployments | description |")
        print("|---|---|---|---|---|")
        for sc in SCENARIOS.values():
            deps = ",".join(d.value for d in sc.deployments)
            print(
                f"| {sc.scenario_id} | {sc.declared_attack} | {sc.targeted_check} "
                f"| {deps} | {sc.description} |"
            )
    return EXIT_OK


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcea",
        description="attestation simulator and verifier for TD-to-TPM composite evidence",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one attestation round")
    run_p.add_argument("--scenario", default="honest",
                       help="'honest' or a scenario id (see list-scenarios)")
    run_p.add_argument("--deployment", choices=["S1", "S2"], default="S2")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", help="write the evidence bundle (*.dcea.json) here")
    run_p.add_argument("--policy", help="write the verification context here")
    run_p.add_argument("--format", choices=["json", "md"], default="json")
    run_p.set_defaults(func=cmd_run)

    verify_p = sub.add_parser("verify", help="verify a bundle file offline")
    verify_p.add_argument("bundle", help="path to a *.dcea.json bundle")
    verify_p.add_argument("--policy", required=True,
                          help="verification context written by 'run --policy'")
    verify_p.add_argument("--format", choices=["json", "md"], default="json")
    verify_p.set_defaults(func=cmd_verify)

    matrix_p = sub.add_parser("matrix", help="all scenarios x both deployments")
    matrix_p.add_argument("--seed", type=int, default=None)
    matrix_p.add_argument("--seeds", type=int, default=1,
                          help="number of consecutive seeds per cell")
    matrix_p.add_argument("--format", choices=["md", "csv", "json"], default="md")
    matrix_p.add_argument("--out", help="also write the rendered table here")
    matrix_p.set_defaults(func=cmd_matrix)

    list_p = sub.add_parser("list-scenarios", help="print the scenario catalog")
    list_p.add_argument("--format", choices=["md", "json"], default="md")
    list_p.set_defaults(func=cmd_list_scenarios)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DceaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
