"""The composite-evidence verifier.

Eight independent checks (C1..C8) run over every bundle with no
short-circuiting, so a rejection always reports the full set of failures.
Each check maps to the attack classes it can catch; the verdict carries
the union of those flags plus a per-goal breakdown derived from them.

Checks, by what they decide:

* C1 -- the TD report is signed by a quoting enclave chaining to a
  trusted TEE vendor root.
* C2 -- the TPM quote verifies under its attestation key, and that key's
  provenance reaches a trusted platform-provider root (AK certificate
  path, or registry fallback when no certificate travels with the
  bundle).
* C3 -- the TD launch configuration binds the quoting key (MRCONFIGID
  carries digest(AK_public), or the report_data tail does, depending on
  the deployment's binding channel).
* C4 -- both halves of the challenge are echoed verbatim and the
  challenge has not been consumed before.
* C5 -- the TD's runtime registers and the quoted PCRs are two views of
  the same event stream (see ``evidence.check_rtmr_pcr_consistency``).
* C6 -- the quoted launch anchors (PCR 17 and 18) equal the values the
  relying party pinned for this host configuration.
* C7 -- the challenge round-trip stayed within the physical budget for a
  co-located TPM; a relay to a second machine cannot.
* C8 -- optionally, the quoting key is registered to exactly one
  platform.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Set, Tuple

from . import crypto, evidence, td, tpm
from .crypto import CertChain, Certificate, Digest
from .errors import DceaError
from .evidence import EvidenceBundle, _Reader, _cert_obj, _parse_cert
from .tpm import TpmKind

CHECK_IDS = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8")

CHECK_NAMES: Mapping[str, str] = {
    "C1": "TD report authenticity",
    "C2": "TPM quote authenticity and AK provenance",
    "C3": "AK-to-TD binding",
    "C4": "challenge freshness",
    "C5": "RTMR/PCR register consistency",
    "C6": "launch-environment anchors",
    "C7": "challenge round-trip time",
    "C8": "AK registry uniqueness",
}

# Attack classes each check can catch. A failed check raises every flag in
# its row; the flags drive the per-goal verdict below.
CHECK_ATTACKS: Mapping[str, Tuple[str, ...]] = {
    "C1": ("A1",),
    "C2": ("A1", "A5"),
    "C3": ("A2", "A5"),
    "C4": ("A1", "A4"),
    "C5": ("A3",),
    "C6": ("A6",),
    "C7": ("A2",),
    "C8": ("A5",),
}

GOALS = ("AB", "F", "MC", "CV", "PO")

GOAL_NAMES: Mapping[str, str] = {
    "AB": "attestation binding",
    "F": "freshness",
    "MC": "measurement correctness",
    "CV": "composite validity",
    "PO": "platform origin",
}

# Which security goals each attack class undermines when it succeeds.
ATTACK_GOALS: Mapping[str, FrozenSet[str]] = {
    "A1": frozenset({"AB", "MC"}),
    "A2": frozenset({"AB", "F", "CV", "PO"}),
    "A3": frozenset({"MC", "AB"}),
    "A4": frozenset({"CV", "F"}),
    "A5": frozenset({"AB", "PO"}),
    "A6": frozenset({"AB", "MC"}),
}

# Baseline quote latency (milliseconds) by TPM kind: a discrete part is
# slow silicon, a virtual one is a software round trip on the same host.
QUOTE_LATENCY_MS: Mapping[TpmKind, float] = {
    TpmKind.DISCRETE: 550.0,
    TpmKind.VIRTUAL: 300.0,
}


def default_rtt_threshold(kind: TpmKind, one_way_delay_ms: float) -> float:
    """Tightest budget an honest responder can always meet: quote latency
    plus one network round trip."""
    return QUOTE_LATENCY_MS[kind] + 2.0 * one_way_delay_ms


class BindingChannel(enum.Enum):
    MRCONFIGID = "mrconfigid"
    REPORT_DATA = "report_data"


@dataclass(frozen=True)
class Challenge:
    td_nonce: bytes
    tpm_nonce: bytes
    issued_at: float


def _challenge_key(challenge: Challenge) -> Tuple[bytes, bytes]:
    return (challenge.td_nonce, challenge.tpm_nonce)


@dataclass(frozen=True)
class VerifierPolicy:
    """Everything a relying party pins before looking at evidence."""

    trusted_tee_roots: Tuple[Certificate, ...]
    trusted_provider_roots: Tuple[Certificate, ...]
    expected_pcr17_18: Optional[Mapping[int, Digest]]
    rtt_threshold_ms: float
    require_ak_registry_uniqueness: bool = False
    binding_channel: BindingChannel = BindingChannel.MRCONFIGID
    provider_allowlist: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    checks: Tuple[CheckResult, ...]
    attack_flags: FrozenSet[str]
    goals: Mapping[str, bool]

    def checks_by_id(self) -> Dict[str, CheckResult]:
        return {c.check_id: c for c in self.checks}

    def failed_checks(self) -> Tuple[str, ...]:
        return tuple(c.check_id for c in self.checks if not c.passed)

    def to_obj(self) -> dict:
        return {
            "accepted": self.accepted,
            "checks": [
                {"id": c.check_id, "name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "attack_flags": sorted(self.attack_flags),
            "goals": dict(self.goals),
        }


# ---------------------------------------------------------------------------
# AK registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegistryEntry:
    platform_id: str
    issuer: str = ""
    registered_at: float = 0.0


@dataclass
class AkRegistry:
    """First-writer-wins map from AK public key to owning platform.

    A second registration under a different platform id is recorded as a
    conflict and keeps poisoning C8 for that key afterwards."""

    entries: Dict[bytes, RegistryEntry] = field(default_factory=dict)
    conflicts: Dict[bytes, Tuple[RegistryEntry, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class RegisterResult:
    status: str  # "registered" | "duplicate"
    existing: Optional[RegistryEntry] = None


def registry_register(
    registry: AkRegistry, ak_public: bytes, entry: RegistryEntry
) -> RegisterResult:
    existing = registry.entries.get(ak_public)
    if existing is None:
        registry.entries[ak_public] = entry
        return RegisterResult(status="registered", existing=entry)
    if existing.platform_id == entry.platform_id:
        return RegisterResult(status="registered", existing=existing)
    registry.conflicts[ak_public] = registry.conflicts.get(ak_public, ()) + (entry,)
    return RegisterResult(status="duplicate", existing=existing)


def registry_lookup(registry: AkRegistry, ak_public: bytes) -> Optional[RegistryEntry]:
    return registry.entries.get(ak_public)


# ---------------------------------------------------------------------------
# the eight checks
# ---------------------------------------------------------------------------

def _check_c1(bundle: EvidenceBundle, policy: VerifierPolicy) -> Tuple[bool, str]:
    verdict = crypto.verify_chain(bundle.td_report.qe_chain, policy.trusted_tee_roots)
    if not verdict.ok:
        return False, f"TEE certificate chain: {verdict.status.value}"
    if not td.verify_td_report_signature(bundle.td_report):
        return False, "TD report signature does not verify under the QE key"
    return True, "TD report signed by a quoting enclave with a trusted root"


def _check_c2(
    bundle: EvidenceBundle, policy: VerifierPolicy, registry: Optional[AkRegistry]
) -> Tuple[bool, str]:
    quote = bundle.tpm_quote
    if not tpm.verify_quote_signature(quote):
        return False, "quote signature does not verify under the presented AK"
    ek_chain = bundle.ek_cert_chain
    if policy.provider_allowlist:
        provider = ek_chain.leaf.claims_dict().get("provider")
        if provider not in policy.provider_allowlist:
            return False, f"EK provider {provider!r} is not on the allowlist"
    if bundle.ak_cert is not None:
        if bundle.ak_cert.subject_public != quote.ak_public:
            return False, "AK certificate covers a different key than the quote"
        full = CertChain((bundle.ak_cert,) + ek_chain.certs)
        verdict = crypto.verify_chain(full, policy.trusted_provider_roots)
        if not verdict.ok:
            return False, f"AK provenance chain: {verdict.status.value}"
        return True, "quote verified; AK chains to a trusted provider root"
    verdict = crypto.verify_chain(ek_chain, policy.trusted_provider_roots)
    if not verdict.ok:
        return False, f"EK chain: {verdict.status.value}"
    if registry is not None and registry_lookup(registry, quote.ak_public) is not None:
        return True, "quote verified; AK known to the registry"
    return False, "no AK certificate and the quoting key is not registered"


def _check_c3(bundle: EvidenceBundle, policy: VerifierPolicy) -> Tuple[bool, str]:
    want = crypto.digest(bundle.tpm_quote.ak_public)
    if policy.binding_channel is BindingChannel.MRCONFIGID:
        if bundle.td_report.mrconfigid == want.data:
            return True, "MRCONFIGID carries digest(AK_public)"
        return False, "MRCONFIGID does not bind the quoting key"
    tail = bundle.td_report.report_data[evidence.RD_TAIL]
    if tail == want.data[:32]:
        return True, "report_data tail carries digest(AK_public)"
    return False, "report_data tail does not bind the quoting key"


def _check_c4(
    bundle: EvidenceBundle,
    challenge: Challenge,
    spent: Optional[Set[Tuple[bytes, bytes]]],
    challenge_known: bool,
) -> Tuple[bool, str]:
    problems: List[str] = []
    if not challenge_known:
        problems.append("challenge was not issued by this verifier")
    if bundle.td_report.report_data[evidence.RD_NONCE] != challenge.td_nonce:
        problems.append("TD report echoes a different nonce")
    if bundle.tpm_quote.nonce != challenge.tpm_nonce:
        problems.append("TPM quote echoes a different nonce")
    if (
        bundle.nonces.td_nonce != challenge.td_nonce
        or bundle.nonces.tpm_nonce != challenge.tpm_nonce
    ):
        problems.append("bundle nonce record differs from the challenge")
    if spent is not None and _challenge_key(challenge) in spent:
        problems.append("challenge already consumed")
    if problems:
        return False, "; ".join(problems)
    return True, "both nonces echoed verbatim and the challenge is fresh"


def _check_c5(bundle: EvidenceBundle) -> Tuple[bool, str]:
    result = evidence.check_rtmr_pcr_consistency(
        bundle.td_report, bundle.tpm_quote, bundle.event_log
    )
    if result.all_matched:
        return True, "TD registers and quoted PCRs replay the same event stream"
    return False, "inconsistent registers: " + ", ".join(result.mismatched())


def _check_c6(bundle: EvidenceBundle, policy: VerifierPolicy) -> Tuple[bool, str]:
    if not policy.expected_pcr17_18:
        return True, "no launch anchors pinned by policy"
    quoted = bundle.tpm_quote.values_dict()
    bad = []
    for index, want in sorted(policy.expected_pcr17_18.items()):
        got = quoted.get(index)
        if got is None:
            bad.append(f"PCR{index} missing from the quote")
        elif got != want:
            bad.append(f"PCR{index} differs from the pinned value")
    if bad:
        return False, "; ".join(bad)
    return True, "quoted launch anchors equal the pinned values"


def _check_c7(bundle: EvidenceBundle, policy: VerifierPolicy) -> Tuple[bool, str]:
    rtt = bundle.timing.quote_received - bundle.timing.challenge_sent
    if rtt <= policy.rtt_threshold_ms:
        return True, f"quote round trip {rtt:.1f}ms within {policy.rtt_threshold_ms:.1f}ms"
    return False, f"quote round trip {rtt:.1f}ms exceeds {policy.rtt_threshold_ms:.1f}ms"


def _check_c8(
    bundle: EvidenceBundle, policy: VerifierPolicy, registry: Optional[AkRegistry]
) -> Tuple[bool, str]:
    if not policy.require_ak_registry_uniqueness:
        return True, "registry uniqueness not required by policy"
    if registry is None:
        return False, "policy requires an AK registry but none is available"
    ak = bundle.tpm_quote.ak_public
    entry = registry_lookup(registry, ak)
    if entry is None:
        return False, "quoting key is absent from the AK registry"
    if registry.conflicts.get(ak):
        return False, "quoting key was registered by more than one platform"
    return True, f"quoting key registered to platform {entry.platform_id!r}"


def verify_bundle(
    bundle: EvidenceBundle,
    policy: VerifierPolicy,
    challenge: Challenge,
    *,
    registry: Optional[AkRegistry] = None,
    spent: Optional[Set[Tuple[bytes, bytes]]] = None,
    disabled_checks: FrozenSet[str] = frozenset(),
    challenge_known: bool = True,
) -> Verdict:
    """Run every check and fold the outcomes into a verdict.

    ``disabled_checks`` is a diagnostic hook for ablation runs; a disabled
    check is reported as passed without being evaluated. ``spent`` is the
    caller's consumed-challenge ledger (the ``Verifier`` class maintains
    one); ``challenge_known`` is False when the challenge was never issued
    by the calling verifier.
    """
    evaluators: Mapping[str, Callable[[], Tuple[bool, str]]] = {
        "C1": lambda: _check_c1(bundle, policy),
        "C2": lambda: _check_c2(bundle, policy, registry),
        "C3": lambda: _check_c3(bundle, policy),
        "C4": lambda: _check_c4(bundle, challenge, spent, challenge_known),
        "C5": lambda: _check_c5(bundle),
        "C6": lambda: _check_c6(bundle, policy),
        "C7": lambda: _check_c7(bundle, policy),
        "C8": lambda: _check_c8(bundle, policy, registry),
    }
    checks = []
    for check_id in CHECK_IDS:
        if check_id in disabled_checks:
            checks.append(
                CheckResult(check_id, CHECK_NAMES[check_id], True, "disabled (diagnostic hook)")
            )
            continue
        try:
            passed, detail = evaluators[check_id]()
        except DceaError as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append(CheckResult(check_id, CHECK_NAMES[check_id], passed, detail))

    flags = frozenset(
        attack for c in checks if not c.passed for attack in CHECK_ATTACKS[c.check_id]
    )
    goals = {g: not any(g in ATTACK_GOALS[a] for a in flags) for g in GOALS}
    return Verdict(
        accepted=all(c.passed for c in checks),
        checks=tuple(checks),
        attack_flags=flags,
        goals=goals,
    )


class Verifier:
    """Stateful relying party: issues single-use challenges and keeps the
    consumed-challenge ledger and AK registry across verifications."""

    def __init__(
        self,
        policy: VerifierPolicy,
        rng: Optional[random.Random] = None,
        clock: Optional[Callable[[], float]] = None,
    ):
        self.policy = policy
        self._rng = rng if rng is not None else random.Random()
        self._clock = clock if clock is not None else (lambda: 0.0)
        self.registry = AkRegistry()
        self._outstanding: Dict[Tuple[bytes, bytes], Challenge] = {}
        self._spent: Set[Tuple[bytes, bytes]] = set()

    def challenge(self) -> Challenge:
        while True:
            key = (self._rng.randbytes(evidence.NONCE_LEN), self._rng.randbytes(evidence.NONCE_LEN))
            if key not in self._outstanding and key not in self._spent:
                break
        challenge = Challenge(td_nonce=key[0], tpm_nonce=key[1], issued_at=float(self._clock()))
        self._outstanding[key] = challenge
        return challenge

    def adopt_challenge(self, challenge: Challenge) -> None:
        """Treat an externally built challenge as issued by this verifier."""
        self._outstanding[_challenge_key(challenge)] = challenge

    def verify(
        self,
        bundle: EvidenceBundle,
        challenge: Challenge,
        disabled_checks: FrozenSet[str] = frozenset(),
    ) -> Verdict:
        key = _challenge_key(challenge)
        known = key in self._outstanding
        verdict = verify_bundle(
            bundle,
            self.policy,
            challenge,
            registry=self.registry,
            spent=self._spent,
            disabled_checks=disabled_checks,
            challenge_known=known,
        )
        # one shot per challenge, success or not
        self._outstanding.pop(key, None)
        self._spent.add(key)
        return verdict


# ---------------------------------------------------------------------------
# JSON codecs for policies, challenges, and registries (CLI files)
# ---------------------------------------------------------------------------

def policy_to_obj(policy: VerifierPolicy) -> dict:
    expected = None
    if policy.expected_pcr17_18 is not None:
        expected = {str(i): d.hex() for i, d in sorted(policy.expected_pcr17_18.items())}
    return {
        "trusted_tee_roots": [_cert_obj(c) for c in policy.trusted_tee_roots],
        "trusted_provider_roots": [_cert_obj(c) for c in policy.trusted_provider_roots],
        "expected_pcr17_18": expected,
        "rtt_threshold_ms": policy.rtt_threshold_ms,
        "require_ak_registry_uniqueness": policy.require_ak_registry_uniqueness,
        "binding_channel": policy.binding_channel.value,
        "provider_allowlist": list(policy.provider_allowlist),
    }


def obj_to_policy(obj) -> VerifierPolicy:
    r = _Reader(obj)
    tee = r.get(obj, "$", "trusted_tee_roots", list)
    provider = r.get(obj, "$", "trusted_provider_roots", list)
    expected_obj = r.get(obj, "$", "expected_pcr17_18", dict, optional=True)
    expected = None
    if expected_obj is not None:
        expected = {}
        for key, text in expected_obj.items():
            if not (isinstance(key, str) and key.isdigit()):
                r.fail("$.expected_pcr17_18", f"bad pcr index {key!r}")
            expected[int(key)] = r.digest_field(text, f"$.expected_pcr17_18.{key}")
    channel_text = r.get(obj, "$", "binding_channel", str)
    try:
        channel = BindingChannel(channel_text)
    except ValueError:
        r.fail("$.binding_channel", f"unknown channel {channel_text!r}")
    allowlist = r.get(obj, "$", "provider_allowlist", list)
    if not all(isinstance(p, str) for p in allowlist):
        r.fail("$.provider_allowlist", "must be a list of provider names")
    return VerifierPolicy(
        trusted_tee_roots=tuple(
            _parse_cert(c, f"$.trusted_tee_roots[{i}]", r) for i, c in enumerate(tee)
        ),
        trusted_provider_roots=tuple(
            _parse_cert(c, f"$.trusted_provider_roots[{i}]", r) for i, c in enumerate(provider)
        ),
        expected_pcr17_18=expected,
        rtt_threshold_ms=float(r.get(obj, "$", "rtt_threshold_ms", (int, float))),
        require_ak_registry_uniqueness=bool(
            r.get(obj, "$", "require_ak_registry_uniqueness", bool)
        ),
        binding_channel=channel,
        provider_allowlist=tuple(allowlist),
    )


def challenge_to_obj(challenge: Challenge) -> dict:
    return {
        "td_nonce": challenge.td_nonce.hex(),
        "tpm_nonce": challenge.tpm_nonce.hex(),
        "issued_at": challenge.issued_at,
    }


def obj_to_challenge(obj) -> Challenge:
    r = _Reader(obj)
    return Challenge(
        td_nonce=r.bytes_field(r.get(obj, "$", "td_nonce"), "$.td_nonce", evidence.NONCE_LEN),
        tpm_nonce=r.bytes_field(r.get(obj, "$", "tpm_nonce"), "$.tpm_nonce", evidence.NONCE_LEN),
        issued_at=float(r.get(obj, "$", "issued_at", (int, float))),
    )


def _entry_to_obj(entry: RegistryEntry) -> dict:
    return {
        "platform_id": entry.platform_id,
        "issuer": entry.issuer,
        "registered_at": entry.registered_at,
    }


def _obj_to_entry(obj, path, r: _Reader) -> RegistryEntry:
    return RegistryEntry(
        platform_id=r.get(obj, path, "platform_id", str),
        issuer=r.get(obj, path, "issuer", str),
        registered_at=float(r.get(obj, path, "registered_at", (int, float))),
    )


def registry_to_obj(registry: AkRegistry) -> dict:
    return {
        "entries": {ak.hex(): _entry_to_obj(e) for ak, e in sorted(registry.entries.items())},
        "conflicts": {
            ak.hex(): [_entry_to_obj(e) for e in entries]
            for ak, entries in sorted(registry.conflicts.items())
        },
    }


def obj_to_registry(obj) -> AkRegistry:
    r = _Reader(obj)
    entries_obj = r.get(obj, "$", "entries", dict)
    conflicts_obj = r.get(obj, "$", "conflicts", dict)
    registry = AkRegistry()
    for ak_hex, entry in entries_obj.items():
        ak = r.bytes_field(ak_hex, "$.entries key")
        registry.entries[ak] = _obj_to_entry(entry, f"$.entries.{ak_hex}", r)
    for ak_hex, items in conflicts_obj.items():
        ak = r.bytes_field(ak_hex, "$.conflicts key")
        if not isinstance(items, list):
            r.fail(f"$.conflicts.{ak_hex}", "expected list")
        registry.conflicts[ak] = tuple(
            _obj_to_entry(e, f"$.conflicts.{ak_hex}[{i}]", r) for i, e in enumerate(items)
        )
    return registry
