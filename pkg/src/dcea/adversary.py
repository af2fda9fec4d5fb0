"""Deterministic attack harness: simulated worlds, honest flows, and the
attack scenario catalog.

A :class:`World` is one provider environment grown from an integer seed:
provider and TEE-vendor roots, a quoting enclave, a reference software
stack, and one honest launched platform (``plat-A``) with a booted guest.
Scenario generators may grow the world further (second platforms, rogue
CAs, rebooted hosts) and then produce the evidence bundle an adversary in
that position would submit.

Every scenario is engineered to fail exactly one verifier check under the
default policy, so the test suite can demonstrate that no check is
redundant: disable the targeted check and the same bundle passes.

The two deployments differ only in which kind of TPM serves the guest:

* ``S1`` -- a host-backed virtual TPM (fast quotes);
* ``S2`` -- a DCEA-capable discrete TPM (slow quotes).

Timing uses a virtual clock in milliseconds. An honest exchange takes one
network round trip plus the TPM's quote latency, which is exactly the
default verifier threshold; any relay hop pushes past it.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from . import crypto, platform as platform_mod, td as td_mod, tpm as tpm_mod
from .crypto import CertChain, Certificate, KeyPair
from .errors import PolicyViolation, UnknownScenario, WorldError
from .evidence import EvidenceBundle, Nonces, Timing, build_bundle, encode_report_data
from .platform import HostStack, Platform
from .td import GuestEvent, TdState
from .tpm import Scope, TpmKind, TpmState
from .verifier import (
    QUOTE_LATENCY_MS,
    BindingChannel,
    Challenge,
    RegistryEntry,
    Verdict,
    Verifier,
    VerifierPolicy,
    default_rtt_threshold,
    registry_register,
)


class Deployment(enum.Enum):
    S1 = "S1"  # guest quotes through a host-backed virtual TPM
    S2 = "S2"  # guest quotes through a DCEA-capable discrete TPM


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 0
    deployment: Deployment = Deployment.S2
    one_way_delay_ms: float = 12.0
    relay_delay_ms: float = 40.0
    td_report_latency_ms: float = 50.0
    provider: str = "examplecloud"
    region: str = "region-1"
    binding_channel: BindingChannel = BindingChannel.MRCONFIGID
    policy_pcrs: Tuple[int, ...] = (17, 18)
    in_td_check: bool = False


@dataclass
class World:
    config: WorldConfig
    rng: random.Random
    clock_ms: float
    provider_ca: KeyPair
    provider_root: Certificate
    tee_root: Certificate
    qe: KeyPair
    qe_chain: CertChain
    reference_stack: HostStack
    guest_firmware: bytes
    guest_events: Tuple[GuestEvent, ...]
    platforms: Dict[str, Platform] = field(default_factory=dict)
    vtpms: Dict[str, TpmState] = field(default_factory=dict)
    ak_handles: Dict[str, str] = field(default_factory=dict)
    tds: Dict[str, TdState] = field(default_factory=dict)
    bound_pubs: Dict[str, bytes] = field(default_factory=dict)
    registrations: List[Tuple[bytes, RegistryEntry]] = field(default_factory=list)


# (rtmr, pcr, label) for the canonical guest boot; payloads are seed-derived
GUEST_BOOT_PLAN = (
    (0, 1, "guest fw config"),
    (0, 7, "guest boot services"),
    (1, 2, "guest kernel"),
    (1, 3, "guest initrd"),
    (2, 8, "workload agent"),
)

TAMPER_EVENT_INDEX = 2  # the guest kernel event; lands in the RTMR1 row

QUOTE_SELECTION = tuple(range(16)) + (17, 18)


def _seed_bytes(config: WorldConfig, label: str) -> bytes:
    return crypto.digest(f"world:{config.seed}:{label}".encode()).data


def _reference_stack(config: WorldConfig) -> HostStack:
    def img(name: str) -> bytes:
        return _seed_bytes(config, f"img:{name}")

    return HostStack(
        firmware_image=img("firmware"),
        acm_image=img("acm"),
        seamldr_image=img("seamldr"),
        kernel_image=img("kernel"),
        hypervisor_image=img("hypervisor"),
        vtpm_binary=img("vtpm"),
    )


def quoting_kind(world: World) -> TpmKind:
    return TpmKind.VIRTUAL if world.config.deployment is Deployment.S1 else TpmKind.DISCRETE


def build_world(config: Optional[WorldConfig] = None) -> World:
    config = config or WorldConfig()
    provider_ca = crypto.keygen(_seed_bytes(config, "provider-ca"), crypto.KeyKind.CA)
    provider_root = crypto.issue_cert(
        provider_ca, provider_ca.public, {"role": "root", "provider": config.provider}
    )
    tee_ca = crypto.keygen(_seed_bytes(config, "tee-ca"), crypto.KeyKind.CA)
    tee_root = crypto.issue_cert(tee_ca, tee_ca.public, {"role": "tee-root"})
    qe = crypto.keygen(_seed_bytes(config, "qe"), crypto.KeyKind.QE)
    qe_chain = CertChain((crypto.issue_cert(tee_ca, qe.public, {"role": "qe"}), tee_root))
    events = tuple(
        GuestEvent(rtmr, pcr, crypto.digest(_seed_bytes(config, f"guest:{label}")), label)
        for rtmr, pcr, label in GUEST_BOOT_PLAN
    )
    world = World(
        config=config,
        rng=random.Random(config.seed),
        clock_ms=0.0,
        provider_ca=provider_ca,
        provider_root=provider_root,
        tee_root=tee_root,
        qe=qe,
        qe_chain=qe_chain,
        reference_stack=_reference_stack(config),
        guest_firmware=_seed_bytes(config, "guest-firmware"),
        guest_events=events,
    )
    _spawn_platform(world, "plat-A")
    return world


# ---------------------------------------------------------------------------
# growing worlds
# ---------------------------------------------------------------------------

def _launch_platform(
    world: World, platform_id: str, stack: Optional[HostStack] = None,
    ca: Optional[KeyPair] = None,
) -> Platform:
    cfg = world.config
    device = tpm_mod.tpm_init(
        _seed_bytes(cfg, f"ek:{platform_id}"),
        ca or world.provider_ca,
        {"provider": cfg.provider, "platform_id": platform_id, "region": cfg.region},
    )
    return platform_mod.measured_launch(stack or world.reference_stack, device)


def _boot_guest(
    world: World,
    plat: Platform,
    vtpm: TpmState,
    bound_pub: bytes,
    tamper_index: Optional[int] = None,
) -> Tuple[TpmState, TdState]:
    """Launch a TD against its serving TPM and boot it, feeding each guest
    event to both measurement sinks.

    ``tamper_index`` doctors the digest delivered to the PCR side of that
    one event (the TD still folds the real one), modelling a host that
    filters the mirror stream.
    """
    cfg = world.config
    launch_bind = bound_pub if cfg.binding_channel is BindingChannel.MRCONFIGID else None
    guest = td_mod.td_launch(plat, world.guest_firmware, ak_pub=launch_bind)
    vtpm = tpm_mod.pcr_extend_digest(vtpm, 0, guest.mrtd, "td firmware", scope=Scope.GUEST)
    for i, ev in enumerate(world.guest_events):
        guest = td_mod.rtmr_extend(guest, ev)
        delivered = ev.event_digest
        if tamper_index is not None and i == tamper_index:
            delivered = crypto.digest(b"filtered:" + ev.event_digest.data)
        vtpm = tpm_mod.pcr_extend_digest(
            vtpm, ev.pcr_index, delivered, ev.description,
            scope=Scope.GUEST, rtmr_index=ev.rtmr_index,
        )
    return vtpm, guest


def _spawn_platform(
    world: World,
    platform_id: str,
    stack: Optional[HostStack] = None,
    ca: Optional[KeyPair] = None,
    bind_ak_pub: Optional[bytes] = None,
    register: bool = True,
    tamper_index: Optional[int] = None,
) -> str:
    """Launch a platform, give it a serving TPM, and boot a guest on it."""
    plat = _launch_platform(world, platform_id, stack=stack, ca=ca)
    vtpm = platform_mod.instantiate_vtpm(
        plat,
        ca or world.provider_ca,
        _seed_bytes(world.config, f"vtpm:{platform_id}"),
        kind=quoting_kind(world),
        policy_pcrs=world.config.policy_pcrs,
    )
    handle = tpm_mod.default_ak_handle(vtpm)
    ak_pub = vtpm.aks[handle].keypair.public
    bound = bind_ak_pub if bind_ak_pub is not None else ak_pub
    vtpm, guest = _boot_guest(world, plat, vtpm, bound, tamper_index=tamper_index)
    world.platforms[platform_id] = plat
    world.vtpms[platform_id] = vtpm
    world.ak_handles[platform_id] = handle
    world.tds[platform_id] = guest
    world.bound_pubs[platform_id] = bound
    if register:
        world.registrations.append(
            (ak_pub, RegistryEntry(platform_id=platform_id, issuer=world.config.provider,
                                   registered_at=world.clock_ms))
        )
    return platform_id


# ---------------------------------------------------------------------------
# bundle assembly
# ---------------------------------------------------------------------------

def _host_entries(vtpm: TpmState):
    return tuple(e for e in vtpm.log if e.scope is Scope.HOST)


def _timing(world: World, t0: float, extra_quote_delay_ms: float = 0.0) -> Timing:
    cfg = world.config
    rtt = 2 * cfg.one_way_delay_ms
    return Timing(
        challenge_sent=t0,
        td_received=t0 + rtt + cfg.td_report_latency_ms,
        quote_received=t0 + rtt + QUOTE_LATENCY_MS[quoting_kind(world)] + extra_quote_delay_ms,
    )


def _advance(world: World, timing: Timing) -> None:
    world.clock_ms = max(world.clock_ms, timing.td_received, timing.quote_received)


def _meta(world: World, scenario_id: str, platform_id: str, **extra: str) -> Dict[str, str]:
    meta = {
        "scenario": scenario_id,
        "deployment": world.config.deployment.value,
        "platform_id": platform_id,
        "seed": str(world.config.seed),
    }
    meta.update(extra)
    return meta


def _make_report(world: World, challenge: Challenge, guest: TdState, bound_pub: bytes):
    cfg = world.config
    if cfg.binding_channel is BindingChannel.REPORT_DATA:
        rd = encode_report_data(challenge.td_nonce, binding=crypto.digest(bound_pub).data[:32])
    elif cfg.in_td_check:
        rd = encode_report_data(challenge.td_nonce, consistency_bit=True)
    else:
        rd = encode_report_data(challenge.td_nonce)
    return td_mod.td_report(guest, rd, world.qe, world.qe_chain)


def _honest_bundle(
    world: World,
    challenge: Challenge,
    platform_id: str = "plat-A",
    scenario_id: str = "honest",
    root_cert: Optional[Certificate] = None,
    **meta_extra: str,
) -> EvidenceBundle:
    """The protocol-following flow on one platform: report and quote for the
    given challenge, this platform's certificates, the combined event log."""
    vtpm = world.vtpms[platform_id]
    handle = world.ak_handles[platform_id]
    guest = world.tds[platform_id]
    report = _make_report(world, challenge, guest, world.bound_pubs[platform_id])
    quote = tpm_mod.tpm_quote(vtpm, handle, QUOTE_SELECTION, challenge.tpm_nonce)
    timing = _timing(world, challenge.issued_at)
    _advance(world, timing)
    return build_bundle(
        td_report=report,
        tpm_quote=quote,
        ek_cert_chain=CertChain((vtpm.ek_cert, root_cert or world.provider_root)),
        ak_cert=vtpm.aks[handle].ak_cert,
        event_log=_host_entries(vtpm) + guest.guest_log,
        nonces=Nonces(challenge.td_nonce, challenge.tpm_nonce),
        timing=timing,
        scenario_meta=_meta(world, scenario_id, platform_id, **meta_extra),
    )


# ---------------------------------------------------------------------------
# scenario generators
# ---------------------------------------------------------------------------

def _gen_quote_forgery(world: World, challenge: Challenge) -> EvidenceBundle:
    # the adversary mirrors an honest quote's structure but cannot reach the
    # sealed key, so the signature is junk of the right size
    bundle = _honest_bundle(world, challenge, scenario_id="A1_quote_forgery")
    junk = (_seed_bytes(world.config, "forged-sig-a") + _seed_bytes(world.config, "forged-sig-b"))[:64]
    return replace(bundle, tpm_quote=replace(bundle.tpm_quote, signature=junk))


def _gen_report_forgery(world: World, challenge: Challenge) -> EvidenceBundle:
    # honest-looking TD report content, signed by a quoting-enclave chain the
    # adversary minted itself
    bundle = _honest_bundle(world, challenge, scenario_id="A1_report_forgery")
    rogue_ca = crypto.keygen(_seed_bytes(world.config, "rogue-tee-ca"), crypto.KeyKind.CA)
    rogue_qe = crypto.keygen(_seed_bytes(world.config, "rogue-qe"), crypto.KeyKind.QE)
    rogue_chain = CertChain((
        crypto.issue_cert(rogue_ca, rogue_qe.public, {"role": "qe"}),
        crypto.issue_cert(rogue_ca, rogue_ca.public, {"role": "tee-root"}),
    ))
    unsigned = replace(bundle.td_report, qe_chain=rogue_chain, qe_signature=b"")
    signed = replace(
        unsigned,
        qe_signature=crypto.sign(rogue_qe.private, td_mod.report_signing_payload(unsigned)),
    )
    return replace(bundle, td_report=signed)


def _gen_mix_match(world: World, challenge: Challenge) -> EvidenceBundle:
    # genuine TD report from plat-A, genuine quote from plat-B; identical
    # stacks and parallel queries keep everything but the key binding green
    _spawn_platform(world, "plat-B")
    vtpm_b = world.vtpms["plat-B"]
    handle_b = world.ak_handles["plat-B"]
    guest_a = world.tds["plat-A"]
    report = _make_report(world, challenge, guest_a, world.bound_pubs["plat-A"])
    quote = tpm_mod.tpm_quote(vtpm_b, handle_b, QUOTE_SELECTION, challenge.tpm_nonce)
    timing = _timing(world, challenge.issued_at)
    _advance(world, timing)
    return build_bundle(
        td_report=report,
        tpm_quote=quote,
        ek_cert_chain=CertChain((vtpm_b.ek_cert, world.provider_root)),
        ak_cert=vtpm_b.aks[handle_b].ak_cert,
        event_log=_host_entries(vtpm_b) + guest_a.guest_log,
        nonces=Nonces(challenge.td_nonce, challenge.tpm_nonce),
        timing=timing,
        scenario_meta=_meta(world, "A2_mix_match", "plat-B"),
    )


def _gen_frankenstein(world: World, challenge: Challenge) -> EvidenceBundle:
    # the local TD is configured to vouch for a remote honest platform's AK,
    # and that platform's quotes are relayed in; only the wire time gives it
    # away
    _spawn_platform(world, "plat-R")
    vtpm_r = world.vtpms["plat-R"]
    handle_r = world.ak_handles["plat-R"]
    remote_ak = vtpm_r.aks[handle_r].keypair.public
    plat_a = world.platforms["plat-A"]
    launch_bind = (
        remote_ak if world.config.binding_channel is BindingChannel.MRCONFIGID else None
    )
    guest = td_mod.td_launch(plat_a, world.guest_firmware, ak_pub=launch_bind)
    for ev in world.guest_events:
        guest = td_mod.rtmr_extend(guest, ev)
    report = _make_report(world, challenge, guest, remote_ak)
    quote = tpm_mod.tpm_quote(vtpm_r, handle_r, QUOTE_SELECTION, challenge.tpm_nonce)
    timing = _timing(
        world, challenge.issued_at, extra_quote_delay_ms=2 * world.config.relay_delay_ms
    )
    _advance(world, timing)
    return build_bundle(
        td_report=report,
        tpm_quote=quote,
        ek_cert_chain=CertChain((vtpm_r.ek_cert, world.provider_root)),
        ak_cert=vtpm_r.aks[handle_r].ak_cert,
        event_log=_host_entries(vtpm_r) + guest.guest_log,
        nonces=Nonces(challenge.td_nonce, challenge.tpm_nonce),
        timing=timing,
        scenario_meta=_meta(world, "A2_frankenstein", "plat-R"),
    )


def _gen_register_desync(world: World, challenge: Challenge) -> EvidenceBundle:
    # the host filters one guest event out of the PCR mirror stream, so the
    # two measurement views stop describing the same boot
    _spawn_platform(world, "plat-D", tamper_index=TAMPER_EVENT_INDEX)
    return _honest_bundle(
        world, challenge, platform_id="plat-D", scenario_id="A3_register_desync"
    )


def _gen_replay(world: World, challenge: Challenge) -> EvidenceBundle:
    # a bundle captured under an earlier challenge, resubmitted as-is
    stale = Challenge(
        td_nonce=world.rng.randbytes(32),
        tpm_nonce=world.rng.randbytes(32),
        issued_at=world.clock_ms,
    )
    return _honest_bundle(world, stale, scenario_id="A4_replay")


def _gen_ek_spoof(world: World, challenge: Challenge) -> EvidenceBundle:
    # a platform endorsed by the adversary's own CA that copies the provider
    # name into its claims; the chain verifies but roots nowhere trusted
    rogue_ca = crypto.keygen(_seed_bytes(world.config, "rogue-provider-ca"), crypto.KeyKind.CA)
    rogue_root = crypto.issue_cert(
        rogue_ca, rogue_ca.public, {"role": "root", "provider": world.config.provider}
    )
    _spawn_platform(world, "plat-E", ca=rogue_ca, register=False)
    return _honest_bundle(
        world, challenge, platform_id="plat-E", scenario_id="A5_ek_spoof",
        root_cert=rogue_root,
    )


def _gen_ak_substitute(world: World, challenge: Challenge) -> EvidenceBundle:
    # quote made with a second, genuinely certified AK that the TD never
    # bound; certification alone doesn't tie a key to a guest
    _spawn_platform(world, "plat-S")
    vtpm_s = world.vtpms["plat-S"]
    vtpm_s, handle2 = tpm_mod.create_sealed_ak(
        vtpm_s,
        _seed_bytes(world.config, "substitute-ak"),
        world.config.policy_pcrs,
        issuer=vtpm_s.ek,
        cert_claims={"platform_id": "plat-S"},
    )
    world.vtpms["plat-S"] = vtpm_s
    guest = world.tds["plat-S"]
    report = _make_report(world, challenge, guest, world.bound_pubs["plat-S"])
    quote = tpm_mod.tpm_quote(vtpm_s, handle2, QUOTE_SELECTION, challenge.tpm_nonce)
    timing = _timing(world, challenge.issued_at)
    _advance(world, timing)
    return build_bundle(
        td_report=report,
        tpm_quote=quote,
        ek_cert_chain=CertChain((vtpm_s.ek_cert, world.provider_root)),
        ak_cert=vtpm_s.aks[handle2].ak_cert,
        event_log=_host_entries(vtpm_s) + guest.guest_log,
        nonces=Nonces(challenge.td_nonce, challenge.tpm_nonce),
        timing=timing,
        scenario_meta=_meta(world, "A5_ak_substitute", "plat-S"),
    )


def _gen_ak_clone(world: World, challenge: Challenge) -> EvidenceBundle:
    # the victim's sealed AK material turns up on a second platform with the
    # same stack; every signature checks out, only the registry notices
    victim_vtpm = world.vtpms["plat-A"]
    sealed = victim_vtpm.aks[world.ak_handles["plat-A"]]
    clone_pub = sealed.keypair.public
    _spawn_platform(world, "plat-C", bind_ak_pub=clone_pub, register=False)
    vtpm_c = tpm_mod.install_sealed_ak(world.vtpms["plat-C"], "ak-stolen", sealed)
    world.vtpms["plat-C"] = vtpm_c
    world.registrations.append(
        (clone_pub, RegistryEntry(platform_id="plat-C", issuer=world.config.provider,
                                  registered_at=world.clock_ms))
    )
    guest = world.tds["plat-C"]
    report = _make_report(world, challenge, guest, clone_pub)
    quote = tpm_mod.tpm_quote(vtpm_c, "ak-stolen", QUOTE_SELECTION, challenge.tpm_nonce)
    timing = _timing(world, challenge.issued_at)
    _advance(world, timing)
    return build_bundle(
        td_report=report,
        tpm_quote=quote,
        # the adversary replays the victim's public certificates
        ek_cert_chain=CertChain((victim_vtpm.ek_cert, world.provider_root)),
        ak_cert=sealed.ak_cert,
        event_log=_host_entries(vtpm_c) + guest.guest_log,
        nonces=Nonces(challenge.td_nonce, challenge.tpm_nonce),
        timing=timing,
        scenario_meta=_meta(world, "A5_ak_clone", "plat-C"),
    )


def _gen_stack_downgrade(world: World, challenge: Challenge) -> EvidenceBundle:
    # provisioned on the reference stack, rebooted into a patched hypervisor:
    # the provisioned AK strands on its sealed policy, the adversary re-seals
    # a new one to the live state, and only the pinned anchors disagree
    cfg = world.config
    plat1 = _launch_platform(world, "plat-M")
    vtpm1 = platform_mod.instantiate_vtpm(
        plat1, world.provider_ca, _seed_bytes(cfg, "vtpm:plat-M"),
        kind=quoting_kind(world), policy_pcrs=cfg.policy_pcrs,
    )
    provisioned = vtpm1.aks[tpm_mod.default_ak_handle(vtpm1)]

    mutated = replace(
        world.reference_stack,
        hypervisor_image=world.reference_stack.hypervisor_image + b"-patched",
    )
    device2 = tpm_mod.tpm_init(
        _seed_bytes(cfg, "ek:plat-M"), world.provider_ca,
        {"provider": cfg.provider, "platform_id": "plat-M", "region": cfg.region},
    )
    plat2 = platform_mod.measured_launch(mutated, device2)
    vtpm2 = platform_mod.instantiate_vtpm(
        plat2, world.provider_ca, _seed_bytes(cfg, "vtpm:plat-M:reboot"),
        kind=quoting_kind(world), policy_pcrs=cfg.policy_pcrs,
    )
    fallback_handle = tpm_mod.default_ak_handle(vtpm2)
    fallback_pub = vtpm2.aks[fallback_handle].keypair.public
    vtpm2 = tpm_mod.install_sealed_ak(vtpm2, "ak-provisioned", provisioned)
    try:
        tpm_mod.tpm_quote(vtpm2, "ak-provisioned", QUOTE_SELECTION, challenge.tpm_nonce)
        raise WorldError("provisioned AK quoted on a mutated stack; sealing is broken")
    except PolicyViolation:
        pass

    vtpm2, guest = _boot_guest(world, plat2, vtpm2, fallback_pub)
    world.platforms["plat-M"] = plat2
    world.vtpms["plat-M"] = vtpm2
    world.ak_handles["plat-M"] = fallback_handle
    world.tds["plat-M"] = guest
    world.bound_pubs["plat-M"] = fallback_pub
    return _honest_bundle(
        world, challenge, platform_id="plat-M", scenario_id="A6_stack_downgrade",
        fallback="policy-violation",
    )


# ---------------------------------------------------------------------------
# scenario catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackScenario:
    scenario_id: str
    declared_attack: str
    targeted_check: str
    deployments: Tuple[Deployment, ...]
    description: str
    policy_overrides: Mapping[str, object]
    generate: Callable[[World, Challenge], EvidenceBundle]


_BOTH = (Deployment.S1, Deployment.S2)
_S2 = (Deployment.S2,)


def _scenario(sid, attack, check, deployments, description, generate, overrides=None):
    return AttackScenario(
        scenario_id=sid,
        declared_attack=attack,
        targeted_check=check,
        deployments=deployments,
        description=description,
        policy_overrides=overrides or {},
        generate=generate,
    )


SCENARIOS: Mapping[str, AttackScenario] = {
    s.scenario_id: s
    for s in (
        _scenario(
            "A1_quote_forgery", "A1", "C2", _BOTH,
            "fabricated TPM quote: honest structure, forged signature",
            _gen_quote_forgery,
        ),
        _scenario(
            "A1_report_forgery", "A1", "C1", _BOTH,
            "fabricated TD report signed by a self-minted quoting-enclave chain",
            _gen_report_forgery,
        ),
        _scenario(
            "A2_mix_match", "A2", "C3", _S2,
            "TD report from one machine paired with a live quote from another",
            _gen_mix_match,
        ),
        _scenario(
            "A2_frankenstein", "A2", "C7", _S2,
            "local TD vouches for a remote platform's AK; quotes relayed over the wire",
            _gen_frankenstein,
        ),
        _scenario(
            "A3_register_desync", "A3", "C5", _BOTH,
            "host filters one guest event out of the PCR mirror stream",
            _gen_register_desync,
        ),
        _scenario(
            "A4_replay", "A4", "C4", _S2,
            "previously captured bundle resubmitted against a new challenge",
            _gen_replay,
        ),
        _scenario(
            "A5_ek_spoof", "A5", "C2", _S2,
            "platform endorsed by a rogue CA that impersonates the provider by name",
            _gen_ek_spoof,
        ),
        _scenario(
            "A5_ak_substitute", "A5", "C3", _S2,
            "quote made with a second certified AK the TD never bound",
            _gen_ak_substitute,
        ),
        _scenario(
            "A5_ak_clone", "A5", "C8", _S2,
            "victim's sealed AK cloned onto a second platform and enrolled again",
            _gen_ak_clone,
            overrides={"require_ak_registry_uniqueness": True},
        ),
        _scenario(
            "A6_stack_downgrade", "A6", "C6", _S2,
            "host rebooted into a patched hypervisor; a fresh AK is sealed to the live state",
            _gen_stack_downgrade,
        ),
    )
}


# ---------------------------------------------------------------------------
# attestation rounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Outcome:
    scenario_id: str
    bundle: EvidenceBundle
    challenge: Challenge
    policy: VerifierPolicy
    verdict: Verdict


def default_policy_for(world: World, scenario: Optional[AttackScenario] = None) -> VerifierPolicy:
    """The policy a relying party would pin for this world: the provider and
    TEE roots, the reference stack's launch anchors, and the tight physical
    round-trip budget. Scenario overrides (e.g. requiring the registry) are
    applied on top."""
    cfg = world.config
    host = world.platforms["plat-A"].tpm
    policy = VerifierPolicy(
        trusted_tee_roots=(world.tee_root,),
        trusted_provider_roots=(world.provider_root,),
        expected_pcr17_18={17: host.pcrs.value(17), 18: host.pcrs.value(18)},
        rtt_threshold_ms=default_rtt_threshold(quoting_kind(world), cfg.one_way_delay_ms),
        binding_channel=cfg.binding_channel,
        provider_allowlist=(cfg.provider,),
    )
    if scenario is not None and scenario.policy_overrides:
        policy = replace(policy, **scenario.policy_overrides)
    return policy


def _attest(world: World, scenario: Optional[AttackScenario], disabled_checks) -> Outcome:
    policy = default_policy_for(world, scenario)
    verifier = Verifier(
        policy,
        rng=random.Random(world.rng.getrandbits(64)),
        clock=lambda: world.clock_ms,
    )
    challenge = verifier.challenge()
    if scenario is None:
        bundle = _honest_bundle(world, challenge)
        scenario_id = "honest"
    else:
        bundle = scenario.generate(world, challenge)
        scenario_id = scenario.scenario_id
    for ak_pub, entry in world.registrations:
        registry_register(verifier.registry, ak_pub, entry)
    verdict = verifier.verify(bundle, challenge, disabled_checks=frozenset(disabled_checks))
    return Outcome(
        scenario_id=scenario_id, bundle=bundle, challenge=challenge,
        policy=policy, verdict=verdict,
    )


def attest_honest(world: World, disabled_checks=frozenset()) -> Outcome:
    """One protocol-following challenge/response round on plat-A."""
    return _attest(world, None, disabled_checks)


def attest_attack(world: World, scenario_id: str, disabled_checks=frozenset()) -> Outcome:
    """One round where the adversary of the named scenario answers."""
    scenario = SCENARIOS.get(scenario_id)
    if scenario is None:
        raise UnknownScenario(
            f"no scenario named {scenario_id!r}; known: {', '.join(sorted(SCENARIOS))}"
        )
    if world.config.deployment not in scenario.deployments:
        raise WorldError(
            f"{scenario_id} is not applicable in deployment "
            f"{world.config.deployment.value}"
        )
    return _attest(world, scenario, disabled_checks)
