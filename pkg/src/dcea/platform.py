"""Host platform: measured launch of the software stack under a boot TPM.

The launch records two chains into the platform's own TPM:

* static chain: the host firmware into PCR 0, then any configured
  platform-specific events into PCRs 1..7;
* dynamic chain: the launch environment (ACM, then the TDX loader) into
  PCR 17, and the stack that hosts confidential guests (kernel, hypervisor,
  vTPM binary) into PCR 18.

PCR 17/18 are the anchors everything downstream leans on: the guest-facing
TPM created by :func:`instantiate_vtpm` mirrors them and seals its
attestation key to their values, so the key stops quoting the moment the
launched stack differs from the one it was provisioned for.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Tuple

from . import crypto, tpm as tpm_mod
from .crypto import KeyPair
from .errors import DoubleLaunch, NotLaunched
from .tpm import Scope, TpmKind, TpmState

PCR_FIRMWARE = 0
PCR_LAUNCH_ENV = 17
PCR_HOST_STACK = 18

# (pcr index, payload, description) triples for PCRs 1..7. Real platforms
# differ wildly here; the defaults just keep the static bank non-trivial.
DEFAULT_STATIC_EVENTS: Tuple[Tuple[int, bytes, str], ...] = (
    (1, b"board-config", "board config"),
    (4, b"boot-manager", "boot manager"),
    (5, b"partition-table", "partition table"),
    (7, b"secure-boot-policy", "secure boot policy"),
)


@dataclass(frozen=True)
class HostStack:
    """The six images whose digests define a platform launch."""

    firmware_image: bytes
    acm_image: bytes
    seamldr_image: bytes
    kernel_image: bytes
    hypervisor_image: bytes
    vtpm_binary: bytes

    def __post_init__(self):
        for name in (
            "firmware_image",
            "acm_image",
            "seamldr_image",
            "kernel_image",
            "hypervisor_image",
            "vtpm_binary",
        ):
            if not getattr(self, name):
                raise ValueError(f"stack image {name} must be non-empty")


@dataclass(frozen=True)
class Platform:
    id: str
    tpm: TpmState
    stack: HostStack
    provider_claims: Mapping[str, str]
    launched: bool = False


def measured_launch(
    stack: HostStack,
    tpm: TpmState,
    static_events: Optional[Iterable[Tuple[int, bytes, str]]] = None,
    platform_id: Optional[str] = None,
) -> Platform:
    """Boot a platform, measuring the stack into its TPM.

    Pure in (stack, static events): the same inputs produce the same
    measurement state. Raises DoubleLaunch when the TPM already carries a
    launch (non-zero PCR 17).
    """
    if tpm.pcrs.value(PCR_LAUNCH_ENV) != crypto.ZERO_DIGEST:
        raise DoubleLaunch("tpm already recorded a measured launch")
    events = DEFAULT_STATIC_EVENTS if static_events is None else tuple(static_events)

    state = tpm_mod.pcr_extend(tpm, PCR_FIRMWARE, stack.firmware_image, "host firmware")
    for idx, payload, desc in events:
        if not 1 <= idx <= 7:
            raise ValueError(f"static chain events belong in PCRs 1..7, got {idx}")
        state = tpm_mod.pcr_extend(state, idx, payload, desc)
    state = tpm_mod.pcr_extend(state, PCR_LAUNCH_ENV, stack.acm_image, "acm")
    state = tpm_mod.pcr_extend(state, PCR_LAUNCH_ENV, stack.seamldr_image, "seamldr")
    state = tpm_mod.pcr_extend(state, PCR_HOST_STACK, stack.kernel_image, "kernel")
    state = tpm_mod.pcr_extend(state, PCR_HOST_STACK, stack.hypervisor_image, "hypervisor")
    state = tpm_mod.pcr_extend(state, PCR_HOST_STACK, stack.vtpm_binary, "vtpm binary")

    claims = state.ek_cert.claims_dict()
    pid = platform_id or claims.get("platform_id") or f"plat-{crypto.key_id(state.ek.public)[:8]}"
    return Platform(id=pid, tpm=state, stack=stack, provider_claims=claims, launched=True)


def instantiate_vtpm(
    platform: Platform,
    provider_ca: KeyPair,
    vtpm_seed: bytes,
    kind: TpmKind = TpmKind.VIRTUAL,
    policy_pcrs: Iterable[int] = tpm_mod.DEFAULT_POLICY_PCRS,
) -> TpmState:
    """Create the guest-facing TPM for a launched platform.

    The new instance mirrors the host's PCR 17/18 log entries, then seals a
    fresh AK to a snapshot of those mirrored values and certifies it with
    its own EK. The AK therefore inherits the host launch state: quoting
    works exactly while the mirrored anchors match what was sealed.
    """
    if not platform.launched:
        raise NotLaunched(f"platform {platform.id} has not completed measured launch")
    claims = dict(platform.provider_claims)
    claims.update({"platform_id": platform.id, "tpm_kind": kind.value})
    vtpm = tpm_mod.tpm_init(
        crypto.digest(b"vtpm-ek:" + vtpm_seed).data, provider_ca, claims, kind=kind
    )
    for entry in platform.tpm.log:
        if entry.pcr_index in (PCR_LAUNCH_ENV, PCR_HOST_STACK):
            vtpm = tpm_mod.pcr_extend_digest(
                vtpm, entry.pcr_index, entry.event_digest, entry.description,
                scope=Scope.HOST,
            )
    vtpm, _handle = tpm_mod.create_sealed_ak(
        vtpm,
        crypto.digest(b"vtpm-ak:" + vtpm_seed).data,
        policy_pcrs,
        issuer=vtpm.ek,
        cert_claims={"platform_id": platform.id},
    )
    return vtpm
