"""Crypto core: SHA-384 digests, the extend fold, deterministic Ed25519 keys,
minimal claims-map certificates, and chain verification.

All measurement registers in the simulator share one digest width (48 bytes)
and one extend rule::

    new = SHA384(old || event_digest)

Keys are derived deterministically from caller seeds so that a fixed world
seed reproduces byte-identical evidence. Signatures are Ed25519; the scheme
is carried in artifacts as the algorithm-id string "ed25519".

Canonical signing encodings (byte-exact, also documented in the README):

* ``enc_bytes(b)``: 4-byte big-endian length, then the raw bytes.
* ``enc_str(s)``: ``enc_bytes`` of the UTF-8 encoding.
* ``enc_map(m)``: 4-byte big-endian pair count, then for each key in
  ascending lexicographic order ``enc_str(key) || enc_str(value)``.
* certificate payload: ``enc_str("dcea-cert-v1") || enc_bytes(subject_public)
  || enc_str(issuer_id) || enc_map(claims)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Tuple, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import EmptyChain, InvalidKey, InvalidSeed

DIGEST_LEN = 48
SIGNATURE_ALGORITHM = "ed25519"

CERT_DOMAIN_TAG = "dcea-cert-v1"


@dataclass(frozen=True)
class Digest:
    """Fixed-width 48-byte measurement value."""

    data: bytes

    def __post_init__(self):
        if not isinstance(self.data, bytes) or len(self.data) != DIGEST_LEN:
            raise ValueError("digest must be exactly %d bytes" % DIGEST_LEN)

    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:  # keep test failures readable
        return f"Digest({self.data.hex()[:12]}..)"


ZERO_DIGEST = Digest(b"\x00" * DIGEST_LEN)


def digest(data: bytes) -> Digest:
    """SHA-384 of raw bytes."""
    return Digest(hashlib.sha384(data).digest())


def extend(old: Digest, event_digest: Digest) -> Digest:
    """One extend step: fold an event digest into an accumulator register."""
    return Digest(hashlib.sha384(old.data + event_digest.data).digest())


def fold(events: Iterable[Digest], start: Digest = ZERO_DIGEST) -> Digest:
    """Replay a whole event-digest sequence from a starting register value."""
    acc = start
    for ev in events:
        acc = extend(acc, ev)
    return acc


# ---------------------------------------------------------------------------
# keys
# ---------------------------------------------------------------------------

class KeyKind(str, Enum):
    EK = "ek"
    AK = "ak"
    QE = "qe"
    CA = "ca"


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes
    kind: KeyKind
    algorithm: str = SIGNATURE_ALGORITHM


def keygen(seed: bytes, kind: KeyKind) -> KeyPair:
    """Derive a deterministic Ed25519 pair from (kind, seed).

    The kind is mixed into the derivation so one seed string can safely
    parent several roles without key reuse.
    """
    if not seed:
        raise InvalidSeed("key seed must be non-empty")
    raw = hashlib.sha384(kind.value.encode("ascii") + b":" + seed).digest()[:32]
    private = Ed25519PrivateKey.from_private_bytes(raw)
    public = private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return KeyPair(public=public, private=raw, kind=kind)


def sign(private: bytes, message: bytes) -> bytes:
    try:
        key = Ed25519PrivateKey.from_private_bytes(private)
    except (ValueError, TypeError) as exc:
        raise InvalidKey(f"bad private key: {exc}") from exc
    return key.sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        key = Ed25519PublicKey.from_public_bytes(public)
    except (ValueError, TypeError) as exc:
        raise InvalidKey(f"bad public key: {exc}") from exc
    try:
        key.verify(signature, message)
        return True
    except InvalidSignature:
        return False


def key_id(public: bytes) -> str:
    """Short stable identifier for a public key (hex prefix of its digest)."""
    return digest(public).hex()[:16]


# ---------------------------------------------------------------------------
# canonical signing encodings
# ---------------------------------------------------------------------------

def enc_bytes(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def enc_str(text: str) -> bytes:
    return enc_bytes(text.encode("utf-8"))


def enc_map(items: Sequence[Tuple[str, str]]) -> bytes:
    ordered = sorted(items)
    out = struct.pack(">I", len(ordered))
    for k, v in ordered:
        out += enc_str(k) + enc_str(v)
    return out


def cert_signing_payload(
    subject_public: bytes, issuer_id: str, claims: Sequence[Tuple[str, str]]
) -> bytes:
    return (
        enc_str(CERT_DOMAIN_TAG)
        + enc_bytes(subject_public)
        + enc_str(issuer_id)
        + enc_map(claims)
    )


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

ClaimsLike = Union[Mapping[str, str], Sequence[Tuple[str, str]]]


def _normalize_claims(claims: ClaimsLike) -> Tuple[Tuple[str, str], ...]:
    if isinstance(claims, Mapping):
        items = claims.items()
    else:
        items = claims
    return tuple(sorted((str(k), str(v)) for k, v in items))


@dataclass(frozen=True)
class Certificate:
    """Minimal certificate: a signed claims map over a subject key.

    claims are stored as a sorted tuple of pairs so certificates are
    hashable and their signing payload is canonical.
    """

    subject_public: bytes
    issuer_id: str
    claims: Tuple[Tuple[str, str], ...]
    signature: bytes

    def claim(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.claims:
            if k == key:
                return v
        return default

    def claims_dict(self) -> dict:
        return dict(self.claims)


@dataclass(frozen=True)
class CertChain:
    """Leaf-first chain; the last certificate is expected to be self-signed."""

    certs: Tuple[Certificate, ...] = ()

    def __len__(self) -> int:
        return len(self.certs)

    @property
    def leaf(self) -> Certificate:
        return self.certs[0]

    @property
    def root(self) -> Certificate:
        return self.certs[-1]


class ChainStatus(Enum):
    VALID = "valid"
    UNTRUSTED_ROOT = "untrusted_root"
    BROKEN_LINK = "broken_link"


@dataclass(frozen=True)
class ChainVerdict:
    status: ChainStatus
    broken_index: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.status is ChainStatus.VALID


def issue_cert(issuer: KeyPair, subject_public: bytes, claims: ClaimsLike) -> Certificate:
    """Sign a claims map over a subject key. Self-signed when subject is issuer."""
    normalized = _normalize_claims(claims)
    issuer_id = key_id(issuer.public)
    payload = cert_signing_payload(subject_public, issuer_id, normalized)
    return Certificate(
        subject_public=subject_public,
        issuer_id=issuer_id,
        claims=normalized,
        signature=sign(issuer.private, payload),
    )


def _cert_signature_valid(cert: Certificate, signer_public: bytes) -> bool:
    payload = cert_signing_payload(cert.subject_public, cert.issuer_id, cert.claims)
    try:
        return verify(signer_public, payload, cert.signature)
    except InvalidKey:
        return False


def verify_chain(chain: CertChain, trusted_roots: Iterable[Certificate]) -> ChainVerdict:
    """Walk leaf to root; every link must verify and the root must be trusted.

    Each certificate's signature is checked under its parent's subject key;
    the final certificate must be self-signed. BROKEN_LINK carries the index
    of the first certificate whose signature fails.
    """
    certs = chain.certs
    if not certs:
        raise EmptyChain("certificate chain is empty")
    for i, cert in enumerate(certs):
        signer = certs[i + 1].subject_public if i + 1 < len(certs) else cert.subject_public
        if not _cert_signature_valid(cert, signer):
            return ChainVerdict(ChainStatus.BROKEN_LINK, broken_index=i)
    if certs[-1] not in set(trusted_roots):
        return ChainVerdict(ChainStatus.UNTRUSTED_ROOT)
    return ChainVerdict(ChainStatus.VALID)
