"""Evidence: bundle assembly, canonical serialization, replay, consistency."""

import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcea import crypto, evidence, platform, td, tpm
from dcea.errors import IncompleteBundle, ParseError

from support import random_bundle
from test_platform import make_platform
from test_td import make_qe


def _fold_digests(digests):
    acc = b"\x00" * 48
    for d in digests:
        acc = hashlib.sha384(acc + d).digest()
    return acc


GUEST_BOOT = (
    (0, 1, b"fw-config", "fw config"),
    (0, 7, b"boot-services", "boot services"),
    (1, 2, b"kernel", "kernel"),
    (1, 3, b"initrd", "initrd"),
    (2, 8, b"agent", "agent"),
)


def honest_pieces(guest_boot=GUEST_BOOT):
    """Launch a platform, boot a guest against its vTPM, collect artifacts."""
    plat, ca = make_platform()
    vtpm = platform.instantiate_vtpm(plat, ca, b"vtpm-seed")
    handle = tpm.default_ak_handle(vtpm)
    ak_pub = vtpm.aks[handle].keypair.public
    guest = td.td_launch(plat, b"guest-firmware", ak_pub=ak_pub)
    vtpm = tpm.pcr_extend_digest(
        vtpm, 0, guest.mrtd, "td firmware", scope=tpm.Scope.GUEST
    )
    for rtmr, pcr, payload, desc in guest_boot:
        ev = td.GuestEvent(rtmr, pcr, crypto.digest(payload), desc)
        guest = td.rtmr_extend(guest, ev)
        vtpm = tpm.pcr_extend_digest(
            vtpm, pcr, ev.event_digest, desc, scope=tpm.Scope.GUEST, rtmr_index=rtmr
        )
    qe, qe_chain, _ = make_qe()
    td_nonce, tpm_nonce = b"\x0a" * 32, b"\x0b" * 32
    report = td.td_report(
        guest, evidence.encode_report_data(td_nonce), qe, qe_chain
    )
    quote = tpm.tpm_quote(vtpm, handle, list(range(16)) + [17, 18], tpm_nonce)
    log = tuple(e for e in vtpm.log if e.scope is tpm.Scope.HOST) + guest.guest_log
    return plat, vtpm, guest, report, quote, log, ca


def honest_bundle():
    plat, vtpm, guest, report, quote, log, ca = honest_pieces()
    root = crypto.issue_cert(ca, ca.public, {"role": "root"})
    handle = tpm.default_ak_handle(vtpm)
    return evidence.build_bundle(
        td_report=report,
        tpm_quote=quote,
        ek_cert_chain=crypto.CertChain((vtpm.ek_cert, root)),
        ak_cert=vtpm.aks[handle].ak_cert,
        event_log=log,
        nonces=evidence.Nonces(b"\x0a" * 32, b"\x0b" * 32),
        timing=evidence.Timing(0.0, 374.0, 324.0),
        scenario_meta={"scenario": "honest", "platform_id": plat.id},
    )


# -- serialization -----------------------------------------------------------

def test_roundtrip_identity_honest():
    bundle = honest_bundle()
    data = evidence.serialize(bundle)
    assert evidence.deserialize(data) == bundle


def test_serialization_is_canonical():
    assert evidence.serialize(honest_bundle()) == evidence.serialize(honest_bundle())
    obj = json.loads(evidence.serialize(honest_bundle()))
    assert obj["format_version"] == evidence.FORMAT_VERSION
    assert list(obj) == sorted(obj)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_identity_random(seed):
    bundle = random_bundle(seed)
    assert evidence.deserialize(evidence.serialize(bundle)) == bundle


def test_parse_error_carries_offset():
    data = evidence.serialize(honest_bundle())
    with pytest.raises(ParseError) as exc:
        evidence.deserialize(data[: len(data) // 2])
    assert exc.value.offset > 0
    with pytest.raises(ParseError):
        evidence.deserialize(b"\xff\xfenot json")


def test_parse_error_on_schema_violations():
    obj = json.loads(evidence.serialize(honest_bundle()))
    del obj["tpm_quote"]
    with pytest.raises(ParseError):
        evidence.deserialize(json.dumps(obj).encode())

    obj2 = json.loads(evidence.serialize(honest_bundle()))
    obj2["format_version"] = 99
    with pytest.raises(ParseError):
        evidence.deserialize(json.dumps(obj2).encode())

    obj3 = json.loads(evidence.serialize(honest_bundle()))
    obj3["td_report"]["mrtd"] = "ab" * 47
    with pytest.raises(ParseError):
        evidence.deserialize(json.dumps(obj3).encode())


def test_build_bundle_missing_mandatory():
    bundle = honest_bundle()
    with pytest.raises(IncompleteBundle):
        evidence.build_bundle(
            td_report=bundle.td_report,
            tpm_quote=None,
            ek_cert_chain=bundle.ek_cert_chain,
            ak_cert=None,
            event_log=bundle.event_log,
            nonces=bundle.nonces,
            timing=bundle.timing,
        )


# -- report_data layout ------------------------------------------------------

def test_encode_report_data_layout():
    nonce = b"\x0c" * 32
    plain = evidence.encode_report_data(nonce)
    assert plain[:32] == nonce and plain[32:] == b"\x00" * 32
    bound = evidence.encode_report_data(nonce, binding=b"\xee" * 32)
    assert bound[32:] == b"\xee" * 32
    bit = evidence.encode_report_data(nonce, consistency_bit=True)
    assert bit[32] == 1 and bit[33:] == b"\x00" * 31
    with pytest.raises(ValueError):
        evidence.encode_report_data(nonce, binding=b"\xee" * 32, consistency_bit=True)
    with pytest.raises(ValueError):
        evidence.encode_report_data(b"\x0c" * 31)


# -- replay ------------------------------------------------------------------

def test_replay_empty_log_all_zero():
    pcrs, rtmrs = evidence.replay_event_log(())
    assert all(v == crypto.ZERO_DIGEST for v in pcrs)
    assert all(v == crypto.ZERO_DIGEST for v in rtmrs)


def test_replay_reproduces_live_views():
    _, vtpm, guest, _, quote, log, _ = honest_pieces()
    pcrs, rtmrs = evidence.replay_event_log(log)
    assert pcrs == vtpm.pcrs.registers
    assert rtmrs == guest.rtmrs


def test_replay_scope_filters():
    _, vtpm, guest, _, _, log, _ = honest_pieces()
    host_pcrs, host_rtmrs = evidence.replay_event_log(log, scope=tpm.Scope.HOST)
    assert host_pcrs[17] == vtpm.pcrs.value(17)
    assert host_pcrs[2] == crypto.ZERO_DIGEST  # guest events filtered out
    assert all(v == crypto.ZERO_DIGEST for v in host_rtmrs)
    guest_pcrs, guest_rtmrs = evidence.replay_event_log(log, scope=tpm.Scope.GUEST)
    assert guest_pcrs[17] == crypto.ZERO_DIGEST
    assert guest_rtmrs == guest.rtmrs


def test_replay_matches_hashlib_oracle_per_register():
    _, _, _, _, _, log, _ = honest_pieces()
    pcrs, rtmrs = evidence.replay_event_log(log)
    want_pcr2 = _fold_digests(
        [e.event_digest.data for e in log if e.pcr_index == 2]
    )
    want_rtmr1 = _fold_digests(
        [e.event_digest.data for e in log if e.rtmr_index == 1]
    )
    assert pcrs[2].data == want_pcr2
    assert rtmrs[1].data == want_rtmr1


# -- consistency -------------------------------------------------------------

def test_consistency_honest_all_rows_match():
    _, _, _, report, quote, log, _ = honest_pieces()
    result = evidence.check_rtmr_pcr_consistency(report, quote, log)
    assert result.all_matched
    assert [r.tdx_register for r in result.rows] == ["MRTD", "RTMR0", "RTMR1", "RTMR2"]
    assert result.rows[0].pcr_indices == (0,)
    assert result.rows[1].pcr_indices == (1, 7)
    assert result.rows[2].pcr_indices == (2, 3, 4, 5)
    assert result.rows[3].pcr_indices == tuple(range(8, 16))


def test_consistency_detects_pcr_side_divergence():
    # vTPM saw a different kernel digest than the TD recorded.
    plat, ca = make_platform()
    vtpm = platform.instantiate_vtpm(plat, ca, b"vtpm-seed")
    handle = tpm.default_ak_handle(vtpm)
    guest = td.td_launch(plat, b"guest-firmware", ak_pub=vtpm.aks[handle].keypair.public)
    vtpm = tpm.pcr_extend_digest(vtpm, 0, guest.mrtd, "td firmware", scope=tpm.Scope.GUEST)
    ev = td.GuestEvent(1, 2, crypto.digest(b"kernel"), "kernel")
    guest = td.rtmr_extend(guest, ev)
    vtpm = tpm.pcr_extend_digest(
        vtpm, 2, crypto.digest(b"tampered-kernel"), "kernel",
        scope=tpm.Scope.GUEST, rtmr_index=1,
    )
    qe, qe_chain, _ = make_qe()
    report = td.td_report(guest, evidence.encode_report_data(b"\x00" * 32), qe, qe_chain)
    quote = tpm.tpm_quote(vtpm, handle, list(range(16)) + [17, 18], b"\x01" * 32)
    log = tuple(e for e in vtpm.log if e.scope is tpm.Scope.HOST) + guest.guest_log
    result = evidence.check_rtmr_pcr_consistency(report, quote, log)
    assert not result.all_matched
    broken = {r.tdx_register for r in result.rows if not r.matched}
    assert broken == {"RTMR1"}


def test_consistency_single_entry_deletion_flips_a_row():
    _, _, _, report, quote, log, _ = honest_pieces()
    guest_positions = [i for i, e in enumerate(log) if e.scope is tpm.Scope.GUEST]
    for pos in guest_positions:
        clipped = log[:pos] + log[pos + 1 :]
        result = evidence.check_rtmr_pcr_consistency(report, quote, clipped)
        assert not result.all_matched, f"deleting entry {pos} went unnoticed"


def test_consistency_requires_quote_coverage():
    # A quote that omits the mapped PCRs cannot demonstrate consistency.
    _, vtpm, _, report, _, log, _ = honest_pieces()
    handle = tpm.default_ak_handle(vtpm)
    narrow = tpm.tpm_quote(vtpm, handle, [17, 18], b"\x0b" * 32)
    result = evidence.check_rtmr_pcr_consistency(report, narrow, log)
    assert not result.all_matched
