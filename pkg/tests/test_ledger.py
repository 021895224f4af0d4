import hashlib
import io
import json
from types import SimpleNamespace

import pytest

from conftest import approve_and_mint, whitelist
from tokengov.errors import CapabilityError, DoubleTokenization, HoldingsNonZero, NotApproved, UnknownToken
from tokengov.ledger import (
    GENESIS_HASH,
    Capability,
    EventKind,
    Ledger,
    RejectReason,
    Restrictions,
    canonical_encode,
    compute_event_hash,
    first_chain_mismatch,
)
from tokengov.errors import ParamRangeError


def _frame(tag, body):
    return tag + len(body).to_bytes(8, "big") + body


class TestCanonicalEncoding:
    def test_hand_built_mapping(self):
        expected = _frame(b"D", _frame(b"S", b"a") + _frame(b"I", b"1") + _frame(b"S", b"b") + _frame(b"N", b""))
        assert canonical_encode({"b": None, "a": 1}) == expected

    def test_key_order_irrelevant(self):
        assert canonical_encode({"x": 1, "y": [True, "s"]}) == canonical_encode({"y": [True, "s"], "x": 1})

    def test_bool_and_int_differ(self):
        assert canonical_encode(True) != canonical_encode(1)

    def test_tuple_encodes_as_list(self):
        assert canonical_encode((1, 2)) == canonical_encode([1, 2])

    def test_floats_rejected(self):
        with pytest.raises(TypeError):
            canonical_encode({"x": 0.5})

    def test_non_string_keys_rejected(self):
        with pytest.raises(TypeError):
            canonical_encode({1: "a"})


class TestAppend:
    def test_genesis_event(self, ledger):
        ev = ledger.append_event(EventKind.PARAM_CHANGE, {"param": "x"})
        assert ev.seq == 0
        body = canonical_encode({"seq": 0, "tick": 0, "kind": "ParamChange", "payload": {"param": "x"}})
        assert ev.hash == hashlib.sha256(bytes(32) + body).digest()

    def test_identical_payloads_get_distinct_hashes(self, ledger):
        a = ledger.append_event(EventKind.PARAM_CHANGE, {"param": "x"})
        b = ledger.append_event(EventKind.PARAM_CHANGE, {"param": "x"})
        assert (a.seq, b.seq) == (0, 1)
        assert a.hash != b.hash
        assert b.hash == compute_event_hash(a.hash, 1, 0, "ParamChange", {"param": "x"})

    def test_payload_is_read_only(self, ledger):
        ev = ledger.append_event(EventKind.PARAM_CHANGE, {"param": "x", "items": [1, 2]})
        with pytest.raises(TypeError):
            ev.payload["param"] = "y"
        assert ev.payload["items"] == (1, 2)

    def test_caller_dict_mutation_does_not_leak(self, ledger):
        payload = {"param": "x"}
        ev = ledger.append_event(EventKind.PARAM_CHANGE, payload)
        payload["param"] = "changed"
        assert ev.payload["param"] == "x"
        assert ledger.verify_chain() is None

    def test_ticks_stamped(self, ledger):
        ledger.begin_tick(4)
        assert ledger.append_event(EventKind.PARAM_CHANGE, {}).tick == 4
        with pytest.raises(ValueError):
            ledger.begin_tick(3)

    def test_empty_ledger_head_is_genesis(self, ledger):
        assert ledger.head_hash == GENESIS_HASH
        assert ledger.final_hash == "00" * 32


class TestMint:
    def test_case_study_mint(self, ledger):
        token = approve_and_mint(ledger)
        tok = ledger.tokens[token]
        assert tok.holdings == {"alice": 100_000}
        assert "alice" in tok.whitelist
        assert tok.holding_cap == 20_000
        mint = ledger.events_of(EventKind.MINT)
        assert len(mint) == 1 and mint[0].payload["total_supply"] == 100_000

    def test_double_tokenization(self, ledger):
        approve_and_mint(ledger)
        with pytest.raises(DoubleTokenization):
            ledger.mint_tokens("OFFICE_X", 5, "alice", Restrictions())

    def test_not_approved_state(self, ledger):
        ledger.register_request(SimpleNamespace(asset_id="A", state="ComplianceFailed"))
        with pytest.raises(NotApproved):
            ledger.mint_tokens("A", 10, "alice", Restrictions())

    def test_unregistered_request(self, ledger):
        with pytest.raises(NotApproved):
            ledger.mint_tokens("A", 10, "alice", Restrictions())

    def test_missing_recorded_approval(self, ledger):
        ledger.register_request(SimpleNamespace(asset_id="A", state="Approved"))
        ledger.record_approval("A", "ver-1", "Verification")
        ledger.record_approval("A", "val-1", "Valuation")
        with pytest.raises(NotApproved):
            ledger.mint_tokens("A", 10, "alice", Restrictions())
        assert not ledger.events_of(EventKind.MINT)

    def test_only_tokenization_may_mint(self, ledger):
        ledger.register_request(SimpleNamespace(asset_id="A", state="Approved"))
        with pytest.raises(CapabilityError):
            ledger.mint_tokens("A", 10, "alice", Restrictions(), caller=Capability.COMPLIANCE)

    def test_supply_one(self, ledger):
        token = approve_and_mint(ledger, asset_id="ART", supply=1, cap_bp=10_000)
        assert ledger.tokens[token].holdings == {"alice": 1}


class TestTransfer:
    def test_bob_buys_ten_percent(self, office):
        ledger, token = office
        assert ledger.execute_transfer(token, "alice", "bob", 10_000, 4655).accepted
        assert ledger.tokens[token].holdings == {"alice": 90_000, "bob": 10_000}
        ev = ledger.events[-1]
        assert ev.kind is EventKind.TRANSFER and ev.payload["price"] == 4655

    def test_cap_exceeded(self, office):
        ledger, token = office
        # floor(100000 * 2000 / 10000) = 20000 < 25000
        result = ledger.execute_transfer(token, "alice", "carol", 25_000)
        assert result == (False, RejectReason.EXCEEDS_HOLDING_CAP)
        assert ledger.events[-1].kind is EventKind.TRANSFER_REJECTED
        assert ledger.events[-1].payload["reason"] == "ExceedsHoldingCap"
        assert ledger.tokens[token].balance("carol") == 0

    def test_exactly_at_cap_accepted(self, office):
        ledger, token = office
        assert ledger.execute_transfer(token, "alice", "carol", 20_000).accepted
        assert not ledger.execute_transfer(token, "alice", "carol", 1).accepted

    def test_not_whitelisted(self, office):
        ledger, token = office
        assert ledger.execute_transfer(token, "alice", "dave", 1) == (False, RejectReason.NOT_WHITELISTED)

    def test_frozen(self, office):
        ledger, token = office
        ledger.set_frozen(token, True, "market manipulation")
        assert ledger.execute_transfer(token, "alice", "bob", 1).reason is RejectReason.FROZEN
        ledger.set_frozen(token, False, "cleared")
        assert ledger.execute_transfer(token, "alice", "bob", 1).accepted

    def test_insufficient_balance(self, office):
        ledger, token = office
        assert ledger.execute_transfer(token, "bob", "carol", 1).reason is RejectReason.INSUFFICIENT_BALANCE

    def test_unknown_token_rejected_and_logged(self, ledger):
        result = ledger.execute_transfer("NOPE", "a", "b", 1)
        assert result.reason is RejectReason.UNKNOWN_TOKEN
        assert ledger.events[-1].kind is EventKind.TRANSFER_REJECTED

    def test_frozen_checked_before_whitelist(self, office):
        ledger, token = office
        ledger.set_frozen(token, True, "x")
        assert ledger.execute_transfer(token, "alice", "dave", 1).reason is RejectReason.FROZEN

    def test_non_positive_amount_is_an_error(self, office):
        ledger, token = office
        with pytest.raises(ValueError):
            ledger.execute_transfer(token, "alice", "bob", 0)

    def test_issuer_may_receive_back_above_cap(self, office):
        ledger, token = office
        ledger.execute_transfer(token, "alice", "bob", 10_000)
        assert ledger.execute_transfer(token, "bob", "alice", 10_000).accepted
        assert ledger.tokens[token].balance("alice") == 100_000

    def test_self_transfer_keeps_balances(self, office):
        ledger, token = office
        ledger.execute_transfer(token, "alice", "bob", 500)
        assert ledger.execute_transfer(token, "bob", "bob", 500).accepted
        assert ledger.tokens[token].balance("bob") == 500


class TestFreeze:
    def test_idempotent(self, office):
        ledger, token = office
        assert ledger.set_frozen(token, True, "x") is not None
        assert ledger.set_frozen(token, True, "again") is None
        assert len(ledger.events_of(EventKind.FREEZE)) == 1

    def test_unknown_token(self, ledger):
        with pytest.raises(UnknownToken):
            ledger.set_frozen("NOPE", True, "x")

    def test_only_governance(self, office):
        ledger, token = office
        with pytest.raises(CapabilityError):
            ledger.set_frozen(token, True, "x", Capability.COMPLIANCE)


class TestWhitelist:
    def test_add_logs_event(self, office):
        ledger, token = office
        ev = ledger.update_whitelist(token, "erin", True, Capability.COMPLIANCE)
        assert ev.kind is EventKind.WHITELIST_CHANGE and ev.payload["action"] == "add"

    def test_remove_holder_without_override(self, office):
        ledger, token = office
        ledger.execute_transfer(token, "alice", "bob", 10)
        with pytest.raises(HoldingsNonZero):
            ledger.update_whitelist(token, "bob", False, Capability.COMPLIANCE)

    def test_remove_empty_address(self, office):
        ledger, token = office
        ledger.update_whitelist(token, "carol", False, Capability.COMPLIANCE)
        assert "carol" not in ledger.tokens[token].whitelist

    def test_override_is_governance_only(self, office):
        ledger, token = office
        with pytest.raises(CapabilityError):
            ledger.update_whitelist(token, "bob", False, Capability.COMPLIANCE, override=True)

    def test_blacklisted_holder_cannot_trade(self, office):
        ledger, token = office
        ledger.execute_transfer(token, "alice", "bob", 10)
        ledger.blacklist_address(token, "bob", "INC-0001")
        assert ledger.execute_transfer(token, "bob", "alice", 5).reason is RejectReason.NOT_WHITELISTED
        ledger.update_whitelist(token, "bob", True, Capability.COMPLIANCE)
        assert ledger.execute_transfer(token, "bob", "alice", 5).reason is RejectReason.NOT_WHITELISTED

    def test_unknown_token(self, ledger):
        with pytest.raises(UnknownToken):
            ledger.update_whitelist("NOPE", "bob", True, Capability.COMPLIANCE)


class TestIncidentsAndParams:
    def test_duplicate_incident_is_appended_twice(self, ledger):
        inc = {"incident_id": "INC-0001", "classification": "MarketManipulation"}
        a = ledger.record_incident(inc)
        b = ledger.record_incident(inc)
        assert a.seq != b.seq and a.payload == b.payload

    def test_param_change_effective_next_tick(self, ledger):
        ev = ledger.schedule_param_change("verification_quorum", 2, "fraud")
        assert ev.payload["effective_tick"] == 1 and ev.payload["old"] == 1 and ev.payload["new"] == 2
        assert ledger.params.verification_quorum == 1
        ledger.begin_tick(1)
        assert ledger.params.verification_quorum == 2

    def test_param_change_range_error(self, ledger):
        with pytest.raises(ParamRangeError):
            ledger.schedule_param_change("trust_threshold", "1.2", "bad")
        assert len(ledger) == 0

    def test_param_change_unknown_name(self, ledger):
        with pytest.raises(ParamRangeError):
            ledger.schedule_param_change("no_such_param", 1, "bad")


class TestChain:
    def _export(self, ledger):
        buf = io.StringIO()
        ledger.export_ndjson(buf)
        return [json.loads(line) for line in buf.getvalue().splitlines()]

    def test_export_verifies(self, office):
        ledger, token = office
        ledger.execute_transfer(token, "alice", "bob", 10)
        records = self._export(ledger)
        assert first_chain_mismatch(records) is None
        assert records[-1]["hash"] == ledger.final_hash

    def test_tamper_detected_at_seq(self, office):
        ledger, token = office
        ledger.execute_transfer(token, "alice", "bob", 10)
        records = self._export(ledger)
        records[2]["payload"]["address"] = "mallory"
        assert first_chain_mismatch(records) == 2

    def test_reordering_detected(self, office):
        ledger, _ = office
        records = self._export(ledger)
        records[1], records[2] = records[2], records[1]
        assert first_chain_mismatch(records) == 1

    def test_export_line_format(self, office):
        ledger, _ = office
        buf = io.StringIO()
        ledger.export_ndjson(buf)
        first = buf.getvalue().splitlines()[0]
        assert set(json.loads(first)) == {"seq", "tick", "kind", "payload", "hash"}
        assert " " not in first.split('"payload"')[0]
