import pytest

from tokengov.oracles import ComparableSale, OracleSim, RegistryRecord

CONFIG = {
    "registry": {"OFFICE_X": {"legal_owner": "alice", "liens": 0}},
    "appraisals": {"OFFICE_X": {"declared_value": 1_000_000_000, "issued_months_ago": 18}},
    "comparables": {"OFFICE_X": [{"unit_price": 19000, "size": 55000}]},
    "identities": {
        "bob": {"kyc_passed": True, "accredited": True},
        "eve": {"kyc_passed": True, "accredited": True, "aml_flagged": True},
    },
}


@pytest.fixture
def oracles():
    return OracleSim.from_config(CONFIG)


def test_registry_clean(oracles):
    rec = oracles.query_registry("OFFICE_X")
    assert (rec.legal_owner, rec.liens, rec.exists) == ("alice", 0, True)


def test_registry_lien_fault(oracles):
    oracles.inject_fault("liened_title", asset_id="OFFICE_X")
    assert oracles.query_registry("OFFICE_X").liens == 1


def test_registry_unknown(oracles):
    assert not oracles.query_registry("NOPE").exists


def test_second_source_absent_by_default(oracles):
    assert oracles.query_registry_second("OFFICE_X") is None
    assert oracles.check_identity_second("bob") is None


def test_identity_profiles(oracles):
    bob = oracles.check_identity("bob")
    assert bob.kyc_passed and bob.accredited and not bob.aml_flagged
    assert oracles.check_identity("eve").aml_flagged


def test_unknown_identity_default_deny(oracles):
    p = oracles.check_identity("nobody")
    assert not (p.kyc_passed or p.accredited or p.aml_flagged)
    assert not oracles.knows_identity("nobody")


def test_comparables_and_empty(oracles):
    assert oracles.fetch_comparables("OFFICE_X") == [ComparableSale(19000, 55000)]
    assert oracles.fetch_comparables("NOPE") == []


def test_repeated_queries_identical(oracles):
    assert oracles.query_registry("OFFICE_X") == oracles.query_registry("OFFICE_X")
    assert oracles.fetch_appraisal("OFFICE_X") == oracles.fetch_appraisal("OFFICE_X")


def test_fault_kinds(oracles):
    oracles.inject_fault("owner_mismatch", asset_id="OFFICE_X", owner="mallory")
    oracles.inject_fault("invalid_signature", asset_id="OFFICE_X")
    oracles.inject_fault("forged_appraisal", asset_id="OFFICE_X", declared_value=1_500_000_000)
    oracles.inject_fault("kyc_fail", identity="bob")
    assert oracles.query_registry("OFFICE_X").legal_owner == "mallory"
    doc = oracles.fetch_appraisal("OFFICE_X")
    assert not doc.appraiser_signature_valid and doc.declared_value == 1_500_000_000
    assert not oracles.check_identity("bob").kyc_passed


def test_unknown_fault(oracles):
    with pytest.raises(ValueError):
        oracles.inject_fault("meteor")


def test_snapshot_is_independent(oracles):
    snap = oracles.snapshot()
    oracles.inject_fault("aml_flag", identity="bob")
    assert not snap.check_identity("bob").aml_flagged


def test_record_invariants():
    with pytest.raises(ValueError):
        RegistryRecord("A", "alice", liens=-1)
    with pytest.raises(ValueError):
        ComparableSale(0, 10)
