from types import SimpleNamespace

import pytest

from tokengov.ledger import Capability, Ledger, Restrictions
from tokengov.params import GovernanceParams


def approve_and_mint(ledger, asset_id="OFFICE_X", supply=100_000, owner="alice", cap_bp=2000,
                     whitelist_required=True, quorum=1):
    """Register an Approved request with full recorded approvals, then mint."""
    ledger.register_request(SimpleNamespace(asset_id=asset_id, state="Approved"))
    for i in range(quorum):
        ledger.record_approval(asset_id, f"ver-{i + 1}", "Verification")
    ledger.record_approval(asset_id, "val-1", "Valuation")
    ledger.record_approval(asset_id, "comp-1", "Compliance")
    return ledger.mint_tokens(asset_id, supply, owner, Restrictions(whitelist_required, True, cap_bp))


def whitelist(ledger, token_id, *addresses):
    for a in addresses:
        ledger.update_whitelist(token_id, a, True, Capability.COMPLIANCE)


@pytest.fixture
def ledger():
    return Ledger(GovernanceParams())


@pytest.fixture
def office(ledger):
    token = approve_and_mint(ledger)
    whitelist(ledger, token, "bob", "carol")
    return ledger, token
