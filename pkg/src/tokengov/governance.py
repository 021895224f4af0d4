"""The governance agent's per-tick loop.

Collects agent reports, corroborates them, executes emergency actions through
the ledger's governance powers, records incidents, penalizes responsible
agents, maintains trust scores and reassesses agents that fall below the
trust threshold.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from types import MappingProxyType
from typing import Any, Mapping, Optional

from .agents import (
    AgentNetwork,
    AgentReport,
    Classification,
    RequestState,
    Severity,
    deviation_exceeds,
    median_estimate,
)
from .errors import NoReplacementConfigured
from .ledger import Capability, Ledger, LedgerEvent
from .staking import AgentRole, AgentStatus, StakeRegistry
from .surveillance import (
    count_round_trips,
    detect_rapid_resale,
    detect_volume_spike,
    in_window,
    trades_from_ledger,
)

logger = logging.getLogger(__name__)


class ActionKind(str, Enum):
    FREEZE_TOKEN = "FreezeToken"
    BLACKLIST_ADDRESS = "BlacklistAddress"
    SLASH_STAKE = "SlashStake"
    REQUIRE_REASSESSMENT = "RequireReassessment"
    PARAM_CHANGE = "ParamChange"
    RECORD_INCIDENT = "IncidentRecord"


class IncidentClass(str, Enum):
    FRAUDULENT_ASSET = "FraudulentAsset"
    TITLE_DEFECT = "TitleDefect"
    MARKET_MANIPULATION = "MarketManipulation"
    COMPLIANCE_VIOLATION = "ComplianceViolation"


class Misconduct(str, Enum):
    NEGLIGENCE = "negligence"
    MALICE = "malice"


class ReassessOutcome(str, Enum):
    RECERTIFIED = "Recertified"
    REPLACED = "Replaced"


INCIDENT_CLASS = {
    Classification.VALUE_DISCREPANCY: IncidentClass.FRAUDULENT_ASSET,
    Classification.FORGED_DOCUMENT: IncidentClass.FRAUDULENT_ASSET,
    Classification.DOUBLE_TOKENIZATION: IncidentClass.FRAUDULENT_ASSET,
    Classification.TITLE_MISMATCH: IncidentClass.TITLE_DEFECT,
    Classification.LIEN_FOUND: IncidentClass.TITLE_DEFECT,
    Classification.WASH_TRADING: IncidentClass.MARKET_MANIPULATION,
    Classification.VOLUME_SPIKE: IncidentClass.MARKET_MANIPULATION,
    Classification.RAPID_RESALE: IncidentClass.MARKET_MANIPULATION,
    Classification.FLAGGED_COUNTERPARTY: IncidentClass.COMPLIANCE_VIOLATION,
    Classification.AML_HIT: IncidentClass.COMPLIANCE_VIOLATION,
    Classification.KYC_FAIL: IncidentClass.COMPLIANCE_VIOLATION,
    Classification.NOT_ACCREDITED: IncidentClass.COMPLIANCE_VIOLATION,
}

# which approvals vouch for the fact a report contradicts
_COVERING_ROLE = {
    Classification.VALUE_DISCREPANCY: AgentRole.VERIFICATION,
    Classification.FORGED_DOCUMENT: AgentRole.VERIFICATION,
    Classification.DOUBLE_TOKENIZATION: AgentRole.VERIFICATION,
    Classification.TITLE_MISMATCH: AgentRole.VERIFICATION,
    Classification.LIEN_FOUND: AgentRole.VERIFICATION,
    Classification.STALE_APPRAISAL: AgentRole.VERIFICATION,
    Classification.AML_HIT: AgentRole.COMPLIANCE,
    Classification.KYC_FAIL: AgentRole.COMPLIANCE,
}

_MARKET = {
    Classification.WASH_TRADING,
    Classification.VOLUME_SPIKE,
    Classification.RAPID_RESALE,
    Classification.FLAGGED_COUNTERPARTY,
}


@dataclass(frozen=True)
class GovernanceAction:
    kind: ActionKind
    target: str
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        params = dict(self.parameters)
        if self.kind is ActionKind.SLASH_STAKE and not {"amount_bp", "reason"} <= params.keys():
            raise ValueError("SlashStake requires amount_bp and reason")
        object.__setattr__(self, "parameters", MappingProxyType(params))

    def to_payload(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "target": self.target, "parameters": dict(self.parameters)}


@dataclass
class Incident:
    incident_id: str
    classification: IncidentClass
    report_classification: Classification
    subject: str
    source_reports: list[dict[str, Any]]
    verified: bool
    responsible_agents: list[str]
    actions_taken: list[GovernanceAction]
    tick: int

    def __post_init__(self) -> None:
        if self.actions_taken and not self.verified:
            raise ValueError("actions on an unverified incident")

    def to_payload(self) -> dict[str, Any]:
        return {
            "incident_id": self.incident_id,
            "classification": self.classification.value,
            "report_classification": self.report_classification.value,
            "subject": self.subject,
            "source_reports": self.source_reports,
            "verified": self.verified,
            "responsible_agents": list(self.responsible_agents),
            "actions": [a.to_payload() for a in self.actions_taken],
            "tick": self.tick,
        }


@dataclass
class TrustScore:
    agent_id: str
    score: Decimal
    last_updated_tick: int


class GovernanceAgent:
    def __init__(
        self,
        ledger: Ledger,
        staking: StakeRegistry,
        network: AgentNetwork,
        *,
        reassessment: Optional[Mapping[str, str]] = None,
        replacements: Optional[Mapping[str, Mapping[str, Any]]] = None,
        address_agents: Optional[Mapping[str, str]] = None,
    ) -> None:
        self.ledger = ledger
        self.staking = staking
        self.network = network
        self.oracles = network.oracles
        self.reassessment = dict(reassessment or {})
        self.replacements = {k: dict(v) for k, v in (replacements or {}).items()}
        # agents acting on behalf of a trading address (e.g. order-splitting bots)
        self.address_agents = dict(address_agents or {})
        self.trust: dict[str, TrustScore] = {}
        self.incidents: list[Incident] = []
        self.notes: list[dict[str, Any]] = []
        self.reports_seen: list[dict[str, Any]] = []
        self.actions_log: list[tuple[int, GovernanceAction]] = []
        self._retained: list[AgentReport] = []
        self._history: list[AgentReport] = []
        self._handled: set[tuple] = set()
        self._scheduled_params: list[tuple[str, Any, str]] = []
        self._queued: list[tuple[int, list[GovernanceAction], Incident]] = []

    # -- trust -------------------------------------------------------------------

    def register_agent(self, agent_id: str, tick: int) -> TrustScore:
        ts = TrustScore(agent_id, self.ledger.params.trust_init, tick)
        self.trust[agent_id] = ts
        return ts

    def _sync_roster(self, tick: int) -> None:
        for rec in self.staking.records():
            if rec.agent_id not in self.trust and rec.status is not AgentStatus.BARRED:
                self.register_agent(rec.agent_id, tick)

    def compute_trust_scores(
        self, tick: int, incidents: list[tuple[str, Misconduct]]
    ) -> dict[str, TrustScore]:
        """Apply incident penalties and per-tick recovery.

        ``incidents`` lists (agent_id, misconduct) pairs confirmed this tick;
        an agent named twice is penalized twice.
        """
        p = self.ledger.params
        self._sync_roster(tick)
        hit: dict[str, list[Misconduct]] = {}
        for agent_id, kind in incidents:
            hit.setdefault(agent_id, []).append(kind)
        for agent_id, ts in self.trust.items():
            # penalties confirmed this tick land even if the slash just barred the agent
            barred = agent_id in self.staking and self.staking.get(agent_id).status is AgentStatus.BARRED
            if barred and agent_id not in hit:
                continue
            if agent_id in hit:
                score = ts.score
                for kind in hit[agent_id]:
                    penalty = p.penalty_malice if kind is Misconduct.MALICE else p.penalty_negligence
                    score = score * (1 - penalty)
                ts.score = _clamp(score)
                ts.last_updated_tick = tick
            elif tick > ts.last_updated_tick:
                if ts.score < p.trust_cap:
                    ts.score = _clamp(min(p.trust_cap, ts.score + p.trust_recovery * (1 - ts.score)))
                ts.last_updated_tick = tick
        return dict(self.trust)

    # -- investigation -----------------------------------------------------------

    def investigate(self, report: AgentReport, tick: Optional[int] = None) -> bool:
        """Deterministic corroboration of a flagged report.

        Verified when the finding is self-evident from ledger or oracle state,
        when an independent second oracle source agrees, or when another agent
        filed the same finding on the same subject within the corroboration
        window.
        """
        tick = report.tick if tick is None else tick
        c = report.classification
        if c is None:
            return False
        checker = getattr(self, f"_check_{c.name.lower()}", None)
        if checker is not None and checker(report):
            return True
        return self._second_agent_agrees(report, tick)

    def _second_agent_agrees(self, report: AgentReport, tick: int) -> bool:
        window = self.ledger.params.corroboration_ticks
        for other in self._history:
            if (
                other.agent_id != report.agent_id
                and other.subject == report.subject
                and other.classification is report.classification
                and abs(other.tick - report.tick) <= window
                and tick - other.tick <= window
            ):
                return True
        return False

    def _request(self, asset_id: str):
        return self.network.requests.get(asset_id)

    def _check_stale_appraisal(self, r: AgentReport) -> bool:
        doc = self.oracles.fetch_appraisal(r.subject)
        return doc is None or doc.issued_months_ago > self.ledger.params.appraisal_max_age_months

    def _check_double_tokenization(self, r: AgentReport) -> bool:
        return self.ledger.token_for_asset(r.subject) is not None

    def _check_forged_document(self, r: AgentReport) -> bool:
        doc = self.oracles.fetch_appraisal(r.subject)
        return doc is not None and not doc.appraiser_signature_valid

    def _check_value_discrepancy(self, r: AgentReport) -> bool:
        req = self._request(r.subject)
        if req is None:
            return False
        estimate = median_estimate(self.oracles.fetch_comparables(r.subject), req.size)
        if estimate is None:
            return False
        bp = self.ledger.params.valuation_flag_bp if r.is_critical else self.ledger.params.valuation_adjust_bp
        return deviation_exceeds(req.declared_value, estimate, bp)

    def _check_insufficient_data(self, r: AgentReport) -> bool:
        return not self.oracles.fetch_comparables(r.subject)

    def _check_title_mismatch(self, r: AgentReport) -> bool:
        second = self.oracles.query_registry_second(r.subject)
        req = self._request(r.subject)
        if second is None or req is None:
            return False
        return not second.exists or second.legal_owner != req.owner_identity

    def _check_lien_found(self, r: AgentReport) -> bool:
        second = self.oracles.query_registry_second(r.subject)
        return second is not None and second.liens > 0

    def _identity_second(self, r: AgentReport):
        req = self._request(r.subject)
        identity = r.evidence.get("identity") or (req.owner_identity if req else None)
        if identity is None:
            return None
        return self.oracles.check_identity(identity)

    def _check_kyc_fail(self, r: AgentReport) -> bool:
        prof = self._identity_second(r)
        return prof is not None and not prof.kyc_passed

    def _check_aml_hit(self, r: AgentReport) -> bool:
        prof = self._identity_second(r)
        return prof is not None and prof.aml_flagged

    def _check_not_accredited(self, r: AgentReport) -> bool:
        prof = self._identity_second(r)
        return prof is not None and not prof.accredited

    def _ledger_trades(self, token_id: str):
        return trades_from_ledger(self.ledger.transfers(token_id))

    def _check_wash_trading(self, r: AgentReport) -> bool:
        p = self.ledger.params
        recent = in_window(self._ledger_trades(r.subject), r.tick, p.wash_window)
        return count_round_trips(recent, r.evidence["address"], p.wash_overlap_bp) >= p.wash_round_trips

    def _check_volume_spike(self, r: AgentReport) -> bool:
        token = self.ledger.tokens.get(r.subject)
        start = token.minted_tick if token else 0
        return detect_volume_spike(self._ledger_trades(r.subject), r.tick, self.ledger.params, start) is not None

    def _check_rapid_resale(self, r: AgentReport) -> bool:
        hits = detect_rapid_resale(self._ledger_trades(r.subject), r.tick, self.ledger.params)
        return any(h.sell_seq == r.evidence.get("sell_seq") for h in hits)

    def _check_flagged_counterparty(self, r: AgentReport) -> bool:
        return self.network.is_flagged_address(r.evidence["address"])

    # -- the loop ------------------------------------------------------------------

    def governance_tick(self, reports: list[AgentReport], tick: int) -> list[GovernanceAction]:
        actions: list[GovernanceAction] = []
        flagged = [r for r in reports if r.severity is not Severity.INFO]
        self._history.extend(flagged)
        self.reports_seen.extend(r.describe() for r in flagged)
        horizon = tick - 2 * self.ledger.params.corroboration_ticks
        self._history = [r for r in self._history if r.tick >= horizon]

        penalties: list[tuple[str, Misconduct]] = []
        still_pending: list[AgentReport] = []
        for report in [*self._retained, *flagged]:
            if self.investigate(report, tick):
                if report.is_critical:
                    actions.extend(self._respond(report, tick, penalties))
            elif tick - report.tick < self.ledger.params.corroboration_ticks:
                still_pending.append(report)
            else:
                self.notes.append({"tick": tick, "severity": "Info", "dropped": report.describe()})
        self._retained = still_pending

        self.compute_trust_scores(tick, penalties)
        for agent_id in sorted(self.trust):
            ts = self.trust[agent_id]
            if agent_id not in self.staking or self.staking.get(agent_id).status is AgentStatus.BARRED:
                continue
            if ts.score < self.ledger.params.trust_threshold:
                action = GovernanceAction(ActionKind.REQUIRE_REASSESSMENT, agent_id, {"score": str(ts.score)})
                actions.append(action)
                self._log(tick, action)
                outcome = self.reassess_agent(agent_id, tick)
                self.notes.append({"tick": tick, "reassessed": agent_id, "outcome": outcome.value})

        for name, value, reason in self._scheduled_params:
            self.adjust_params(name, value, reason)
            action = GovernanceAction(ActionKind.PARAM_CHANGE, name, {"value": str(value), "reason": reason})
            actions.append(action)
            self._log(tick, action)
        self._scheduled_params = []
        return actions

    def _respond(
        self, report: AgentReport, tick: int, penalties: list[tuple[str, Misconduct]]
    ) -> list[GovernanceAction]:
        c = report.classification
        address = report.evidence.get("address")
        key = (report.subject, c, self.network.address_identities.get(address, address))
        if key in self._handled:
            return []
        self._handled.add(key)
        p = self.ledger.params

        planned: list[GovernanceAction] = []
        token_id = self._token_for_subject(report.subject)
        if token_id is not None and (c in _MARKET or c in _COVERING_ROLE):
            if not self.ledger.tokens[token_id].frozen:
                planned.append(GovernanceAction(ActionKind.FREEZE_TOKEN, token_id, {"reason": c.value}))
            if c in (Classification.WASH_TRADING, Classification.FLAGGED_COUNTERPARTY):
                for addr in self._addresses_behind(report.evidence["address"]):
                    if addr not in self.ledger.blacklist:
                        planned.append(GovernanceAction(
                            ActionKind.BLACKLIST_ADDRESS, addr, {"token_id": token_id, "reason": c.value}
                        ))

        responsible = self._responsible(report)
        for agent_id, misconduct in responsible:
            bp = p.slash_malice_bp if misconduct is Misconduct.MALICE else p.slash_negligence_bp
            planned.append(GovernanceAction(
                ActionKind.SLASH_STAKE, agent_id,
                {"amount_bp": bp, "reason": f"{misconduct.value}: {c.value} on {report.subject}"},
            ))

        incident = Incident(
            incident_id=f"INC-{len(self.incidents) + 1:04d}",
            classification=INCIDENT_CLASS.get(c, IncidentClass.FRAUDULENT_ASSET),
            report_classification=c,
            subject=report.subject,
            source_reports=[report.describe()],
            verified=True,
            responsible_agents=[a for a, _ in responsible],
            actions_taken=list(planned),
            tick=tick,
        )
        self.incidents.append(incident)
        penalties.extend(responsible)

        if incident.classification is IncidentClass.FRAUDULENT_ASSET and p.fraud_quorum > p.verification_quorum:
            self.schedule_param_change("verification_quorum", p.fraud_quorum, f"{incident.incident_id}: fraud")

        if p.auto_approve_governance:
            self._execute(planned, incident, tick)
        else:
            self._queued.append((tick, planned, incident))
        record = GovernanceAction(ActionKind.RECORD_INCIDENT, incident.incident_id)
        enforce = [a for a in planned if a.kind is not ActionKind.SLASH_STAKE]
        slashes = [a for a in planned if a.kind is ActionKind.SLASH_STAKE]
        return [*enforce, record, *slashes]

    def _execute(self, planned: list[GovernanceAction], incident: Incident, tick: int) -> None:
        """Freeze and blacklist, then record the incident, then slash."""
        for action in planned:
            if action.kind is ActionKind.FREEZE_TOKEN:
                self.ledger.set_frozen(action.target, True, f"{incident.incident_id}: {action.parameters['reason']}")
                self._log(tick, action)
            elif action.kind is ActionKind.BLACKLIST_ADDRESS:
                self.ledger.blacklist_address(action.parameters["token_id"], action.target, incident.incident_id)
                self._log(tick, action)
        self.ledger.record_incident(incident)
        self._log(tick, GovernanceAction(ActionKind.RECORD_INCIDENT, incident.incident_id))
        for action in planned:
            if action.kind is ActionKind.SLASH_STAKE:
                if self.staking.get(action.target).status is AgentStatus.BARRED:
                    continue
                self.staking.slash_stake(action.target, action.parameters["amount_bp"], action.parameters["reason"])
                self._log(tick, action)

    def approve_pending(self, tick: int) -> int:
        """Human sign-off: execute every queued critical response. Returns the count."""
        queued, self._queued = self._queued, []
        for _, planned, incident in queued:
            self._execute(planned, incident, tick)
        return len(queued)

    @property
    def pending_approvals(self) -> int:
        return len(self._queued)

    def _log(self, tick: int, action: GovernanceAction) -> None:
        self.actions_log.append((tick, action))

    def _token_for_subject(self, subject: str) -> Optional[str]:
        if subject in self.ledger.tokens:
            return subject
        return self.ledger.token_for_asset(subject)

    def _addresses_behind(self, address: str) -> list[str]:
        identity = self.network.address_identities.get(address)
        if identity is None:
            return [address]
        return self.network.addresses_of(identity) or [address]

    def _responsible(self, report: AgentReport) -> list[tuple[str, Misconduct]]:
        c = report.classification
        out: list[tuple[str, Misconduct]] = []
        if c in _MARKET:
            addrs = self._addresses_behind(report.evidence.get("address", ""))
            for addr in addrs:
                agent_id = self.address_agents.get(addr)
                if agent_id is not None and agent_id not in [a for a, _ in out]:
                    out.append((agent_id, Misconduct.MALICE))
        else:
            role = _COVERING_ROLE.get(c)
            req = self._request(report.subject)
            if role is not None and req is not None:
                for agent_id in req.approvals_by_role(role):
                    out.append((agent_id, Misconduct.NEGLIGENCE))
        return [
            (a, m) for a, m in out
            if a in self.staking and self.staking.get(a).status is not AgentStatus.BARRED
        ]

    # -- reassessment and parameters -----------------------------------------------

    def reassess_agent(self, agent_id: str, tick: int) -> ReassessOutcome:
        choice = self.reassessment.get(agent_id, "recertify").lower()
        p = self.ledger.params
        if choice in ("replace", "replaced"):
            sub = self.replacements.get(agent_id)
            if not sub:
                raise NoReplacementConfigured(agent_id)
            old = self.staking.get(agent_id)
            self.staking.bar_agent(agent_id, "replaced after reassessment")
            new_id = sub["agent_id"]
            self.staking.certify_agent(new_id, old.role, int(sub.get("stake", old.min_stake)))
            self.network.add_agent(new_id, old.role)
            self.register_agent(new_id, tick)
            return ReassessOutcome.REPLACED
        rec = self.staking.get(agent_id)
        self.staking.top_up(agent_id, max(0, rec.min_stake - rec.stake))
        self.trust[agent_id] = TrustScore(agent_id, p.trust_init, tick)
        return ReassessOutcome.RECERTIFIED

    def schedule_param_change(self, name: str, value: Any, reason: str) -> None:
        """Queue a change to be applied at the end of the current governance tick."""
        self._scheduled_params.append((name, value, reason))

    def adjust_params(self, name: str, value: Any, reason: str = "") -> LedgerEvent:
        """Log a parameter change on the ledger; it takes effect on the next tick."""
        return self.ledger.schedule_param_change(name, value, reason, Capability.GOVERNANCE)

    def trust_table(self) -> dict[str, str]:
        return {a: str(ts.score) for a, ts in sorted(self.trust.items())}


def _clamp(score: Decimal) -> Decimal:
    return max(Decimal(0), min(Decimal(1), score))
