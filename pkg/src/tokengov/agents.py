"""Functional agents and the per-asset tokenization pipeline.

Each agent is a small state machine driven by :class:`AgentNetwork`, which the
harness steps once per logical tick.  Agents never raise on a failed check;
they emit an :class:`AgentReport` that governance consumes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from types import MappingProxyType
from typing import Any, Mapping, Optional

from .errors import InvalidTransition, NotApproved, RequestValidationError, UnknownOwner, UnknownToken
from .ledger import Capability, Ledger, Restrictions, TransferResult
from .oracles import ComparableSale, OracleSim
from .params import BP_SCALE, GovernanceParams
from .staking import AgentRole, StakeRegistry
from .surveillance import (
    TradeRecord,
    detect_flagged_counterparties,
    detect_rapid_resale,
    detect_volume_spike,
    detect_wash_trading,
)

logger = logging.getLogger(__name__)


class RequestState(str, Enum):
    SUBMITTED = "Submitted"
    VERIFYING = "Verifying"
    VALUING = "Valuing"
    COMPLIANCE_CHECK = "ComplianceCheck"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    MINTED = "Minted"


_TRANSITIONS = {
    RequestState.SUBMITTED: {RequestState.VERIFYING, RequestState.VALUING, RequestState.REJECTED},
    RequestState.VERIFYING: {RequestState.VALUING, RequestState.COMPLIANCE_CHECK, RequestState.REJECTED},
    RequestState.VALUING: {RequestState.VERIFYING, RequestState.COMPLIANCE_CHECK, RequestState.REJECTED},
    RequestState.COMPLIANCE_CHECK: {RequestState.APPROVED, RequestState.REJECTED},
    RequestState.APPROVED: {RequestState.MINTED},
    RequestState.REJECTED: set(),
    RequestState.MINTED: set(),
}


class Severity(str, Enum):
    INFO = "Info"
    FLAG = "Flag"
    CRITICAL = "Critical"


class Classification(str, Enum):
    TITLE_MISMATCH = "TitleMismatch"
    LIEN_FOUND = "LienFound"
    DOUBLE_TOKENIZATION = "DoubleTokenization"
    STALE_APPRAISAL = "StaleAppraisal"
    VALUE_DISCREPANCY = "ValueDiscrepancy"
    INSUFFICIENT_DATA = "InsufficientData"
    FORGED_DOCUMENT = "ForgedDocument"
    KYC_FAIL = "KycFail"
    NOT_ACCREDITED = "NotAccredited"
    AML_HIT = "AmlHit"
    VOLUME_SPIKE = "VolumeSpike"
    WASH_TRADING = "WashTrading"
    RAPID_RESALE = "RapidResale"
    FLAGGED_COUNTERPARTY = "FlaggedCounterparty"


@dataclass(frozen=True)
class AgentReport:
    agent_id: str
    subject: str
    severity: Severity
    classification: Optional[Classification] = None
    evidence: Mapping[str, Any] = field(default_factory=dict)
    tick: int = 0

    def __post_init__(self) -> None:
        if self.severity is not Severity.INFO and self.classification is None:
            raise ValueError(f"{self.severity.value} report requires a classification")
        object.__setattr__(self, "evidence", MappingProxyType(dict(self.evidence)))

    @property
    def is_approval(self) -> bool:
        return self.severity is Severity.INFO and bool(self.evidence.get("approved"))

    @property
    def is_critical(self) -> bool:
        return self.severity is Severity.CRITICAL

    def describe(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "subject": self.subject,
            "severity": self.severity.value,
            "classification": self.classification.value if self.classification else None,
            "tick": self.tick,
        }


@dataclass(frozen=True)
class ApprovalRecord:
    agent_id: str
    role: AgentRole
    tick: int
    detail: str = ""


@dataclass
class TokenizationRequest:
    asset_id: str
    owner_identity: str
    owner_address: str
    declared_value: int
    supply_requested: int
    fraction_tokenized_bp: int
    size: int = 1
    document_bundle_hash: str = ""
    jurisdiction: str = "default"
    token_symbol: Optional[str] = None
    max_holding_bp: Optional[int] = None
    owner_accepts_revaluation: Optional[bool] = None
    state: RequestState = RequestState.SUBMITTED
    approvals: dict[str, ApprovalRecord] = field(default_factory=dict)
    history: list[tuple[int, RequestState]] = field(default_factory=list)
    paused: Optional[Classification] = None
    awaiting_owner: bool = False
    estimate: Optional[int] = None
    effective_value: Optional[int] = None
    restrictions: Optional[Restrictions] = None
    token_id: Optional[str] = None
    token_price: Optional[int] = None
    _trace: list[tuple[int, str]] = field(default_factory=list, init=False, repr=False)

    def transition(self, new: RequestState, tick: int) -> None:
        if new not in _TRANSITIONS[self.state]:
            raise InvalidTransition(f"{self.asset_id}: {self.state.value} -> {new.value}")
        self.state = new
        self.history.append((tick, new))
        self._trace.append((tick, new.value))

    def pause(self, reason: Classification, tick: int) -> None:
        self.paused = reason
        self._trace.append((tick, f"Paused:{reason.value}"))

    def resume(self, tick: int) -> None:
        self.paused = None
        self._trace.append((tick, "Resumed"))

    def approvals_by_role(self, role: AgentRole) -> list[str]:
        return [a for a, rec in self.approvals.items() if rec.role is role]

    def has_full_approval(self, quorum: int) -> bool:
        return (
            len(self.approvals_by_role(AgentRole.VERIFICATION)) >= quorum
            and len(self.approvals_by_role(AgentRole.VALUATION)) >= 1
            and len(self.approvals_by_role(AgentRole.COMPLIANCE)) >= 1
        )

    def trace(self) -> list[tuple[int, str]]:
        """State transitions interleaved with pause and resume markers."""
        return list(self._trace)


# ---------------------------------------------------------------------------
# pure rules


def median_estimate(comparables: list[ComparableSale], size: int) -> Optional[int]:
    """Median over comparables of ``unit_price * size``, rounded half to even."""
    if not comparables:
        return None
    values = sorted(c.unit_price * size for c in comparables)
    n = len(values)
    mid = n // 2
    if n % 2:
        return values[mid]
    return round(Fraction(values[mid - 1] + values[mid], 2))


def deviation_exceeds(declared: int, estimate: int, threshold_bp: int) -> bool:
    """|declared - estimate| / estimate > threshold_bp / 10000, exactly."""
    return abs(declared - estimate) * BP_SCALE > threshold_bp * estimate


def token_price(effective_value: int, fraction_bp: int, supply: int) -> int:
    """Initial price per token in cents, rounded half to even."""
    return round(Fraction(effective_value * fraction_bp, BP_SCALE * supply))


@dataclass(frozen=True)
class RestrictionProfile:
    whitelist_required: bool = True
    accredited_only: bool = True
    max_holding_bp: Optional[int] = None


DEFAULT_PROFILES = {
    "private_placement": RestrictionProfile(True, True, None),
    "registered_offering": RestrictionProfile(True, False, BP_SCALE),
}
DEFAULT_JURISDICTIONS = {"default": "private_placement"}


# ---------------------------------------------------------------------------
# agents


class Agent:
    role: AgentRole

    def __init__(self, agent_id: str) -> None:
        self.agent_id = agent_id

    def report(self, subject: str, severity: Severity, classification=None, tick: int = 0, **evidence) -> AgentReport:
        return AgentReport(self.agent_id, subject, severity, classification, evidence, tick)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.agent_id!r})"


class VerificationAgent(Agent):
    role = AgentRole.VERIFICATION

    def __init__(self, agent_id: str, oracles: OracleSim, ledger: Ledger, colluding: bool = False) -> None:
        super().__init__(agent_id)
        self.oracles = oracles
        self.ledger = ledger
        # a colluding verifier rubber-stamps every request
        self.colluding = colluding

    def verify_asset(self, request: TokenizationRequest, tick: int) -> AgentReport:
        aid = request.asset_id
        if self.colluding:
            return self.report(aid, Severity.INFO, tick=tick, approved=True)
        reg = self.oracles.query_registry(aid)
        if not reg.exists or reg.legal_owner != request.owner_identity:
            return self.report(
                aid, Severity.CRITICAL, Classification.TITLE_MISMATCH, tick,
                registry_owner=reg.legal_owner, claimed_owner=request.owner_identity, exists=reg.exists,
            )
        if reg.liens > 0:
            return self.report(aid, Severity.CRITICAL, Classification.LIEN_FOUND, tick, liens=reg.liens)
        existing = self.ledger.token_for_asset(aid)
        if existing is not None:
            return self.report(aid, Severity.CRITICAL, Classification.DOUBLE_TOKENIZATION, tick, token_id=existing)
        doc = self.oracles.fetch_appraisal(aid)
        if doc is None:
            return self.report(aid, Severity.FLAG, Classification.STALE_APPRAISAL, tick, missing=True)
        if not doc.appraiser_signature_valid:
            return self.report(aid, Severity.CRITICAL, Classification.FORGED_DOCUMENT, tick, signature_valid=False)
        max_age = self.ledger.params.appraisal_max_age_months
        if doc.issued_months_ago > max_age:
            return self.report(
                aid, Severity.FLAG, Classification.STALE_APPRAISAL, tick,
                age_months=doc.issued_months_ago, max_age_months=max_age,
            )
        return self.report(aid, Severity.INFO, tick=tick, approved=True)


class ValuationAgent(Agent):
    role = AgentRole.VALUATION

    def __init__(self, agent_id: str, oracles: OracleSim, ledger: Ledger) -> None:
        super().__init__(agent_id)
        self.oracles = oracles
        self.ledger = ledger

    def appraise_asset(self, request: TokenizationRequest, tick: int) -> tuple[Optional[int], AgentReport]:
        aid = request.asset_id
        params = self.ledger.params
        estimate = median_estimate(self.oracles.fetch_comparables(aid), request.size)
        if estimate is None:
            return None, self.report(aid, Severity.FLAG, Classification.INSUFFICIENT_DATA, tick, comparables=0)
        declared = request.declared_value
        evidence = {"declared": declared, "estimate": estimate}
        if deviation_exceeds(declared, estimate, params.valuation_flag_bp):
            return estimate, self.report(aid, Severity.CRITICAL, Classification.VALUE_DISCREPANCY, tick, **evidence)
        if deviation_exceeds(declared, estimate, params.valuation_adjust_bp):
            return estimate, self.report(
                aid, Severity.FLAG, Classification.VALUE_DISCREPANCY, tick, needs_owner_acceptance=True, **evidence
            )
        return estimate, self.report(aid, Severity.INFO, tick=tick, approved=True, **evidence)


class ComplianceAgent(Agent):
    role = AgentRole.COMPLIANCE

    def __init__(
        self,
        agent_id: str,
        oracles: OracleSim,
        ledger: Ledger,
        profiles: Optional[Mapping[str, RestrictionProfile]] = None,
        jurisdictions: Optional[Mapping[str, str]] = None,
    ) -> None:
        super().__init__(agent_id)
        self.oracles = oracles
        self.ledger = ledger
        self.profiles = dict(DEFAULT_PROFILES if profiles is None else profiles)
        self.jurisdictions = dict(DEFAULT_JURISDICTIONS if jurisdictions is None else jurisdictions)

    def restrictions_for(self, request: TokenizationRequest) -> Restrictions:
        name = self.jurisdictions.get(request.jurisdiction, self.jurisdictions.get("default", "private_placement"))
        profile = self.profiles[name]
        cap = request.max_holding_bp
        if cap is None:
            cap = profile.max_holding_bp if profile.max_holding_bp is not None else self.ledger.params.default_max_holding_bp
        return Restrictions(profile.whitelist_required, profile.accredited_only, cap)

    def compliance_check(self, request: TokenizationRequest, tick: int) -> AgentReport:
        owner = self.oracles.check_identity(request.owner_identity)
        aid = request.asset_id
        if not owner.kyc_passed:
            return self.report(aid, Severity.CRITICAL, Classification.KYC_FAIL, tick, identity=owner.identity_id)
        if owner.aml_flagged:
            return self.report(aid, Severity.CRITICAL, Classification.AML_HIT, tick, identity=owner.identity_id)
        restrictions = self.restrictions_for(request)
        request.restrictions = restrictions
        return self.report(aid, Severity.INFO, tick=tick, approved=True, **restrictions.to_payload())

    def whitelist_investor(self, token_id: str, identity: str, address: str) -> TransferResult:
        """Screen an investor and, if eligible, add ``address`` to the whitelist.

        Returns a result whose ``reason`` is a :class:`Classification`
        (KycFail, NotAccredited or AmlHit) on rejection.
        """
        token = self.ledger.tokens.get(token_id)
        if token is None:
            raise UnknownToken(token_id)
        prof = self.oracles.check_identity(identity)
        if not prof.kyc_passed:
            return TransferResult(False, Classification.KYC_FAIL)
        if token.restrictions.accredited_only and not prof.accredited:
            return TransferResult(False, Classification.NOT_ACCREDITED)
        if prof.aml_flagged:
            return TransferResult(False, Classification.AML_HIT)
        self.ledger.update_whitelist(token_id, address, True, Capability.COMPLIANCE, reason=f"kyc:{identity}")
        return TransferResult(True)


class TokenizationAgent(Agent):
    role = AgentRole.TOKENIZATION

    def __init__(self, agent_id: str, ledger: Ledger) -> None:
        super().__init__(agent_id)
        self.ledger = ledger

    def issue_tokens(self, request: TokenizationRequest, tick: int) -> str:
        quorum = self.ledger.params.verification_quorum
        if request.state is not RequestState.APPROVED or not request.has_full_approval(quorum):
            raise NotApproved(f"request {request.asset_id} is {request.state.value}")
        value = request.effective_value if request.effective_value is not None else request.declared_value
        price = token_price(value, request.fraction_tokenized_bp, request.supply_requested)
        for rec in request.approvals.values():
            self.ledger.record_approval(
                request.asset_id, rec.agent_id, rec.role.value, Capability.TOKENIZATION,
                approval="tokenization", approved_tick=rec.tick,
            )
        token_id = self.ledger.mint_tokens(
            request.asset_id,
            request.supply_requested,
            request.owner_address,
            request.restrictions or Restrictions(),
            token_id=request.token_symbol,
            metadata_hash=request.document_bundle_hash,
            initial_price=price,
        )
        request.token_id = token_id
        request.token_price = price
        request.transition(RequestState.MINTED, tick)
        return token_id


def monitor_trades(
    token_id: str,
    trades: list[TradeRecord],
    tick: int,
    params: GovernanceParams,
    *,
    agent_id: str = "monitor",
    start_tick: int = 0,
    is_flagged=lambda addr: False,
) -> list[AgentReport]:
    """Run every detector over ``trades`` as of ``tick`` and return the reports."""
    trades = [t for t in trades if t.token_id == token_id and t.tick <= tick]
    reports = []
    spike = detect_volume_spike(trades, tick, params, start_tick)
    if spike is not None:
        reports.append(AgentReport(
            agent_id, token_id, Severity.FLAG, Classification.VOLUME_SPIKE,
            {"current": spike.current, "baseline": list(spike.baseline)}, tick,
        ))
    for addr, n in detect_wash_trading(trades, tick, params).items():
        reports.append(AgentReport(
            agent_id, token_id, Severity.CRITICAL, Classification.WASH_TRADING,
            {"address": addr, "round_trips": n, "window": params.wash_window}, tick,
        ))
    for hit in detect_rapid_resale(trades, tick, params):
        reports.append(AgentReport(
            agent_id, token_id, Severity.FLAG, Classification.RAPID_RESALE,
            {"address": hit.address, "buy_tick": hit.buy_tick, "sell_tick": hit.sell_tick,
             "buy_price": hit.buy_price, "sell_price": hit.sell_price, "sell_seq": hit.sell_seq},
            tick,
        ))
    for addr in detect_flagged_counterparties(trades, tick, params.volume_window, is_flagged):
        reports.append(AgentReport(
            agent_id, token_id, Severity.CRITICAL, Classification.FLAGGED_COUNTERPARTY, {"address": addr}, tick,
        ))
    return reports


class MonitoringAgent(Agent):
    """Stateful wrapper around :func:`monitor_trades` that reports each
    finding once rather than on every tick it stays visible in the window."""

    role = AgentRole.MONITORING

    def __init__(self, agent_id: str, ledger: Ledger, is_flagged=lambda addr: False) -> None:
        super().__init__(agent_id)
        self.ledger = ledger
        self.is_flagged = is_flagged
        self._last_fired: dict[tuple, int] = {}

    def _key(self, r: AgentReport) -> tuple[tuple, int]:
        p = self.ledger.params
        c = r.classification
        if c is Classification.VOLUME_SPIKE:
            return (r.subject, c), p.volume_window
        if c is Classification.WASH_TRADING:
            return (r.subject, c, r.evidence["address"]), p.wash_window
        if c is Classification.RAPID_RESALE:
            return (r.subject, c, r.evidence["sell_seq"]), 1 << 62
        return (r.subject, c, r.evidence.get("address")), 1 << 62

    def scan(self, trades_by_token: Mapping[str, list[TradeRecord]], tick: int) -> list[AgentReport]:
        out = []
        for token_id in sorted(trades_by_token):
            token = self.ledger.tokens.get(token_id)
            start = token.minted_tick if token is not None else 0
            for r in monitor_trades(
                token_id, trades_by_token[token_id], tick, self.ledger.params,
                agent_id=self.agent_id, start_tick=start, is_flagged=self.is_flagged,
            ):
                key, hold = self._key(r)
                last = self._last_fired.get(key)
                if last is not None and tick - last < hold:
                    continue
                self._last_fired[key] = tick
                out.append(r)
        return out


# ---------------------------------------------------------------------------
# coordination


class AgentNetwork:
    """Routes tokenization requests through the functional agents.

    Only agents whose stake record is Certified take part.  Reports produced
    during a tick accumulate on ``bus`` until the harness drains them for the
    governance loop.
    """

    def __init__(
        self,
        ledger: Ledger,
        oracles: OracleSim,
        staking: StakeRegistry,
        *,
        profiles: Optional[Mapping[str, RestrictionProfile]] = None,
        jurisdictions: Optional[Mapping[str, str]] = None,
        address_identities: Optional[Mapping[str, str]] = None,
    ) -> None:
        self.ledger = ledger
        self.oracles = oracles
        self.staking = staking
        self.profiles = profiles
        self.jurisdictions = jurisdictions
        self.address_identities: dict[str, str] = dict(address_identities or {})
        self.agents: dict[str, Agent] = {}
        self.requests: dict[str, TokenizationRequest] = {}
        self.trades: dict[str, list[TradeRecord]] = {}
        self.bus: list[AgentReport] = []
        self._verified_by: dict[str, set[str]] = {}

    # -- roster ---------------------------------------------------------------

    def add_agent(self, agent_id: str, role: AgentRole, *, colluding: bool = False) -> Agent:
        role = AgentRole(role)
        agent: Agent
        if role is AgentRole.VERIFICATION:
            agent = VerificationAgent(agent_id, self.oracles, self.ledger, colluding=colluding)
        elif role is AgentRole.VALUATION:
            agent = ValuationAgent(agent_id, self.oracles, self.ledger)
        elif role is AgentRole.COMPLIANCE:
            agent = ComplianceAgent(agent_id, self.oracles, self.ledger, self.profiles, self.jurisdictions)
        elif role is AgentRole.TOKENIZATION:
            agent = TokenizationAgent(agent_id, self.ledger)
        elif role is AgentRole.MONITORING:
            agent = MonitoringAgent(agent_id, self.ledger, self.is_flagged_address)
        else:
            agent = Agent(agent_id)
            agent.role = role
        self.agents[agent_id] = agent
        return agent

    def active(self, role: AgentRole) -> list[Agent]:
        return [self.agents[a] for a in self.staking.certified(role) if a in self.agents]

    def is_flagged_address(self, address: str) -> bool:
        identity = self.address_identities.get(address)
        return identity is not None and self.oracles.check_identity(identity).aml_flagged

    def addresses_of(self, identity: str) -> list[str]:
        return sorted(a for a, i in self.address_identities.items() if i == identity)

    # -- owner-side operations ---------------------------------------------------

    def submit_request(self, tick: int, **details: Any) -> TokenizationRequest:
        owner = details.get("owner_identity")
        if owner is None or not self.oracles.knows_identity(owner):
            raise UnknownOwner(str(owner))
        supply = int(details.get("supply_requested", 0))
        if supply <= 0:
            raise RequestValidationError("supply_requested must be positive")
        frac = int(details.get("fraction_tokenized_bp", BP_SCALE))
        if not 0 < frac <= BP_SCALE:
            raise RequestValidationError("fraction_tokenized_bp must be in (0, 10000]")
        if int(details.get("size", 1)) <= 0:
            raise RequestValidationError("size must be positive")
        asset_id = details["asset_id"]
        if asset_id in self.requests and self.requests[asset_id].state is not RequestState.REJECTED:
            raise RequestValidationError(f"a request for {asset_id} is already open")
        if details.get("declared_value") is None:
            doc = self.oracles.fetch_appraisal(asset_id)
            if doc is None:
                raise RequestValidationError("declared_value missing and no appraisal on file")
            details["declared_value"] = doc.declared_value
        details.setdefault("owner_address", owner)
        request = TokenizationRequest(**details)
        request.history.append((tick, RequestState.SUBMITTED))
        request._trace.append((tick, RequestState.SUBMITTED.value))
        self.requests[asset_id] = request
        self._verified_by[asset_id] = set()
        self.ledger.register_request(request)
        for role in (AgentRole.VERIFICATION, AgentRole.VALUATION):
            for agent in self.active(role):
                self.bus.append(AgentReport(
                    f"owner:{owner}", asset_id, Severity.INFO, None,
                    {"notify": agent.agent_id, "declared_value": request.declared_value}, tick,
                ))
        return request

    def reappraise(self, asset_id: str, tick: int, **fields: Any) -> None:
        """A fresh appraisal arrives; a paused verification resumes."""
        self.oracles.update_appraisal(asset_id, **fields)
        request = self.requests.get(asset_id)
        if request is None:
            return
        if "declared_value" in fields and request.state in (RequestState.SUBMITTED, RequestState.VERIFYING):
            request.declared_value = int(fields["declared_value"])
        if request.paused is not None:
            request.resume(tick)
            self._verified_by[asset_id] = set()
            for a in [a for a, r in request.approvals.items() if r.role is AgentRole.VERIFICATION]:
                del request.approvals[a]

    def owner_decision(self, asset_id: str, accept: bool) -> None:
        self.requests[asset_id].owner_accepts_revaluation = bool(accept)

    # -- pipeline ----------------------------------------------------------------

    def process(self, tick: int) -> None:
        for asset_id in list(self.requests):
            self._advance(self.requests[asset_id], tick)

    def _approve(self, request: TokenizationRequest, agent: Agent, tick: int, detail: str = "") -> None:
        request.approvals[agent.agent_id] = ApprovalRecord(agent.agent_id, agent.role, tick, detail)

    def _reject(self, request: TokenizationRequest, tick: int) -> None:
        request.transition(RequestState.REJECTED, tick)

    def _advance(self, request: TokenizationRequest, tick: int) -> None:
        params = self.ledger.params
        while True:
            state = request.state
            if state is RequestState.SUBMITTED:
                request.transition(RequestState.VERIFYING, tick)
            elif state is RequestState.VERIFYING:
                if request.paused is not None:
                    return
                done = self._verified_by[request.asset_id]
                reports = []
                for agent in self.active(AgentRole.VERIFICATION):
                    if agent.agent_id in done:
                        continue
                    done.add(agent.agent_id)
                    report = agent.verify_asset(request, tick)
                    self.bus.append(report)
                    reports.append((agent, report))
                    if report.is_approval:
                        self._approve(request, agent, tick, "verification")
                if any(r.is_critical for _, r in reports):
                    self._reject(request, tick)
                    return
                flagged = [r for _, r in reports if r.severity is Severity.FLAG]
                if flagged:
                    request.pause(flagged[0].classification, tick)
                    return
                if len(request.approvals_by_role(AgentRole.VERIFICATION)) < params.verification_quorum:
                    return
                request.transition(RequestState.VALUING, tick)
            elif state is RequestState.VALUING:
                if not self._value(request, tick):
                    return
            elif state is RequestState.COMPLIANCE_CHECK:
                agents = self.active(AgentRole.COMPLIANCE)
                if not agents:
                    return
                agent = agents[0]
                report = agent.compliance_check(request, tick)
                self.bus.append(report)
                if report.is_critical:
                    self._reject(request, tick)
                    return
                self._approve(request, agent, tick, "compliance")
                request.transition(RequestState.APPROVED, tick)
            elif state is RequestState.APPROVED:
                agents = self.active(AgentRole.TOKENIZATION)
                if not agents:
                    return
                agents[0].issue_tokens(request, tick)
                self.trades.setdefault(request.token_id, [])
                for agent_id in sorted({*request.approvals, agents[0].agent_id}):
                    if self.staking.is_certified(agent_id) and params.reward_fee:
                        self.staking.reward_agent(agent_id, params.reward_fee)
            else:
                return

    def _value(self, request: TokenizationRequest, tick: int) -> bool:
        """Run (or resume) valuation; True when the request moved on."""
        agents = self.active(AgentRole.VALUATION)
        if not agents:
            return False
        agent = agents[0]
        if request.awaiting_owner:
            decision = request.owner_accepts_revaluation
            if decision is None:
                return False
            request.awaiting_owner = False
            if not decision:
                self._reject(request, tick)
                return False
            request.effective_value = request.estimate
            self._approve(request, agent, tick, "valuation (owner accepted estimate)")
            request.transition(RequestState.COMPLIANCE_CHECK, tick)
            return True
        estimate, report = agent.appraise_asset(request, tick)
        request.estimate = estimate
        self.bus.append(report)
        if report.is_critical:
            self._reject(request, tick)
            return False
        if report.severity is Severity.FLAG:
            if report.classification is Classification.INSUFFICIENT_DATA:
                self._reject(request, tick)
                return False
            request.awaiting_owner = True
            return self._value(request, tick)
        request.effective_value = request.declared_value
        self._approve(request, agent, tick, "valuation")
        request.transition(RequestState.COMPLIANCE_CHECK, tick)
        return True

    # -- investors and trading -----------------------------------------------------

    def whitelist_investor(self, token_id: str, identity: str, address: str) -> TransferResult:
        agents = self.active(AgentRole.COMPLIANCE)
        if not agents:
            raise NotApproved("no certified compliance agent")
        self.address_identities.setdefault(address, identity)
        return agents[0].whitelist_investor(token_id, identity, address)

    def trade(self, token_id: str, sender: str, recipient: str, amount: int, price: int, tick: int) -> TransferResult:
        result = self.ledger.execute_transfer(token_id, sender, recipient, amount, price)
        if result.accepted:
            seq = len(self.ledger) - 1
            self.trades.setdefault(token_id, []).append(
                TradeRecord(token_id, sender, recipient, amount, price, tick, seq)
            )
        return result

    def monitor(self, tick: int) -> list[AgentReport]:
        reports = []
        for agent in self.active(AgentRole.MONITORING):
            reports.extend(agent.scan(self.trades, tick))
        self.bus.extend(reports)
        return reports

    def drain_reports(self) -> list[AgentReport]:
        out, self.bus = self.bus, []
        return out
