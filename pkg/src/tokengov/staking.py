"""Stake registry for agents: certification, slashing, rewards and top-ups.

An agent's record doubles as its non-transferable stake token; there is no
operation that moves stake between agents.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .errors import BarredAgent, InsufficientStake, NotCertified, UnknownAgent
from .ledger import Capability, Ledger
from .params import BP_SCALE

logger = logging.getLogger(__name__)


class AgentRole(str, Enum):
    VERIFICATION = "Verification"
    VALUATION = "Valuation"
    COMPLIANCE = "Compliance"
    TOKENIZATION = "Tokenization"
    MONITORING = "Monitoring"
    GOVERNANCE = "Governance"


class AgentStatus(str, Enum):
    CERTIFIED = "Certified"
    SUSPENDED = "Suspended"
    BARRED = "Barred"


@dataclass(frozen=True)
class AgentRecord:
    agent_id: str
    role: AgentRole
    stake: int
    min_stake: int
    status: AgentStatus

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "role": self.role.value,
            "stake": self.stake,
            "min_stake": self.min_stake,
            "status": self.status.value,
        }


class StakeRegistry:
    def __init__(self, ledger: Ledger, min_stake: Optional[dict[AgentRole, int]] = None) -> None:
        self.ledger = ledger
        self._min_stake = dict(min_stake or {})
        self._records: dict[str, AgentRecord] = {}
        self._revetted: set[str] = set()
        self.total_deposited = 0
        self.total_rewarded = 0
        self.total_slashed = 0

    def min_stake_for(self, role: AgentRole) -> int:
        return self._min_stake.get(role, self.ledger.params.min_stake)

    # -- queries -----------------------------------------------------------------

    def get(self, agent_id: str) -> AgentRecord:
        try:
            return self._records[agent_id]
        except KeyError:
            raise UnknownAgent(agent_id) from None

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self._records

    def records(self) -> list[AgentRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def is_certified(self, agent_id: str) -> bool:
        rec = self._records.get(agent_id)
        return rec is not None and rec.status is AgentStatus.CERTIFIED

    def certified(self, role: AgentRole) -> list[str]:
        """Certified agent ids of ``role`` in registration order."""
        return [a for a, r in self._records.items() if r.role is role and r.status is AgentStatus.CERTIFIED]

    def total_stake(self) -> int:
        return sum(r.stake for r in self._records.values())

    # -- operations ----------------------------------------------------------------

    def mark_revetted(self, agent_id: str) -> None:
        """Record that a barred operator passed re-vetting and may re-stake."""
        self._revetted.add(agent_id)

    def certify_agent(self, agent_id: str, role: AgentRole, stake: int) -> AgentRecord:
        role = AgentRole(role)
        if stake < 0:
            raise ValueError("stake must be non-negative")
        existing = self._records.get(agent_id)
        if existing is not None:
            if existing.status is AgentStatus.BARRED and agent_id not in self._revetted:
                raise BarredAgent(agent_id)
            if existing.status is not AgentStatus.BARRED:
                raise ValueError(f"agent {agent_id} is already registered")
        min_stake = self.min_stake_for(role)
        carried = existing.stake if existing is not None else 0
        if carried + stake < min_stake:
            raise InsufficientStake(f"{agent_id}: stake {carried + stake} < minimum {min_stake}")
        self._revetted.discard(agent_id)
        rec = AgentRecord(agent_id, role, carried + stake, min_stake, AgentStatus.CERTIFIED)
        self._records[agent_id] = rec
        self.total_deposited += stake
        self.ledger.record_approval(
            asset_id="",
            agent_id=agent_id,
            role=role.value,
            caller=Capability.STAKING,
            approval="certification",
            stake=rec.stake,
        )
        return rec

    def slash_stake(self, agent_id: str, amount_bp: int, reason: str) -> tuple[int, AgentRecord]:
        rec = self.get(agent_id)
        if rec.status is AgentStatus.BARRED:
            raise BarredAgent(agent_id)
        if not 0 <= amount_bp <= BP_SCALE:
            raise ValueError(f"amount_bp out of range: {amount_bp}")
        slashed = rec.stake * amount_bp // BP_SCALE
        stake = rec.stake - slashed
        status = rec.status
        if stake == 0:
            status = AgentStatus.BARRED
        elif stake < rec.min_stake:
            status = AgentStatus.SUSPENDED
        rec = replace(rec, stake=stake, status=status)
        self._records[agent_id] = rec
        self.total_slashed += slashed
        self.ledger.record_slash(agent_id, amount_bp, slashed, reason, stake, status.value)
        logger.info("slashed %s by %d (%d bp): %s", agent_id, slashed, amount_bp, reason)
        return slashed, rec

    def reward_agent(self, agent_id: str, amount: int) -> AgentRecord:
        rec = self.get(agent_id)
        if rec.status is not AgentStatus.CERTIFIED:
            raise NotCertified(agent_id)
        if amount < 0:
            raise ValueError("reward must be non-negative")
        rec = replace(rec, stake=rec.stake + amount)
        self._records[agent_id] = rec
        self.total_rewarded += amount
        self.ledger.record_stake_change(agent_id, "reward", amount, rec.stake, rec.status.value)
        return rec

    def top_up(self, agent_id: str, amount: int) -> AgentRecord:
        rec = self.get(agent_id)
        if amount < 0:
            raise ValueError("top-up must be non-negative")
        stake = rec.stake + amount
        status = rec.status
        if status is AgentStatus.SUSPENDED and stake >= rec.min_stake:
            status = AgentStatus.CERTIFIED
        elif status is AgentStatus.BARRED and agent_id in self._revetted and stake >= rec.min_stake:
            status = AgentStatus.CERTIFIED
            self._revetted.discard(agent_id)
        rec = replace(rec, stake=stake, status=status)
        self._records[agent_id] = rec
        self.total_deposited += amount
        self.ledger.record_stake_change(agent_id, "top_up", amount, rec.stake, rec.status.value)
        return rec

    def bar_agent(self, agent_id: str, reason: str) -> AgentRecord:
        rec = replace(self.get(agent_id), status=AgentStatus.BARRED)
        self._records[agent_id] = rec
        self._revetted.discard(agent_id)
        self.ledger.record_stake_change(agent_id, f"bar: {reason}", 0, rec.stake, rec.status.value)
        return rec
