"""Deterministic simulator of an agent-governed asset tokenization platform."""
from .agents import (
    AgentNetwork,
    AgentReport,
    Classification,
    RequestState,
    Severity,
    TokenizationRequest,
    monitor_trades,
)
from .governance import ActionKind, GovernanceAction, GovernanceAgent, Incident, IncidentClass
from .harness import RunReport, Scenario, Simulation, load_scenario, replay_verify, run_scenario
from .ledger import EventKind, Ledger, LedgerEvent, RejectReason, Restrictions, TokenClass
from .oracles import OracleSim
from .params import GovernanceParams
from .staking import AgentRecord, AgentRole, AgentStatus, StakeRegistry
from .surveillance import TradeRecord

__all__ = [
    "ActionKind",
    "AgentNetwork",
    "AgentRecord",
    "AgentReport",
    "AgentRole",
    "AgentStatus",
    "Classification",
    "EventKind",
    "GovernanceAction",
    "GovernanceAgent",
    "GovernanceParams",
    "Incident",
    "IncidentClass",
    "Ledger",
    "LedgerEvent",
    "OracleSim",
    "RejectReason",
    "RequestState",
    "Restrictions",
    "RunReport",
    "Scenario",
    "Severity",
    "Simulation",
    "StakeRegistry",
    "TokenClass",
    "TokenizationRequest",
    "TradeRecord",
    "load_scenario",
    "monitor_trades",
    "replay_verify",
    "run_scenario",
]
