"""Tunable governance parameters.

All thresholds the agents and the governance loop consult live here so that
scenarios can override them and governance can change them at runtime through
``ParamChange`` ledger events.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from decimal import Decimal
from typing import Any

from .errors import ParamRangeError

BP_SCALE = 10_000

_BP_FIELDS = (
    "valuation_flag_bp",
    "valuation_adjust_bp",
    "slash_negligence_bp",
    "slash_malice_bp",
    "wash_overlap_bp",
    "resale_price_bp",
    "default_max_holding_bp",
)
_FRACTION_FIELDS = (
    "trust_threshold",
    "trust_init",
    "trust_cap",
    "trust_recovery",
    "penalty_negligence",
    "penalty_malice",
)
_POSITIVE_INT_FIELDS = (
    "verification_quorum",
    "volume_window",
    "volume_baseline_windows",
    "wash_window",
    "wash_round_trips",
    "resale_ticks",
    "corroboration_ticks",
)
_NONNEG_INT_FIELDS = ("appraisal_max_age_months", "min_stake", "reward_fee", "fraud_quorum")


@dataclass
class GovernanceParams:
    # trust scores
    trust_threshold: Decimal = Decimal("0.5")
    trust_init: Decimal = Decimal("0.8")
    trust_cap: Decimal = Decimal("0.95")
    trust_recovery: Decimal = Decimal("0.01")
    penalty_negligence: Decimal = Decimal("0.3")
    penalty_malice: Decimal = Decimal("0.6")
    # verification / valuation
    appraisal_max_age_months: int = 12
    valuation_flag_bp: int = 1500
    valuation_adjust_bp: int = 200
    verification_quorum: int = 1
    # staking
    slash_negligence_bp: int = 2000
    slash_malice_bp: int = 10_000
    min_stake: int = 1000
    reward_fee: int = 10
    # compliance
    default_max_holding_bp: int = 2000
    # monitoring: volume spike
    volume_window: int = 10
    volume_baseline_windows: int = 5
    volume_k: Decimal = Decimal("3")
    # monitoring: wash trading
    wash_window: int = 20
    wash_round_trips: int = 3
    wash_overlap_bp: int = 5000
    # monitoring: rapid resale
    resale_ticks: int = 5
    resale_price_bp: int = 2000
    # governance
    corroboration_ticks: int = 5
    # raise the verification quorum to this value after a fraudulent-asset
    # incident; 0 disables the policy
    fraud_quorum: int = 0
    auto_approve_governance: bool = True

    def __post_init__(self) -> None:
        for name in (*_FRACTION_FIELDS, "volume_k"):
            setattr(self, name, _as_decimal(getattr(self, name), name))
        self.validate()

    def validate(self) -> None:
        for name in _BP_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= BP_SCALE:
                raise ParamRangeError(f"{name} must be an integer in [0, {BP_SCALE}], got {value!r}")
        for name in _FRACTION_FIELDS:
            value = getattr(self, name)
            if not Decimal(0) <= value <= Decimal(1):
                raise ParamRangeError(f"{name} must lie in [0, 1], got {value}")
        for name in _POSITIVE_INT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ParamRangeError(f"{name} must be an integer >= 1, got {value!r}")
        for name in _NONNEG_INT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ParamRangeError(f"{name} must be an integer >= 0, got {value!r}")
        if self.volume_k < 0:
            raise ParamRangeError("volume_k must be non-negative")
        if not isinstance(self.auto_approve_governance, bool):
            raise ParamRangeError("auto_approve_governance must be a boolean")

    def replace(self, **changes: Any) -> GovernanceParams:
        """Return a validated copy with ``changes`` applied."""
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ParamRangeError(f"unknown governance parameter(s): {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = str(value) if isinstance(value, Decimal) else value
        return out


def _as_decimal(value: Any, name: str) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, bool):
        raise ParamRangeError(f"{name} must be numeric")
    if isinstance(value, (int, float, str)):
        try:
            # str() keeps 0.5 as Decimal("0.5") rather than its binary expansion
            return Decimal(str(value))
        except ArithmeticError as exc:
            raise ParamRangeError(f"{name} is not a number: {value!r}") from exc
    raise ParamRangeError(f"{name} must be numeric, got {type(value).__name__}")


def encode_param_value(value: Any) -> Any:
    """Ledger-payload form of a parameter value (Decimals become strings)."""
    return str(value) if isinstance(value, Decimal) else value
