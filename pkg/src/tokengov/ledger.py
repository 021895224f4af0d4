"""Simulated blockchain layer.

An append-only, sequence-numbered event log whose entries are chained by
SHA-256, plus the token-class state derived from it.  Transfer restrictions
(whitelist, holding cap, freeze) are enforced here, and the privileged powers
of the governance contract (freeze, blacklist, slash record, parameter store)
are exposed as capability-gated methods.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import IO, Any, Iterable, Iterator, Mapping, NamedTuple, Optional

from .errors import (
    CapabilityError,
    DoubleTokenization,
    HoldingsNonZero,
    NotApproved,
    ParamRangeError,
    UnknownToken,
)
from .params import BP_SCALE, GovernanceParams, encode_param_value

logger = logging.getLogger(__name__)

GENESIS_HASH = bytes(32)


class EventKind(str, Enum):
    MINT = "Mint"
    TRANSFER = "Transfer"
    TRANSFER_REJECTED = "TransferRejected"
    FREEZE = "Freeze"
    UNFREEZE = "Unfreeze"
    SLASH = "Slash"
    INCIDENT_RECORD = "IncidentRecord"
    PARAM_CHANGE = "ParamChange"
    WHITELIST_CHANGE = "WhitelistChange"
    APPROVAL_RECORD = "ApprovalRecord"
    STAKE_CHANGE = "StakeChange"


class RejectReason(str, Enum):
    NOT_WHITELISTED = "NotWhitelisted"
    EXCEEDS_HOLDING_CAP = "ExceedsHoldingCap"
    FROZEN = "Frozen"
    INSUFFICIENT_BALANCE = "InsufficientBalance"
    UNKNOWN_TOKEN = "UnknownToken"


class Capability(str, Enum):
    """Who is calling a privileged ledger method."""

    GOVERNANCE = "Governance"
    COMPLIANCE = "Compliance"
    TOKENIZATION = "Tokenization"
    STAKING = "Staking"


# ---------------------------------------------------------------------------
# canonical encoding


def canonical_encode(value: Any) -> bytes:
    """Type-tagged, length-prefixed byte encoding with mapping keys sorted.

    Only JSON-representable values are accepted (plus tuples, treated as
    lists) so that an exported event re-encodes to the same bytes after a
    JSON round trip.  Floats are rejected: amounts are integers and fractions
    travel as decimal strings.
    """
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _frame(tag: bytes, body: bytes, out: bytearray) -> None:
    out += tag
    out += len(body).to_bytes(8, "big")
    out += body


def _encode_into(value: Any, out: bytearray) -> None:
    if value is None:
        _frame(b"N", b"", out)
    elif isinstance(value, bool):
        _frame(b"B", b"\x01" if value else b"\x00", out)
    elif isinstance(value, int):
        _frame(b"I", str(value).encode("ascii"), out)
    elif isinstance(value, str):
        _frame(b"S", value.encode("utf-8"), out)
    elif isinstance(value, Mapping):
        body = bytearray()
        keys = list(value)
        if not all(isinstance(k, str) for k in keys):
            raise TypeError("mapping keys must be strings")
        for key in sorted(keys):
            _encode_into(key, body)
            _encode_into(value[key], body)
        _frame(b"D", bytes(body), out)
    elif isinstance(value, (list, tuple)):
        body = bytearray()
        for item in value:
            _encode_into(item, body)
        _frame(b"L", bytes(body), out)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def compute_event_hash(prev_hash: bytes, seq: int, tick: int, kind: str, payload: Any) -> bytes:
    body = canonical_encode({"seq": seq, "tick": tick, "kind": kind, "payload": payload})
    return hashlib.sha256(prev_hash + body).digest()


def _freeze(value: Any) -> Any:
    if isinstance(value, Mapping):
        return MappingProxyType({str(k): _freeze(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, Enum):
        return value.value
    return value


def thaw(value: Any) -> Any:
    """Plain dict/list copy of a frozen payload."""
    if isinstance(value, Mapping):
        return {k: thaw(v) for k, v in value.items()}
    if isinstance(value, tuple):
        return [thaw(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class LedgerEvent:
    seq: int
    tick: int
    kind: EventKind
    payload: Mapping[str, Any]
    hash: bytes

    def to_json(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "kind": self.kind.value,
            "payload": thaw(self.payload),
            "hash": self.hash.hex(),
        }


@dataclass(frozen=True)
class Restrictions:
    whitelist_required: bool = True
    accredited_only: bool = True
    max_holding_bp: int = 2000

    def __post_init__(self) -> None:
        if not 0 <= self.max_holding_bp <= BP_SCALE:
            raise ParamRangeError(f"max_holding_bp out of range: {self.max_holding_bp}")

    def to_payload(self) -> dict[str, Any]:
        return {
            "whitelist_required": self.whitelist_required,
            "accredited_only": self.accredited_only,
            "max_holding_bp": self.max_holding_bp,
        }


@dataclass
class TokenClass:
    token_id: str
    asset_id: str
    total_supply: int
    issuer: str
    restrictions: Restrictions
    holdings: dict[str, int] = field(default_factory=dict)
    whitelist: set[str] = field(default_factory=set)
    frozen: bool = False
    metadata_hash: str = ""
    initial_price: int = 0
    minted_tick: int = 0

    @property
    def max_holding_bp(self) -> int:
        return self.restrictions.max_holding_bp

    @property
    def holding_cap(self) -> int:
        return self.total_supply * self.restrictions.max_holding_bp // BP_SCALE

    def balance(self, address: str) -> int:
        return self.holdings.get(address, 0)


class TransferResult(NamedTuple):
    accepted: bool
    reason: Optional[RejectReason] = None

    def __bool__(self) -> bool:
        return self.accepted


@dataclass(frozen=True)
class _PendingParam:
    name: str
    value: Any
    effective_tick: int


_CAPS_FREEZE = frozenset({Capability.GOVERNANCE})
_CAPS_WHITELIST = frozenset({Capability.GOVERNANCE, Capability.COMPLIANCE})
_CAPS_MINT = frozenset({Capability.TOKENIZATION})
_CAPS_APPROVAL = frozenset(Capability)
_CAPS_STAKE = frozenset({Capability.STAKING, Capability.GOVERNANCE})
_CAPS_INCIDENT = frozenset({Capability.GOVERNANCE})


def _require(caller: Capability, allowed: frozenset[Capability], what: str) -> None:
    if caller not in allowed:
        raise CapabilityError(f"{caller.value} may not {what}")


# ---------------------------------------------------------------------------
# ledger


class Ledger:
    """In-memory append-only ledger with token-class state.

    Mutations happen on a single thread (the harness loop).  ``tick`` is the
    logical clock stamped onto every appended event.
    """

    def __init__(self, params: Optional[GovernanceParams] = None) -> None:
        self.params = params if params is not None else GovernanceParams()
        self.tick = 0
        self._events: list[LedgerEvent] = []
        self.tokens: dict[str, TokenClass] = {}
        self._asset_tokens: dict[str, str] = {}
        self._requests: dict[str, Any] = {}
        self._approvals: dict[str, list[tuple[str, str]]] = {}
        self.blacklist: set[str] = set()
        self._pending_params: list[_PendingParam] = []

    # -- log ---------------------------------------------------------------

    @property
    def events(self) -> tuple[LedgerEvent, ...]:
        return tuple(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[LedgerEvent]:
        return iter(tuple(self._events))

    @property
    def head_hash(self) -> bytes:
        return self._events[-1].hash if self._events else GENESIS_HASH

    @property
    def final_hash(self) -> str:
        return self.head_hash.hex()

    def append_event(self, kind: EventKind, payload: Mapping[str, Any]) -> LedgerEvent:
        kind = EventKind(kind)
        frozen = _freeze(payload)
        # a payload that cannot be encoded is a programming error
        digest = compute_event_hash(self.head_hash, len(self._events), self.tick, kind.value, frozen)
        event = LedgerEvent(seq=len(self._events), tick=self.tick, kind=kind, payload=frozen, hash=digest)
        self._events.append(event)
        logger.debug("ledger %d %s %s", event.seq, kind.value, dict(frozen))
        return event

    def events_of(self, *kinds: EventKind) -> list[LedgerEvent]:
        wanted = set(kinds)
        return [e for e in self._events if e.kind in wanted]

    def verify_chain(self) -> Optional[int]:
        """Recompute the chain; return the first bad seq, or None if intact."""
        return first_chain_mismatch(e.to_json() for e in self._events)

    def export_ndjson(self, fh: IO[str]) -> None:
        for event in self._events:
            fh.write(json.dumps(event.to_json(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")

    # -- parameters ----------------------------------------------------------

    def begin_tick(self, tick: int) -> None:
        """Advance the logical clock and activate parameter changes now due."""
        if tick < self.tick:
            raise ValueError(f"logical clock cannot run backwards ({tick} < {self.tick})")
        self.tick = tick
        due = [p for p in self._pending_params if p.effective_tick <= tick]
        if due:
            self._pending_params = [p for p in self._pending_params if p.effective_tick > tick]
            params = self.params
            for change in due:
                params = params.replace(**{change.name: change.value})
            self.params = params

    def schedule_param_change(
        self, name: str, value: Any, reason: str, caller: Capability = Capability.GOVERNANCE
    ) -> LedgerEvent:
        """Validate and log a parameter change that takes effect on the next tick."""
        _require(caller, _CAPS_FREEZE, "change parameters")
        probe = self.params.replace(**{name: value})  # raises on bad name or range
        value = getattr(probe, name)
        old = getattr(self.params, name)
        self._pending_params.append(_PendingParam(name, value, self.tick + 1))
        return self.append_event(
            EventKind.PARAM_CHANGE,
            {
                "param": name,
                "old": encode_param_value(old),
                "new": encode_param_value(value),
                "effective_tick": self.tick + 1,
                "reason": reason,
            },
        )

    # -- tokenization ----------------------------------------------------------

    def register_request(self, request: Any) -> None:
        """Track a tokenization request so minting can check its approval state."""
        self._requests[request.asset_id] = request

    def record_approval(
        self,
        asset_id: str,
        agent_id: str,
        role: str,
        caller: Capability = Capability.TOKENIZATION,
        **details: Any,
    ) -> LedgerEvent:
        _require(caller, _CAPS_APPROVAL, "record approvals")
        self._approvals.setdefault(asset_id, []).append((agent_id, role))
        payload = {"asset_id": asset_id, "agent_id": agent_id, "role": role, **details}
        return self.append_event(EventKind.APPROVAL_RECORD, payload)

    def recorded_approvals(self, asset_id: str) -> list[tuple[str, str]]:
        return list(self._approvals.get(asset_id, ()))

    def token_for_asset(self, asset_id: str) -> Optional[str]:
        return self._asset_tokens.get(asset_id)

    def mint_tokens(
        self,
        asset_id: str,
        total_supply: int,
        owner_address: str,
        restrictions: Restrictions,
        *,
        token_id: Optional[str] = None,
        metadata_hash: str = "",
        initial_price: int = 0,
        caller: Capability = Capability.TOKENIZATION,
    ) -> str:
        _require(caller, _CAPS_MINT, "mint tokens")
        if asset_id in self._asset_tokens:
            raise DoubleTokenization(f"asset {asset_id} is already tokenized as {self._asset_tokens[asset_id]}")
        request = self._requests.get(asset_id)
        if request is None or _state_name(request.state) != "Approved":
            state = None if request is None else _state_name(request.state)
            raise NotApproved(f"request for {asset_id} is not Approved (state={state})")
        if not self._quorum_recorded(asset_id):
            raise NotApproved(f"approvals for {asset_id} recorded on the ledger do not meet quorum")
        if total_supply <= 0:
            raise ValueError("total_supply must be positive")
        token_id = token_id or asset_id
        if token_id in self.tokens:
            raise DoubleTokenization(f"token id {token_id} already exists")
        token = TokenClass(
            token_id=token_id,
            asset_id=asset_id,
            total_supply=total_supply,
            issuer=owner_address,
            restrictions=restrictions,
            holdings={owner_address: total_supply},
            whitelist={owner_address},
            metadata_hash=metadata_hash,
            initial_price=initial_price,
            minted_tick=self.tick,
        )
        self.tokens[token_id] = token
        self._asset_tokens[asset_id] = token_id
        self.append_event(
            EventKind.MINT,
            {
                "token_id": token_id,
                "asset_id": asset_id,
                "total_supply": total_supply,
                "owner": owner_address,
                "restrictions": restrictions.to_payload(),
                "metadata_hash": metadata_hash,
                "initial_price": initial_price,
            },
        )
        return token_id

    def _quorum_recorded(self, asset_id: str) -> bool:
        roles = [role for _, role in self._approvals.get(asset_id, ())]
        return (
            roles.count("Verification") >= self.params.verification_quorum
            and roles.count("Valuation") >= 1
            and roles.count("Compliance") >= 1
        )

    # -- transfers ---------------------------------------------------------------

    def execute_transfer(
        self, token_id: str, sender: str, recipient: str, amount: int, price: int = 0
    ) -> TransferResult:
        if amount <= 0:
            raise ValueError("transfer amount must be positive")
        reason = self._transfer_rejection(token_id, sender, recipient, amount)
        payload = {"token_id": token_id, "from": sender, "to": recipient, "amount": amount, "price": price}
        if reason is not None:
            self.append_event(EventKind.TRANSFER_REJECTED, {**payload, "reason": reason.value})
            return TransferResult(False, reason)
        token = self.tokens[token_id]
        if sender != recipient:
            token.holdings[sender] -= amount
            if token.holdings[sender] == 0:
                del token.holdings[sender]
            token.holdings[recipient] = token.balance(recipient) + amount
        self.append_event(EventKind.TRANSFER, payload)
        return TransferResult(True)

    def _transfer_rejection(self, token_id: str, sender: str, recipient: str, amount: int) -> Optional[RejectReason]:
        token = self.tokens.get(token_id)
        if token is None:
            return RejectReason.UNKNOWN_TOKEN
        if token.frozen:
            return RejectReason.FROZEN
        if sender in self.blacklist or recipient in self.blacklist:
            return RejectReason.NOT_WHITELISTED
        if token.restrictions.whitelist_required and (
            sender not in token.whitelist or recipient not in token.whitelist
        ):
            return RejectReason.NOT_WHITELISTED
        if token.balance(sender) < amount:
            return RejectReason.INSUFFICIENT_BALANCE
        if recipient != sender and recipient != token.issuer:
            if token.balance(recipient) + amount > token.holding_cap:
                return RejectReason.EXCEEDS_HOLDING_CAP
        return None

    def transfers(self, token_id: str) -> list[LedgerEvent]:
        return [e for e in self._events if e.kind is EventKind.TRANSFER and e.payload["token_id"] == token_id]

    # -- governance powers -----------------------------------------------------

    def set_frozen(
        self, token_id: str, frozen: bool, reason: str, caller: Capability = Capability.GOVERNANCE
    ) -> Optional[LedgerEvent]:
        """Freeze or unfreeze a token class.

        Returns the appended event, or None when the token is already in the
        requested state (no duplicate Freeze/Unfreeze is logged).
        """
        _require(caller, _CAPS_FREEZE, "freeze tokens")
        token = self._token(token_id)
        if token.frozen == frozen:
            return None
        token.frozen = frozen
        kind = EventKind.FREEZE if frozen else EventKind.UNFREEZE
        return self.append_event(kind, {"token_id": token_id, "reason": reason})

    def update_whitelist(
        self,
        token_id: str,
        address: str,
        add: bool,
        caller: Capability = Capability.COMPLIANCE,
        *,
        override: bool = False,
        reason: str = "",
    ) -> LedgerEvent:
        _require(caller, _CAPS_WHITELIST, "change whitelists")
        if override and caller is not Capability.GOVERNANCE:
            raise CapabilityError("only governance may override whitelist removal")
        token = self._token(token_id)
        if add:
            token.whitelist.add(address)
        else:
            if token.balance(address) > 0 and not override:
                raise HoldingsNonZero(f"{address} still holds {token.balance(address)} {token_id}")
            token.whitelist.discard(address)
        return self.append_event(
            EventKind.WHITELIST_CHANGE,
            {
                "token_id": token_id,
                "address": address,
                "action": "add" if add else "remove",
                "override": override,
                "reason": reason,
            },
        )

    def blacklist_address(
        self, token_id: str, address: str, reason: str, caller: Capability = Capability.GOVERNANCE
    ) -> LedgerEvent:
        """Bar ``address`` from trading: remove it from the token's whitelist with override."""
        _require(caller, _CAPS_FREEZE, "blacklist addresses")
        self.blacklist.add(address)
        return self.update_whitelist(token_id, address, False, caller, override=True, reason=f"blacklist: {reason}")

    def record_incident(self, incident: Any, caller: Capability = Capability.GOVERNANCE) -> LedgerEvent:
        _require(caller, _CAPS_INCIDENT, "record incidents")
        payload = incident.to_payload() if hasattr(incident, "to_payload") else dict(incident)
        return self.append_event(EventKind.INCIDENT_RECORD, payload)

    def record_slash(
        self, agent_id: str, amount_bp: int, slashed: int, reason: str, stake_after: int, status: str,
        caller: Capability = Capability.STAKING,
    ) -> LedgerEvent:
        _require(caller, _CAPS_STAKE, "record slashes")
        return self.append_event(
            EventKind.SLASH,
            {
                "agent_id": agent_id,
                "amount_bp": amount_bp,
                "slashed": slashed,
                "reason": reason,
                "stake_after": stake_after,
                "status": status,
            },
        )

    def record_stake_change(
        self, agent_id: str, action: str, amount: int, stake_after: int, status: str,
        caller: Capability = Capability.STAKING,
    ) -> LedgerEvent:
        _require(caller, _CAPS_STAKE, "record stake changes")
        return self.append_event(
            EventKind.STAKE_CHANGE,
            {"agent_id": agent_id, "action": action, "amount": amount, "stake_after": stake_after, "status": status},
        )

    def _token(self, token_id: str) -> TokenClass:
        try:
            return self.tokens[token_id]
        except KeyError:
            raise UnknownToken(token_id) from None


def _state_name(state: Any) -> str:
    return state.value if isinstance(state, Enum) else str(state)


def first_chain_mismatch(records: Iterable[Mapping[str, Any]]) -> Optional[int]:
    """Walk exported event records from genesis; return the first seq whose
    stored hash (or sequence number) does not match, else None."""
    prev = GENESIS_HASH
    for expected_seq, rec in enumerate(records):
        seq = rec.get("seq")
        if seq != expected_seq:
            return expected_seq
        try:
            digest = compute_event_hash(prev, seq, rec["tick"], rec["kind"], rec["payload"])
        except (KeyError, TypeError):
            return expected_seq
        if digest.hex() != rec.get("hash"):
            return expected_seq
        prev = digest
    return None
