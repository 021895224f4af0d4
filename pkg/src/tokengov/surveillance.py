"""Rule-based trade surveillance detectors.

Pure functions over a list of :class:`TradeRecord`; the monitoring agent wraps
them with de-duplication, and governance re-runs them against trades rebuilt
from the ledger to corroborate a report.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .params import BP_SCALE, GovernanceParams


@dataclass(frozen=True)
class TradeRecord:
    token_id: str
    sender: str
    recipient: str
    amount: int
    price: int
    tick: int
    seq: int = 0

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ValueError("trade amount must be positive")
        if self.price < 0:
            raise ValueError("trade price must be non-negative")


def trades_from_ledger(events: Iterable) -> list[TradeRecord]:
    """Rebuild trade records from accepted ``Transfer`` ledger events."""
    out = []
    for ev in events:
        if getattr(ev.kind, "value", ev.kind) != "Transfer":
            continue
        p = ev.payload
        out.append(TradeRecord(p["token_id"], p["from"], p["to"], p["amount"], p.get("price", 0), ev.tick, ev.seq))
    return out


def _ordered(trades: Iterable[TradeRecord]) -> list[TradeRecord]:
    return sorted(trades, key=lambda t: (t.tick, t.seq))


# ---------------------------------------------------------------------------
# volume spike


@dataclass(frozen=True)
class VolumeSpike:
    current: int
    baseline: tuple[int, ...]
    mean: float
    std: float


def window_volumes(trades: Sequence[TradeRecord], tick: int, window: int, count: int) -> np.ndarray:
    """Traded volume in ``count`` consecutive windows ending at ``tick``.

    Element ``count - 1`` is the current window ``(tick - window, tick]``; the
    earlier elements step back one window each.
    """
    start = tick - count * window + 1
    per_tick = np.zeros(count * window, dtype=np.int64)
    for t in trades:
        if start <= t.tick <= tick:
            per_tick[t.tick - start] += t.amount
    return per_tick.reshape(count, window).sum(axis=1)


def detect_volume_spike(
    trades: Sequence[TradeRecord], tick: int, params: GovernanceParams, start_tick: int = 0
) -> Optional[VolumeSpike]:
    """Current-window volume above ``mean + k * std`` of the baseline windows.

    Silent until ``volume_baseline_windows`` full windows exist after
    ``start_tick``.  A baseline with no volume at all never yields a spike.
    """
    window, baseline_n = params.volume_window, params.volume_baseline_windows
    if tick - start_tick + 1 < (baseline_n + 1) * window:
        return None
    vols = window_volumes(trades, tick, window, baseline_n + 1)
    baseline, current = vols[:-1], int(vols[-1])
    mean = float(baseline.mean())
    std = float(baseline.std())
    if mean <= 0:
        return None
    if current > mean + float(params.volume_k) * std:
        return VolumeSpike(current, tuple(int(v) for v in baseline), mean, std)
    return None


# ---------------------------------------------------------------------------
# wash trading


def amounts_overlap(a: int, b: int, overlap_bp: int) -> bool:
    """min(a, b) is at least ``overlap_bp`` of max(a, b)."""
    return min(a, b) * BP_SCALE >= overlap_bp * max(a, b)


def count_round_trips(trades: Sequence[TradeRecord], address: str, overlap_bp: int) -> int:
    """Greedy count of opposite-direction leg pairs with overlapping amounts.

    Legs are taken in (tick, seq) order; an unmatched leg stays open until an
    overlapping opposite leg closes it or a newer leg replaces it.  A transfer
    to oneself is a complete round trip on its own.
    """
    count = 0
    open_leg: Optional[tuple[str, int]] = None
    for t in _ordered(trades):
        if t.sender == address and t.recipient == address:
            count += 1
            continue
        if t.recipient == address:
            leg = ("buy", t.amount)
        elif t.sender == address:
            leg = ("sell", t.amount)
        else:
            continue
        if open_leg is not None and open_leg[0] != leg[0] and amounts_overlap(open_leg[1], leg[1], overlap_bp):
            count += 1
            open_leg = None
        else:
            open_leg = leg
    return count


def in_window(trades: Iterable[TradeRecord], tick: int, window: int) -> list[TradeRecord]:
    return [t for t in trades if tick - window < t.tick <= tick]


def detect_wash_trading(trades: Sequence[TradeRecord], tick: int, params: GovernanceParams) -> dict[str, int]:
    """Addresses with at least ``wash_round_trips`` round trips in the window,
    mapped to their round-trip count."""
    recent = in_window(trades, tick, params.wash_window)
    addresses = sorted({t.sender for t in recent} | {t.recipient for t in recent})
    hits = {}
    for addr in addresses:
        n = count_round_trips(recent, addr, params.wash_overlap_bp)
        if n >= params.wash_round_trips:
            hits[addr] = n
    return hits


# ---------------------------------------------------------------------------
# rapid resale


@dataclass(frozen=True)
class RapidResale:
    address: str
    buy_tick: int
    sell_tick: int
    buy_price: int
    sell_price: int
    sell_seq: int


def detect_rapid_resale(trades: Sequence[TradeRecord], tick: int, params: GovernanceParams) -> list[RapidResale]:
    """Sales within ``resale_ticks`` of the seller's latest purchase whose
    price moved by more than ``resale_price_bp``."""
    hits = []
    ordered = _ordered(t for t in trades if t.tick <= tick)
    last_buy: dict[str, TradeRecord] = {}
    for t in ordered:
        if t.sender != t.recipient:
            bought = last_buy.get(t.sender)
            if (
                bought is not None
                and t.tick - bought.tick <= params.resale_ticks
                and bought.price > 0
                and tick - params.resale_ticks <= t.tick
                and abs(t.price - bought.price) * BP_SCALE > params.resale_price_bp * bought.price
            ):
                hits.append(RapidResale(t.sender, bought.tick, t.tick, bought.price, t.price, t.seq))
        last_buy[t.recipient] = t
    return hits


# ---------------------------------------------------------------------------
# flagged counterparties


def detect_flagged_counterparties(
    trades: Sequence[TradeRecord], tick: int, window: int, is_flagged: Callable[[str], bool]
) -> list[str]:
    """Addresses flagged by ``is_flagged`` that traded in the window, sorted."""
    seen = set()
    for t in in_window(trades, tick, window):
        for addr in (t.sender, t.recipient):
            if is_flagged(addr):
                seen.add(addr)
    return sorted(seen)
