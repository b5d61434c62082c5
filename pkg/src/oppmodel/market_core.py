"""Limit order book with price-time priority matching and L2 metrics.

Prices are integer ticks, sizes integer units. A book is owned by a single
simulation thread; the metric functions at the bottom are pure.
"""

from __future__ import annotations

import bisect
import csv
import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class Side(enum.IntEnum):
    BUY = 1
    SELL = -1

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class OrderKind(enum.Enum):
    LIMIT = "limit"
    MARKET = "market"
    CANCEL = "cancel"


class CancelStatus(enum.Enum):
    CANCELLED = "cancelled"
    NOT_FOUND = "not_found"


class OrderRejected(ValueError):
    """Raised when an order violates book preconditions."""


class UndefinedMetric(ValueError):
    """A metric needs a best level that is absent from the snapshot."""


@dataclass
class Order:
    order_id: int
    agent_id: int
    side: Side
    kind: OrderKind
    size: int
    timestamp: int
    price: int | None = None
    # for CANCEL orders: the id being cancelled
    target_id: int | None = None


@dataclass(frozen=True)
class Fill:
    taker_order_id: int
    maker_order_id: int
    price: int
    size: int
    timestamp: int
    taker_agent_id: int = -1
    maker_agent_id: int = -1


@dataclass
class LimitResult:
    fills: list[Fill]
    remainder: int


@dataclass
class MarketResult:
    fills: list[Fill]
    unfilled: int


@dataclass(frozen=True)
class LOBSnapshot:
    """Top two aggregated levels per side. Absent levels are price 0, size 0."""

    timestamp: int
    bid_prices: tuple[int, int] = (0, 0)
    bid_sizes: tuple[int, int] = (0, 0)
    ask_prices: tuple[int, int] = (0, 0)
    ask_sizes: tuple[int, int] = (0, 0)

    def has_bid(self, level: int = 0) -> bool:
        return self.bid_sizes[level] > 0

    def has_ask(self, level: int = 0) -> bool:
        return self.ask_sizes[level] > 0

    @property
    def two_sided(self) -> bool:
        return self.has_bid() and self.has_ask()

    @property
    def best(self) -> tuple[int, int, int, int]:
        """(best bid, bid size, best ask, ask size)."""
        return self.bid_prices[0], self.bid_sizes[0], self.ask_prices[0], self.ask_sizes[0]

    def as_row(self) -> list[int]:
        return [
            self.timestamp,
            self.bid_prices[0], self.bid_sizes[0], self.bid_prices[1], self.bid_sizes[1],
            self.ask_prices[0], self.ask_sizes[0], self.ask_prices[1], self.ask_sizes[1],
        ]

    @classmethod
    def from_row(cls, row: Sequence[int]) -> "LOBSnapshot":
        t, bp0, bs0, bp1, bs1, ap0, as0, ap1, as1 = (int(v) for v in row)
        return cls(t, (bp0, bp1), (bs0, bs1), (ap0, ap1), (as0, as1))


SNAPSHOT_COLUMNS = [
    "timestamp",
    "bid_price_0", "bid_size_0", "bid_price_1", "bid_size_1",
    "ask_price_0", "ask_size_0", "ask_price_1", "ask_size_1",
]
TRADE_COLUMNS = ["timestamp", "taker_id", "maker_id", "price", "size"]


class _Resting:
    __slots__ = ("order_id", "agent_id", "side", "price", "remaining", "seq")

    def __init__(self, order: Order, seq: int):
        self.order_id = order.order_id
        self.agent_id = order.agent_id
        self.side = order.side
        self.price = order.price
        self.remaining = order.size
        self.seq = seq


class _Level:
    __slots__ = ("price", "queue", "volume")

    def __init__(self, price: int):
        self.price = price
        self.queue: deque[_Resting] = deque()
        self.volume = 0


class _BookSide:
    """One side of the book: price -> FIFO level, plus a sorted price index.

    Prices are kept ascending; the best bid is the last entry, the best ask
    the first.
    """

    def __init__(self, side: Side):
        self.side = side
        self.levels: dict[int, _Level] = {}
        self.prices: list[int] = []

    def __bool__(self) -> bool:
        return bool(self.prices)

    def best_price(self) -> int:
        return self.prices[-1] if self.side is Side.BUY else self.prices[0]

    def best_level(self) -> _Level:
        return self.levels[self.best_price()]

    def add(self, resting: _Resting) -> None:
        level = self.levels.get(resting.price)
        if level is None:
            level = self.levels[resting.price] = _Level(resting.price)
            bisect.insort(self.prices, resting.price)
        level.queue.append(resting)
        level.volume += resting.remaining

    def drop_level(self, price: int) -> None:
        del self.levels[price]
        idx = bisect.bisect_left(self.prices, price)
        del self.prices[idx]

    def top(self, n: int) -> list[tuple[int, int]]:
        if self.side is Side.BUY:
            prices = self.prices[::-1][:n]
        else:
            prices = self.prices[:n]
        return [(p, self.levels[p].volume) for p in prices]

    def crosses(self, limit: int | None) -> bool:
        """True when an incoming opposite order at `limit` can trade here."""
        if not self.prices:
            return False
        if limit is None:
            return True
        best = self.best_price()
        return best <= limit if self.side is Side.SELL else best >= limit


@dataclass
class OrderBook:
    """Single-instrument limit order book.

    Incoming orders cross the opposite side from the best price outward,
    FIFO within a level, trading at the resting (maker) price.
    """

    bids: _BookSide = field(default_factory=lambda: _BookSide(Side.BUY))
    asks: _BookSide = field(default_factory=lambda: _BookSide(Side.SELL))
    next_order_id: int = 1
    event_counter: int = 0
    _live: dict[int, _Resting] = field(default_factory=dict)
    _last_id: int = 0

    def new_id(self) -> int:
        oid = self.next_order_id
        self.next_order_id += 1
        return oid

    def _side(self, side: Side) -> _BookSide:
        return self.bids if side is Side.BUY else self.asks

    def _accept_id(self, order: Order) -> None:
        if order.order_id <= self._last_id:
            raise OrderRejected(
                f"order_id {order.order_id} not above last accepted id {self._last_id}"
            )
        self._last_id = order.order_id
        self.next_order_id = max(self.next_order_id, order.order_id + 1)

    def _match(self, order: Order, limit: int | None) -> tuple[list[Fill], int]:
        book = self._side(order.side.opposite)
        remaining = order.size
        fills: list[Fill] = []
        while remaining and book.crosses(limit):
            level = book.best_level()
            while remaining and level.queue:
                maker = level.queue[0]
                qty = min(remaining, maker.remaining)
                fills.append(Fill(order.order_id, maker.order_id, level.price, qty,
                                  order.timestamp, order.agent_id, maker.agent_id))
                remaining -= qty
                maker.remaining -= qty
                level.volume -= qty
                if maker.remaining == 0:
                    level.queue.popleft()
                    del self._live[maker.order_id]
            if not level.queue:
                book.drop_level(level.price)
        return fills, remaining

    def submit_limit(self, order: Order) -> LimitResult:
        if order.kind is not OrderKind.LIMIT:
            raise OrderRejected(f"expected a limit order, got {order.kind.value}")
        if order.size < 1:
            raise OrderRejected(f"nonpositive size {order.size}")
        if order.price is None or order.price < 1:
            raise OrderRejected(f"invalid limit price {order.price}")
        self._accept_id(order)
        self.event_counter += 1
        fills, remaining = self._match(order, order.price)
        if remaining:
            resting = _Resting(order, self.event_counter)
            resting.remaining = remaining
            self._side(order.side).add(resting)
            self._live[order.order_id] = resting
        return LimitResult(fills, remaining)

    def submit_market(self, order: Order) -> MarketResult:
        if order.kind is not OrderKind.MARKET:
            raise OrderRejected(f"expected a market order, got {order.kind.value}")
        if order.size < 1:
            raise OrderRejected(f"nonpositive size {order.size}")
        self._accept_id(order)
        self.event_counter += 1
        fills, remaining = self._match(order, None)
        return MarketResult(fills, remaining)

    def cancel(self, order_id: int) -> CancelStatus:
        resting = self._live.pop(order_id, None)
        if resting is None:
            return CancelStatus.NOT_FOUND
        self.event_counter += 1
        side = self._side(resting.side)
        level = side.levels[resting.price]
        level.queue.remove(resting)
        level.volume -= resting.remaining
        if not level.queue:
            side.drop_level(resting.price)
        return CancelStatus.CANCELLED

    def submit(self, order: Order) -> LimitResult | MarketResult | CancelStatus:
        if order.kind is OrderKind.LIMIT:
            return self.submit_limit(order)
        if order.kind is OrderKind.MARKET:
            return self.submit_market(order)
        return self.cancel(order.target_id if order.target_id is not None else order.order_id)

    def is_live(self, order_id: int) -> bool:
        return order_id in self._live

    def remaining(self, order_id: int) -> int:
        resting = self._live.get(order_id)
        return resting.remaining if resting else 0

    def best_bid(self) -> int | None:
        return self.bids.best_price() if self.bids else None

    def best_ask(self) -> int | None:
        return self.asks.best_price() if self.asks else None

    def depth(self, side: Side) -> list[tuple[int, int]]:
        """All levels of one side, best first, as (price, volume)."""
        book = self._side(side)
        return book.top(len(book.prices))

    def snapshot(self, timestamp: int) -> LOBSnapshot:
        bids = self.bids.top(2) + [(0, 0)] * 2
        asks = self.asks.top(2) + [(0, 0)] * 2
        return LOBSnapshot(
            timestamp,
            (bids[0][0], bids[1][0]), (bids[0][1], bids[1][1]),
            (asks[0][0], asks[1][0]), (asks[0][1], asks[1][1]),
        )


def _require_two_sided(snap: LOBSnapshot) -> None:
    if not snap.has_bid():
        raise UndefinedMetric("bid side is empty")
    if not snap.has_ask():
        raise UndefinedMetric("ask side is empty")


def mid_price(snap: LOBSnapshot) -> float:
    _require_two_sided(snap)
    return (snap.bid_prices[0] + snap.ask_prices[0]) / 2


def spread(snap: LOBSnapshot) -> int:
    _require_two_sided(snap)
    return snap.ask_prices[0] - snap.bid_prices[0]


def volume_imbalance(snap: LOBSnapshot) -> float:
    """Best ask size over best bid size."""
    _require_two_sided(snap)
    return snap.ask_sizes[0] / snap.bid_sizes[0]


def ofi_step(prev: Sequence[float], cur: Sequence[float]) -> float:
    """Best-level order flow contribution between two (B, qb, A, qa) tuples."""
    pb, pqb, pa, pqa = prev
    b, qb, a, qa = cur
    e = 0.0
    if b >= pb:
        e += qb
    if b <= pb:
        e -= pqb
    if a <= pa:
        e -= qa
    if a >= pa:
        e += pqa
    return e


def order_flow_imbalance(window: Sequence[LOBSnapshot] | Sequence[Sequence[float]]) -> float:
    """Sum of best-level flow events over consecutive snapshots.

    Accepts snapshots or raw (bid, bid size, ask, ask size) tuples.
    """
    if len(window) < 2:
        raise ValueError(f"order flow imbalance needs at least 2 snapshots, got {len(window)}")
    quads = []
    for item in window:
        if isinstance(item, LOBSnapshot):
            _require_two_sided(item)
            quads.append(item.best)
        else:
            quads.append(tuple(item))
    return float(sum(ofi_step(quads[i - 1], quads[i]) for i in range(1, len(quads))))


def write_trades_csv(fills: Iterable[Fill], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRADE_COLUMNS)
        for f in fills:
            w.writerow([f.timestamp, f.taker_order_id, f.maker_order_id, f.price, f.size])


def write_snapshots_csv(snaps: Iterable[LOBSnapshot], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_COLUMNS)
        for s in snaps:
            w.writerow(s.as_row())


def read_snapshots_csv(path) -> list[LOBSnapshot]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [LOBSnapshot.from_row(r) for r in rows[1:]]
