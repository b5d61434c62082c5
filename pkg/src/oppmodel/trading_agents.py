"""Agent archetypes, background liquidity, and the discrete-event trading day.

Each archetype decision is a small function of what the agent observed
(snapshot, its own mid history) plus its RNG, returning order intents. The
simulator turns intents into book orders and records every non-background
order together with the state the agent saw before sending it.
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .market_core import (
    Fill,
    LOBSnapshot,
    Order,
    OrderBook,
    OrderKind,
    Side,
    mid_price,
)


class Archetype(enum.IntEnum):
    MM = 0
    LC = 1
    ME = 2
    MO = 3


@dataclass(frozen=True)
class Intent:
    side: Side
    kind: OrderKind
    size: int
    price: int | None = None


@dataclass
class AgentConfig:
    archetype: Archetype
    variant: str
    wakeup_mean: float
    v_min: int
    v_max: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.v_min > self.v_max:
            raise ValueError(f"v_min {self.v_min} exceeds v_max {self.v_max}")
        if self.v_min < 1:
            raise ValueError("order sizes must be at least 1")
        if self.wakeup_mean < 1:
            raise ValueError("wakeup_mean must be at least 1 tick")


class MidHistory:
    """Fixed-capacity record of the mids one agent has observed."""

    def __init__(self, capacity: int = 64):
        if capacity < 50:
            raise ValueError("capacity must be at least 50")
        self.capacity = capacity
        self.mids: deque[float] = deque(maxlen=capacity)
        self.times: deque[int] = deque(maxlen=capacity)

    def append(self, t: int, mid: float) -> None:
        if self.times and t < self.times[-1]:
            raise ValueError("observations must arrive in time order")
        self.mids.append(mid)
        self.times.append(t)

    def __len__(self) -> int:
        return len(self.mids)

    def values(self) -> np.ndarray:
        return np.fromiter(self.mids, dtype=float, count=len(self.mids))

    def last(self, n: int) -> list[float]:
        return list(self.mids)[-n:] if n else []


def _size(rng: np.random.Generator, v_min: int, v_max: int) -> int:
    return int(rng.integers(v_min, v_max + 1))


# ---------------------------------------------------------------- market makers

def mm_top_of_book(snap: LOBSnapshot, rng: np.random.Generator, v_min: int, v_max: int) -> list[Intent]:
    """Join the best bid and best ask; quote only the sides that exist."""
    out = []
    if snap.has_bid():
        out.append(Intent(Side.BUY, OrderKind.LIMIT, _size(rng, v_min, v_max), snap.bid_prices[0]))
    if snap.has_ask():
        out.append(Intent(Side.SELL, OrderKind.LIMIT, _size(rng, v_min, v_max), snap.ask_prices[0]))
    return out


def mm_deep(snap: LOBSnapshot, rng: np.random.Generator, v_min: int, v_max: int,
            n_min: int = 1, n_max: int = 3) -> list[Intent]:
    """Quote N ~ U{n_min..n_max} levels on each side, 1..N ticks away from the mid."""
    if n_min > n_max or n_min < 1:
        raise ValueError(f"bad level bounds [{n_min}, {n_max}]")
    n = int(rng.integers(n_min, n_max + 1))
    if snap.two_sided:
        m = mid_price(snap)
        buys = [math.floor(m - k) for k in range(1, n + 1)]
        sells = [math.ceil(m + k) for k in range(1, n + 1)]
    else:
        # one-sided: ladder away from the side that exists
        buys = [snap.bid_prices[0] - k for k in range(n)] if snap.has_bid() else []
        sells = [snap.ask_prices[0] + k for k in range(n)] if snap.has_ask() else []
    out = [Intent(Side.BUY, OrderKind.LIMIT, _size(rng, v_min, v_max), p) for p in buys if p >= 1]
    out += [Intent(Side.SELL, OrderKind.LIMIT, _size(rng, v_min, v_max), p) for p in sells]
    return out


@dataclass(frozen=True)
class ASQuote:
    reservation: float
    spread: float
    bid: float
    ask: float


def avellaneda_stoikov(s: float, q: float, t: float, sigma2: float,
                       gamma: float = 0.1, k: float = 1.5) -> ASQuote:
    """Reservation price and optimal total spread, before tick rounding."""
    if gamma <= 0 or k <= 0:
        raise ValueError(f"gamma and k must be positive, got gamma={gamma}, k={k}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time fraction {t} outside [0, 1]")
    remaining = 1.0 - t
    r = s - q * gamma * sigma2 * remaining
    delta = gamma * sigma2 * remaining + (2.0 / gamma) * math.log1p(gamma / k)
    return ASQuote(r, delta, r - delta / 2, r + delta / 2)


def mm_avellaneda_stoikov(snap: LOBSnapshot, rng: np.random.Generator, v_min: int, v_max: int,
                          inventory: float, t: float, sigma2: float,
                          gamma: float = 0.1, k: float = 1.5) -> list[Intent]:
    """Quote around the inventory-skewed reservation price, rounded outward and kept passive."""
    if not snap.two_sided:
        return mm_top_of_book(snap, rng, v_min, v_max)
    q = avellaneda_stoikov(mid_price(snap), inventory, t, sigma2, gamma, k)
    bid = math.floor(q.bid)
    ask = math.ceil(q.ask)
    best_bid, best_ask = snap.bid_prices[0], snap.ask_prices[0]
    bid = min(bid, best_ask - 1)
    ask = max(ask, best_bid + 1)
    if ask <= bid:
        ask = bid + 1
    out = []
    if bid >= 1:
        out.append(Intent(Side.BUY, OrderKind.LIMIT, _size(rng, v_min, v_max), bid))
    out.append(Intent(Side.SELL, OrderKind.LIMIT, _size(rng, v_min, v_max), ask))
    return out


def return_variance(mids: Sequence[float], window: int = 50) -> float:
    x = np.asarray(mids, dtype=float)[-window:]
    if x.size < 3:
        return 0.0
    return float(np.var(np.diff(x)))


# ---------------------------------------------------------------- takers

def liquidity_consumer(rng: np.random.Generator, v_min: int, v_max: int) -> Intent:
    side = Side.BUY if rng.random() < 0.5 else Side.SELL
    return Intent(side, OrderKind.MARKET, _size(rng, v_min, v_max))


def momentum(mids: Sequence[float], rng: np.random.Generator, v_min: int, v_max: int,
             short: int = 20, long: int = 50) -> Intent | None:
    """Buy when the short mean of observed mids exceeds the long mean, else sell."""
    if len(mids) < long:
        return None
    x = np.asarray(mids, dtype=float)
    side = Side.BUY if x[-short:].mean() > x[-long:].mean() else Side.SELL
    return Intent(side, OrderKind.MARKET, _size(rng, v_min, v_max))


def ewma_band(mids: Sequence[float], alpha: float = 0.06, window: int = 50) -> tuple[float, float, float]:
    """(latest mid, EWMA, std of the last `window` deviations from the EWMA).

    The EWMA is seeded with the first observation in the buffer.
    """
    x = np.asarray(mids, dtype=float)
    ewma = np.empty_like(x)
    acc = x[0]
    for i, m in enumerate(x):
        acc = alpha * m + (1.0 - alpha) * acc
        ewma[i] = acc
    dev = (x - ewma)[-window:]
    return float(x[-1]), float(ewma[-1]), float(dev.std())


def ewma_reversion(mids: Sequence[float], rng: np.random.Generator, v_min: int, v_max: int,
                   alpha: float = 0.06, z: float = 2.0, window: int = 50) -> Intent | None:
    """Sell above EWMA + z*s, buy below EWMA - z*s."""
    if len(mids) < window or not math.isfinite(z):
        return None
    m, ewma, s = ewma_band(mids, alpha, window)
    if m > ewma + z * s:
        side = Side.SELL
    elif m < ewma - z * s:
        side = Side.BUY
    else:
        return None
    return Intent(side, OrderKind.MARKET, _size(rng, v_min, v_max))


def rsi(mids: Sequence[float], period: int = 14) -> float:
    """Wilder RSI over mid-price changes.

    The first average gain/loss is the simple mean of the first `period`
    changes; later changes are smoothed as (prev * (period - 1) + x) / period.
    No losses gives 100, no gains gives 0, a flat series gives 50.
    """
    x = np.asarray(mids, dtype=float)
    if x.size < period + 1:
        raise ValueError(f"RSI({period}) needs {period + 1} observations, got {x.size}")
    d = np.diff(x)
    gains = np.clip(d, 0.0, None)
    losses = np.clip(-d, 0.0, None)
    avg_gain = gains[:period].mean()
    avg_loss = losses[:period].mean()
    for g, l in zip(gains[period:], losses[period:]):
        avg_gain = (avg_gain * (period - 1) + g) / period
        avg_loss = (avg_loss * (period - 1) + l) / period
    if avg_loss == 0.0:
        return 50.0 if avg_gain == 0.0 else 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def rsi_reversion(mids: Sequence[float], rng: np.random.Generator, v_min: int, v_max: int,
                  period: int = 14, upper: float = 70.0, lower: float = 30.0) -> Intent | None:
    if len(mids) < period + 1:
        return None
    value = rsi(mids, period)
    if value > upper:
        side = Side.SELL
    elif value < lower:
        side = Side.BUY
    else:
        return None
    return Intent(side, OrderKind.MARKET, _size(rng, v_min, v_max))


# ---------------------------------------------------------------- background liquidity

@dataclass
class OracleConfig:
    fundamental_mean: float = 10_000.0
    kappa: float = 0.002
    eta: float = 0.5
    arrival_rate: float = 0.5
    half_width: int = 3
    market_prob: float = 0.05
    v_min: int = 10
    v_max: int = 100
    order_lifetime: int = 600


@dataclass
class OracleState:
    fundamental: float


def step_fundamental(f: float, rng: np.random.Generator, cfg: OracleConfig) -> float:
    """One Ornstein-Uhlenbeck step: F + kappa * (mean - F) + eta * N(0, 1)."""
    noise = rng.standard_normal() if cfg.eta else 0.0
    return f + cfg.kappa * (cfg.fundamental_mean - f) + cfg.eta * noise


def background_oracle(state: OracleState, snap: LOBSnapshot, rng: np.random.Generator,
                      cfg: OracleConfig) -> list[Intent]:
    """Advance the fundamental one tick and emit the background order flow.

    Poisson(arrival_rate) arrivals; each is a market order with probability
    `market_prob`, otherwise a limit order 1..half_width ticks inside its own
    side of round(F). An empty side always gets one fresh limit order so the
    book stays two-sided.
    """
    state.fundamental = step_fundamental(state.fundamental, rng, cfg)
    if cfg.arrival_rate <= 0:
        return []
    anchor = int(round(state.fundamental))
    out = []
    for _ in range(int(rng.poisson(cfg.arrival_rate))):
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        size = _size(rng, cfg.v_min, cfg.v_max)
        if rng.random() < cfg.market_prob:
            out.append(Intent(side, OrderKind.MARKET, size))
            continue
        offset = int(rng.integers(1, cfg.half_width + 1))
        out.append(Intent(side, OrderKind.LIMIT, size, max(1, anchor - side * offset)))
    for side, present in ((Side.BUY, snap.has_bid()), (Side.SELL, snap.has_ask())):
        if not present:
            out.append(Intent(side, OrderKind.LIMIT, _size(rng, cfg.v_min, cfg.v_max),
                              max(1, anchor - side * cfg.half_width)))
    return out


# ---------------------------------------------------------------- configuration

@dataclass
class MMConfig:
    count: int = 5
    wakeup_mean: float = 10.0
    v_min: int = 10
    v_max: int = 50
    n_min: int = 1
    n_max: int = 3
    gamma: float = 0.1
    k: float = 1.5
    sigma_window: int = 50
    variants: str = "top,deep,as"


@dataclass
class LCConfig:
    count: int = 20
    wakeup_mean: float = 120.0
    v_min: int = 50
    v_max: int = 150


@dataclass
class MEConfig:
    count: int = 20
    wakeup_mean: float = 20.0
    v_min: int = 5
    v_max: int = 45
    alpha: float = 0.06
    z: float = 2.0
    window: int = 50
    rsi_period: int = 14
    rsi_upper: float = 70.0
    rsi_lower: float = 30.0
    variants: str = "ewma,rsi"


@dataclass
class MOConfig:
    count: int = 20
    wakeup_mean: float = 60.0
    v_min: int = 5
    v_max: int = 45
    short: int = 20
    long: int = 50


FULL_COUNTS = {"mm": 67, "lc": 500, "me": 500, "mo": 500}


@dataclass
class SimConfig:
    day_length: int = 23_400
    seed: int = 0
    history_capacity: int = 64
    ofi_window: int = 10
    # desk | full; full swaps in the 67/500/500/500 population
    scale: str = "desk"
    # each agent's wakeup mean is the archetype mean times U(1 - j, 1 + j)
    wakeup_jitter: float = 0.2
    mm: MMConfig = field(default_factory=MMConfig)
    lc: LCConfig = field(default_factory=LCConfig)
    me: MEConfig = field(default_factory=MEConfig)
    mo: MOConfig = field(default_factory=MOConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def validate(self) -> None:
        if self.day_length < 1:
            raise ValueError("day_length must be at least 1")
        if self.scale not in ("desk", "full"):
            raise ValueError(f"scale must be 'desk' or 'full', got {self.scale!r}")
        if self.ofi_window < 2:
            raise ValueError("ofi_window must be at least 2")
        for name in ("mm", "lc", "me", "mo"):
            if getattr(self, name).count < 0:
                raise ValueError(f"{name}.count must be nonnegative")

    def counts(self) -> dict[str, int]:
        if self.scale == "full":
            return dict(FULL_COUNTS)
        return {n: getattr(self, n).count for n in ("mm", "lc", "me", "mo")}


def build_agent_configs(cfg: SimConfig, rng: np.random.Generator) -> list[AgentConfig]:
    counts = cfg.counts()
    out: list[AgentConfig] = []

    def jitter(mean):
        j = cfg.wakeup_jitter
        return max(1.0, mean * rng.uniform(1 - j, 1 + j))

    mm_variants = [v.strip() for v in cfg.mm.variants.split(",") if v.strip()]
    for i in range(counts["mm"]):
        variant = mm_variants[i % len(mm_variants)]
        params = {"n_min": cfg.mm.n_min, "n_max": cfg.mm.n_max, "gamma": cfg.mm.gamma,
                  "k": cfg.mm.k, "sigma_window": cfg.mm.sigma_window}
        out.append(AgentConfig(Archetype.MM, variant, jitter(cfg.mm.wakeup_mean),
                               cfg.mm.v_min, cfg.mm.v_max, params))
    for _ in range(counts["lc"]):
        out.append(AgentConfig(Archetype.LC, "uniform", jitter(cfg.lc.wakeup_mean),
                               cfg.lc.v_min, cfg.lc.v_max))
    me_variants = [v.strip() for v in cfg.me.variants.split(",") if v.strip()]
    for i in range(counts["me"]):
        variant = me_variants[i % len(me_variants)]
        params = {"alpha": cfg.me.alpha, "z": cfg.me.z, "window": cfg.me.window,
                  "period": cfg.me.rsi_period, "upper": cfg.me.rsi_upper, "lower": cfg.me.rsi_lower}
        out.append(AgentConfig(Archetype.ME, variant, jitter(cfg.me.wakeup_mean),
                               cfg.me.v_min, cfg.me.v_max, params))
    for _ in range(counts["mo"]):
        out.append(AgentConfig(Archetype.MO, "ma", jitter(cfg.mo.wakeup_mean),
                               cfg.mo.v_min, cfg.mo.v_max,
                               {"short": cfg.mo.short, "long": cfg.mo.long}))
    for ac in out:
        if ac.variant not in VARIANTS[ac.archetype]:
            raise ValueError(f"unknown {ac.archetype.name} variant {ac.variant!r}")
    return out


VARIANTS = {
    Archetype.MM: ("top", "deep", "as"),
    Archetype.LC: ("uniform",),
    Archetype.ME: ("ewma", "rsi"),
    Archetype.MO: ("ma",),
}


# ---------------------------------------------------------------- simulation

@dataclass
class OrderRecord:
    """One agent order with the state its sender saw just before sending it."""

    agent_id: int
    archetype: Archetype
    variant: str
    order_id: int
    side: int
    kind: str
    price: int | None
    size: int
    timestamp: int
    snapshot: LOBSnapshot
    prior_mids: list[float]
    ofi_window: list[tuple[int, int, int, int]]
    book_seq: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "archetype": self.archetype.name,
            "variant": self.variant,
            "order_id": self.order_id,
            "side": self.side,
            "kind": self.kind,
            "price": self.price,
            "size": self.size,
            "timestamp": self.timestamp,
            "snapshot": self.snapshot.as_row(),
            "prior_mids": self.prior_mids,
            "ofi_window": [list(q) for q in self.ofi_window],
            "book_seq": self.book_seq,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrderRecord":
        return cls(
            int(d["agent_id"]), Archetype[d["archetype"]], d["variant"], int(d["order_id"]),
            int(d["side"]), d["kind"], None if d["price"] is None else int(d["price"]),
            int(d["size"]), int(d["timestamp"]), LOBSnapshot.from_row(d["snapshot"]),
            [float(m) for m in d["prior_mids"]], [tuple(int(v) for v in q) for q in d["ofi_window"]],
            int(d["book_seq"]), int(d["seed"]),
        )


@dataclass
class DayResult:
    fills: list[Fill]
    snapshots: list[LOBSnapshot]
    records: list[OrderRecord]
    agents: list[AgentConfig]
    fundamental: list[float]


class _AgentState:
    __slots__ = ("cfg", "rng", "history", "ofi", "live", "inventory", "last_mid")

    def __init__(self, cfg: AgentConfig, rng: np.random.Generator, capacity: int, ofi_window: int):
        self.cfg = cfg
        self.rng = rng
        self.history = MidHistory(capacity)
        self.ofi: deque[tuple[int, int, int, int]] = deque(maxlen=ofi_window)
        self.live: list[int] = []
        self.inventory = 0
        self.last_mid: float | None = None


def _decide(agent: _AgentState, snap: LOBSnapshot, t: int, day_length: int) -> list[Intent]:
    c = agent.cfg
    p = c.params
    rng = agent.rng
    mids = agent.history.mids
    if c.archetype is Archetype.MM:
        if c.variant == "top":
            return mm_top_of_book(snap, rng, c.v_min, c.v_max)
        if c.variant == "deep":
            return mm_deep(snap, rng, c.v_min, c.v_max, p["n_min"], p["n_max"])
        sigma2 = return_variance(mids, p["sigma_window"])
        return mm_avellaneda_stoikov(snap, rng, c.v_min, c.v_max, agent.inventory,
                                     min(t / day_length, 1.0), sigma2, p["gamma"], p["k"])
    if c.archetype is Archetype.LC:
        return [liquidity_consumer(rng, c.v_min, c.v_max)]
    if c.archetype is Archetype.MO:
        out = momentum(mids, rng, c.v_min, c.v_max, p["short"], p["long"])
    elif c.variant == "ewma":
        out = ewma_reversion(mids, rng, c.v_min, c.v_max, p["alpha"], p["z"], p["window"])
    else:
        # same warm-up as the EWMA variant
        out = None
        if len(mids) >= p["window"]:
            out = rsi_reversion(mids, rng, c.v_min, c.v_max, p["period"], p["upper"], p["lower"])
    return [out] if out is not None else []


def simulate_day(cfg: SimConfig) -> DayResult:
    """Run one trading day tick by tick.

    Per tick: the background oracle moves first, then every agent due at
    this tick wakes in (wake time, agent index) order, observes the book,
    and acts. The end-of-tick snapshot is appended to the snapshot stream.
    """
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed)
    setup_seq, oracle_seq, agents_seq = seeds.spawn(3)
    setup_rng = np.random.default_rng(setup_seq)
    agent_cfgs = build_agent_configs(cfg, setup_rng)
    agent_rngs = [np.random.default_rng(s) for s in agents_seq.spawn(len(agent_cfgs))]
    agents = [_AgentState(c, r, cfg.history_capacity, cfg.ofi_window)
              for c, r in zip(agent_cfgs, agent_rngs)]
    oracle_rng = np.random.default_rng(oracle_seq)
    oracle = OracleState(cfg.oracle.fundamental_mean)

    book = OrderBook()
    fills: list[Fill] = []
    snapshots: list[LOBSnapshot] = []
    records: list[OrderRecord] = []
    fundamental: list[float] = []
    oracle_expiry: deque[tuple[int, int]] = deque()

    schedule: list[tuple[int, int]] = []
    for i, a in enumerate(agents):
        first = int(setup_rng.integers(0, max(1, int(a.cfg.wakeup_mean))))
        heapq.heappush(schedule, (first, i))

    def book_fills(new_fills: list[Fill], taker_side: Side) -> None:
        for f in new_fills:
            fills.append(f)
            if f.taker_agent_id >= 0:
                agents[f.taker_agent_id].inventory += taker_side * f.size
            if f.maker_agent_id >= 0:
                agents[f.maker_agent_id].inventory -= taker_side * f.size

    def send(intent: Intent, agent_id: int, t: int) -> Order:
        order = Order(book.new_id(), agent_id, intent.side, intent.kind, intent.size, t, intent.price)
        if intent.kind is OrderKind.LIMIT:
            res = book.submit_limit(order)
        else:
            res = book.submit_market(order)
        book_fills(res.fills, intent.side)
        return order

    for t in range(cfg.day_length):
        while oracle_expiry and oracle_expiry[0][0] <= t:
            _, oid = oracle_expiry.popleft()
            book.cancel(oid)
        snap = book.snapshot(t)
        for intent in background_oracle(oracle, snap, oracle_rng, cfg.oracle):
            order = send(intent, -1, t)
            if intent.kind is OrderKind.LIMIT and book.is_live(order.order_id):
                oracle_expiry.append((t + cfg.oracle.order_lifetime, order.order_id))
        fundamental.append(oracle.fundamental)

        while schedule and schedule[0][0] == t:
            _, i = heapq.heappop(schedule)
            agent = agents[i]
            snap = book.snapshot(t)
            prior = agent.history.last(5)
            if snap.two_sided:
                agent.last_mid = mid_price(snap)
                agent.ofi.append(snap.best)
            if agent.last_mid is not None:
                agent.history.append(t, agent.last_mid)
            seq = book.event_counter
            intents = _decide(agent, snap, t, cfg.day_length)
            if agent.cfg.archetype is Archetype.MM:
                for oid in agent.live:
                    book.cancel(oid)
                agent.live = []
            ofi = list(agent.ofi)
            for intent in intents:
                order = send(intent, i, t)
                if agent.cfg.archetype is Archetype.MM and book.is_live(order.order_id):
                    agent.live.append(order.order_id)
                records.append(OrderRecord(
                    i, agent.cfg.archetype, agent.cfg.variant, order.order_id, int(intent.side),
                    intent.kind.value, intent.price, intent.size, t, snap, prior, ofi, seq, cfg.seed,
                ))
            gap = max(1, int(round(agent.rng.exponential(agent.cfg.wakeup_mean))))
            heapq.heappush(schedule, (t + gap, i))
        snapshots.append(book.snapshot(t))

    return DayResult(fills, snapshots, records, agent_cfgs, fundamental)
