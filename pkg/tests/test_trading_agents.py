import math

import numpy as np
import pytest

from oppmodel.market_core import LOBSnapshot, OrderKind, Side
from oppmodel.trading_agents import (
    Archetype,
    MidHistory,
    OracleConfig,
    OracleState,
    OrderRecord,
    SimConfig,
    avellaneda_stoikov,
    background_oracle,
    ewma_band,
    ewma_reversion,
    liquidity_consumer,
    mm_avellaneda_stoikov,
    mm_deep,
    mm_top_of_book,
    momentum,
    rsi,
    rsi_reversion,
    simulate_day,
    step_fundamental,
)

BOOK = LOBSnapshot(0, (100, 99), (10, 10), (102, 103), (10, 10))


def rng(seed=0):
    return np.random.default_rng(seed)


def quotes(intents):
    return sorted((int(i.side), i.price, i.size) for i in intents)


def test_top_of_book():
    assert quotes(mm_top_of_book(BOOK, rng(), 10, 10)) == [(-1, 102, 10), (1, 100, 10)]
    a = mm_top_of_book(BOOK, rng(4), 5, 15)
    assert a == mm_top_of_book(BOOK, rng(4), 5, 15)
    one_sided = LOBSnapshot(0, (0, 0), (0, 0), (102, 0), (5, 0))
    out = mm_top_of_book(one_sided, rng(), 10, 10)
    assert [(i.side, i.price) for i in out] == [(Side.SELL, 102)]


def test_deep_levels():
    out = mm_deep(BOOK, rng(), 10, 10, 2, 2)
    assert sorted(i.price for i in out if i.side is Side.BUY) == [99, 100]
    assert sorted(i.price for i in out if i.side is Side.SELL) == [102, 103]
    assert len(mm_deep(BOOK, rng(), 10, 10, 1, 1)) == 2


def test_deep_count_is_twice_levels():
    r = rng(9)
    counts = [len(mm_deep(BOOK, r, 1, 5, 1, 3)) for _ in range(1000)]
    assert all(c % 2 == 0 for c in counts)
    assert np.mean(counts) == pytest.approx(2 * 2.0, abs=0.15)


def test_as_formulas():
    q = avellaneda_stoikov(100, 10, 0.5, 4, 0.1, 1.5)
    assert q.reservation == pytest.approx(98.0)
    assert q.spread == pytest.approx(0.2 + 20 * math.log(1 + 0.1 / 1.5))
    assert q.spread == pytest.approx(1.491, abs=1e-3)
    z = avellaneda_stoikov(100, 0, 0.3, 4)
    assert z.reservation == 100 and (z.bid + z.ask) / 2 == pytest.approx(100)
    for inv in (-5, 5):
        r = avellaneda_stoikov(100, inv, 0.2, 2).reservation
        assert np.sign(100 - r) == np.sign(inv)


@pytest.mark.parametrize("gamma,k,t", [(0, 1.5, 0.5), (0.1, 0, 0.5), (0.1, 1.5, 1.2)])
def test_as_rejects_bad_params(gamma, k, t):
    with pytest.raises(ValueError):
        avellaneda_stoikov(100, 0, t, 1, gamma, k)


def test_as_quotes_passive_and_uncrossed():
    for inv in (-500, -5, 0, 5, 500):
        out = mm_avellaneda_stoikov(BOOK, rng(), 10, 10, inv, 0.1, 4.0)
        bid = [i.price for i in out if i.side is Side.BUY]
        ask = [i.price for i in out if i.side is Side.SELL]
        assert ask and (not bid or bid[0] < ask[0])
        assert not bid or bid[0] < 102
        assert ask[0] > 100


def test_liquidity_consumer():
    r = rng(1)
    draws = [liquidity_consumer(r, 7, 7) for _ in range(10_000)]
    assert all(d.kind is OrderKind.MARKET and d.size == 7 for d in draws)
    assert np.mean([d.side is Side.BUY for d in draws]) == pytest.approx(0.5, abs=0.02)
    a = [liquidity_consumer(rng(3), 1, 9) for _ in range(1)]
    assert a == [liquidity_consumer(rng(3), 1, 9)]


def test_momentum():
    assert momentum(list(range(60)), rng(), 1, 5).side is Side.BUY
    assert momentum([5.0] * 60, rng(), 1, 5).side is Side.SELL
    assert momentum(list(range(30)), rng(), 1, 5) is None


def test_ewma_reversion():
    flat = [100.0] * 60
    assert ewma_reversion(flat, rng(), 1, 5) is None
    noisy = list(100 + rng(2).normal(0, 1, 60))
    _, _, s = ewma_band(noisy)
    assert ewma_reversion(noisy[:-1] + [noisy[-1] + 10 * s], rng(), 1, 5).side is Side.SELL
    assert ewma_reversion(noisy[:-1] + [noisy[-1] - 10 * s], rng(), 1, 5).side is Side.BUY
    assert ewma_reversion(noisy[:-1] + [noisy[-1] + 10 * s], rng(), 1, 5, z=math.inf) is None
    assert ewma_reversion(noisy[:40], rng(), 1, 5) is None


def test_rsi_cases():
    assert rsi(np.arange(20.0)) == 100.0
    assert rsi(np.arange(20.0)[::-1]) == 0.0
    alt = np.cumsum([0] + [1, -1] * 7)
    assert rsi(alt) == 50.0
    # first average: gains 10, losses 5 over 14 changes
    moves = [2, 2, 2, 2, 2, -1, -1, -1, -1, -1, 0, 0, 0, 0]
    series = np.concatenate([[100.0], 100.0 + np.cumsum(moves)])
    assert rsi(series) == pytest.approx(100 - 100 / 3)
    assert rsi_reversion(series, rng(), 1, 5) is None
    assert rsi_reversion(np.arange(20.0), rng(), 1, 5).side is Side.SELL
    assert rsi_reversion(np.arange(20.0)[::-1], rng(), 1, 5).side is Side.BUY


def test_rsi_bounded():
    r = rng(8)
    for _ in range(200):
        x = 100 + np.cumsum(r.integers(-3, 4, 40))
        assert 0.0 <= rsi(x) <= 100.0


def test_mid_history():
    h = MidHistory(50)
    for t in range(60):
        h.append(t, float(t))
    assert len(h) == 50 and h.last(2) == [58.0, 59.0]
    with pytest.raises(ValueError):
        h.append(10, 1.0)
    with pytest.raises(ValueError):
        MidHistory(10)


def test_oracle_fundamental():
    cfg = OracleConfig(kappa=0.0, eta=0.0)
    assert step_fundamental(123.0, rng(), cfg) == 123.0
    cfg = OracleConfig()
    r, f, xs = rng(5), cfg.fundamental_mean, []
    for _ in range(100_000):
        f = step_fundamental(f, r, cfg)
        xs.append(f)
    bound = 3 * cfg.eta / math.sqrt(2 * cfg.kappa)
    assert abs(np.mean(xs) - cfg.fundamental_mean) < bound


def test_oracle_orders():
    cfg = OracleConfig(arrival_rate=0.0)
    assert background_oracle(OracleState(100.0), BOOK, rng(), cfg) == []
    cfg = OracleConfig(arrival_rate=5.0, market_prob=0.0, eta=0.0, fundamental_mean=100.0)
    out = background_oracle(OracleState(100.0), LOBSnapshot(0), rng(), cfg)
    assert {i.side for i in out} == {Side.BUY, Side.SELL}
    for i in out:
        assert i.price is not None and 1 <= abs(i.price - 100) <= 3
        assert (i.price < 100) == (i.side is Side.BUY)


def small_sim(seed=1, day=3000):
    return SimConfig(day_length=day, seed=seed)


def test_zero_agents_gives_empty_logs():
    cfg = small_sim(day=500)
    for name in ("mm", "lc", "me", "mo"):
        getattr(cfg, name).count = 0
    cfg.oracle.arrival_rate = 0.0
    res = simulate_day(cfg)
    assert res.fills == [] and res.records == []


def test_simulation_deterministic():
    a, b = simulate_day(small_sim()), simulate_day(small_sim())
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
    assert a.fills == b.fills and a.snapshots == b.snapshots
    c = simulate_day(small_sim(seed=2))
    assert [r.to_dict() for r in a.records] != [r.to_dict() for r in c.records]


def test_records_state_precedes_order():
    res = simulate_day(small_sim())
    assert res.records
    seqs = [r.book_seq for r in res.records]
    assert seqs == sorted(seqs)
    for r in res.records:
        assert r.snapshot.timestamp <= r.timestamp
        assert len(r.prior_mids) <= 5
        assert OrderRecord.from_dict(r.to_dict()) == r
    # signal traders only act once their history is warm, so 5 prior mids exist
    first = {}
    for r in res.records:
        first.setdefault(r.agent_id, r)
    assert all(len(r.prior_mids) == 5 for r in first.values() if r.archetype in (Archetype.ME, Archetype.MO))


def test_book_never_crossed_in_simulation():
    res = simulate_day(small_sim())
    for s in res.snapshots:
        if s.two_sided:
            assert s.bid_prices[0] < s.ask_prices[0]


def test_desk_day_has_enough_orders_per_archetype():
    res = simulate_day(SimConfig(seed=1))
    counts = {a: 0 for a in Archetype}
    for r in res.records:
        counts[r.archetype] += 1
    assert min(counts.values()) >= 1000, counts


def test_bad_sim_config():
    with pytest.raises(ValueError):
        simulate_day(SimConfig(scale="huge"))
