import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oppmodel.market_core import (
    CancelStatus,
    LOBSnapshot,
    Order,
    OrderBook,
    OrderKind,
    OrderRejected,
    Side,
    UndefinedMetric,
    mid_price,
    order_flow_imbalance,
    read_snapshots_csv,
    spread,
    volume_imbalance,
    write_snapshots_csv,
    write_trades_csv,
)
from reference_matcher import NaiveMatcher


def limit(book, side, price, size, agent=0, t=0):
    return book.submit_limit(Order(book.new_id(), agent, side, OrderKind.LIMIT, size, t, price))


def market(book, side, size, t=0):
    return book.submit_market(Order(book.new_id(), 0, side, OrderKind.MARKET, size, t))


def trades(fills):
    return [(f.size, f.price) for f in fills]


def test_limit_sweeps_two_levels():
    book = OrderBook()
    limit(book, Side.SELL, 101, 50)
    limit(book, Side.SELL, 102, 40)
    res = limit(book, Side.BUY, 102, 80)
    assert trades(res.fills) == [(50, 101), (30, 102)]
    assert res.remainder == 0
    assert book.depth(Side.SELL) == [(102, 10)]
    assert book.depth(Side.BUY) == []


def test_limit_rests_on_empty_book():
    book = OrderBook()
    res = limit(book, Side.BUY, 100, 10)
    assert res.fills == [] and res.remainder == 10
    assert book.depth(Side.BUY) == [(100, 10)]


def test_time_priority_at_equal_price():
    book = OrderBook()
    first = limit(book, Side.SELL, 101, 50)
    limit(book, Side.SELL, 101, 40)
    res = limit(book, Side.BUY, 101, 60)
    assert [(f.maker_order_id, f.size) for f in res.fills] == [(1, 50), (2, 10)]
    assert first.remainder == 50
    assert book.remaining(2) == 30


def test_fill_price_is_maker_price():
    book = OrderBook()
    limit(book, Side.BUY, 100, 5)
    res = limit(book, Side.SELL, 90, 5)
    assert trades(res.fills) == [(5, 100)]


@pytest.mark.parametrize("size,price", [(0, 100), (-3, 100), (5, 0), (5, None)])
def test_limit_rejects_bad_size_or_price(size, price):
    book = OrderBook()
    with pytest.raises(OrderRejected):
        book.submit_limit(Order(1, 0, Side.BUY, OrderKind.LIMIT, size, 0, price))


def test_duplicate_order_id_rejected():
    book = OrderBook()
    book.submit_limit(Order(7, 0, Side.BUY, OrderKind.LIMIT, 1, 0, 100))
    with pytest.raises(OrderRejected):
        book.submit_limit(Order(7, 0, Side.BUY, OrderKind.LIMIT, 1, 0, 99))
    with pytest.raises(OrderRejected):
        book.submit_market(Order(3, 0, Side.SELL, OrderKind.MARKET, 1, 0))


def test_market_partial_level():
    book = OrderBook()
    limit(book, Side.SELL, 101, 50)
    res = market(book, Side.BUY, 30)
    assert trades(res.fills) == [(30, 101)] and res.unfilled == 0
    assert book.depth(Side.SELL) == [(101, 20)]


def test_market_walks_levels():
    book = OrderBook()
    limit(book, Side.SELL, 101, 50)
    limit(book, Side.SELL, 102, 40)
    res = market(book, Side.BUY, 70)
    assert trades(res.fills) == [(50, 101), (20, 102)]


def test_market_on_empty_side_is_unfilled_not_error():
    book = OrderBook()
    limit(book, Side.BUY, 100, 10)
    res = market(book, Side.BUY, 10)
    assert res.fills == [] and res.unfilled == 10
    res = market(book, Side.SELL, 25)
    assert trades(res.fills) == [(10, 100)] and res.unfilled == 15


def test_cancel_cases():
    book = OrderBook()
    limit(book, Side.BUY, 100, 10)
    assert book.cancel(1) is CancelStatus.CANCELLED
    assert book.snapshot(0) == LOBSnapshot(0)
    assert book.cancel(999) is CancelStatus.NOT_FOUND
    assert book.cancel(1) is CancelStatus.NOT_FOUND


def test_cancel_keeps_priority_of_the_rest():
    book = OrderBook()
    limit(book, Side.BUY, 100, 10)
    limit(book, Side.BUY, 100, 20)
    limit(book, Side.BUY, 100, 30)
    book.cancel(1)
    res = limit(book, Side.SELL, 100, 25)
    assert [(f.maker_order_id, f.size) for f in res.fills] == [(2, 20), (3, 5)]


def test_cancel_filled_order_not_found():
    book = OrderBook()
    limit(book, Side.BUY, 100, 10)
    market(book, Side.SELL, 10)
    assert book.cancel(1) is CancelStatus.NOT_FOUND


def test_snapshot_top_two_levels():
    book = OrderBook()
    limit(book, Side.BUY, 100, 30)
    limit(book, Side.BUY, 99, 20)
    limit(book, Side.BUY, 98, 5)
    limit(book, Side.SELL, 101, 40)
    snap = book.snapshot(5)
    assert snap.bid_prices == (100, 99) and snap.bid_sizes == (30, 20)
    assert snap.ask_prices == (101, 0) and snap.ask_sizes == (40, 0)
    assert not snap.has_ask(1)


def test_snapshot_empty_and_aggregated():
    book = OrderBook()
    assert book.snapshot(0) == LOBSnapshot(0, (0, 0), (0, 0), (0, 0), (0, 0))
    limit(book, Side.BUY, 100, 10)
    limit(book, Side.BUY, 100, 15)
    assert book.snapshot(0).bid_sizes[0] == 25


def snap(b, qb, a, qa, t=0):
    return LOBSnapshot(t, (b, 0), (qb, 0), (a, 0), (qa, 0))


def test_metrics():
    s = snap(100, 100, 102, 200)
    assert mid_price(s) == 101
    assert spread(s) == 2
    assert volume_imbalance(s) == 2.0
    assert volume_imbalance(snap(100, 100, 101, 100)) == 1.0


@pytest.mark.parametrize("fn", [mid_price, spread, volume_imbalance])
def test_metrics_undefined_on_one_sided(fn):
    with pytest.raises(UndefinedMetric):
        fn(LOBSnapshot(0, (100, 0), (10, 0)))


def test_ofi_examples():
    prev = snap(100, 50, 101, 40)
    assert order_flow_imbalance([prev, snap(100, 70, 101, 40)]) == 20
    assert order_flow_imbalance([prev, prev]) == 0
    assert order_flow_imbalance([snap(100, 50, 101, 40), snap(101, 30, 101, 40)]) == 30


def test_ofi_needs_two():
    with pytest.raises(ValueError):
        order_flow_imbalance([snap(100, 1, 101, 1)])


quad = st.tuples(st.integers(90, 110), st.integers(1, 50), st.integers(90, 110), st.integers(1, 50))


@given(st.lists(quad, min_size=3, max_size=12), st.data())
def test_ofi_additive_over_adjacent_windows(window, data):
    k = data.draw(st.integers(1, len(window) - 2))
    whole = order_flow_imbalance(window)
    assert whole == order_flow_imbalance(window[: k + 1]) + order_flow_imbalance(window[k:])


ops = st.lists(
    st.tuples(
        st.sampled_from(["limit", "limit", "market", "cancel"]),
        st.sampled_from([Side.BUY, Side.SELL]),
        st.integers(95, 105),
        st.integers(1, 30),
    ),
    max_size=120,
)


@settings(max_examples=150, deadline=None)
@given(ops)
def test_book_invariants_and_oracle_agreement(stream):
    book = OrderBook()
    naive = NaiveMatcher()
    fills = []
    for i, (kind, side, price, size) in enumerate(stream, start=1):
        if kind == "limit":
            res = book.submit_limit(Order(i, 0, side, OrderKind.LIMIT, size, i, price))
            naive.limit(i, int(side), price, size, i)
            assert sum(f.size for f in res.fills) + res.remainder == size
            fills += res.fills
        elif kind == "market":
            res = book.submit_market(Order(i, 0, side, OrderKind.MARKET, size, i))
            naive.market(i, int(side), size, i)
            assert sum(f.size for f in res.fills) + res.unfilled == size
            fills += res.fills
        else:
            target = max(1, i - size)
            assert (book.cancel(target) is CancelStatus.CANCELLED) == naive.cancel(target)
        bb, ba = book.best_bid(), book.best_ask()
        assert bb is None or ba is None or bb < ba
        for s in (Side.BUY, Side.SELL):
            assert all(v >= 1 for _, v in book.depth(s))
    assert [(f.timestamp, f.taker_order_id, f.maker_order_id, f.price, f.size) for f in fills] == naive.trades
    assert all(f.size >= 1 for f in fills)


def test_snapshot_is_pure():
    book = OrderBook()
    limit(book, Side.BUY, 100, 10)
    limit(book, Side.SELL, 103, 7)
    a, b = book.snapshot(3), book.snapshot(3)
    assert a == b and mid_price(a) == mid_price(b) == 101.5


def test_csv_exports(tmp_path):
    book = OrderBook()
    limit(book, Side.SELL, 101, 5, t=1)
    fills = limit(book, Side.BUY, 101, 3, t=2).fills
    write_trades_csv(fills, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == [
        "timestamp,taker_id,maker_id,price,size", "2,2,1,101,3"]
    snaps = [book.snapshot(2), LOBSnapshot(3)]
    write_snapshots_csv(snaps, tmp_path / "s.csv")
    assert read_snapshots_csv(tmp_path / "s.csv") == snaps
