"""Labeled state-action samples built from simulator order records."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .market_core import LOBSnapshot, mid_price, order_flow_imbalance, spread, volume_imbalance
from .trading_agents import Archetype, OrderRecord

STATE_COLUMNS = [
    "bid_price_0", "bid_size_0", "bid_price_1", "bid_size_1",
    "ask_price_0", "ask_size_0", "ask_price_1", "ask_size_1",
    "mid",
    "prior_mid_1", "prior_mid_2", "prior_mid_3", "prior_mid_4", "prior_mid_5",
    "spread", "volume_imbalance", "order_flow_imbalance",
]
ACTION_COLUMNS = ["direction", "order_price", "order_size", "relative_size", "price_minus_mid"]
COLUMNS = STATE_COLUMNS + ACTION_COLUMNS
N_FEATURES = len(COLUMNS)
DIRECTION = COLUMNS.index("direction")
LABELS = [a.name for a in Archetype]


class SkipRecord(ValueError):
    """The record lacks the state needed to featurize it."""


@dataclass
class LabeledSample:
    features: np.ndarray
    label: int
    provenance: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return (self.label == other.label and self.provenance == other.provenance
                and np.array_equal(self.features, other.features))


def state_features(snap: LOBSnapshot, prior_mids: Sequence[float],
                   ofi_window: Sequence[Sequence[float]]) -> np.ndarray:
    """17 state columns; prices and prior mids are offsets from the current mid.

    An absent second level repeats the first level's offset with size 0.
    """
    if not snap.two_sided:
        raise SkipRecord("one-sided book")
    if len(prior_mids) < 5:
        raise SkipRecord(f"{len(prior_mids)} prior mids, need 5")
    if len(ofi_window) < 2:
        raise SkipRecord("order flow window shorter than 2")
    m = mid_price(snap)
    bp0 = snap.bid_prices[0] - m
    ap0 = snap.ask_prices[0] - m
    bp1 = snap.bid_prices[1] - m if snap.has_bid(1) else bp0
    ap1 = snap.ask_prices[1] - m if snap.has_ask(1) else ap0
    prior = [p - m for p in list(prior_mids)[-5:]][::-1]  # most recent first
    return np.array([
        bp0, snap.bid_sizes[0], bp1, snap.bid_sizes[1],
        ap0, snap.ask_sizes[0], ap1, snap.ask_sizes[1],
        m, *prior,
        spread(snap), volume_imbalance(snap), order_flow_imbalance(ofi_window),
    ], dtype=float)


def action_features(snap: LOBSnapshot, side: int, kind: str, price: int | None, size: int) -> np.ndarray:
    """5 action columns. A market order is priced at the opposite best quote."""
    m = mid_price(snap)
    if kind == "market" or price is None:
        price = snap.ask_prices[0] if side > 0 else snap.bid_prices[0]
    opposite = snap.ask_sizes[0] if side > 0 else snap.bid_sizes[0]
    return np.array([float(np.sign(side)), price - m, size, size / opposite, price - m], dtype=float)


def extract_sample(rec: OrderRecord) -> LabeledSample:
    x = np.concatenate([
        state_features(rec.snapshot, rec.prior_mids, rec.ofi_window),
        action_features(rec.snapshot, rec.side, rec.kind, rec.price, rec.size),
    ])
    prov = {"seed": rec.seed, "timestamp": rec.timestamp, "agent_id": rec.agent_id,
            "order_id": rec.order_id}
    return LabeledSample(x, int(rec.archetype), prov)


def extract_samples(records: Iterable[OrderRecord]) -> tuple[list[LabeledSample], int]:
    """Featurize every usable record; returns (samples, number skipped)."""
    out, skipped = [], 0
    for rec in records:
        try:
            out.append(extract_sample(rec))
        except SkipRecord:
            skipped += 1
    return out, skipped


def class_counts(samples: Sequence[LabeledSample], n_classes: int = 4) -> list[int]:
    counts = [0] * n_classes
    for s in samples:
        counts[s.label] += 1
    return counts


def balance_downsample(samples: Sequence[LabeledSample], n: int, rng: np.random.Generator,
                       n_classes: int = 4) -> list[LabeledSample]:
    """Exactly n samples per class, drawn without replacement, original order kept."""
    by_class: list[list[LabeledSample]] = [[] for _ in range(n_classes)]
    for s in samples:
        by_class[s.label].append(s)
    short = [(LABELS[c], len(g)) for c, g in enumerate(by_class) if len(g) < n]
    if short:
        names = ", ".join(f"{name} has {k}" for name, k in short)
        raise ValueError(f"cannot balance to {n} per class: {names}")
    out = []
    for group in by_class:
        keep = np.sort(rng.choice(len(group), size=n, replace=False))
        out.extend(group[i] for i in keep)
    return out


def split(samples: Sequence[LabeledSample], ratios: Sequence[float], rng: np.random.Generator,
          n_classes: int = 4) -> tuple[list[LabeledSample], list[LabeledSample], list[LabeledSample]]:
    """Stratified (train, val, test) partition.

    Per class, validation and test take round(ratio * class size) and
    train takes the remainder.
    """
    if not samples:
        raise ValueError("nothing to split")
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or min(ratios) < 0:
        raise ValueError(f"need three nonnegative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 5e-3:
        raise ValueError(f"ratios sum to {sum(ratios)}, expected 1")
    by_class: list[list[LabeledSample]] = [[] for _ in range(n_classes)]
    for s in samples:
        by_class[s.label].append(s)
    train, val, test = [], [], []
    for group in by_class:
        order = rng.permutation(len(group))
        n_val = int(round(ratios[1] * len(group)))
        n_test = int(round(ratios[2] * len(group)))
        n_val = min(n_val, len(group))
        n_test = min(n_test, len(group) - n_val)
        val.extend(group[i] for i in order[:n_val])
        test.extend(group[i] for i in order[n_val:n_val + n_test])
        train.extend(group[i] for i in order[n_val + n_test:])
    return tuple([part[i] for i in rng.permutation(len(part))] for part in (train, val, test))


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, samples: Sequence[LabeledSample]) -> list[LabeledSample]:
        return [LabeledSample((s.features - self.mean) / self.std, s.label, dict(s.provenance))
                for s in samples]

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def scaler_fit(train: Sequence[LabeledSample], passthrough: Sequence[int] = (DIRECTION,)) -> Scaler:
    """Column z-scores from the training split; passthrough columns keep mean 0, std 1."""
    if not train:
        raise ValueError("cannot fit a scaler on an empty split")
    X = as_matrix(train)[0]
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), 1e-8)
    for j in passthrough:
        mean[j], std[j] = 0.0, 1.0
    return Scaler(mean, std)


def scaler_apply(scaler: Scaler, samples: Sequence[LabeledSample]) -> list[LabeledSample]:
    return scaler.apply(samples)


def as_matrix(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64)
    X = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


def write_scaler_csv(scaler: Scaler, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["column", "mean", "std"])
        for name, m, s in zip(COLUMNS, scaler.mean, scaler.std):
            w.writerow([name, repr(float(m)), repr(float(s))])


def read_scaler_csv(path) -> Scaler:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return Scaler(np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows]))


def write_jsonl(samples: Iterable[LabeledSample], path) -> None:
    """Header line with column names, then one sample per line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"columns": COLUMNS, "labels": LABELS}) + "\n")
        for s in samples:
            row = {"x": [float(v) for v in s.features], "label": LABELS[s.label]}
            row.update(s.provenance)
            fh.write(json.dumps(row) + "\n")


def read_jsonl(path) -> list[LabeledSample]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                if "columns" in d:
                    if d["columns"] != COLUMNS:
                        raise ValueError("column header does not match this build")
                    continue
                x = np.array(d.pop("x"), dtype=float)
                if x.shape != (N_FEATURES,):
                    raise ValueError(f"expected {N_FEATURES} features, got {x.size}")
                label = LABELS.index(d.pop("label"))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed sample ({exc})") from exc
            out.append(LabeledSample(x, label, d))
    return out


def write_records_jsonl(records: Iterable[OrderRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def read_records_jsonl(path) -> list[OrderRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(OrderRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed order record ({exc})") from exc
    return out
