"""Iterated first-price sealed-bid auction with revealed (eponymous) bids.

Three bidder kinds share the table: fixed truncated-Gaussian random bidders,
an implicit-modeling learner trained by REINFORCE on its own rewards, and an
opponent-modeling learner that fits a truncated Gaussian to every rival's
revealed bids and plays the grid best response against those fits.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics.truncgauss import SIGMA_MIN, TruncGaussParams, tg_logpdf_grad, tg_mle, tg_sample

log = logging.getLogger(__name__)


class BidderKind(enum.Enum):
    RANDOM = "Random"
    IM = "IM"
    OM = "OM"


@dataclass
class AuctionResult:
    round_index: int
    bids: np.ndarray
    winner: int
    rewards: np.ndarray


def settle(bids: Sequence[float], valuations: Sequence[float], rng: np.random.Generator,
           round_index: int = 0) -> AuctionResult:
    """Highest bid wins and pays its bid; exact ties are broken uniformly."""
    bids = np.asarray(bids, dtype=float)
    if bids.size < 2:
        raise ValueError("an auction needs at least two bidders")
    top = np.flatnonzero(bids == bids.max())
    winner = int(top[0]) if top.size == 1 else int(rng.choice(top))
    rewards = np.zeros_like(bids)
    rewards[winner] = valuations[winner] - bids[winner]
    return AuctionResult(round_index, bids, winner, rewards)


class Bidder:
    kind: BidderKind
    valuation: float

    def bid(self, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def observe(self, me: int, result: AuctionResult) -> None:
        pass


class RandomBidder(Bidder):
    kind = BidderKind.RANDOM

    def __init__(self, policy: TruncGaussParams):
        self.policy = policy
        self.valuation = policy.upper

    def bid(self, rng):
        return random_bid(self.policy, rng)


def random_bid(params: TruncGaussParams, rng: np.random.Generator) -> float:
    return tg_sample(params, rng)


def _policy_bounds(v: float) -> tuple[float, float, float]:
    return v, math.log(SIGMA_MIN), math.log(v)


def reinforce_update(policy: TruncGaussParams, trajectory: Sequence[tuple[float, float]],
                     lr: float, baseline: float = 0.0) -> TruncGaussParams:
    """theta += lr * sum_t (r_t - baseline) * grad log pi(b_t), theta = (mu, log sigma).

    The policy lives on [0, v]; mu is clamped to that interval and log sigma
    to [log 1e-3, log v].
    """
    if not trajectory:
        return policy
    bids = np.array([b for b, _ in trajectory], dtype=float)
    adv = np.array([r for _, r in trajectory], dtype=float) - baseline
    d_mu, d_ls = tg_logpdf_grad(np.clip(bids, policy.lower, policy.upper), policy)
    v, ls_lo, ls_hi = _policy_bounds(policy.upper)
    mu = float(np.clip(policy.mu + lr * np.dot(adv, d_mu), 0.0, v))
    ls = float(np.clip(policy.log_sigma + lr * np.dot(adv, d_ls), ls_lo, ls_hi))
    return policy.replace(mu=mu, sigma=math.exp(ls))


class ImplicitBidder(Bidder):
    """REINFORCE on its own (bid, reward) pairs; updates at episode end."""

    kind = BidderKind.IM

    def __init__(self, valuation: float, init_mu: float, init_sigma: float,
                 lr: float, use_baseline: bool = True):
        self.valuation = valuation
        self.policy = TruncGaussParams(init_mu, init_sigma, 0.0, valuation)
        self.lr = lr
        self.use_baseline = use_baseline
        self.trajectory: list[tuple[float, float]] = []
        self._last_bid = 0.0
        self._reward_sum = 0.0
        self._reward_n = 0

    @property
    def baseline(self) -> float:
        if not self.use_baseline or self._reward_n == 0:
            return 0.0
        return self._reward_sum / self._reward_n

    def bid(self, rng):
        self._last_bid = tg_sample(self.policy, rng)
        return self._last_bid

    def observe(self, me, result):
        # the stateless game makes the reward-to-go of round t just r_t
        self.trajectory.append((self._last_bid, float(result.rewards[me])))

    def end_episode(self) -> None:
        self.policy = reinforce_update(self.policy, self.trajectory, self.lr, self.baseline)
        for _, r in self.trajectory:
            self._reward_sum += r
            self._reward_n += 1
        self.trajectory = []


def _as_cdf(model) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(model, TruncGaussParams):
        return model.cdf
    return model


def bid_grid(v: float, step: float) -> np.ndarray:
    n = int(math.floor(v / step + 1e-9))
    return np.arange(n + 1) * step


def best_response_from_winprob(v: float, grid: np.ndarray, win_prob: np.ndarray) -> tuple[float, float]:
    """Grid argmax of (v - b) * P(win | b); ties go to the lowest bid."""
    payoff = (v - grid) * win_prob
    i = int(np.argmax(payoff))
    return float(grid[i]), float(payoff[i])


def win_probability(grid: np.ndarray, opponent_models) -> np.ndarray:
    prob = np.ones_like(grid)
    for m in opponent_models:
        prob = prob * np.asarray(_as_cdf(m)(grid), dtype=float)
    return prob


def best_response(v: float, opponent_models, step: float = 1e-3) -> float:
    """Bid maximising margin times the chance every modeled rival bids lower.

    `opponent_models` holds TruncGaussParams or callables returning
    P(rival bid < b) on an array of b.
    """
    if v <= 0:
        return 0.0
    grid = bid_grid(v, step)
    return best_response_from_winprob(v, grid, win_probability(grid, opponent_models))[0]


@dataclass
class OpponentFit:
    models: dict[int, TruncGaussParams]
    fallback: bool


def fit_opponents(history: dict[int, Sequence[float]], n_min: int = 10,
                  previous: dict[int, TruncGaussParams] | None = None) -> OpponentFit:
    """One truncated-Gaussian MLE per rival on [0, 1].

    With fewer than `n_min` bids for any rival, no fit is made and the
    fallback flag is set.
    """
    if any(len(h) < n_min for h in history.values()):
        return OpponentFit({}, True)
    models = {}
    for j, bids in history.items():
        init = previous.get(j) if previous else None
        models[j] = tg_mle(np.asarray(bids, dtype=float), 0.0, 1.0, init=init)
    return OpponentFit(models, False)


class OpponentModelBidder(Bidder):
    kind = BidderKind.OM

    def __init__(self, valuation: float, n_opponents: int, cold_policy: TruncGaussParams,
                 step: float = 1e-3, n_min: int = 10, refit_every: int = 50,
                 window: int = 1000):
        self.valuation = valuation
        self.step = step
        self.n_min = n_min
        self.refit_every = refit_every
        self.cold_policy = cold_policy
        self.history: dict[int, deque] = {}
        self.window = window
        self.n_opponents = n_opponents
        self.models: dict[int, TruncGaussParams] = {}
        self._rounds_since_fit = 0
        self._cached_bid: float | None = None

    @property
    def fallback(self) -> bool:
        return not self.models

    def bid(self, rng):
        if self.fallback:
            return tg_sample(self.cold_policy, rng)
        if self._cached_bid is None:
            self._cached_bid = best_response(self.valuation, list(self.models.values()), self.step)
        return self._cached_bid

    def observe(self, me, result):
        for j, b in enumerate(result.bids):
            if j != me:
                self.history.setdefault(j, deque(maxlen=self.window)).append(float(b))
        self._rounds_since_fit += 1
        due = self.fallback or self._rounds_since_fit >= self.refit_every
        if due and len(self.history) == self.n_opponents:
            fit = fit_opponents(self.history, self.n_min, self.models)
            if not fit.fallback:
                self.models = fit.models
                self._rounds_since_fit = 0
                self._cached_bid = None


def run_round(bidders: Sequence[Bidder], rng: np.random.Generator, round_index: int = 0) -> AuctionResult:
    """Collect bids, settle, then reveal the full result to every bidder."""
    bids = np.empty(len(bidders))
    for i, b in enumerate(bidders):
        x = b.bid(rng)
        if not 0.0 <= x <= b.valuation:
            log.warning("bidder %d bid %.6f outside [0, %.3f]; clamped", i, x, b.valuation)
            x = min(max(x, 0.0), b.valuation)
        bids[i] = x
    result = settle(bids, [b.valuation for b in bidders], rng, round_index)
    for i, b in enumerate(bidders):
        b.observe(i, result)
    return result


@dataclass
class ExperimentConfig:
    n_agents: int = 10
    rounds: int = 50
    episodes: int = 400
    seed: int = 0
    gamma: float = 1.0
    learning_rate: float = 7e-5
    baseline: bool = True
    learner_valuation: float = 1.0
    random_valuation: tuple[float, float] = (0.6, 0.9)
    random_mu_frac: tuple[float, float] = (0.3, 0.8)
    random_sigma: tuple[float, float] = (0.05, 0.2)
    init_mu: float = 0.5
    init_sigma: float = 0.2
    grid_step: float = 1e-3
    n_min: int = 10
    refit_every: int = 50
    history_window: int = 1000
    burn_in: float = 0.5
    include_im: bool = True
    include_om: bool = True

    def validate(self) -> None:
        if self.n_agents < 2:
            raise ValueError("n_agents must be at least 2")
        if self.rounds < 1 or self.episodes < 1:
            raise ValueError("rounds and episodes must be positive")
        if not 0 < self.learner_valuation <= 1:
            raise ValueError("learner_valuation must lie in (0, 1]")
        if not 0 <= self.burn_in < 1:
            raise ValueError("burn_in must lie in [0, 1)")
        n_learners = int(self.include_im) + int(self.include_om)
        if self.n_agents < n_learners:
            raise ValueError("too few agents for the requested learners")


@dataclass
class WinStats:
    kinds: list[BidderKind]
    wins: np.ndarray
    rounds: int

    @property
    def shares(self) -> np.ndarray:
        return self.wins / self.rounds if self.rounds else np.zeros_like(self.wins, dtype=float)

    def share_of(self, kind: BidderKind) -> float:
        mask = np.array([k is kind for k in self.kinds])
        return float(self.shares[mask].sum())

    def aggregate(self) -> dict[str, float]:
        return {k.value: self.share_of(k) for k in (BidderKind.OM, BidderKind.IM, BidderKind.RANDOM)}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    stats: WinStats
    episode_shares: list[dict] = field(default_factory=list)
    curves: list[dict] = field(default_factory=list)


def draw_random_policies(cfg: ExperimentConfig, n: int, rng: np.random.Generator) -> list[TruncGaussParams]:
    out = []
    for _ in range(n):
        v = rng.uniform(*cfg.random_valuation)
        mu = rng.uniform(cfg.random_mu_frac[0] * v, cfg.random_mu_frac[1] * v)
        sigma = rng.uniform(*cfg.random_sigma)
        out.append(TruncGaussParams(mu, sigma, 0.0, v))
    return out


def build_bidders(cfg: ExperimentConfig, rng: np.random.Generator) -> list[Bidder]:
    n_random = cfg.n_agents - int(cfg.include_im) - int(cfg.include_om)
    bidders: list[Bidder] = [RandomBidder(p) for p in draw_random_policies(cfg, n_random, rng)]
    v = cfg.learner_valuation
    if cfg.include_im:
        bidders.append(ImplicitBidder(v, cfg.init_mu * v, cfg.init_sigma, cfg.learning_rate, cfg.baseline))
    if cfg.include_om:
        cold = TruncGaussParams(cfg.init_mu * v, cfg.init_sigma, 0.0, v)
        bidders.append(OpponentModelBidder(v, cfg.n_agents - 1, cold, cfg.grid_step, cfg.n_min,
                                           cfg.refit_every, cfg.history_window))
    return bidders


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Train both learners online and report win shares after burn-in."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    bidders = build_bidders(cfg, rng)
    kinds = [b.kind for b in bidders]
    wins = np.zeros(len(bidders), dtype=np.int64)
    eval_rounds = 0
    first_eval = int(math.floor(cfg.burn_in * cfg.episodes))
    episode_shares, curves = [], []
    im = next((b for b in bidders if isinstance(b, ImplicitBidder)), None)
    om = next((b for b in bidders if isinstance(b, OpponentModelBidder)), None)

    for ep in range(cfg.episodes):
        ep_wins = np.zeros(len(bidders), dtype=np.int64)
        ep_rewards = np.zeros(len(bidders))
        for t in range(cfg.rounds):
            res = run_round(bidders, rng, ep * cfg.rounds + t)
            ep_wins[res.winner] += 1
            ep_rewards += res.rewards
        if im is not None:
            im.end_episode()
        if ep >= first_eval:
            wins += ep_wins
            eval_rounds += cfg.rounds
        ep_stats = WinStats(kinds, ep_wins, cfg.rounds).aggregate()
        episode_shares.append({"episode": ep, "om_share": ep_stats["OM"],
                               "im_share": ep_stats["IM"], "random_share": ep_stats["Random"]})
        curve = {"episode": ep}
        if im is not None:
            curve.update(im_mu=im.policy.mu, im_sigma=im.policy.sigma,
                         im_reward=float(ep_rewards[bidders.index(im)]) / cfg.rounds)
        if om is not None:
            curve.update(om_fallback=int(om.fallback),
                         om_reward=float(ep_rewards[bidders.index(om)]) / cfg.rounds)
        curves.append(curve)
    return ExperimentResult(cfg, WinStats(kinds, wins, eval_rounds), episode_shares, curves)


def pool_stats(results: Sequence[ExperimentResult]) -> dict[str, float]:
    """Win shares pooled over several runs, weighted by evaluation rounds."""
    total = sum(r.stats.rounds for r in results)
    out = {}
    for kind in (BidderKind.OM, BidderKind.IM, BidderKind.RANDOM):
        out[kind.value] = sum(r.stats.share_of(kind) * r.stats.rounds for r in results) / total
    return out


def write_winstats_csv(stats: WinStats, path) -> None:
    agg = stats.aggregate()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "wins", "share"])
        for k in (BidderKind.OM, BidderKind.IM, BidderKind.RANDOM):
            mask = np.array([x is k for x in stats.kinds])
            w.writerow([k.value, int(stats.wins[mask].sum()), f"{agg[k.value]:.6f}"])


def write_episode_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        open(path, "w").close()
        return
    keys = list(rows[0].keys())
    for r in rows[1:]:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
