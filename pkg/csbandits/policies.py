from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence

import numpy as np

from csbandits.core import (
    Allocation,
    CsbInstance,
    FeedbackVector,
    RegretTrace,
    draw_latent_losses,
    environment_step,
    optimal_allocation,
    round_regret,
    trace_from_rounds,
)
from csbandits.estimation import (
    CommonSearchState,
    PerArmSearchState,
    dt_allocation,
    dt_step,
    dt_window,
    st_allocation,
    st_covered_count,
    st_step,
    st_window,
)
from csbandits.knapsack import DEFAULT_SCALE, allocation_equivalent_theta, solve_scaled_dp
from csbandits.rng import ReplicationStreams


@dataclass(frozen=True)
class PolicyConfig:
    scale_s: int = DEFAULT_SCALE
    # Knapsack re-solve period (rounds between two oracle calls).
    resolve_period: int = 1
    lcb_exploration: float = 1.5

    def __post_init__(self) -> None:
        if int(self.scale_s) < 1:
            raise ValueError(f"scale_s={self.scale_s} deve ser >= 1")
        if int(self.resolve_period) < 1:
            raise ValueError(f"resolve_period={self.resolve_period} deve ser >= 1")
        if not self.lcb_exploration >= 0:
            raise ValueError(f"lcb_exploration={self.lcb_exploration} deve ser >= 0")


@dataclass(frozen=True)
class BetaCounts:
    """Beta(s, f) posterior per arm; s-1 losses and f-1 quiet rounds observed."""

    s: np.ndarray
    f: np.ndarray
    pulls: np.ndarray

    @classmethod
    def uniform(cls, k: int) -> "BetaCounts":
        return cls(
            s=np.ones(k, dtype=np.int64),
            f=np.ones(k, dtype=np.int64),
            pulls=np.zeros(k, dtype=np.int64),
        )


def posterior_sample(counts: BetaCounts, rng: np.random.Generator) -> np.ndarray:
    return rng.beta(counts.s, counts.f)


def mpts_select(samples: Sequence[float], m_arms: int) -> FrozenSet[int]:
    """Leave uncovered the K-M arms with the smallest samples (lower index wins ties)."""

    values = np.asarray(samples, dtype=float)
    k = values.size
    if not (0 <= m_arms <= k):
        raise ValueError(f"m_arms={m_arms} fora de [0, {k}]")
    order = np.argsort(values, kind="stable")
    return frozenset(int(i) for i in order[: k - m_arms])


def cts_select(
    samples: Sequence[float],
    theta_hat: Sequence[float],
    q: float,
    cfg: PolicyConfig,
) -> FrozenSet[int]:
    """Uncovered set = complement of the scaled-DP knapsack on (samples, theta_hat, Q)."""

    solution = solve_scaled_dp(samples, theta_hat, q, cfg.scale_s)
    return frozenset(range(len(theta_hat))) - solution.chosen


class KnapsackOracle:
    """cts_select with a re-solve period: the last chosen set is reused for
    N-1 rounds between two solves."""

    def __init__(self, theta_hat: Sequence[float], q: float, cfg: PolicyConfig):
        self.theta_hat = tuple(float(x) for x in theta_hat)
        self.q = float(q)
        self.cfg = cfg
        self._rounds = 0
        self._last: Optional[FrozenSet[int]] = None

    def select(self, values: Sequence[float]) -> FrozenSet[int]:
        if self._last is None or self._rounds % self.cfg.resolve_period == 0:
            self._last = cts_select(values, self.theta_hat, self.q, self.cfg)
        self._rounds += 1
        return self._last


def lcb_index(counts: BetaCounts, t: int, cfg: PolicyConfig) -> np.ndarray:
    """Optimistic (for losses) index: empirical mean minus a confidence radius, floored at 0."""

    if t < 1:
        raise ValueError(f"t={t} deve ser >= 1")
    n = np.maximum(1, counts.pulls)
    mean = (counts.s - 1) / n
    radius = np.sqrt(cfg.lcb_exploration * math.log(t) / n)
    return np.maximum(0.0, mean - radius)


def posterior_update(counts: BetaCounts, uncovered: FrozenSet[int], feedback: FeedbackVector) -> BetaCounts:
    if not uncovered:
        return counts
    idx = np.fromiter(sorted(uncovered), dtype=int)
    y = feedback.losses[idx].astype(np.int64)
    s = counts.s.copy()
    f = counts.f.copy()
    pulls = counts.pulls.copy()
    s[idx] += y
    f[idx] += 1 - y
    pulls[idx] += 1
    return BetaCounts(s=s, f=f, pulls=pulls)


def _covering_allocation(k: int, uncovered: FrozenSet[int], amounts) -> Allocation:
    covered = np.ones(k, dtype=bool)
    if uncovered:
        covered[list(uncovered)] = False
    return Allocation(np.where(covered, amounts, 0.0))


class _RoundLog:
    """Per-round pseudo-regret, realized loss and (optionally) uncovered sets."""

    def __init__(self, instance: CsbInstance, horizon: int, optimal_mean_loss: float, record_uncovered: bool):
        self.instance = instance
        self.optimal_mean_loss = optimal_mean_loss
        self.regret = np.zeros(horizon)
        self.realized = np.zeros(horizon, dtype=np.int64)
        self.history: Optional[List[FrozenSet[int]]] = [] if record_uncovered else None
        self.t = 0

    def record(self, alloc: Allocation, feedback: FeedbackVector, uncovered: Optional[FrozenSet[int]] = None) -> None:
        self.regret[self.t] = round_regret(self.instance, alloc, self.optimal_mean_loss)
        self.realized[self.t] = feedback.total_loss
        if self.history is not None:
            if uncovered is None:
                uncovered = frozenset(np.flatnonzero(alloc.amounts == 0.0).tolist())
            self.history.append(uncovered)
        self.t += 1


def _check_horizon(horizon: int) -> None:
    if horizon < 1:
        raise ValueError(f"horizon={horizon} deve ser >= 1")


def estimate_common_threshold(
    instance: CsbInstance,
    delta: float,
    epsilon: float,
    rng: ReplicationStreams,
    max_rounds: int,
    *,
    log: Optional[_RoundLog] = None,
) -> CommonSearchState:
    """Run the common-threshold search until it ends or `max_rounds` pass."""

    k, q = instance.k, instance.budget_q
    state = CommonSearchState.start(k, q, st_window(k, q, delta, epsilon))
    while state.rounds_used < max_rounds and not state.done:
        alloc = st_allocation(state, q, k)
        feedback = environment_step(instance, alloc, rng.env)
        if log is not None:
            log.record(alloc, feedback)
        state = st_step(state, feedback)
    return state


def estimate_per_arm_thresholds(
    instance: CsbInstance,
    delta: float,
    epsilon: float,
    gamma: float,
    rng: ReplicationStreams,
    max_rounds: int,
    *,
    log: Optional[_RoundLog] = None,
) -> PerArmSearchState:
    """Run the K bisections until every arm is finished or `max_rounds` pass."""

    q = instance.budget_q
    state = PerArmSearchState.start(instance.k, q, dt_window(instance.k, gamma, delta, epsilon))
    while state.rounds_used < max_rounds and not state.done:
        alloc, tested = dt_allocation(state, q, rng.policy)
        feedback = environment_step(instance, alloc, rng.env)
        if log is not None:
            log.record(alloc, feedback)
        state = dt_step(state, feedback, tested, gamma)
    return state


def run_mpts(
    mu: Sequence[float],
    n_plays: int,
    horizon: int,
    rng: ReplicationStreams,
) -> List[FrozenSet[int]]:
    """Plain multiple-play Thompson sampling in the loss setting.

    Each round plays the `n_plays` arms with the smallest posterior samples
    and observes their losses. Consumes the streams exactly like the
    censored environment, so sequences can be compared round by round.
    """

    mu_arr = np.asarray(mu, dtype=float)
    k = mu_arr.size
    counts = BetaCounts.uniform(k)
    everything = np.ones(k, dtype=bool)
    played_history: List[FrozenSet[int]] = []
    for _ in range(int(horizon)):
        samples = posterior_sample(counts, rng.policy)
        played = mpts_select(samples, k - n_plays)
        latent = draw_latent_losses(mu_arr, rng.env)
        counts = posterior_update(counts, played, FeedbackVector(latent, everything))
        played_history.append(played)
    return played_history


def run_csb_st(
    instance: CsbInstance,
    horizon: int,
    delta: float,
    epsilon: float,
    rng: ReplicationStreams,
    *,
    optimal_mean_loss: Optional[float] = None,
    known_theta: Optional[float] = None,
    record_uncovered: bool = False,
) -> RegretTrace:
    """Binary search for the common threshold, then MP-TS on the induced
    multiple-play problem. `known_theta` skips the search."""

    if not instance.is_common:
        raise ValueError("CSB-ST exige limiar comum (theta comum)")
    _check_horizon(horizon)

    k, q = instance.k, instance.budget_q
    if optimal_mean_loss is None:
        _, optimal_mean_loss = optimal_allocation(instance)
    log = _RoundLog(instance, horizon, optimal_mean_loss, record_uncovered)

    if q <= 0:
        # Nothing can be covered: every arm stays uncovered from round 1.
        theta_hat = 0.0
        phase1_done = True
    elif known_theta is None:
        state = estimate_common_threshold(instance, delta, epsilon, rng, horizon, log=log)
        phase1_done = state.done
        theta_hat = state.final_theta if state.done else state.theta_hat
        if not phase1_done:
            logging.warning(
                "CSB-ST: estimação do limiar não terminou em %d rodadas (theta_hat=%.4f)",
                horizon,
                theta_hat,
            )
    else:
        theta_hat = allocation_equivalent_theta(known_theta, q, k).theta_hat
        phase1_done = True

    phase1_end = log.t
    m_arms = st_covered_count(theta_hat, q, k) if q > 0 else 0
    counts = BetaCounts.uniform(k)
    while log.t < horizon:
        samples = posterior_sample(counts, rng.policy)
        uncovered = mpts_select(samples, m_arms)
        alloc = _covering_allocation(k, uncovered, theta_hat)
        feedback = environment_step(instance, alloc, rng.env)
        log.record(alloc, feedback, uncovered)
        counts = posterior_update(counts, uncovered, feedback)

    return trace_from_rounds(
        log.regret,
        phase1_end_round=phase1_end,
        theta_estimate=float(theta_hat),
        phase1_done=phase1_done,
        realized_loss=log.realized,
        uncovered_history=log.history,
    )


def run_csb_dt(
    instance: CsbInstance,
    horizon: int,
    delta: float,
    epsilon: float,
    gamma: float,
    cfg: PolicyConfig,
    use_lcb: bool,
    rng: ReplicationStreams,
    *,
    optimal_mean_loss: Optional[float] = None,
    record_uncovered: bool = False,
) -> RegretTrace:
    """Per-arm bisection, then CTS (or the LCB comparator) over the knapsack oracle."""

    dt_window(instance.k, gamma, delta, epsilon)
    _check_horizon(horizon)

    k, q = instance.k, instance.budget_q
    if optimal_mean_loss is None:
        _, optimal_mean_loss = optimal_allocation(instance)
    log = _RoundLog(instance, horizon, optimal_mean_loss, record_uncovered)

    state = estimate_per_arm_thresholds(instance, delta, epsilon, gamma, rng, horizon, log=log)
    phase1_end = log.t
    theta_hat = np.array(state.estimate)
    if not state.done:
        logging.warning(
            "CSB-DT: estimação dos limiares não terminou em %d rodadas (%d/%d braços prontos)",
            horizon,
            int(state.finished.sum()),
            k,
        )

    oracle = KnapsackOracle(theta_hat, q, cfg)
    counts = BetaCounts.uniform(k)
    while log.t < horizon:
        if use_lcb:
            values = lcb_index(counts, log.t + 1, cfg)
        else:
            values = posterior_sample(counts, rng.policy)
        uncovered = oracle.select(values)
        alloc = _covering_allocation(k, uncovered, theta_hat)
        feedback = environment_step(instance, alloc, rng.env)
        log.record(alloc, feedback, uncovered)
        counts = posterior_update(counts, uncovered, feedback)

    return trace_from_rounds(
        log.regret,
        phase1_end_round=phase1_end,
        theta_estimate=tuple(float(x) for x in theta_hat),
        phase1_done=state.done,
        realized_loss=log.realized,
        uncovered_history=log.history,
    )
