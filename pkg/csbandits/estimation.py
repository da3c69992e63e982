"""Threshold estimation phases.

Common threshold: binary search over the candidate set Theta, indices are
1-based as in the published pseudo-code (l=0, u=|Theta|, i=ceil(u/2)).
Per-arm thresholds: K parallel bisections of [0, 1] sharing one budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import FrozenSet, Iterable, Tuple

import numpy as np

from csbandits.core import Allocation, FeedbackVector
from csbandits.knapsack import FEASIBILITY_SLACK, theta_candidate_set


class SearchFinishedError(RuntimeError):
    pass


def _check_probabilities(delta: float, epsilon: float) -> None:
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta={delta!r} deve estar em (0, 1)")
    if not (0.0 < epsilon < 1.0):
        raise ValueError(
            f"epsilon={epsilon!r} deve estar em (0, 1); com epsilon=0 a fase de estimação não termina"
        )


def _window(numerator: float, denominator: float) -> int:
    if numerator <= 0.0:
        return 1
    return max(1, int(math.ceil(numerator / denominator)))


# ---------------------------------------------------------------------------
# Common threshold


@dataclass(frozen=True)
class CommonSearchState:
    candidate_set: Tuple[float, ...]
    lower_idx: int
    upper_idx: int
    current_idx: int
    quiet_count: int
    window: int
    rounds_used: int
    budget_q: float
    n_arms: int

    @classmethod
    def start(cls, k: int, q: float, window: int) -> "CommonSearchState":
        candidates = theta_candidate_set(k, q)
        u = len(candidates)
        return cls(
            candidate_set=candidates,
            lower_idx=0,
            upper_idx=u,
            current_idx=int(math.ceil(u / 2)),
            quiet_count=0,
            window=int(window),
            rounds_used=0,
            budget_q=float(q),
            n_arms=int(k),
        )

    @property
    def done(self) -> bool:
        return self.current_idx == self.upper_idx

    @property
    def theta_hat(self) -> float:
        """Candidate under test (or the final estimate once done)."""
        return self.candidate_set[self.current_idx - 1]

    @property
    def final_theta(self) -> float:
        return self.candidate_set[self.upper_idx - 1]


def st_window(k: int, q: float, delta: float, epsilon: float) -> int:
    """Consecutive quiet rounds before a candidate is declared an overestimate."""

    _check_probabilities(delta, epsilon)
    size = len(theta_candidate_set(k, q))
    if size <= 1:
        return 1
    numerator = math.log(math.log2(size) / delta)
    denominator = max(1, math.floor(q)) * math.log(1.0 / (1.0 - epsilon))
    return _window(numerator, denominator)


def st_covered_count(theta_hat: float, q: float, k: int) -> int:
    return min(int(k), int(math.floor(q / theta_hat + FEASIBILITY_SLACK)))


def st_allocation(state: CommonSearchState, q: float, k: int) -> Allocation:
    """theta_hat to each of the first Q/theta_hat arms, nothing elsewhere."""

    theta_hat = state.theta_hat
    m = st_covered_count(theta_hat, q, k)
    return Allocation.covering(k, range(m), theta_hat)


def st_step(state: CommonSearchState, feedback: FeedbackVector) -> CommonSearchState:
    if state.done:
        raise SearchFinishedError("Busca do limiar comum já terminou")

    l, u, i = state.lower_idx, state.upper_idx, state.current_idx
    quiet = state.quiet_count
    m = st_covered_count(state.theta_hat, state.budget_q, state.n_arms)
    # Losses at uncovered arms say nothing about theta_hat.
    loss_on_covered = bool(np.any(feedback.losses[:m]))

    if loss_on_covered:
        l = i
        i = l + int(math.ceil((u - l) / 2))
        quiet = 0
    else:
        quiet += 1
        if quiet == state.window:
            u = i
            i = u - (u - l) // 2
            quiet = 0

    return replace(
        state,
        lower_idx=l,
        upper_idx=u,
        current_idx=i,
        quiet_count=quiet,
        rounds_used=state.rounds_used + 1,
    )


# ---------------------------------------------------------------------------
# Per-arm thresholds


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PerArmSearchState:
    """Per-arm bisection state. Arrays are read-only; steps return new states.

    `retired` marks arms whose lower bound already reached Q: they can never
    be covered, so their search stops without the good flag.
    """

    lower: np.ndarray
    upper: np.ndarray
    estimate: np.ndarray
    good: np.ndarray
    retired: np.ndarray
    quiet: np.ndarray
    tested: np.ndarray
    window: int
    budget_q: float
    rounds_used: int = 0

    @classmethod
    def start(cls, k: int, q: float, window: int) -> "PerArmSearchState":
        # Initial estimates are the seed allocation: 0.5 on the first floor(Q)
        # arms, (Q - floor(Q)/2) / (K - floor(Q)) on the rest.
        f = min(int(math.floor(q)), k)
        estimate = np.full(k, 0.5)
        if f < k:
            estimate[f:] = min(1.0, (q - f / 2.0) / (k - f))
        lower = np.zeros(k)
        return cls(
            lower=_frozen(lower),
            upper=_frozen(np.ones(k)),
            estimate=_frozen(estimate),
            good=_frozen(np.zeros(k, dtype=bool)),
            retired=_frozen(lower >= q),
            quiet=_frozen(np.zeros(k, dtype=np.int64)),
            tested=_frozen(np.zeros(k, dtype=bool)),
            window=int(window),
            budget_q=float(q),
        )

    @property
    def k(self) -> int:
        return int(self.estimate.size)

    @property
    def finished(self) -> np.ndarray:
        return self.good | self.retired

    @property
    def done(self) -> bool:
        return bool(self.finished.all())


def dt_window(k: int, gamma: float, delta: float, epsilon: float) -> int:
    if not gamma > 0:
        raise ValueError(f"gamma={gamma!r} deve ser > 0 (gamma=0 é uma instância sem solução)")
    _check_probabilities(delta, epsilon)
    grid = math.ceil(1.0 + 1.0 / gamma)
    numerator = math.log(k * math.log2(grid) / delta)
    return _window(numerator, math.log(1.0 / (1.0 - epsilon)))


def dt_allocation(
    state: PerArmSearchState,
    q: float,
    rng: np.random.Generator,
) -> Tuple[Allocation, FrozenSet[int]]:
    """Serve unfinished arms in index order, then spend the leftover on
    randomly chosen finished arms. Returns the arms that got their estimate."""

    k = state.k
    amounts = np.zeros(k)
    remaining = float(q)
    tested = []
    finished = state.finished

    for i in range(k):
        if finished[i]:
            continue
        need = float(state.estimate[i])
        if need <= remaining + FEASIBILITY_SLACK:
            amounts[i] = need
            remaining -= need
            tested.append(i)

    finished_idx = np.flatnonzero(finished)
    if finished_idx.size and remaining > FEASIBILITY_SLACK:
        for i in rng.permutation(finished_idx):
            need = float(state.estimate[i])
            if need <= remaining + FEASIBILITY_SLACK:
                amounts[i] = need
                remaining -= need
                tested.append(int(i))

    return Allocation(amounts), frozenset(tested)


def dt_step(
    state: PerArmSearchState,
    feedback: FeedbackVector,
    tested: Iterable[int],
    gamma: float,
) -> PerArmSearchState:
    """Bisection update restricted to unfinished arms that were tested."""

    lower = state.lower.copy()
    upper = state.upper.copy()
    estimate = state.estimate.copy()
    good = state.good.copy()
    retired = state.retired.copy()
    quiet = state.quiet.copy()
    tested_mask = np.zeros(state.k, dtype=bool)

    for i in tested:
        tested_mask[i] = True
        if good[i] or retired[i]:
            continue
        if feedback.losses[i]:
            lower[i] = estimate[i]
            estimate[i] = (upper[i] + lower[i]) / 2.0
            quiet[i] = 0
            if lower[i] >= state.budget_q:
                retired[i] = True
            continue

        quiet[i] += 1
        if quiet[i] == state.window:
            upper[i] = estimate[i]
            estimate[i] = (upper[i] + lower[i]) / 2.0
            quiet[i] = 0
            if upper[i] - lower[i] <= gamma:
                good[i] = True
                estimate[i] = upper[i]

    return replace(
        state,
        lower=_frozen(lower),
        upper=_frozen(upper),
        estimate=_frozen(estimate),
        good=_frozen(good),
        retired=_frozen(retired),
        quiet=_frozen(quiet),
        tested=_frozen(tested_mask),
        rounds_used=state.rounds_used + 1,
    )
