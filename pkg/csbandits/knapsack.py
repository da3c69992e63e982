from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, FrozenSet, Optional, Sequence, Tuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from csbandits.core import CsbInstance

# Slack on sum(a_i) <= Q; elements like Q/(K-j) are not exactly representable.
FEASIBILITY_SLACK = 1e-9

BRUTEFORCE_MAX_ITEMS = 20
DEFAULT_SCALE = 10_000
MAX_SCALED_CAPACITY = 2**31 - 1

_TIE_TOL = 1e-12
_SCALE_EPS = 1e-12
_CHUNK = 1 << 15


@dataclass(frozen=True)
class KnapsackSolution:
    """Chosen (covered) items of KP(values, weights, capacity); 0-based indices."""

    chosen: FrozenSet[int]
    total_value: float
    total_weight: float


@dataclass(frozen=True)
class EquivalenceResult:
    m_arms: int
    theta_hat: float
    candidate_set: Tuple[float, ...]


def theta_candidate_set(k: int, q: float) -> Tuple[float, ...]:
    """Ascending {Q/K, Q/(K-1), ..., min(1, Q)}, restricted to values <= 1."""

    if k < 1:
        raise ValueError(f"k={k} deve ser >= 1")
    if not q > 0:
        raise ValueError(f"Q={q!r} deve ser > 0 para montar o conjunto de candidatos")

    m_low = max(1, math.ceil(q - _TIE_TOL))
    out = [q / m for m in range(k, m_low - 1, -1)]
    last = min(1.0, q)
    if not out or out[-1] < last - _TIE_TOL:
        out.append(last)
    return tuple(out)


def allocation_equivalent_theta(theta_c: float, q: float, k: int) -> EquivalenceResult:
    """M = min(floor(Q/theta_c), K) and theta_hat = Q/M (capped at 1)."""

    if not (0.0 < theta_c <= 1.0):
        raise ValueError(f"theta_c={theta_c!r} fora de (0, 1]")
    if q < theta_c:
        raise ValueError(f"Q={q!r} < theta_c={theta_c!r}: nenhum braço pode ser coberto")

    m_arms = min(int(math.floor(q / theta_c + FEASIBILITY_SLACK)), int(k))
    theta_hat = min(1.0, q / m_arms)
    return EquivalenceResult(
        m_arms=m_arms,
        theta_hat=theta_hat,
        candidate_set=theta_candidate_set(k, q),
    )


def _as_vectors(values: Sequence[float], weights: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1:
        raise ValueError(f"values e weights com tamanhos diferentes: {v.shape} vs {w.shape}")
    return v, w


def _solution(v: np.ndarray, w: np.ndarray, chosen: Sequence[int]) -> KnapsackSolution:
    idx = sorted(int(i) for i in chosen)
    return KnapsackSolution(
        chosen=frozenset(idx),
        total_value=float(v[idx].sum()) if idx else 0.0,
        total_weight=float(w[idx].sum()) if idx else 0.0,
    )


def solve_bruteforce(values: Sequence[float], weights: Sequence[float], capacity: float) -> KnapsackSolution:
    """Exhaustive 0-1 knapsack over all 2^n subsets (n <= 20).

    Ties on value go to fewer items, then to the lexicographically smallest
    index set.
    """

    v, w = _as_vectors(values, weights)
    n = v.size
    if n > BRUTEFORCE_MAX_ITEMS:
        raise ValueError(f"Força bruta limitada a {BRUTEFORCE_MAX_ITEMS} itens (recebido {n})")
    if n == 0:
        return KnapsackSolution(frozenset(), 0.0, 0.0)

    shifts = np.arange(n, dtype=np.int64)
    # Reversed-bit weights: the lexicographically smallest index set has the
    # largest reversed mask among sets of equal size.
    rev_weights = 2.0 ** (n - 1 - shifts)

    best: Optional[Tuple[float, int, float, int]] = None
    total = 1 << n
    for start in range(0, total, _CHUNK):
        masks = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(float)
        tv = bits @ v
        tw = bits @ w
        feasible = tw <= capacity + FEASIBILITY_SLACK
        if not feasible.any():
            continue

        chunk_best = float(tv[feasible].max())
        tied = np.flatnonzero(feasible & (tv >= chunk_best - _TIE_TOL))
        popcount = bits[tied].sum(axis=1)
        rev = bits[tied] @ rev_weights
        pick = tied[np.lexsort((-rev, popcount))[0]]
        cand = (float(tv[pick]), int(bits[pick].sum()), float(bits[pick] @ rev_weights), int(masks[pick]))

        if best is None or cand[0] > best[0] + _TIE_TOL:
            best = cand
        elif abs(cand[0] - best[0]) <= _TIE_TOL and (cand[1], -cand[2]) < (best[1], -best[2]):
            best = cand

    if best is None:
        # Only possible with a negative capacity.
        return KnapsackSolution(frozenset(), 0.0, 0.0)

    mask = best[3]
    return _solution(v, w, [i for i in range(n) if (mask >> i) & 1])


@lru_cache(maxsize=4096)
def _integer_knapsack(values: Tuple[int, ...], weights: Tuple[int, ...], capacity: int) -> Tuple[int, ...]:
    """Table DP over integer capacity, O(n * capacity). Returns chosen indices."""

    n = len(values)
    if capacity < 0:
        return ()
    if sum(weights) <= capacity:
        return tuple(i for i in range(n) if values[i] >= 0)

    dp = np.zeros(capacity + 1, dtype=np.int64)
    keep = np.zeros((n, capacity + 1), dtype=bool)
    for i, (v, w) in enumerate(zip(values, weights)):
        if w > capacity or v <= 0:
            continue
        cand = dp[: capacity + 1 - w] + v
        better = cand > dp[w:]
        keep[i, w:] = better
        dp[w:] = np.where(better, cand, dp[w:])

    chosen = []
    c = capacity
    for i in range(n - 1, -1, -1):
        if keep[i, c]:
            chosen.append(i)
            c -= weights[i]
    return tuple(sorted(chosen))


def solve_scaled_dp(
    values: Sequence[float],
    weights: Sequence[float],
    capacity: float,
    scale_s: int = DEFAULT_SCALE,
) -> KnapsackSolution:
    """Solve KP(S*values, S*weights, S*capacity) on integers.

    Weights round up and capacity rounds down, so the chosen set is always
    feasible under the original real weights. Values round to nearest.
    """

    scale_s = int(scale_s)
    if scale_s < 1:
        raise ValueError(f"scale_s={scale_s} deve ser >= 1")
    v, w = _as_vectors(values, weights)

    eps = _SCALE_EPS * scale_s
    cap_scaled = math.floor(capacity * scale_s + eps)
    if cap_scaled > MAX_SCALED_CAPACITY:
        raise OverflowError(
            f"Capacidade escalada {cap_scaled} excede o limite {MAX_SCALED_CAPACITY} (Q={capacity}, S={scale_s})"
        )

    v_int = np.rint(v * scale_s).astype(np.int64)
    w_int = np.maximum(np.ceil(w * scale_s - eps), 0).astype(np.int64)
    chosen = _integer_knapsack(
        tuple(int(x) for x in v_int),
        tuple(int(x) for x in w_int),
        int(cap_scaled),
    )
    return _solution(v, w, chosen)


def solve_exact(values: Sequence[float], weights: Sequence[float], capacity: float) -> KnapsackSolution:
    """Ground-truth oracle: exhaustive up to 20 items, scaled DP above."""
    if len(values) <= BRUTEFORCE_MAX_ITEMS:
        return solve_bruteforce(values, weights, capacity)
    return solve_scaled_dp(values, weights, capacity, DEFAULT_SCALE)


def residual_gamma(instance: "CsbInstance") -> float:
    """gamma = (Q - sum of covered thresholds at the optimum) / K."""
    theta = instance.theta_vector
    solution = solve_exact(instance.mu_vector, theta, instance.budget_q)
    residual = instance.budget_q - solution.total_weight
    if residual <= FEASIBILITY_SLACK:
        return 0.0
    return residual / instance.k
