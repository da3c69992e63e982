from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from csbandits.knapsack import FEASIBILITY_SLACK, solve_exact


class InvalidInstanceError(ValueError):
    """`field` is "mu", "theta" or "q"; `index` the offending arm when there is one."""

    def __init__(self, message: str, field_name: Optional[str] = None, index: Optional[int] = None):
        super().__init__(message)
        self.field = field_name
        self.index = index


class InfeasibleAllocationError(ValueError):
    pass


@dataclass(frozen=True)
class CommonThreshold:
    """Same unknown threshold for every arm."""

    value: float


@dataclass(frozen=True)
class PerArmThreshold:
    values: Tuple[float, ...]


ThresholdSpec = Union[CommonThreshold, PerArmThreshold]


@dataclass(frozen=True)
class CsbInstance:
    """Ground truth of a censored semi-bandit problem: (mu, theta, Q).

    Arms are 0-based here; every file output shifts them to 1-based.
    """

    mu: Tuple[float, ...]
    theta: ThresholdSpec
    budget_q: float
    _mu_arr: np.ndarray = field(init=False, repr=False, compare=False)
    _theta_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mu_arr = np.asarray(self.mu, dtype=float)
        if isinstance(self.theta, CommonThreshold):
            theta_arr = np.full(mu_arr.size, float(self.theta.value))
        else:
            theta_arr = np.asarray(self.theta.values, dtype=float)
        mu_arr.flags.writeable = False
        theta_arr.flags.writeable = False
        object.__setattr__(self, "_mu_arr", mu_arr)
        object.__setattr__(self, "_theta_arr", theta_arr)

    @property
    def k(self) -> int:
        return len(self.mu)

    @property
    def is_common(self) -> bool:
        return isinstance(self.theta, CommonThreshold)

    @property
    def mu_vector(self) -> np.ndarray:
        return self._mu_arr

    @property
    def theta_vector(self) -> np.ndarray:
        return self._theta_arr


@dataclass(frozen=True)
class Allocation:
    """Per-arm resource fractions for one round (read-only array)."""

    amounts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.amounts, dtype=float)
        if arr.ndim != 1:
            raise ValueError("Alocação deve ser um vetor 1-D")
        if np.any(arr < 0.0) or np.any(arr > 1.0 + FEASIBILITY_SLACK):
            raise ValueError(f"Cada a_i deve estar em [0, 1]: {arr.tolist()}")
        arr.flags.writeable = False
        object.__setattr__(self, "amounts", arr)

    @classmethod
    def covering(cls, k: int, covered: Sequence[int], amounts: Union[float, Sequence[float], np.ndarray]) -> "Allocation":
        """Give `amounts` (scalar or per-arm vector) to the covered arms, 0 elsewhere."""
        out = np.zeros(k)
        idx = np.fromiter(covered, dtype=int)
        if idx.size:
            if np.isscalar(amounts):
                out[idx] = float(amounts)  # type: ignore[arg-type]
            else:
                out[idx] = np.asarray(amounts, dtype=float)[idx]
        return cls(out)

    @property
    def total(self) -> float:
        return float(self.amounts.sum())

    def check_feasible(self, budget_q: float) -> None:
        total = self.total
        if total > budget_q + FEASIBILITY_SLACK:
            raise InfeasibleAllocationError(
                f"Alocação inviável: soma={total!r} excede Q={budget_q!r}"
            )


@dataclass(frozen=True)
class FeedbackVector:
    """Censored observation Y_t. Censored arms always report 0."""

    losses: np.ndarray
    observed_mask: np.ndarray

    @property
    def total_loss(self) -> int:
        return int(self.losses.sum())


@dataclass
class RegretTrace:
    """One replication: per-round pseudo-regret plus phase annotations."""

    per_round_regret: np.ndarray
    cumulative: np.ndarray
    phase1_end_round: int
    theta_estimate: Union[float, Tuple[float, ...]]
    phase1_done: bool = True
    realized_loss: Optional[np.ndarray] = None
    uncovered_history: Optional[List[FrozenSet[int]]] = None

    @property
    def final_regret(self) -> float:
        return float(self.cumulative[-1]) if self.cumulative.size else 0.0


def _as_threshold(theta: Union[float, Sequence[float], ThresholdSpec]) -> ThresholdSpec:
    if isinstance(theta, (CommonThreshold, PerArmThreshold)):
        return theta
    if isinstance(theta, (int, float)):
        return CommonThreshold(float(theta))
    return PerArmThreshold(tuple(float(v) for v in theta))


def make_instance(
    mu: Sequence[float],
    theta: Union[float, Sequence[float], ThresholdSpec],
    q: float,
) -> CsbInstance:
    """Validate and build an instance; K is inferred from len(mu)."""

    mu_t = tuple(float(v) for v in mu)
    if not mu_t:
        raise InvalidInstanceError("mu vazio: é preciso pelo menos um braço (K >= 1)", "mu")
    for i, v in enumerate(mu_t):
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise InvalidInstanceError(f"mu[{i}]={v!r} fora de [0, 1]", "mu", i)

    spec = _as_threshold(theta)
    thetas = [spec.value] if isinstance(spec, CommonThreshold) else list(spec.values)
    if isinstance(spec, PerArmThreshold) and len(thetas) != len(mu_t):
        raise InvalidInstanceError(
            f"theta por braço tem {len(thetas)} valores, mas K={len(mu_t)}",
            "theta",
        )
    for i, v in enumerate(thetas):
        if not (0.0 < v <= 1.0):
            raise InvalidInstanceError(
                f"theta[{i}]={v!r} fora de (0, 1]",
                "theta",
                i if isinstance(spec, PerArmThreshold) else None,
            )

    q = float(q)
    if not q >= 0.0:
        raise InvalidInstanceError(f"Q={q!r} deve ser >= 0", "q")

    return CsbInstance(mu=mu_t, theta=spec, budget_q=q)


def linear_mu(start: float, step: float, k: int) -> List[float]:
    """mu_i = start + (i-1)*step, the generator used by the identical-threshold instance."""
    if k < 1:
        raise InvalidInstanceError(f"k={k} deve ser >= 1")
    return [round(start + i * step, 12) for i in range(k)]


def draw_latent_losses(mu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(mu_i) draws; one uniform per arm, every round."""
    return (rng.random(mu.size) < mu).astype(np.int8)


def environment_step(instance: CsbInstance, alloc: Allocation, rng: np.random.Generator) -> FeedbackVector:
    alloc.check_feasible(instance.budget_q)
    latent = draw_latent_losses(instance.mu_vector, rng)
    # a_i == theta_i is censored.
    observed = alloc.amounts < instance.theta_vector
    losses = (latent * observed).astype(np.int8)
    losses.flags.writeable = False
    observed.flags.writeable = False
    return FeedbackVector(losses=losses, observed_mask=observed)


def optimal_allocation(instance: CsbInstance) -> Tuple[FrozenSet[int], float]:
    """Covered set of KP(mu, theta, Q) and the optimal mean loss (sum of uncovered mu)."""
    solution = solve_exact(instance.mu_vector, instance.theta_vector, instance.budget_q)
    covered = solution.chosen
    mask = np.ones(instance.k, dtype=bool)
    if covered:
        mask[list(covered)] = False
    return covered, float(instance.mu_vector[mask].sum())


def round_regret(instance: CsbInstance, alloc: Allocation, optimal_mean_loss: float) -> float:
    """Pseudo-regret of one round: expected loss of `alloc` minus the optimum."""
    exposed = alloc.amounts < instance.theta_vector
    return float(instance.mu_vector[exposed].sum()) - optimal_mean_loss


def trace_from_rounds(
    per_round: Sequence[float],
    *,
    phase1_end_round: int,
    theta_estimate: Union[float, Tuple[float, ...]],
    phase1_done: bool,
    realized_loss: Optional[Sequence[int]] = None,
    uncovered_history: Optional[List[FrozenSet[int]]] = None,
) -> RegretTrace:
    regret = np.asarray(per_round, dtype=float)
    return RegretTrace(
        per_round_regret=regret,
        cumulative=np.cumsum(regret),
        phase1_end_round=int(phase1_end_round),
        theta_estimate=theta_estimate,
        phase1_done=bool(phase1_done),
        realized_loss=None if realized_loss is None else np.asarray(realized_loss, dtype=np.int64),
        uncovered_history=uncovered_history,
    )
