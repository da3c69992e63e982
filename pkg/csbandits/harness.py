from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from csbandits.config import ExperimentConfig, build_instance, with_parameter
from csbandits.core import CsbInstance, RegretTrace, make_instance, optimal_allocation
from csbandits.knapsack import (
    DEFAULT_SCALE,
    FEASIBILITY_SLACK,
    allocation_equivalent_theta,
    solve_bruteforce,
    solve_scaled_dp,
)
from csbandits.plots import emit_outputs
from csbandits.policies import (
    estimate_common_threshold,
    estimate_per_arm_thresholds,
    run_csb_dt,
    run_csb_st,
)
from csbandits.rng import spawn_streams

__all__ = [
    "AggregateTrace",
    "VerifyReport",
    "aggregate",
    "dt_recovered",
    "emit_outputs",
    "kl_bernoulli",
    "lower_bound_coefficient",
    "lower_bound_envelope",
    "run_all",
    "run_experiment",
    "run_verify",
    "st_recovered",
    "sweep",
]

Z_95 = 1.96
SWEEP_PARAMETERS = ("q", "theta_c")


@dataclass(frozen=True)
class AggregateTrace:
    """Per-round mean cumulative regret over R replications, with a 95% band."""

    label: str
    policy: str
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    replications: int
    phase1_mean: float
    phase1_max: int
    phase1_unfinished: int
    recovery_rate: float
    # 1-based covered arms of the true optimum.
    optimal_covered: Tuple[int, ...] = ()
    lower_bound_coef: Optional[float] = None

    @property
    def horizon(self) -> int:
        return int(self.mean.size)

    @property
    def final_regret(self) -> float:
        return float(self.mean[-1])

    @property
    def lower_bound_final(self) -> Optional[float]:
        if self.lower_bound_coef is None:
            return None
        return self.lower_bound_coef * math.log(self.horizon)


# ---------------------------------------------------------------------------
# Lower-bound envelope


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), with 0*ln(0) = 0."""

    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p={p!r} fora de [0, 1]")
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q={q!r} fora de [0, 1]")
    if q in (0.0, 1.0):
        if p == q:
            return 0.0
        raise ValueError(f"Divergência infinita: q={q!r} e p={p!r}")

    def term(a: float, b: float) -> float:
        return 0.0 if a == 0.0 else a * math.log(a / b)

    return term(p, q) + term(1.0 - p, 1.0 - q)


def lower_bound_coefficient(instance: CsbInstance) -> float:
    """c such that the asymptotic lower bound reads c * ln(t).

    Sum over the M arms of largest loss of (mu_i - mu_b) / d(mu_b, mu_i),
    where mu_b is the largest loss left uncovered.
    """

    if not instance.is_common:
        raise ValueError("Envelope inferior definido apenas para limiar comum")
    k, q = instance.k, instance.budget_q
    theta_c = float(instance.theta.value)  # type: ignore[union-attr]
    m_arms = allocation_equivalent_theta(theta_c, q, k).m_arms if q >= theta_c else 0
    if m_arms >= k or m_arms == 0:
        return 0.0

    mu = np.sort(instance.mu_vector)
    boundary = float(mu[k - m_arms - 1])
    if mu[k - m_arms] <= boundary:
        raise ValueError(
            f"Empate na fronteira: mu_(K-M)={boundary!r} = mu_(K-M+1); divergência KL indefinida"
        )
    return float(sum((m - boundary) / kl_bernoulli(boundary, float(m)) for m in mu[k - m_arms:]))


def lower_bound_envelope(instance: CsbInstance, t: int) -> float:
    if t < 1:
        raise ValueError(f"t={t} deve ser >= 1")
    return lower_bound_coefficient(instance) * math.log(t)


def _safe_lower_bound_coef(instance: CsbInstance) -> Optional[float]:
    if not instance.is_common:
        return None
    try:
        return lower_bound_coefficient(instance)
    except ValueError as exc:
        logging.info("Envelope inferior omitido: %s", exc)
        return None


# ---------------------------------------------------------------------------
# Threshold recovery


def st_recovered(theta_hat: float, instance: CsbInstance) -> bool:
    """theta_hat equals the allocation-equivalent candidate of the true theta_c."""

    if not instance.is_common:
        return False
    if instance.budget_q <= 0:
        return float(theta_hat) == 0.0
    try:
        target = allocation_equivalent_theta(
            float(instance.theta.value), instance.budget_q, instance.k  # type: ignore[union-attr]
        ).theta_hat
    except ValueError:
        return False
    return abs(float(theta_hat) - target) <= FEASIBILITY_SLACK


def dt_recovered(theta_hat: Sequence[float], instance: CsbInstance, gamma: float) -> bool:
    est = np.asarray(theta_hat, dtype=float)
    theta = instance.theta_vector
    if est.shape != theta.shape:
        return False
    return bool(np.all(est >= theta) and np.all(est <= theta + gamma + FEASIBILITY_SLACK))


# ---------------------------------------------------------------------------
# Replications


def _run_replication(
    config: ExperimentConfig,
    instance: CsbInstance,
    policy: str,
    index: int,
    optimal_mean_loss: float,
) -> Tuple[RegretTrace, bool]:
    streams = spawn_streams(config.master_seed, index)
    if policy == "csb-st":
        trace = run_csb_st(
            instance,
            config.horizon,
            config.delta,
            config.epsilon,
            streams,
            optimal_mean_loss=optimal_mean_loss,
        )
        recovered = trace.phase1_done and st_recovered(trace.theta_estimate, instance)  # type: ignore[arg-type]
    else:
        gamma = float(config.gamma)  # type: ignore[arg-type]
        trace = run_csb_dt(
            instance,
            config.horizon,
            config.delta,
            config.epsilon,
            gamma,
            config.policy_config,
            policy == "csb-dt-ucb",
            streams,
            optimal_mean_loss=optimal_mean_loss,
        )
        recovered = trace.phase1_done and dt_recovered(trace.theta_estimate, instance, gamma)  # type: ignore[arg-type]

    logging.debug(
        "rep=%d policy=%s regret_final=%.4f fase1=%d",
        index,
        policy,
        trace.final_regret,
        trace.phase1_end_round,
    )
    return trace, recovered


def aggregate(
    traces: Sequence[RegretTrace],
    *,
    label: str,
    policy: str,
    recovered: Optional[Sequence[bool]] = None,
    optimal_covered: Tuple[int, ...] = (),
    lower_bound_coef: Optional[float] = None,
) -> AggregateTrace:
    """Reduce replications (in the given order) to mean and mean +/- 1.96 sd/sqrt(R)."""

    if not traces:
        raise ValueError("Nenhuma replicação para agregar")
    cumulative = np.vstack([t.cumulative for t in traces])
    r = cumulative.shape[0]
    mean = cumulative.mean(axis=0)
    if r > 1:
        half = Z_95 * cumulative.std(axis=0, ddof=1) / math.sqrt(r)
    else:
        half = np.zeros_like(mean)

    phase1 = np.array([t.phase1_end_round for t in traces], dtype=float)
    flags = list(recovered) if recovered is not None else [False] * r
    return AggregateTrace(
        label=label,
        policy=policy,
        mean=mean,
        ci_low=mean - half,
        ci_high=mean + half,
        replications=r,
        phase1_mean=float(phase1.mean()),
        phase1_max=int(phase1.max()),
        phase1_unfinished=sum(1 for t in traces if not t.phase1_done),
        recovery_rate=float(sum(bool(f) for f in flags)) / r,
        optimal_covered=optimal_covered,
        lower_bound_coef=lower_bound_coef,
    )


def run_experiment(
    config: ExperimentConfig,
    *,
    policy: Optional[str] = None,
    jobs: int = 1,
) -> AggregateTrace:
    """Run R replications of one policy; results are reduced in replication order."""

    policy = policy or config.policy
    instance = build_instance(config)
    covered, optimal_mean_loss = optimal_allocation(instance)

    logging.info(
        "Experimento %s: política=%s K=%d Q=%g T=%d R=%d",
        config.label,
        policy,
        instance.k,
        instance.budget_q,
        config.horizon,
        config.replications,
    )
    started = time.perf_counter()
    results = Parallel(n_jobs=jobs)(
        delayed(_run_replication)(config, instance, policy, index, optimal_mean_loss)
        for index in range(config.replications)
    )
    traces = [trace for trace, _ in results]
    recovered = [flag for _, flag in results]

    unfinished = sum(1 for t in traces if not t.phase1_done)
    if unfinished:
        logging.warning(
            "%s/%s: %d de %d replicações não terminaram a estimação do limiar",
            config.label,
            policy,
            unfinished,
            len(traces),
        )

    result = aggregate(
        traces,
        label=config.label,
        policy=policy,
        recovered=recovered,
        optimal_covered=tuple(sorted(i + 1 for i in covered)),
        lower_bound_coef=_safe_lower_bound_coef(instance),
    )
    logging.info(
        "OK: %s/%s regret_final=%.3f recuperação=%.2f (%.1fs)",
        config.label,
        policy,
        result.final_regret,
        result.recovery_rate,
        time.perf_counter() - started,
    )
    return result


def run_all(config: ExperimentConfig, *, jobs: int = 1) -> List[AggregateTrace]:
    """Primary policy plus every `compare_with` policy, on the same seeds."""
    return [run_experiment(config, policy=p, jobs=jobs) for p in config.policies]


def sweep(
    config: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    *,
    jobs: int = 1,
) -> List[AggregateTrace]:
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"Parâmetro de varredura não suportado: {parameter!r} (use 'q' ou 'theta_c')")
    if not values:
        raise ValueError("Varredura sem valores")
    out = []
    for value in values:
        out.append(run_experiment(with_parameter(config, parameter, value), jobs=jobs))
    return out


# ---------------------------------------------------------------------------
# csb verify


@dataclass(frozen=True)
class VerifyReport:
    knapsack_cases: int
    knapsack_failures: int
    estimation_cases: int
    estimation_failures: int
    seconds: float

    @property
    def ok(self) -> bool:
        return self.knapsack_failures == 0 and self.estimation_failures == 0


def _verify_knapsack(rng: np.random.Generator, cases: int) -> int:
    """Scaled DP against brute force on random instances with K <= 12."""

    failures = 0
    for case in range(cases):
        k = int(rng.integers(1, 13))
        weights = 1.0 - rng.random(k)
        values = 1.0 - rng.random(k)
        capacity = float(rng.uniform(0.0, weights.sum()))
        exact = solve_bruteforce(values, weights, capacity)
        scaled = solve_scaled_dp(values, weights, capacity, DEFAULT_SCALE)
        feasible = scaled.total_weight <= capacity + FEASIBILITY_SLACK
        close = scaled.total_value >= exact.total_value - 2.0 * k / DEFAULT_SCALE
        if not (feasible and close):
            failures += 1
            logging.error(
                "Knapsack caso %d: K=%d capacidade=%.6f exato=%.6f escalado=%.6f peso=%.6f",
                case,
                k,
                capacity,
                exact.total_value,
                scaled.total_value,
                scaled.total_weight,
            )
    return failures


def _verify_noiseless(rng: np.random.Generator, cases: int, seed: int) -> int:
    """With every mu_i = 1 both searches must hit their targets exactly."""

    failures = 0
    delta, epsilon, gamma = 0.1, 0.1, 1e-3
    max_rounds = 10**6
    for case in range(cases):
        streams = spawn_streams(seed, case)

        k = int(rng.integers(2, 21))
        theta_c = float(rng.uniform(0.05, 1.0))
        q = float(rng.uniform(theta_c, max(theta_c, min(float(k), k * theta_c))))
        common = make_instance([1.0] * k, theta_c, q)
        state = estimate_common_threshold(common, delta, epsilon, streams, max_rounds)
        if not (state.done and st_recovered(state.final_theta, common)):
            failures += 1
            logging.error(
                "Busca comum caso %d: K=%d Q=%.4f theta_c=%.4f -> theta_hat=%.4f",
                case,
                k,
                q,
                theta_c,
                state.final_theta,
            )

        k = int(rng.integers(2, 9))
        theta = rng.uniform(0.05, 1.0, size=k)
        q = float(rng.uniform(1.0, float(k)))
        per_arm = make_instance([1.0] * k, theta.tolist(), q)
        dt_state = estimate_per_arm_thresholds(per_arm, delta, epsilon, gamma, streams, max_rounds)
        if not (dt_state.done and dt_recovered(dt_state.estimate, per_arm, gamma)):
            failures += 1
            logging.error(
                "Busca por braço caso %d: theta=%s -> theta_hat=%s",
                case,
                np.round(theta, 4).tolist(),
                np.round(dt_state.estimate, 4).tolist(),
            )
    return failures


def run_verify(cases: int = 200, seed: int = 0) -> VerifyReport:
    """Knapsack equivalence on `cases` instances plus noiseless estimation on cases//4."""

    if cases < 1:
        raise ValueError(f"cases={cases} deve ser >= 1")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    knapsack_failures = _verify_knapsack(rng, cases)
    estimation_cases = max(1, cases // 4)
    estimation_failures = _verify_noiseless(rng, estimation_cases, seed)
    report = VerifyReport(
        knapsack_cases=cases,
        knapsack_failures=knapsack_failures,
        estimation_cases=estimation_cases,
        estimation_failures=estimation_failures,
        seconds=time.perf_counter() - started,
    )
    logging.info(
        "verify: knapsack %d/%d ok, estimação %d/%d ok (%.1fs)",
        cases - knapsack_failures,
        cases,
        estimation_cases - estimation_failures,
        estimation_cases,
        report.seconds,
    )
    return report
