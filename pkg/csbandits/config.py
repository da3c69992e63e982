"""Experiment documents (one JSON file per instance).

Example:

    {
      "label": "instance1",
      "instance": {"mu": "linear(0.25,0.02)", "k": 20, "theta": 0.6, "q": 6},
      "horizon": 5000,
      "delta": 0.1,
      "epsilon": 0.1,
      "policy": "csb-st",
      "replications": 50
    }
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from csbandits.core import (
    CommonThreshold,
    CsbInstance,
    InvalidInstanceError,
    PerArmThreshold,
    ThresholdSpec,
    linear_mu,
    make_instance,
)
from csbandits.knapsack import residual_gamma
from csbandits.policies import PolicyConfig

POLICY_TAGS = ("csb-st", "csb-dt", "csb-dt-ucb")

DEFAULT_REPLICATIONS = 50

_TOP_KEYS = {
    "label",
    "instance",
    "horizon",
    "delta",
    "epsilon",
    "gamma",
    "policy",
    "replications",
    "master_seed",
    "policy_config",
    "output_dir",
    "compare_with",
}
_INSTANCE_KEYS = {"mu", "k", "theta", "q"}
_POLICY_CONFIG_KEYS = {"scale_s", "resolve_period", "lcb_exploration"}

_LINEAR_RE = re.compile(r"^\s*linear\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*\)\s*$")


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    label: str
    mu: Tuple[float, ...]
    theta: ThresholdSpec
    q: float
    horizon: int
    delta: float
    epsilon: float
    policy: str
    gamma: Optional[float] = None
    replications: int = DEFAULT_REPLICATIONS
    master_seed: int = 0
    policy_config: PolicyConfig = field(default_factory=PolicyConfig)
    output_dir: str = ""
    compare_with: Tuple[str, ...] = ()
    # gamma was derived by residual_gamma (recomputed by with_parameter)
    gamma_auto: bool = False

    @property
    def policies(self) -> Tuple[str, ...]:
        """Primary policy first, then the comparison series."""
        return (self.policy,) + tuple(p for p in self.compare_with if p != self.policy)

    def with_overrides(
        self,
        *,
        master_seed: Optional[int] = None,
        replications: Optional[int] = None,
        output_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        changes: Dict[str, Any] = {}
        if master_seed is not None:
            if master_seed < 0:
                raise ConfigError("master_seed", f"deve ser >= 0 (recebido {master_seed})")
            changes["master_seed"] = int(master_seed)
        if replications is not None:
            if replications < 1:
                raise ConfigError("replications", f"deve ser >= 1 (recebido {replications})")
            changes["replications"] = int(replications)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes) if changes else self


def build_instance(
    config: ExperimentConfig,
    *,
    theta_path: str = "instance.theta",
    index_mu: bool = True,
) -> CsbInstance:
    try:
        return make_instance(config.mu, config.theta, config.q)
    except InvalidInstanceError as exc:
        raise ConfigError(_instance_error_path(exc, theta_path, index_mu), str(exc)) from exc


def _instance_error_path(exc: InvalidInstanceError, theta_path: str, index_mu: bool) -> str:
    if exc.field == "q":
        return "instance.q"
    if exc.field == "mu":
        return f"instance.mu[{exc.index}]" if index_mu and exc.index is not None else "instance.mu"
    if exc.field == "theta":
        return f"{theta_path}[{exc.index}]" if exc.index is not None else theta_path
    return "instance"


def _theta_path(value: Any) -> str:
    if isinstance(value, dict) and len(value) == 1:
        return f"instance.theta.{next(iter(value))}"
    return "instance.theta"


def _gamma_default(instance: CsbInstance) -> float:
    gamma = residual_gamma(instance)
    if not gamma > 0:
        raise ConfigError(
            "gamma",
            "a folga residual do ótimo é zero; informe gamma explicitamente",
        )
    return gamma


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"esperado número, recebido {type(value).__name__}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"esperado inteiro, recebido {value!r}")
    return int(value)


def _number_list(value: Any, path: str) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(path, "esperada uma lista de números")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _check_keys(raw: Dict[str, Any], allowed: set, path: str) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, f"chave desconhecida (aceitas: {sorted(allowed)})")


def _parse_mu(raw: Dict[str, Any]) -> Tuple[float, ...]:
    if "mu" not in raw:
        raise ConfigError("instance.mu", "campo obrigatório")
    mu = raw["mu"]

    if isinstance(mu, list):
        return _number_list(mu, "instance.mu")

    if isinstance(mu, str):
        match = _LINEAR_RE.match(mu)
        if not match:
            raise ConfigError("instance.mu", f"gerador inválido {mu!r}; use 'linear(start,step)'")
        if "k" not in raw:
            raise ConfigError("instance.k", "obrigatório quando mu é 'linear(start,step)'")
        try:
            start, step = float(match.group(1)), float(match.group(2))
        except ValueError as exc:
            raise ConfigError("instance.mu", f"números inválidos em {mu!r}") from exc
        return _linear(start, step, _integer(raw["k"], "instance.k"), "instance.k")

    if isinstance(mu, dict) and set(mu) == {"linear"} and isinstance(mu["linear"], dict):
        spec = mu["linear"]
        _check_keys(spec, {"start", "step", "k"}, "instance.mu.linear")
        for key in ("start", "step", "k"):
            if key not in spec:
                raise ConfigError(f"instance.mu.linear.{key}", "campo obrigatório")
        return _linear(
            _number(spec["start"], "instance.mu.linear.start"),
            _number(spec["step"], "instance.mu.linear.step"),
            _integer(spec["k"], "instance.mu.linear.k"),
            "instance.mu.linear.k",
        )

    raise ConfigError("instance.mu", "esperada lista, 'linear(start,step)' ou {'linear': {...}}")


def _linear(start: float, step: float, k: int, k_path: str) -> Tuple[float, ...]:
    try:
        return tuple(linear_mu(start, step, k))
    except InvalidInstanceError as exc:
        raise ConfigError(k_path, str(exc)) from exc


def _parse_theta(value: Any) -> ThresholdSpec:
    if isinstance(value, dict):
        if set(value) == {"common"}:
            return CommonThreshold(_number(value["common"], "instance.theta.common"))
        if set(value) == {"per_arm"}:
            return PerArmThreshold(_number_list(value["per_arm"], "instance.theta.per_arm"))
        raise ConfigError("instance.theta", "objeto deve ter exatamente 'common' ou 'per_arm'")
    if isinstance(value, list):
        return PerArmThreshold(_number_list(value, "instance.theta"))
    return CommonThreshold(_number(value, "instance.theta"))


def _parse_probability(value: Any, path: str, horizon: int) -> float:
    if isinstance(value, str):
        if value.replace(" ", "").upper() == "1/T":
            if horizon < 2:
                raise ConfigError(path, "'1/T' exige horizon >= 2")
            return 1.0 / horizon
        raise ConfigError(path, f"valor inválido {value!r}; use número ou '1/T'")
    number = _number(value, path)
    if not (0.0 < number < 1.0):
        raise ConfigError(path, f"deve estar em (0, 1), recebido {number!r}")
    return number


def _parse_policy_tag(value: Any, path: str) -> str:
    tag = str(value).strip().lower()
    if tag not in POLICY_TAGS:
        raise ConfigError(path, f"política desconhecida {value!r} (aceitas: {list(POLICY_TAGS)})")
    return tag


def _parse_policy_config(value: Any) -> PolicyConfig:
    if value is None:
        return PolicyConfig()
    if not isinstance(value, dict):
        raise ConfigError("policy_config", "deve ser um objeto")
    _check_keys(value, _POLICY_CONFIG_KEYS, "policy_config")
    kwargs: Dict[str, Any] = {}
    if "scale_s" in value:
        kwargs["scale_s"] = _integer(value["scale_s"], "policy_config.scale_s")
    if "resolve_period" in value:
        kwargs["resolve_period"] = _integer(value["resolve_period"], "policy_config.resolve_period")
    if "lcb_exploration" in value:
        kwargs["lcb_exploration"] = _number(value["lcb_exploration"], "policy_config.lcb_exploration")
    try:
        return PolicyConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("policy_config", str(exc)) from exc


def _check_policy_theta(policy: str, theta: ThresholdSpec, path: str) -> None:
    if policy == "csb-st" and not isinstance(theta, CommonThreshold):
        raise ConfigError(path, "csb-st exige theta comum (número ou {'common': x})")


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate an already-decoded JSON document."""

    if not isinstance(raw, dict):
        raise ConfigError("$", "documento deve ser um objeto JSON")
    _check_keys(raw, _TOP_KEYS, "")

    for key in ("instance", "horizon", "delta", "epsilon", "policy"):
        if key not in raw:
            raise ConfigError(key, "campo obrigatório")

    inst = raw["instance"]
    if not isinstance(inst, dict):
        raise ConfigError("instance", "deve ser um objeto")
    _check_keys(inst, _INSTANCE_KEYS, "instance")
    for key in ("theta", "q"):
        if key not in inst:
            raise ConfigError(f"instance.{key}", "campo obrigatório")

    mu = _parse_mu(inst)
    theta = _parse_theta(inst["theta"])
    q = _number(inst["q"], "instance.q")

    horizon = _integer(raw["horizon"], "horizon")
    if horizon < 1:
        raise ConfigError("horizon", f"deve ser >= 1 (recebido {horizon})")

    delta = _parse_probability(raw["delta"], "delta", horizon)
    epsilon = _parse_probability(raw["epsilon"], "epsilon", horizon)
    policy = _parse_policy_tag(raw["policy"], "policy")
    _check_policy_theta(policy, theta, "policy")

    compare_raw = raw.get("compare_with") or []
    if isinstance(compare_raw, str):
        compare_raw = [compare_raw]
    if not isinstance(compare_raw, list):
        raise ConfigError("compare_with", "deve ser uma lista de políticas")
    compare_with = []
    for i, tag in enumerate(compare_raw):
        parsed = _parse_policy_tag(tag, f"compare_with[{i}]")
        _check_policy_theta(parsed, theta, f"compare_with[{i}]")
        compare_with.append(parsed)

    replications = _integer(raw.get("replications", DEFAULT_REPLICATIONS), "replications")
    if replications < 1:
        raise ConfigError("replications", f"deve ser >= 1 (recebido {replications})")
    master_seed = _integer(raw.get("master_seed", 0), "master_seed")
    if master_seed < 0:
        raise ConfigError("master_seed", f"deve ser >= 0 (recebido {master_seed})")

    label = str(raw.get("label") or "experiment")
    config = ExperimentConfig(
        label=label,
        mu=mu,
        theta=theta,
        q=q,
        horizon=horizon,
        delta=delta,
        epsilon=epsilon,
        policy=policy,
        replications=replications,
        master_seed=master_seed,
        policy_config=_parse_policy_config(raw.get("policy_config")),
        output_dir=str(raw.get("output_dir") or f"out/{label}"),
        compare_with=tuple(compare_with),
    )
    instance = build_instance(
        config,
        theta_path=_theta_path(inst["theta"]),
        index_mu=isinstance(inst["mu"], list),
    )

    uses_gamma = any(p != "csb-st" for p in config.policies)
    gamma: Optional[float] = None
    if raw.get("gamma") is not None:
        gamma = _number(raw["gamma"], "gamma")
        if not gamma > 0:
            raise ConfigError("gamma", f"deve ser > 0 (recebido {gamma!r})")
    elif uses_gamma:
        gamma = _gamma_default(instance)

    return replace(config, gamma=gamma, gamma_auto=raw.get("gamma") is None and uses_gamma)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Config não encontrada: {path.resolve()}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"JSON inválido em {path}: {exc}") from exc
    return parse_config(raw)


def with_parameter(config: ExperimentConfig, parameter: str, value: float) -> ExperimentConfig:
    """Copy of `config` with `q` or the common `theta_c` replaced."""

    if parameter == "q":
        updated = replace(config, q=float(value), label=f"{config.label}_q={value:g}")
    elif parameter == "theta_c":
        if not isinstance(config.theta, CommonThreshold):
            raise ConfigError("instance.theta", "varredura em theta_c exige theta comum")
        updated = replace(
            config,
            theta=CommonThreshold(float(value)),
            label=f"{config.label}_theta_c={value:g}",
        )
    else:
        raise ValueError(f"Parâmetro de varredura não suportado: {parameter!r} (use 'q' ou 'theta_c')")
    instance = build_instance(updated)
    if updated.gamma_auto:
        updated = replace(updated, gamma=_gamma_default(instance))
    return updated


def parse_values(text: Union[str, Sequence[float]]) -> Tuple[float, ...]:
    """'2,6,10' -> (2.0, 6.0, 10.0)."""
    if not isinstance(text, str):
        return tuple(float(v) for v in text)
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("Lista de valores vazia")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"Valores inválidos: {text!r}") from exc
