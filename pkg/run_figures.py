from __future__ import annotations

import argparse
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from csb import LOG_FILE_ENV, _configure_logging, _resolve_path
from csbandits.config import load_config, parse_values
from csbandits.harness import AggregateTrace, emit_outputs, run_all, sweep


def _load_job_config(repo_root: Path) -> Dict[str, Any]:
    cfg_path = repo_root / "config" / "figures_job.json"
    if not cfg_path.exists():
        raise FileNotFoundError(
            f"Config não encontrada: {cfg_path}. Edite uma vez e rode novamente."
        )
    raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("figures_job.json deve ser um objeto")
    figures = raw.get("figures")
    if not isinstance(figures, list) or not figures:
        raise ValueError("figures_job.json precisa de 'figures' (lista não vazia)")
    return raw


def run_figure(
    repo_root: Path,
    figure: Dict[str, Any],
    *,
    output_root: Path,
    jobs: int,
    replications: Optional[int] = None,
) -> Path:
    name = figure.get("name")
    config_path = figure.get("config")
    if not name or not config_path:
        raise ValueError("Cada figura precisa de 'name' e 'config'")

    config = load_config(_resolve_path(repo_root, str(config_path))).with_overrides(replications=replications)
    plan = figure.get("sweep")
    traces: List[AggregateTrace]
    if plan:
        if not isinstance(plan, dict) or "param" not in plan or "values" not in plan:
            raise ValueError(f"Figura {name!r}: 'sweep' precisa de 'param' e 'values'")
        traces = sweep(config, str(plan["param"]), parse_values(plan["values"]), jobs=jobs)
    else:
        traces = run_all(config, jobs=jobs)

    out_dir = output_root / str(name)
    emit_outputs(traces, out_dir)
    return out_dir


def main() -> None:
    parser = argparse.ArgumentParser(
        description=(
            "Job fixo: reproduz as três figuras (varredura de Q, varredura de theta_c, CTS vs LCB) "
            "usando config/figures_job.json."
        )
    )
    parser.add_argument("--only", default=None, help="Roda só a figura com esse nome")
    parser.add_argument("--reps", type=int, default=None, help="Sobrescreve o número de replicações de todas as figuras")
    parser.add_argument(
        "--log-level",
        default="INFO",
        help="Nível de log (DEBUG, INFO, WARNING, ERROR). Default: INFO",
    )
    parser.add_argument(
        "--log-file",
        default=None,
        help=f"Opcional: caminho para gravar logs em arquivo. Também pode ser definido via env {LOG_FILE_ENV}.",
    )
    args = parser.parse_args()

    log_file = args.log_file or os.environ.get(LOG_FILE_ENV)
    _configure_logging(str(args.log_level), log_file=log_file)

    repo_root = Path(__file__).resolve().parent
    cfg = _load_job_config(repo_root)
    output_root = _resolve_path(repo_root, str(cfg.get("output_root", "out/figures")))
    jobs = int(cfg.get("jobs", -1))

    for figure in cfg["figures"]:
        if args.only and figure.get("name") != args.only:
            continue
        logging.info("Gerando figura %s...", figure.get("name"))
        out_dir = run_figure(repo_root, figure, output_root=output_root, jobs=jobs, replications=args.reps)
        logging.info("OK: figura %s em %s", figure.get("name"), str(out_dir))


if __name__ == "__main__":
    main()
