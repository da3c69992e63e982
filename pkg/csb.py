from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from csbandits.config import ExperimentConfig, load_config, parse_values
from csbandits.harness import emit_outputs, run_all, run_verify, sweep

LOG_FILE_ENV = "CSB_LOG_FILE"


def _configure_logging(level: str, *, log_file: Optional[str] = None) -> None:
    """Always install a stderr handler (plus an optional file), even if the
    host runtime configured logging before us."""

    numeric = getattr(logging, level.upper(), None)
    if not isinstance(numeric, int):
        numeric = logging.INFO

    fmt = logging.Formatter("%(levelname)s: %(message)s")
    handlers: List[logging.Handler] = [logging.StreamHandler(stream=sys.stderr)]
    if log_file:
        log_path = Path(log_file).expanduser().resolve()
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(fmt)

    logging.basicConfig(level=numeric, handlers=handlers, force=True)

    # Third-party libraries can be extremely noisy at DEBUG.
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def _resolve_path(repo_root: Path, p: str) -> Path:
    path = Path(p).expanduser()
    if path.is_absolute():
        return path
    return (repo_root / path).resolve()


def _load(args: argparse.Namespace, repo_root: Path) -> ExperimentConfig:
    config = load_config(_resolve_path(repo_root, str(args.config)))
    return config.with_overrides(
        master_seed=args.seed,
        replications=args.reps,
        output_dir=args.out,
    )


def _cmd_run(args: argparse.Namespace, repo_root: Path) -> int:
    config = _load(args, repo_root)
    traces = run_all(config, jobs=int(args.jobs))
    out_dir = _resolve_path(repo_root, config.output_dir)
    paths = emit_outputs(traces, out_dir)
    logging.info("OK: saídas gravadas em %s (%s)", str(out_dir), ", ".join(p.name for p in paths.values()))
    return 0


def _cmd_sweep(args: argparse.Namespace, repo_root: Path) -> int:
    config = _load(args, repo_root)
    values = parse_values(str(args.values))
    traces = sweep(config, str(args.param), values, jobs=int(args.jobs))
    out_dir = _resolve_path(repo_root, args.out or f"{config.output_dir}_sweep_{args.param}")
    emit_outputs(traces, out_dir)
    for trace in traces:
        logging.info("%s: regret final médio=%.3f", trace.label, trace.final_regret)
    logging.info("OK: varredura gravada em %s", str(out_dir))
    return 0


def _cmd_verify(args: argparse.Namespace, repo_root: Path) -> int:
    report = run_verify(int(args.cases), int(args.seed or 0))
    if not report.ok:
        logging.error(
            "verify falhou: knapsack=%d falhas, estimação=%d falhas",
            report.knapsack_failures,
            report.estimation_failures,
        )
        return 1
    logging.info("OK: verify passou")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--log-level",
        default="INFO",
        help="Nível de log (DEBUG, INFO, WARNING, ERROR). Default: INFO",
    )
    p.add_argument(
        "--log-file",
        default=None,
        help=f"Opcional: caminho para gravar logs em arquivo. Também pode ser definido via env {LOG_FILE_ENV}.",
    )
    p.add_argument("--seed", type=int, default=None, help="Seed mestre (sobrescreve master_seed do config)")


def _add_experiment(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="Caminho do JSON do experimento (ex.: config/instance1.json)")
    p.add_argument("--reps", type=int, default=None, help="Número de replicações (sobrescreve o config)")
    p.add_argument("--out", default=None, help="Diretório de saída (sobrescreve output_dir)")
    p.add_argument(
        "--jobs",
        type=int,
        default=-1,
        help="Replicações em paralelo (joblib). Default: -1 = todos os núcleos",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description=(
            "Simulador de semi-bandits censurados (CSB-ST, CSB-DT, CSB-DT-UCB).\n\n"
            "Gera regret.csv, summary.json e regret.svg a partir de um config JSON."
        )
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Roda um experimento (e as políticas de compare_with)")
    _add_experiment(run_p)
    _add_common(run_p)

    sweep_p = sub.add_parser("sweep", help="Varre q ou theta_c mantendo a mesma seed")
    _add_experiment(sweep_p)
    sweep_p.add_argument("--param", required=True, choices=["q", "theta_c"], help="Parâmetro varrido")
    sweep_p.add_argument("--values", required=True, help="Valores separados por vírgula (ex.: 2,6,10)")
    _add_common(sweep_p)

    verify_p = sub.add_parser("verify", help="Knapsack escalado vs força bruta e estimação sem ruído")
    verify_p.add_argument("--cases", type=int, default=200, help="Número de instâncias de knapsack. Default: 200")
    _add_common(verify_p)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    log_file = args.log_file or os.environ.get(LOG_FILE_ENV)
    _configure_logging(str(args.log_level), log_file=log_file)
    logging.info("Logging inicializado (level=%s)%s", str(args.log_level).upper(), f" file={log_file}" if log_file else "")

    repo_root = Path(__file__).resolve().parent
    commands = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify}
    return commands[args.command](args, repo_root)


if __name__ == "__main__":
    sys.exit(main())
