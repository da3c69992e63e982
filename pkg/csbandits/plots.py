from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Sequence, Union

import matplotlib

# Headless rendering (safe for CLI jobs)
matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from csbandits.harness import AggregateTrace

CSV_COLUMNS = ("round", "mean_regret", "ci_low", "ci_high", "policy", "label")
WHISKER_POINTS = 20

# Fixed ids and no timestamp: the same traces give byte-identical SVG.
_SVG_RC = {"svg.hashsalt": "csbandits", "svg.fonttype": "none"}

_PALETTE = ("#123a7a", "#c0392b", "#2f8f4e", "#8e44ad", "#d68910", "#2f2f2f")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _rounded(x: float) -> float:
    return float(_fmt(x))


def write_regret_csv(traces: Sequence["AggregateTrace"], path: Path) -> Path:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for trace in traces:
            for t in range(trace.horizon):
                writer.writerow(
                    [
                        t + 1,
                        _fmt(trace.mean[t]),
                        _fmt(trace.ci_low[t]),
                        _fmt(trace.ci_high[t]),
                        trace.policy,
                        trace.label,
                    ]
                )
    return path


def summary_payload(traces: Sequence["AggregateTrace"]) -> Dict[str, object]:
    series: List[Dict[str, object]] = []
    for trace in traces:
        bound = trace.lower_bound_final
        series.append(
            {
                "label": trace.label,
                "policy": trace.policy,
                "replications": trace.replications,
                "horizon": trace.horizon,
                "final_regret": _rounded(trace.final_regret),
                "final_ci_low": _rounded(float(trace.ci_low[-1])),
                "final_ci_high": _rounded(float(trace.ci_high[-1])),
                "phase1_rounds_mean": _rounded(trace.phase1_mean),
                "phase1_rounds_max": trace.phase1_max,
                "phase1_unfinished": trace.phase1_unfinished,
                "recovery_rate": _rounded(trace.recovery_rate),
                "optimal_covered_arms": list(trace.optimal_covered),
                "lower_bound_envelope": None if bound is None else _rounded(bound),
            }
        )
    return {"series": series}


def plot_regret(traces: Sequence["AggregateTrace"], path: Path) -> Path:
    """Mean cumulative regret per series, CI whiskers every T/20 rounds,
    and the dashed c*ln(t) envelope when the instance has one."""

    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4.8))
        try:
            drawn_bounds = set()
            for n, trace in enumerate(traces):
                color = _PALETTE[n % len(_PALETTE)]
                rounds = np.arange(1, trace.horizon + 1)
                ax.plot(
                    rounds,
                    trace.mean,
                    linewidth=1.8,
                    color=color,
                    solid_joinstyle="round",
                    label=f"{trace.label} ({trace.policy})",
                    zorder=2,
                )

                step = max(1, trace.horizon // WHISKER_POINTS)
                idx = np.arange(step - 1, trace.horizon, step)
                ax.errorbar(
                    rounds[idx],
                    trace.mean[idx],
                    yerr=np.vstack([trace.mean[idx] - trace.ci_low[idx], trace.ci_high[idx] - trace.mean[idx]]),
                    fmt="none",
                    ecolor=color,
                    elinewidth=1.0,
                    capsize=2.5,
                    zorder=3,
                )

                coef = trace.lower_bound_coef
                if coef and (trace.label, coef) not in drawn_bounds:
                    drawn_bounds.add((trace.label, coef))
                    ax.plot(
                        rounds,
                        coef * np.log(rounds),
                        linestyle="--",
                        linewidth=1.0,
                        color=color,
                        alpha=0.7,
                        label=f"{trace.label}: envelope inferior",
                    )

            for s in ("right", "top"):
                ax.spines[s].set_visible(False)
            ax.set_xlabel("Rodada t")
            ax.set_ylabel("Regret acumulado")
            ax.legend(frameon=False, fontsize=8)
            ax.margins(x=0.01)
            fig.tight_layout(pad=0.4)
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            close_figure(fig)
    return path


def emit_outputs(traces: Sequence["AggregateTrace"], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write regret.csv, summary.json and regret.svg into `out_dir`."""

    traces = list(traces)
    if not traces:
        raise ValueError("Nenhuma série para gravar (lista de traces vazia)")

    out = Path(out_dir)
    paths = {
        "csv": out / "regret.csv",
        "summary": out / "summary.json",
        "svg": out / "regret.svg",
    }
    current = out
    try:
        out.mkdir(parents=True, exist_ok=True)
        current = paths["csv"]
        write_regret_csv(traces, current)
        current = paths["summary"]
        current.write_text(
            json.dumps(summary_payload(traces), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        current = paths["svg"]
        plot_regret(traces, current)
    except OSError as exc:
        raise OSError(f"Falha ao gravar {current}: {exc}") from exc
    return paths


def close_figure(fig: plt.Figure) -> None:
    try:
        plt.close(fig)
    except Exception:
        pass
