import csv
import json
import tempfile
import unittest
from pathlib import Path

from csbandits.core import trace_from_rounds
from csbandits.harness import aggregate
from csbandits.plots import emit_outputs


def _series(label, policy, per_round_sets, coef=None):
    traces = [
        trace_from_rounds(r, phase1_end_round=2, theta_estimate=0.6, phase1_done=True)
        for r in per_round_sets
    ]
    return aggregate(
        traces,
        label=label,
        policy=policy,
        recovered=[True] * len(traces),
        optimal_covered=(1, 2, 4),
        lower_bound_coef=coef,
    )


def _two_series():
    rounds = 40
    a = _series("instance2", "csb-dt", [[0.3] * rounds, [0.1] * rounds])
    b = _series("instance2", "csb-dt-ucb", [[0.4] * rounds, [0.2] * rounds], coef=0.5)
    return [a, b]


class TestEmitOutputs(unittest.TestCase):
    def test_empty_trace_list_writes_nothing(self):
        with tempfile.TemporaryDirectory() as td:
            out = Path(td) / "out"
            with self.assertRaises(ValueError):
                emit_outputs([], out)
            self.assertFalse(out.exists())

    def test_writes_csv_summary_and_svg(self):
        traces = _two_series()
        with tempfile.TemporaryDirectory() as td:
            paths = emit_outputs(traces, Path(td) / "fig3")
            for key in ("csv", "summary", "svg"):
                self.assertTrue(paths[key].exists(), key)

            with paths["csv"].open(encoding="utf-8", newline="") as f:
                rows = list(csv.DictReader(f))
            self.assertEqual(len(rows), 2 * 40)
            self.assertEqual(list(rows[0].keys()), ["round", "mean_regret", "ci_low", "ci_high", "policy", "label"])
            self.assertEqual(rows[0]["round"], "1")
            self.assertEqual(rows[39]["round"], "40")
            self.assertEqual(rows[40]["policy"], "csb-dt-ucb")

            summary = json.loads(paths["summary"].read_text(encoding="utf-8"))
            series = summary["series"]
            self.assertEqual([s["policy"] for s in series], ["csb-dt", "csb-dt-ucb"])
            self.assertEqual(series[0]["final_regret"], float(rows[39]["mean_regret"]))
            self.assertEqual(series[1]["final_regret"], float(rows[79]["mean_regret"]))
            self.assertEqual(series[0]["optimal_covered_arms"], [1, 2, 4])
            self.assertIsNone(series[0]["lower_bound_envelope"])
            self.assertIsNotNone(series[1]["lower_bound_envelope"])
            self.assertEqual(series[0]["recovery_rate"], 1.0)

            svg = paths["svg"].read_text(encoding="utf-8")
            self.assertIn("<svg", svg)
            self.assertIn("csb-dt-ucb", svg)

    def test_outputs_are_byte_identical(self):
        traces = _two_series()
        with tempfile.TemporaryDirectory() as td:
            first = emit_outputs(traces, Path(td) / "a")
            second = emit_outputs(traces, Path(td) / "b")
            for key in ("csv", "summary", "svg"):
                self.assertEqual(first[key].read_bytes(), second[key].read_bytes(), key)

    def test_unwritable_target_reports_path(self):
        traces = _two_series()
        with tempfile.TemporaryDirectory() as td:
            blocker = Path(td) / "arquivo"
            blocker.write_text("x", encoding="utf-8")
            with self.assertRaises(OSError) as ctx:
                emit_outputs(traces, blocker)
            self.assertIn(str(blocker), str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
