import json
import tempfile
import unittest
from pathlib import Path

from csbandits.config import (
    ConfigError,
    load_config,
    parse_config,
    parse_values,
    with_parameter,
)
from csbandits.core import CommonThreshold, PerArmThreshold
from csbandits.policies import PolicyConfig

REPO_ROOT = Path(__file__).resolve().parents[1]


def _doc(**overrides):
    doc = {
        "label": "tiny",
        "instance": {"mu": [0.9, 0.5], "theta": [0.4, 0.4], "q": 1},
        "horizon": 100,
        "delta": 0.1,
        "epsilon": 0.1,
        "gamma": 0.01,
        "policy": "csb-dt",
    }
    doc.update(overrides)
    return doc


class TestBundledConfigs(unittest.TestCase):
    def test_instance1(self):
        cfg = load_config(REPO_ROOT / "config" / "instance1.json")
        self.assertEqual(cfg.policy, "csb-st")
        self.assertEqual(cfg.horizon, 5000)
        self.assertEqual(cfg.replications, 50)
        self.assertEqual(len(cfg.mu), 20)
        self.assertAlmostEqual(cfg.mu[0], 0.25)
        self.assertAlmostEqual(cfg.mu[-1], 0.63)
        self.assertEqual(cfg.theta, CommonThreshold(0.6))
        self.assertEqual(cfg.q, 6.0)
        self.assertEqual(cfg.policy_config, PolicyConfig())
        self.assertIsNone(cfg.gamma)

    def test_instance2(self):
        cfg = load_config(REPO_ROOT / "config" / "instance2.json")
        self.assertEqual(cfg.policy, "csb-dt")
        self.assertEqual(cfg.horizon, 2000)
        self.assertEqual(cfg.gamma, 1e-3)
        self.assertIsInstance(cfg.theta, PerArmThreshold)

    def test_fig3_compares_with_ucb(self):
        cfg = load_config(REPO_ROOT / "config" / "instance2_fig3.json")
        self.assertEqual(cfg.policies, ("csb-dt", "csb-dt-ucb"))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config(REPO_ROOT / "config" / "nao_existe.json")


class TestParseConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = parse_config(_doc())
        self.assertEqual(cfg.replications, 50)
        self.assertEqual(cfg.master_seed, 0)
        self.assertEqual(cfg.policy_config.scale_s, 10_000)
        self.assertEqual(cfg.policy_config.resolve_period, 1)
        self.assertEqual(cfg.output_dir, "out/tiny")

    def test_per_arm_theta_with_csb_st_is_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(_doc(policy="csb-st"))
        self.assertEqual(ctx.exception.field_path, "policy")

    def test_unknown_keys_report_field_path(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(_doc(horizonte=10))
        self.assertEqual(ctx.exception.field_path, "horizonte")

        doc = _doc()
        doc["instance"]["budget"] = 2
        with self.assertRaises(ConfigError) as ctx:
            parse_config(doc)
        self.assertEqual(ctx.exception.field_path, "instance.budget")

    def test_type_errors_report_field_path(self):
        doc = _doc()
        doc["instance"]["theta"] = {"per_arm": [0.4, "x"]}
        with self.assertRaises(ConfigError) as ctx:
            parse_config(doc)
        self.assertEqual(ctx.exception.field_path, "instance.theta.per_arm[1]")
        self.assertIn("instance.theta.per_arm[1]", str(ctx.exception))

        with self.assertRaises(ConfigError) as ctx:
            parse_config(_doc(horizon="100"))
        self.assertEqual(ctx.exception.field_path, "horizon")

    def test_invalid_instance_values_report_exact_path(self):
        cases = [
            ({"mu": [0.9, 1.5], "theta": [0.4, 0.4], "q": 1}, "instance.mu[1]"),
            ({"mu": [0.9, 0.5], "theta": {"per_arm": [0.4, 1.5]}, "q": 1}, "instance.theta.per_arm[1]"),
            ({"mu": [0.9, 0.5], "theta": [0.0, 0.4], "q": 1}, "instance.theta[0]"),
            ({"mu": [0.9, 0.5], "theta": {"common": 1.5}, "q": 1}, "instance.theta.common"),
            ({"mu": [0.9, 0.5], "theta": [0.4, 0.4, 0.4], "q": 1}, "instance.theta"),
            ({"mu": [0.9, 0.5], "theta": [0.4, 0.4], "q": -1}, "instance.q"),
            ({"mu": "linear(0.9,0.1)", "k": 3, "theta": [0.4, 0.4, 0.4], "q": 1}, "instance.mu"),
        ]
        for instance, path in cases:
            with self.subTest(path=path):
                doc = _doc()
                doc["instance"] = instance
                with self.assertRaises(ConfigError) as ctx:
                    parse_config(doc)
                self.assertEqual(ctx.exception.field_path, path)

    def test_mu_generator_forms(self):
        as_string = _doc(policy="csb-st")
        as_string["instance"] = {"mu": "linear(0.25, 0.02)", "k": 20, "theta": 0.6, "q": 6}
        as_object = _doc(policy="csb-st")
        as_object["instance"] = {
            "mu": {"linear": {"start": 0.25, "step": 0.02, "k": 20}},
            "theta": {"common": 0.6},
            "q": 6,
        }
        a = parse_config(as_string)
        b = parse_config(as_object)
        self.assertEqual(a.mu, b.mu)
        self.assertEqual(a.theta, b.theta)

        missing_k = _doc()
        missing_k["instance"]["mu"] = "linear(0.25,0.02)"
        with self.assertRaises(ConfigError) as ctx:
            parse_config(missing_k)
        self.assertEqual(ctx.exception.field_path, "instance.k")

    def test_delta_one_over_horizon(self):
        cfg = parse_config(_doc(delta="1/T", horizon=200))
        self.assertAlmostEqual(cfg.delta, 1 / 200)
        with self.assertRaises(ConfigError):
            parse_config(_doc(delta=0))

    def test_gamma_defaults_to_residual_slack(self):
        doc = _doc()
        del doc["gamma"]
        cfg = parse_config(doc)
        # Both arms fit (0.8 <= 1): residual 0.2 spread over K=2.
        self.assertAlmostEqual(cfg.gamma, 0.1)

    def test_zero_residual_needs_explicit_gamma(self):
        doc = _doc()
        del doc["gamma"]
        doc["instance"] = {
            "mu": [0.9, 0.89, 0.87, 0.6, 0.3],
            "theta": [0.7, 0.7, 0.7, 0.6, 0.35],
            "q": 2,
        }
        with self.assertRaises(ConfigError) as ctx:
            parse_config(doc)
        self.assertEqual(ctx.exception.field_path, "gamma")

    def test_load_from_file_and_overrides(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "exp.json"
            path.write_text(json.dumps(_doc()), encoding="utf-8")
            cfg = load_config(path)
            out = cfg.with_overrides(master_seed=7, replications=3, output_dir="x")
            self.assertEqual((out.master_seed, out.replications, out.output_dir), (7, 3, "x"))
            with self.assertRaises(ConfigError):
                cfg.with_overrides(replications=0)

            path.write_text("{nope", encoding="utf-8")
            with self.assertRaises(ConfigError):
                load_config(path)


class TestSweepHelpers(unittest.TestCase):
    def test_with_parameter(self):
        cfg = parse_config(
            {
                "label": "i1",
                "instance": {"mu": "linear(0.25,0.02)", "k": 20, "theta": 0.6, "q": 6},
                "horizon": 100,
                "delta": 0.1,
                "epsilon": 0.1,
                "policy": "csb-st",
            }
        )
        self.assertEqual(with_parameter(cfg, "q", 2).q, 2.0)
        self.assertEqual(with_parameter(cfg, "theta_c", 0.9).theta, CommonThreshold(0.9))
        self.assertEqual(with_parameter(cfg, "q", 10).label, "i1_q=10")
        with self.assertRaises(ValueError):
            with_parameter(cfg, "epsilon", 0.2)

    def test_q_sweep_recomputes_default_gamma(self):
        doc = _doc()
        del doc["gamma"]
        cfg = parse_config(doc)
        self.assertTrue(cfg.gamma_auto)
        self.assertAlmostEqual(cfg.gamma, 0.1)
        # Both arms still fit at Q=0.9: residual 0.1 over K=2.
        self.assertAlmostEqual(with_parameter(cfg, "q", 0.9).gamma, 0.05)
        with self.assertRaises(ConfigError) as ctx:
            with_parameter(cfg, "q", 0.8)
        self.assertEqual(ctx.exception.field_path, "gamma")

    def test_q_sweep_keeps_explicit_gamma(self):
        cfg = parse_config(_doc())
        self.assertFalse(cfg.gamma_auto)
        self.assertEqual(with_parameter(cfg, "q", 0.9).gamma, 0.01)

    def test_theta_sweep_needs_common_theta(self):
        with self.assertRaises(ConfigError):
            with_parameter(parse_config(_doc()), "theta_c", 0.5)

    def test_parse_values(self):
        self.assertEqual(parse_values("2, 6,10"), (2.0, 6.0, 10.0))
        self.assertEqual(parse_values([0.3, 0.6]), (0.3, 0.6))
        with self.assertRaises(ValueError):
            parse_values("")
        with self.assertRaises(ValueError):
            parse_values("a,b")


if __name__ == "__main__":
    unittest.main()
