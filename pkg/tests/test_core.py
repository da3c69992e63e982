import unittest

import numpy as np

from csbandits.core import (
    Allocation,
    CommonThreshold,
    InfeasibleAllocationError,
    InvalidInstanceError,
    PerArmThreshold,
    environment_step,
    linear_mu,
    make_instance,
    optimal_allocation,
    round_regret,
    trace_from_rounds,
)

INSTANCE2_MU = [0.9, 0.89, 0.87, 0.6, 0.3]
INSTANCE2_THETA = [0.7, 0.7, 0.7, 0.6, 0.35]


def instance1():
    return make_instance(linear_mu(0.25, 0.02, 20), 0.6, 6)


def instance2():
    return make_instance(INSTANCE2_MU, INSTANCE2_THETA, 2)


class TestMakeInstance(unittest.TestCase):
    def test_instance1_generator(self):
        inst = instance1()
        self.assertEqual(inst.k, 20)
        self.assertAlmostEqual(inst.mu[0], 0.25)
        self.assertAlmostEqual(inst.mu[1], 0.27)
        self.assertAlmostEqual(inst.mu[-1], 0.63)
        self.assertEqual(inst.theta, CommonThreshold(0.6))
        self.assertTrue(inst.is_common)

    def test_instance2_per_arm(self):
        inst = instance2()
        self.assertEqual(inst.theta, PerArmThreshold(tuple(INSTANCE2_THETA)))
        self.assertFalse(inst.is_common)
        np.testing.assert_allclose(inst.theta_vector, INSTANCE2_THETA)

    def test_zero_budget_is_valid(self):
        inst = make_instance([0.5], CommonThreshold(0.5), 0)
        self.assertEqual(inst.budget_q, 0.0)

    def test_rejects_bad_values(self):
        with self.assertRaises(InvalidInstanceError):
            make_instance([1.2], 0.5, 1)
        with self.assertRaises(InvalidInstanceError):
            make_instance([0.5], 0.0, 1)
        with self.assertRaises(InvalidInstanceError):
            make_instance([0.5], 1.5, 1)
        with self.assertRaises(InvalidInstanceError):
            make_instance([0.5], 0.5, -1)
        with self.assertRaises(InvalidInstanceError):
            make_instance([0.5, 0.4], [0.5], 1)
        with self.assertRaises(InvalidInstanceError):
            make_instance([], 0.5, 1)

    def test_instance_vectors_are_read_only(self):
        inst = instance2()
        with self.assertRaises(ValueError):
            inst.mu_vector[0] = 0.0


class TestEnvironmentStep(unittest.TestCase):
    def test_threshold_equal_allocation_is_censored(self):
        inst = make_instance([1.0, 1.0], [0.6, 0.6], 1)
        fb = environment_step(inst, Allocation(np.array([0.6, 0.0])), np.random.default_rng(0))
        self.assertEqual(fb.losses.tolist(), [0, 1])
        self.assertEqual(fb.observed_mask.tolist(), [False, True])

    def test_full_coverage_silences_all_arms(self):
        inst = make_instance([0.9, 0.8, 0.7], 0.5, 3)
        rng = np.random.default_rng(1)
        for _ in range(50):
            fb = environment_step(inst, Allocation(np.ones(3)), rng)
            self.assertEqual(fb.total_loss, 0)
            self.assertFalse(fb.observed_mask.any())

    def test_losses_only_where_observed(self):
        inst = instance2()
        rng = np.random.default_rng(2)
        alloc = Allocation(np.array([0.7, 0.0, 0.7, 0.6, 0.0]))
        for _ in range(200):
            fb = environment_step(inst, alloc, rng)
            self.assertTrue(np.all(fb.losses <= fb.observed_mask))

    def test_zero_allocation_mean_matches_mu(self):
        inst = instance1()
        rng = np.random.default_rng(3)
        alloc = Allocation(np.zeros(inst.k))
        draws = [environment_step(inst, alloc, rng).losses[0] for _ in range(100_000)]
        self.assertAlmostEqual(float(np.mean(draws)), 0.25, delta=0.01)

    def test_infeasible_allocation_names_the_sum(self):
        inst = make_instance([0.5, 0.5], 0.5, 1)
        with self.assertRaises(InfeasibleAllocationError) as ctx:
            environment_step(inst, Allocation(np.array([0.8, 0.8])), np.random.default_rng(0))
        self.assertIn("1.6", str(ctx.exception))

    def test_same_rng_state_is_reproducible(self):
        inst = instance1()
        alloc = Allocation.covering(inst.k, range(10), 0.6)
        a = environment_step(inst, alloc, np.random.default_rng(7))
        b = environment_step(inst, alloc, np.random.default_rng(7))
        self.assertTrue(np.array_equal(a.losses, b.losses))

    def test_allocation_rejects_out_of_range(self):
        with self.assertRaises(ValueError):
            Allocation(np.array([1.5]))
        with self.assertRaises(ValueError):
            Allocation(np.array([-0.1]))


class TestOptimumAndRegret(unittest.TestCase):
    def test_instance2_optimum(self):
        covered, loss = optimal_allocation(instance2())
        self.assertEqual(covered, frozenset({0, 1, 3}))
        self.assertAlmostEqual(loss, 1.17)

    def test_instance1_optimum_covers_top_ten(self):
        covered, loss = optimal_allocation(instance1())
        self.assertEqual(covered, frozenset(range(10, 20)))
        self.assertAlmostEqual(loss, 3.40)

    def test_everything_fits(self):
        inst = make_instance([0.3, 0.4], [0.5, 0.5], 1.0)
        covered, loss = optimal_allocation(inst)
        self.assertEqual(covered, frozenset({0, 1}))
        self.assertEqual(loss, 0.0)

    def test_round_regret_examples(self):
        inst = instance2()
        _, opt = optimal_allocation(inst)
        suboptimal = Allocation.covering(5, [0, 1, 4], inst.theta_vector)
        self.assertAlmostEqual(round_regret(inst, suboptimal, opt), 0.3)
        optimal = Allocation.covering(5, [0, 1, 3], inst.theta_vector)
        self.assertAlmostEqual(round_regret(inst, optimal, opt), 0.0)
        self.assertAlmostEqual(round_regret(inst, Allocation(np.zeros(5)), opt), 2.39)

    def test_trace_cumulative_is_prefix_sum(self):
        trace = trace_from_rounds([0.5, 0.0, 0.25], phase1_end_round=1, theta_estimate=0.6, phase1_done=True)
        np.testing.assert_allclose(trace.cumulative, [0.5, 0.5, 0.75])
        self.assertAlmostEqual(trace.final_regret, 0.75)


if __name__ == "__main__":
    unittest.main()
