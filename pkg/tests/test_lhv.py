import logging
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt

from bilocaltk.exceptions import ArityError, InvalidModelError
from bilocaltk.inequalities import ChshConfig, chsh_table, ij_for, sign_patterns
from bilocaltk.lhv import (
    BilocalModel,
    LocalModel,
    enumerate_deterministic_bilocal,
    eval_bilocal,
    eval_local,
    fit_bilocal,
    golden_section,
    maximize_b_bilocal,
    maximize_b_local,
    model_b,
    sample_b_values,
    sample_bilocal,
    sample_local,
    simplex_projection,
    two_strategy_witness,
)
from bilocaltk.lhv.models import canonical_tables
from bilocaltk.main import load_config
from bilocaltk.scenario import exact_prediction

log = logging.getLogger("bilocaltk.test_lhv")

BOUND = 1 + 1e-9


class TestLhv(unittest.TestCase):
    def setUp(self) -> None:
        self._config = load_config(Path(__file__).parent.parent / "debug.yml")["tests"]["lhv"]
        self.rng = np.random.default_rng(self._config["seed"])


class TestModels(TestLhv):
    def test_validation(self):
        with self.assertRaises(InvalidModelError):
            BilocalModel([0.5, 0.6], [1.0], [[0, 0], [1, 1]], np.full((2, 1, 4), 0.25), [[0, 1]])
        with self.assertRaises(InvalidModelError):
            BilocalModel([1.0], [1.0], [[0, 2]], np.full((1, 1, 4), 0.25), [[0, 1]])
        with self.assertRaises(InvalidModelError):
            LocalModel([1.0], [[0, 0]], [[0.5, 0.6, 0.0, 0.0]], [[0, 0]])
        with self.assertRaises(InvalidModelError):
            LocalModel([1.0], [[0, 0]], [[0.5, 0.5]], [[0, 0]])

    def test_immutable(self):
        model = sample_bilocal(self.rng)
        with self.assertRaises(ValueError):
            model.bob_table[0, 0, 0] = 1.0

    def test_arity(self):
        model = sample_bilocal(self.rng, b_arity=4)
        self.assertEqual(eval_bilocal(model).scenario, "14")
        self.assertEqual(eval_bilocal(sample_bilocal(self.rng, b_arity=3)).scenario, "13")
        with self.assertRaises(ArityError):
            eval_bilocal(model, b_arity=3)
        with self.assertRaises(ArityError):
            eval_local(sample_local(self.rng, b_arity=3), b_arity=4)

    def test_eval_is_a_distribution(self):
        for _ in range(20):
            for dist in (eval_bilocal(sample_bilocal(self.rng)), eval_local(sample_local(self.rng))):
                npt.assert_allclose(dist.table.sum(axis=(2, 3, 4)), 1.0, atol=1e-12)

    def test_two_strategy_witness(self):
        for b_arity in (4, 3):
            dist = eval_local(two_strategy_witness(b_arity))
            self.assertAlmostEqual(model_b(dist), np.sqrt(2), places=12)
        with self.assertRaises(ArityError):
            two_strategy_witness(2)


class TestBilocalBound(TestLhv):
    def test_deterministic_models(self):
        for b_arity, count in ((4, 64), (3, 48)):
            values = [model_b(eval_bilocal(model)) for model in enumerate_deterministic_bilocal(b_arity)]
            self.assertEqual(len(values), count)
            self.assertLessEqual(max(values), BOUND)
            self.assertAlmostEqual(max(values), 1.0, places=12)

    def test_random_models(self):
        for _ in range(200):
            self.assertLessEqual(model_b(eval_bilocal(sample_bilocal(self.rng, 3, 5))), BOUND)

    def test_batched_samples(self):
        count = self._config["property_samples"]
        for b_arity in (4, 3):
            values = sample_b_values(self.rng, count, self._config["k1"], self._config["k2"], b_arity)
            self.assertEqual(values.shape, (count,))
            log.info("Largest sampled B (arity %d): %.9f", b_arity, values.max())
            self.assertLessEqual(values.max(), BOUND)
            self.assertGreaterEqual(values.min(), 0.0)

    def test_local_models_exceed(self):
        values = [model_b(eval_local(sample_local(self.rng, k=8))) for _ in range(200)]
        self.assertLessEqual(max(values), np.sqrt(2) + 1e-9)

    def test_local_models_obey_chsh(self):
        for _ in range(50):
            dist = eval_local(sample_local(self.rng, k=8))
            for herald in dist.labels:
                for signs in sign_patterns():
                    value = float(chsh_table(dist.table, dist.labels, ChshConfig(herald, signs)))
                    self.assertLessEqual(abs(value), 2 + 1e-9)

    def test_constant_charlie_gives_zero_j(self):
        for b_arity in (4, 3):
            for output in (0, 1):
                model = BilocalModel(
                    self.rng.dirichlet(np.ones(4)),
                    [1.0],
                    canonical_tables(4),
                    self.rng.dirichlet(np.ones(b_arity), size=(4, 1)),
                    [[output, output]],
                )
                self.assertAlmostEqual(ij_for(eval_bilocal(model)).j_value, 0.0, places=12)


class TestSearchHelpers(unittest.TestCase):
    def test_golden_section(self):
        t, value = golden_section(lambda t: -((t - 0.3) ** 2))
        self.assertAlmostEqual(t, 0.3, places=6)
        self.assertAlmostEqual(value, 0.0, places=10)

    def test_golden_section_prefers_full_step(self):
        t, value = golden_section(lambda t: t)
        self.assertEqual(t, 1.0)
        self.assertEqual(value, 1.0)

    def test_simplex_projection(self):
        npt.assert_allclose(simplex_projection(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5], atol=1e-12)
        npt.assert_allclose(simplex_projection(np.array([2.0, 0.0, 0.0])), [1.0, 0.0, 0.0], atol=1e-12)
        npt.assert_allclose(simplex_projection(np.array([0.5, 0.5, 0.5])), np.full(3, 1 / 3), atol=1e-12)
        npt.assert_allclose(simplex_projection(np.array([0.6, -0.4, 0.4])), [0.6, 0.0, 0.4], atol=1e-12)

    def test_simplex_projection_rows(self):
        rows = np.array([[0.2, 0.3, 0.5], [2.0, 0.0, 0.0], [0.6, -0.4, 0.4]])
        projected = simplex_projection(rows)
        for row, expected in zip(rows, projected):
            npt.assert_allclose(simplex_projection(row), expected, atol=1e-12)
        npt.assert_allclose(projected.sum(axis=1), 1.0, atol=1e-12)


class TestMaximize(TestLhv):
    def test_bilocal(self):
        for scenario in ("14", "13"):
            model, best_b = maximize_b_bilocal(
                scenario,
                self._config["k1"],
                self._config["k2"],
                restarts=self._config["restarts"],
                seed=self._config["seed"],
            )
            self.assertIsInstance(model, BilocalModel)
            self.assertGreaterEqual(best_b, 0.999)
            self.assertLessEqual(best_b, BOUND)
            self.assertAlmostEqual(model_b(eval_bilocal(model)), best_b, places=12)

    def test_local(self):
        model, best_b = maximize_b_local(
            "14", self._config["k_local"], restarts=self._config["restarts"], seed=self._config["seed"]
        )
        self.assertIsInstance(model, LocalModel)
        self.assertGreaterEqual(best_b, 1.41)
        self.assertLessEqual(best_b, np.sqrt(2) + 1e-9)

    def test_reproducible(self):
        _, first = maximize_b_bilocal("14", 2, 2, restarts=4, seed=7)
        _, again = maximize_b_bilocal("14", 2, 2, restarts=4, seed=7)
        _, threaded = maximize_b_bilocal("14", 2, 2, restarts=4, seed=7, workers=2)
        self.assertEqual(first, again)
        self.assertEqual(first, threaded)

    def test_invalid(self):
        with self.assertRaises(InvalidModelError):
            maximize_b_bilocal("14", restarts=0)
        with self.assertRaises(InvalidModelError):
            maximize_b_local("14", k=0)


class TestFit(TestLhv):
    def test_realizable_target(self):
        target = eval_bilocal(sample_bilocal(self.rng, 4, 4))
        fitted, distance = fit_bilocal(target, 4, 4, restarts=4, seed=self._config["seed"])
        log.info("Fit residual on a sampled bilocal model: %.3e", distance)
        self.assertLessEqual(distance, 1e-6)
        self.assertTrue(eval_bilocal(fitted).allclose(target, atol=1e-6))

    def test_reproducible(self):
        target = eval_bilocal(sample_bilocal(self.rng, 3, 3, b_arity=3))
        _, first = fit_bilocal(target, 4, 4, restarts=2, iterations=20, seed=3)
        _, threaded = fit_bilocal(target, 4, 4, restarts=2, iterations=20, seed=3, workers=2)
        self.assertEqual(first, threaded)

    def test_noisy_network_is_bilocal(self):
        target = exact_prediction("14", v1=0.45).distribution
        fitted, distance = fit_bilocal(
            target,
            self._config["fit_k"],
            self._config["fit_k"],
            restarts=self._config["fit_restarts"],
            seed=self._config["seed"],
        )
        log.info("Fit residual at v=0.45: %.3e", distance)
        self.assertLessEqual(distance, 1e-3)
        self.assertLessEqual(model_b(eval_bilocal(fitted)), BOUND)

    def test_pure_network_is_not_bilocal(self):
        target = exact_prediction("14").distribution
        _, distance = fit_bilocal(target, 4, 4, restarts=1, iterations=20, seed=self._config["seed"])
        self.assertGreaterEqual(distance, 1e-3)


if __name__ == "__main__":
    unittest.main()
