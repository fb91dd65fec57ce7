import unittest

import numpy as np
import numpy.testing as npt

from bilocaltk.exceptions import (
    ArityError,
    HeraldNeverFires,
    InvalidPovmError,
    InvalidStateError,
    UnknownScenario,
    VisibilityOutOfRange,
)
from bilocaltk.inequalities import (
    ChshConfig,
    IJPair,
    best_chsh_config,
    bilocal_parameter,
    bob_weights,
    chsh,
    chsh_table,
    correlator_14,
    correlators_13,
    ij_13,
    ij_14,
    ij_table,
    predicted_curves,
    predicted_value,
    sign_patterns,
    thresholds,
)
from bilocaltk.measurements import ScenarioName, bsm_full, bsm_noisy, bsm_partial, settings_catalog
from bilocaltk.network import all_swapped_states, tripartite_distribution
from bilocaltk.qcore import BellState, bell_state, werner


def werner_distribution(scenario, v, bob=None):
    bob = bob or (bsm_partial() if scenario == "13" else bsm_full())
    return tripartite_distribution(
        werner(BellState.PHI_PLUS, v), bell_state(BellState.PHI_PLUS), settings_catalog(scenario), bob
    )


class TestBobWeights(unittest.TestCase):
    def test_four_outcomes(self):
        npt.assert_array_equal(bob_weights(("00", "01", "10", "11")), [[1, 1, -1, -1], [1, -1, 1, -1]])

    def test_three_outcomes(self):
        npt.assert_array_equal(bob_weights(("00", "01", "10|11")), [[1, 1, -1], [1, -1, 0]])

    def test_other_arity(self):
        with self.assertRaises(ArityError):
            bob_weights(("0", "1"))

    def test_unknown_labels(self):
        with self.assertRaises(InvalidPovmError):
            bob_weights(("00", "01", "22"))
        with self.assertRaises(InvalidPovmError):
            bob_weights(("00", "01", "10", "10"))


class TestFourteen(unittest.TestCase):
    def test_ideal_correlators(self):
        dist = werner_distribution("14", 1.0)
        for x in (0, 1):
            for z in (0, 1):
                self.assertAlmostEqual(correlator_14(dist, x, 0, z), 0.5, places=10)
                self.assertAlmostEqual(correlator_14(dist, x, 1, z), 0.5 * (-1) ** (x + z), places=10)

    def test_values(self):
        ij = ij_14(werner_distribution("14", 0.85))
        self.assertEqual(ij.scenario, "14")
        self.assertAlmostEqual(ij.i_value, 0.425, places=10)
        self.assertAlmostEqual(ij.j_value, 0.425, places=10)
        self.assertAlmostEqual(bilocal_parameter(ij), np.sqrt(1.7), places=10)

    def test_arity_error(self):
        with self.assertRaises(ArityError):
            ij_14(werner_distribution("13", 1.0))
        with self.assertRaises(ArityError):
            correlator_14(werner_distribution("13", 1.0), 0, 0, 0)


class TestThirteen(unittest.TestCase):
    def test_values(self):
        ij = ij_13(werner_distribution("13", 0.85))
        self.assertAlmostEqual(ij.i_value, 0.566667, places=6)
        self.assertAlmostEqual(ij.j_value, 0.141667, places=6)

    def test_restricted_correlator(self):
        dist = werner_distribution("13", 1.0)
        for x in (0, 1):
            for z in (0, 1):
                first, restricted = correlators_13(dist, x, z)
                self.assertAlmostEqual(first, 2 / 3, places=10)
                self.assertAlmostEqual(restricted, (-1) ** (x + z) / 6, places=10)

    def test_arity_error(self):
        with self.assertRaises(ArityError):
            ij_13(werner_distribution("14", 1.0))


class TestBilocalParameter(unittest.TestCase):
    def test_value(self):
        self.assertAlmostEqual(bilocal_parameter(IJPair(0.432, 0.356, "14")), 1.2540, places=3)
        self.assertAlmostEqual(bilocal_parameter(IJPair(-0.25, 0.25, "14")), 1.0, places=12)

    def test_out_of_range(self):
        with self.assertRaises(InvalidStateError):
            IJPair(1.1, 0.0, "14")

    def test_batched_tables(self):
        tables = np.stack([werner_distribution("14", v).table for v in (0.2, 0.5, 0.9)])
        i_value, j_value = ij_table(tables, ("00", "01", "10", "11"))
        npt.assert_allclose(i_value, [0.1, 0.25, 0.45], atol=1e-10)
        npt.assert_allclose(j_value, [0.1, 0.25, 0.45], atol=1e-10)


class TestChsh(unittest.TestCase):
    def setUp(self) -> None:
        self.settings = settings_catalog("chsh")

    def pairs(self, v=1.0, v_b=1.0):
        return all_swapped_states(
            werner(BellState.PHI_PLUS, v), bell_state(BellState.PHI_PLUS), bsm_noisy(bsm_full(), v_b)
        )

    def test_sign_patterns(self):
        patterns = sign_patterns()
        self.assertEqual(len(patterns), 8)
        self.assertIn((1, 1, -1, 1), patterns)

    def test_config_validation(self):
        with self.assertRaises(InvalidStateError):
            ChshConfig(signs=(1, 1, 1, 1))
        with self.assertRaises(InvalidStateError):
            ChshConfig(signs=(1, -1, -1, 1))

    def test_tsirelson(self):
        self.assertAlmostEqual(chsh(self.pairs(), self.settings), 2 * np.sqrt(2), places=10)

    def test_noise(self):
        self.assertAlmostEqual(chsh(self.pairs(v=0.85), self.settings), 2.404163, places=6)
        self.assertAlmostEqual(chsh(self.pairs(v_b=0.5), self.settings), np.sqrt(2), places=10)

    def test_best_config(self):
        config, value = best_chsh_config(self.pairs(), self.settings)
        self.assertAlmostEqual(value, 2 * np.sqrt(2), places=10)
        self.assertEqual(config.herald, "00")
        self.assertEqual(config.signs, (1, 1, 1, -1))

    def test_maximum_over_all_configs(self):
        pairs = self.pairs()
        values = [
            chsh(pairs, self.settings, ChshConfig(pair.herald_label, signs))
            for pair in pairs
            for signs in sign_patterns()
        ]
        self.assertEqual(len(values), 32)
        self.assertAlmostEqual(max(values), 2 * np.sqrt(2), places=10)
        self.assertLessEqual(max(values), 2 * np.sqrt(2) + 1e-9)

    def test_missing_herald(self):
        pairs = [pair for pair in self.pairs() if pair.herald_label != "01"]
        with self.assertRaises(HeraldNeverFires):
            chsh(pairs, self.settings)

    def test_table_matches_states(self):
        rho = werner(BellState.PHI_PLUS, 0.9)
        dist = tripartite_distribution(rho, rho, self.settings, bsm_full())
        from_table = chsh_table(dist.table, dist.labels)
        self.assertAlmostEqual(float(from_table), chsh(all_swapped_states(rho, rho, bsm_full()), self.settings), 10)

    def test_table_unknown_herald(self):
        dist = tripartite_distribution(bell_state("phi+"), bell_state("phi+"), self.settings, bsm_partial())
        with self.assertRaises(HeraldNeverFires):
            chsh_table(dist.table, dist.labels, ChshConfig("10"))


class TestCurves(unittest.TestCase):
    def test_values(self):
        b14, b13, s = predicted_curves(0.6)
        self.assertAlmostEqual(b14, 1.095445, places=6)
        self.assertAlmostEqual(b13, 0.948683, places=6)
        self.assertAlmostEqual(s, 1.697056, places=6)

    def test_thresholds(self):
        for scenario, v in thresholds().items():
            bound = 2.0 if scenario == "chsh" else 1.0
            self.assertAlmostEqual(predicted_value(scenario, v), bound, places=12)

    def test_matches_exact_pipeline(self):
        for v in np.linspace(0.1, 1, 10):
            for scenario in ("14", "13"):
                ij = (ij_14 if scenario == "14" else ij_13)(werner_distribution(scenario, v))
                self.assertAlmostEqual(bilocal_parameter(ij), predicted_value(scenario, v), places=9)

    def test_errors(self):
        with self.assertRaises(VisibilityOutOfRange):
            predicted_curves(1.5)
        with self.assertRaises(UnknownScenario):
            predicted_value("12", 0.5)

    def test_enum_members(self):
        self.assertAlmostEqual(predicted_value(ScenarioName.THIRTEEN, 0.85), np.sqrt(1.275), places=12)
        self.assertAlmostEqual(predicted_value(ScenarioName.CHSH, 0.5), np.sqrt(2), places=12)
        self.assertAlmostEqual(predicted_value("CHSH", 0.5), np.sqrt(2), places=12)


if __name__ == "__main__":
    unittest.main()
