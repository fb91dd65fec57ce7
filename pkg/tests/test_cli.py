import json
import unittest

import yaml
from click.testing import CliRunner

from bilocaltk.exceptions import ConfigurationError
from bilocaltk.main import RunConfig, SIMULATED_SWEEP_HEADER, SWEEP_HEADER, main


class TestCli(unittest.TestCase):
    def setUp(self) -> None:
        self.runner = CliRunner()

    def invoke(self, *args, exit_code=0):
        result = self.runner.invoke(main, list(args))
        self.assertEqual(result.exit_code, exit_code, result.output)
        return result

    def invoke_json(self, *args):
        report = json.loads(self.invoke(*args).output)
        self.assertEqual(report["schema_version"], 1)
        return report


class TestScenariosCommand(TestCli):
    def test_lists_all(self):
        lines = self.invoke("scenarios").output.splitlines()
        self.assertEqual(len(lines), 3)
        self.assertIn("(14)", lines[0])
        self.assertIn("0.500000", lines[0])


class TestPredict(TestCli):
    def test_fourteen(self):
        report = self.invoke_json("predict", "--scenario", "14")
        self.assertEqual(round(report["B"], 6), 1.414214)
        self.assertEqual(round(report["CHSH"], 6), 2.828427)

    def test_noisy_measurement(self):
        report = self.invoke_json("predict", "--scenario", "14", "--vb", "0.78")
        self.assertEqual(round(report["B"], 6), 1.249)
        self.assertAlmostEqual(report["v_effective"], 0.78, places=12)

    def test_thirteen(self):
        report = self.invoke_json("predict", "-s", "13")
        self.assertEqual(round(report["I"], 6), 0.666667)
        self.assertEqual(round(report["J"], 6), 0.166667)

    def test_csv(self):
        lines = self.invoke("predict", "--format", "csv").output.splitlines()
        self.assertEqual(lines[0], "scenario,v_effective,I,J,B,CHSH")
        self.assertEqual(lines[1], "14,1.000000,0.500000,0.500000,1.414214,2.828427")

    def test_bad_input(self):
        self.invoke("predict", "--v1", "1.2", exit_code=2)
        self.invoke("predict", "--scenario", "15", exit_code=2)
        self.invoke("predict", "--vb", "nan", exit_code=2)


class TestSweep(TestCli):
    def test_rows(self):
        lines = self.invoke("sweep", "--steps", "11").output.splitlines()
        self.assertEqual(lines[0], ",".join(SWEEP_HEADER))
        self.assertEqual(len(lines), 12)
        self.assertEqual(lines[7], "0.600000,1.095445,0.948683,1.697056,true,false,false")
        self.assertEqual(lines[11], "1.000000,1.414214,1.224745,2.828427,true,true,true")

    def test_thresholds(self):
        lines = self.invoke("sweep", "--v-min", "0.5", "--v-max", "1", "--steps", "7").output.splitlines()
        self.assertTrue(lines[1].startswith("0.500000,1.000000,"))
        self.assertTrue(lines[1].endswith("false,false,false"))
        cells = lines[3].split(",")
        self.assertEqual(cells[0], "0.666667")
        self.assertEqual(cells[2], "1.000000")
        self.assertEqual(cells[5], "false")

    def test_json(self):
        report = self.invoke_json("sweep", "--steps", "3", "--format", "json")
        self.assertEqual(len(report["rows"]), 3)
        self.assertTrue(report["rows"][2]["nonlocal"])

    def test_bad_range(self):
        self.invoke("sweep", "--v-min", "0.8", "--v-max", "0.2", exit_code=2)
        self.invoke("sweep", "--v-max", "1.5", exit_code=2)


class TestSimulatedSweep(TestCli):
    args = (
        "sweep", "--simulate", "-n", "20000", "--seed", "5", "--steps", "3",
        "--v-min", "0.5", "--bootstrap-rounds", "200",
    )

    def test_rows(self):
        lines = self.invoke(*self.args).output.splitlines()
        self.assertEqual(lines[0], ",".join(SIMULATED_SWEEP_HEADER))
        self.assertEqual(len(lines), 4)
        for line, v in zip(lines[1:], ("0.500000", "0.750000", "1.000000")):
            cells = line.split(",")
            self.assertEqual(cells[0], v)
            predicted, value, sigma, low, high = (float(cell) for cell in cells[1:])
            self.assertLessEqual(abs(value - predicted), 4 * sigma)
            self.assertAlmostEqual(low, value - sigma, places=5)
            self.assertAlmostEqual(high, value + sigma, places=5)

    def test_json(self):
        report = self.invoke_json(*self.args, "--format", "json")
        self.assertEqual(report["seed"], 5)
        self.assertEqual(report["v_max"], 1.0)
        self.assertEqual([row["v"] for row in report["rows"]], [0.5, 0.75, 1.0])
        self.assertEqual(report, self.invoke_json(*self.args, "--format", "json"))

    def test_chsh(self):
        report = self.invoke_json(*self.args, "-s", "chsh", "--format", "json")
        for row in report["rows"]:
            self.assertLessEqual(abs(row["value"] - row["predicted"]), 4 * row["sigma"])

    def test_above_network_visibility(self):
        self.invoke("sweep", "--simulate", "--vb", "0.9", "--v-max", "1.0", exit_code=2)


class TestExperiment(TestCli):
    def test_fourteen(self):
        report = self.invoke_json("experiment", "-s", "14", "--v-target", "0.78", "--seed", "20210114")
        self.assertEqual(report["seed"], 20210114)
        self.assertLessEqual(abs(report["B"] - 1.2490), 3 * report["B_sigma"])

    def test_reproducible_file_output(self):
        args = ["experiment", "-n", "20000", "--seed", "5", "--bootstrap-rounds", "200", "-o", "report.json"]
        with self.runner.isolated_filesystem():
            self.invoke(*args)
            with open("report.json", "rb") as stream:
                first = stream.read()
            self.invoke(*args)
            with open("report.json", "rb") as stream:
                second = stream.read()
        self.assertEqual(first, second)
        self.assertNotIn(b"\r\n", first)

    def test_bad_input(self):
        self.invoke("experiment", "--trials", "0", exit_code=2)
        self.invoke("experiment", "--v-target", "1.5", exit_code=2)
        self.invoke("experiment", "-n", "1001", "--symmetrize", exit_code=2)


class TestCounterexample(TestCli):
    def test_json(self):
        report = self.invoke_json("counterexample")
        self.assertEqual(round(report["B14"], 6), 1.189207)
        self.assertEqual(round(report["B13"], 6), 1.015052)
        self.assertTrue(report["separable"])

    def test_csv(self):
        lines = self.invoke("counterexample", "--format", "csv").output.splitlines()
        self.assertEqual(lines[0], "I14,J14,I13,J13,B14,B13,separable")
        self.assertTrue(lines[1].endswith(",1.189207,1.015052,true"))


class TestLhv(TestCli):
    def test_needs_one_mode(self):
        self.invoke("lhv", exit_code=2)
        self.invoke("lhv", "--fit", "--sample", "10", exit_code=2)

    def test_sample(self):
        report = self.invoke_json("lhv", "--sample", "2000", "--seed", "1")
        self.assertEqual(report["samples"], 2000)
        self.assertLessEqual(report["max_b"], 1 + 1e-9)
        self.assertEqual(report["above_bound"], 0)

    def test_maximize(self):
        report = self.invoke_json("lhv", "--maximize", "bilocal", "--k1", "2", "--k2", "2", "--restarts", "2")
        self.assertLessEqual(report["best_b"], 1 + 1e-9)
        self.assertEqual(report["model"]["class"], "bilocal")
        report = self.invoke_json("lhv", "--maximize", "local", "--k", "8", "--restarts", "1")
        self.assertGreater(report["best_b"], 1.0)

    def test_fit(self):
        report = self.invoke_json("lhv", "--fit", "--k1", "4", "--k2", "4", "--restarts", "1", "--iterations", "5")
        self.assertEqual(report["mode"], "fit")
        self.assertGreaterEqual(report["l2_distance"], 0.0)

    def test_bad_cardinality(self):
        self.invoke("lhv", "--maximize", "local", "--k", "0", exit_code=2)


class TestConfigFile(TestCli):
    def test_sections_and_flags(self):
        config = {"network": {"scenario": "13", "vb": 0.9}, "output": {"format": "csv"}}
        with self.runner.isolated_filesystem():
            with open("config.yml", "w") as stream:
                yaml.safe_dump(config, stream)
            lines = self.invoke("--config-file", "config.yml", "predict").output.splitlines()
            self.assertTrue(lines[1].startswith("13,0.900000,"))
            lines = self.invoke("--config-file", "config.yml", "predict", "-s", "14").output.splitlines()
            self.assertTrue(lines[1].startswith("14,0.900000,"))

    def test_missing_file(self):
        self.invoke("--config-file", "does-not-exist.yml", "predict", exit_code=2)

    def test_malformed_files(self):
        with self.runner.isolated_filesystem():
            for name, text in (("list.yml", "- 1\n- 2\n"), ("broken.yml", "network: [unclosed\n")):
                with open(name, "w") as stream:
                    stream.write(text)
                result = self.invoke("--config-file", name, "predict", exit_code=2)
                self.assertNotIn("Traceback", result.output)

    def test_non_numeric_values(self):
        with self.runner.isolated_filesystem():
            with open("config.yml", "w") as stream:
                yaml.safe_dump({"network": {"trials": "abc"}}, stream)
            result = self.invoke("--config-file", "config.yml", "experiment", exit_code=2)
            self.assertIn("trials", result.output)

    def test_coercion(self):
        run_config = RunConfig.from_sources("experiment", {"network": {"trials": "2000", "v1": "0.9", "seed": 7.0}})
        self.assertEqual(run_config.trials, 2000)
        self.assertEqual(run_config.v1, 0.9)
        self.assertEqual(run_config.seed, 7)
        for values in ({"trials": "abc"}, {"trials": 2.5}, {"v1": True}, {"seed": [1]}):
            with self.assertRaises(ConfigurationError):
                RunConfig.from_sources("experiment", {"network": values})

    def test_merge(self):
        config = {"network": {"v1": 0.5, "trials": 10}, "lhv": {"restarts": 3}, "unrelated": {"v1": 0.1}}
        run_config = RunConfig.from_sources("predict", config, v1=None, v2=0.8)
        self.assertEqual(run_config.v1, 0.5)
        self.assertEqual(run_config.v2, 0.8)
        self.assertEqual(run_config.restarts, 3)
        self.assertAlmostEqual(run_config.v_effective, 0.4, places=12)


if __name__ == "__main__":
    unittest.main()
