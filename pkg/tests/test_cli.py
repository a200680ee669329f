"""Command-line tests."""
from __future__ import annotations

import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

import pytest

from ionlink._models import CalibrationModel, NoiseToggles
from ionlink.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from ionlink.obe import scan_dataset
from ionlink.scenario import load_scenario, shipped_scenario

lab = load_scenario(shipped_scenario("paper_lab"))


def run(*argv: str) -> tuple[int, str]:
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(list(argv))
    return code, out.getvalue()


class CliTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def scenario(self, **update) -> str:
        path = self.dir / "scenario.json"
        path.write_text(lab.copy(update=update).json(), encoding="utf-8")
        return str(path)

    def test_validate(self) -> None:
        code, out = run("validate", str(shipped_scenario("paper_lab")), "--stochastic")
        assert code == EXIT_OK
        assert out.strip() == "no violations"

    def test_validate_reports_problems(self) -> None:
        code, out = run("validate", self.scenario(seed=None), "--stochastic")
        assert code == EXIT_CONFIG
        assert "seed: required for stochastic commands" in out

    def test_rate(self) -> None:
        code, out = run("rate", str(shipped_scenario("paper_lab")))
        assert code == EXIT_OK
        assert "analytic rate: 350.6/s" in out
        (line,) = [line for line in out.splitlines() if line.startswith("3 ns window")]
        assert line.endswith(", measured 2.070e-04")
        predicted = float(line.split("predicted ")[1].split(",")[0])
        assert predicted == pytest.approx(1.98e-4, rel=0.05)

    def test_monte_carlo_rate(self) -> None:
        code, out = run("--threads", "2", "rate", self.scenario(), "--mc", "3")
        assert code == EXIT_OK
        assert "monte carlo rate: " in out

    def test_tomography(self) -> None:
        code, out = run(
            "tomography",
            self.scenario(),
            "--shots",
            "400",
            "--out",
            str(self.dir / "run"),
        )
        assert code == EXIT_OK
        assert out.startswith("None: F = ")
        result = json.loads((self.dir / "run" / "result.json").read_text())
        assert set(result["results"]) == {"none", "before", "inside"}
        assert result["seed"] == lab.seed
        assert result["shots"] == 400
        assert result["results"]["none"]["fidelity_stderr"] is None
        dataset = json.loads((self.dir / "run" / "dataset.json").read_text())
        assert len(dataset["settings"]) == 9

    def test_tomography_is_reproducible(self) -> None:
        path = self.scenario()
        run("tomography", path, "--shots", "200", "--out", str(self.dir / "a"))
        run("tomography", path, "--shots", "200", "--out", str(self.dir / "b"))
        a = (self.dir / "a" / "dataset.json").read_text()
        b = (self.dir / "b" / "dataset.json").read_text()
        assert a == b

    def test_budget_is_reproducible(self) -> None:
        noise = NoiseToggles.none().copy(
            update={"qubit_decoherence": True, "qubit_readout": True}
        )
        path = self.scenario(noise=noise)
        outputs = []
        for name in ("a.json", "b.json"):
            code, out = run("budget", path, "--out", str(self.dir / name))
            assert code == EXIT_OK
            outputs.append((out, (self.dir / name).read_bytes()))
        assert outputs[0] == outputs[1]

    def test_monte_carlo_rate_is_reproducible(self) -> None:
        path = self.scenario()
        one = run("--threads", "1", "rate", path, "--mc", "2")
        again = run("--threads", "1", "rate", path, "--mc", "2")
        many = run("--threads", "4", "rate", path, "--mc", "2")
        assert one == again == many

    def test_sweep_window_is_reproducible(self) -> None:
        path = self.scenario()
        files = []
        for name in ("a.csv", "b.csv"):
            out = str(self.dir / name)
            code, _ = run("sweep-window", path, "--windows", "3,20", "--out", out)
            assert code == EXIT_OK
            files.append((self.dir / name).read_bytes())
        assert files[0] == files[1]

    def test_zero_shots(self) -> None:
        out = str(self.dir)
        code, _ = run("tomography", self.scenario(), "--shots", "0", "--out", out)
        assert code == EXIT_CONFIG

    def test_missing_seed(self) -> None:
        code, _ = run("tomography", self.scenario(seed=None), "--out", str(self.dir))
        assert code == EXIT_CONFIG

    def test_missing_file(self) -> None:
        code, _ = run("rate", str(self.dir / "absent.json"))
        assert code == EXIT_IO

    def test_malformed_file(self) -> None:
        path = self.dir / "broken.json"
        path.write_text("{", encoding="utf-8")
        code, _ = run("rate", str(path))
        assert code == EXIT_CONFIG

    def test_budget(self) -> None:
        noise = NoiseToggles.none().copy(update={"qubit_decoherence": True})
        out_path = self.dir / "budget.json"
        code, out = run("budget", self.scenario(noise=noise), "--out", str(out_path))
        assert code == EXIT_OK
        assert out.startswith("Qubit Decoherence")
        budget = json.loads(out_path.read_text())
        assert [m["name"] for m in budget["mechanisms"]] == ["qubit_decoherence"]

    def test_sweep_window(self) -> None:
        out_path = self.dir / "sweep.csv"
        code, _ = run(
            "sweep-window",
            self.scenario(),
            "--windows",
            "3,10,20",
            "--out",
            str(out_path),
        )
        assert code == EXIT_OK
        lines = out_path.read_text().splitlines()
        assert lines[0] == "window_ns,p_w,gamma,rate_per_s"
        assert [line.split(",")[0] for line in lines[1:]] == ["3", "10", "20"]

    def test_fit_polarization(self) -> None:
        model = CalibrationModel(kind="excitation")
        config = self.dir / "model.json"
        config.write_text(model.json(), encoding="utf-8")
        data = self.dir / "scan.csv"
        points = scan_dataset(0.02, model, [0.1 + 0.4 * i for i in range(25)])
        data.write_text(
            "x,y\n" + "".join(f"{x!r},{y!r}\n" for x, y in points), encoding="utf-8"
        )
        code, out = run("fit-polarization", str(data), str(config))
        assert code == EXIT_OK
        assert out.startswith("polarization error: ")
