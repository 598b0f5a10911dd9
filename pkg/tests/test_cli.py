import math
from pathlib import Path

import numpy as np
import pytest

from crcontrol.cli import main
from crcontrol.lti import msd_plant

CONFIG_DIR = Path(__file__).parent / "configs"


def write_frf_fixture(path):
    plant = msd_plant()
    f = np.geomspace(1.0, 2000.0, 60)
    resp = plant.freq_response(2.0 * math.pi * f)
    lines = ["freq_hz,re,im"]
    for fi, r in zip(f, resp):
        lines.append(f"{float(fi)!r},{float(r.real)!r},{float(r.imag)!r}")
    path.write_text("\n".join(lines) + "\n")


def run_cli(*argv):
    return main(list(argv))


class TestExampleConfigs:
    """Every bundled experiment config runs end to end."""

    @pytest.mark.parametrize(
        "kind",
        ["step", "sens", "dfloop", "hosidf", "stability", "sweep", "design", "gainvar"],
    )
    def test_config_runs_clean(self, kind, tmp_path):
        code = run_cli(kind, "--config", str(CONFIG_DIR / f"{kind}.cfg"), "--out", str(tmp_path))
        assert code == 0
        summary = (tmp_path / "summary.txt").read_text()
        assert f"experiment = {kind}" in summary

    def test_fit_config_runs_clean(self, tmp_path):
        frf_path = tmp_path / "stage.csv"
        write_frf_fixture(frf_path)
        code = run_cli(
            "fit",
            "--config",
            str(CONFIG_DIR / "fit.cfg"),
            "--frf",
            str(frf_path),
            "--out",
            str(tmp_path),
        )
        assert code == 0
        text = (tmp_path / "summary.txt").read_text()
        gain = float(next(l.split("=")[1] for l in text.splitlines() if l.startswith("gain")))
        assert gain == pytest.approx(9836.0, rel=0.01)
        assert (tmp_path / "fitted_model.txt").read_text().startswith("num = ")


class TestFlags:
    def test_bare_crossover_flag_suffices(self, tmp_path):
        assert run_cli("step", "--wc", "100", "--out", str(tmp_path)) == 0
        summary = (tmp_path / "summary.txt").read_text()
        assert "overshoot" in summary

    def test_absolute_corner_flags_override(self, tmp_path):
        code = run_cli(
            "dfloop", "--wc", "100", "--wr", "120", "--wl", "45", "--wh", "2000",
            "--wf", "2000", "--gamma", "0.0", "--out", str(tmp_path),
        )
        assert code == 0

    def test_hosidf_even_rows_zero(self, tmp_path):
        code = run_cli("hosidf", "--element", "clegg", "--n", "5", "--wc", "1",
                       "--gamma", "0.0", "--out", str(tmp_path))
        assert code == 0
        rows = (tmp_path / "hosidf_clegg.csv").read_text().splitlines()[1:]
        even = [r for r in rows if r.split(",")[1] in ("2", "4")]
        assert even and all(float(r.split(",")[2]) == float("-inf") for r in even)


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[loop]\nwc = 100\nbogus_key = 3\n")
        assert run_cli("step", "--config", str(cfg), "--out", str(tmp_path)) == 2

    def test_missing_config_file(self, tmp_path):
        assert run_cli("step", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)) == 2

    def test_invalid_gamma(self, tmp_path):
        assert run_cli("step", "--wc", "100", "--gamma", "2.0", "--out", str(tmp_path)) == 2

    def test_numerical_failure(self, tmp_path):
        # unachievable phase advantage for the corner ratio
        assert run_cli("design", "--wc", "100", "--pa", "45", "--out", str(tmp_path)) == 3

    def test_bad_plant(self, tmp_path):
        assert run_cli("step", "--wc", "100", "--plant", "nonsense", "--out", str(tmp_path)) == 2


class TestDeterminism:
    def test_repeated_runs_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            code = run_cli("step", "--config", str(CONFIG_DIR / "step.cfg"), "--out", str(out))
            assert code == 0
        assert (a / "step_trace.csv").read_bytes() == (b / "step_trace.csv").read_bytes()
        assert (a / "step_trace.resets.csv").read_bytes() == (b / "step_trace.resets.csv").read_bytes()
        assert (a / "summary.txt").read_bytes() == (b / "summary.txt").read_bytes()
