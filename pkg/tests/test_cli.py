"""
End-to-end tests of the command line: exit codes, written artifacts, printed conversions.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from main import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from src.tools.files import read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TINY_CONFIG = """\
[subspace]
n_fft = 64
n_sc = 32
t_zero = 8

[window]
t_min = 2
t_max = 16

[optimizer]
n_pilots = 3
max_iters = 30
seed = 1

[output]
out_dir = {out_dir}
"""


def _flat(text: str) -> str:
    return " ".join(text.split())


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG.format(out_dir=tmp_path / "run"))
    return path


@pytest.fixture
def pilot_file(tiny_config, tmp_path):
    assert main(["synthesize", "--config", str(tiny_config)]) == EXIT_OK
    return tmp_path / "run" / "pilots.json"


class TestSynthesize:
    def test_writes_artifacts(self, tiny_config, tmp_path, capsys):
        assert main(["synthesize", "--config", str(tiny_config), "--seed", "5"]) == EXIT_OK
        run = tmp_path / "run"
        for name in ("pilots.json", "trace.csv", "report.json", "report.txt"):
            assert (run / name).exists()
        header = json.loads((run / "pilots.json").read_text())["header"]
        assert header["seed"] == 5
        assert header["config"]["optimizer"]["seed"] == 5
        assert "workers" not in header["config"]
        assert "Pilot Set Report" in capsys.readouterr().out

    def test_seed_and_iteration_overrides(self, tiny_config, tmp_path):
        assert main(["synthesize", "--config", str(tiny_config), "--seed", "7", "--max-iters", "10"]) == EXIT_OK
        header = json.loads((tmp_path / "run" / "pilots.json").read_text())["header"]
        assert header["seed"] == 7
        assert header["config"]["optimizer"]["max_iters"] == 10
        assert header["iterations"] <= 10
        assert len(read_csv(tmp_path / "run" / "trace.csv")) == header["iterations"]

    def test_out_dir_override_and_channels(self, tiny_config, tmp_path):
        out = tmp_path / "elsewhere"
        code = main(
            ["synthesize", "--config", str(tiny_config), "--out-dir", str(out), "--max-iters", "6", "--channels", "random:3"]
        )
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert len(report["channel_db"]) == 3
        assert not (tmp_path / "run").exists()

    def test_papr_on_fills_trace_column(self, tiny_config, tmp_path):
        assert main(["synthesize", "--config", str(tiny_config), "--papr", "on", "--max-iters", "6"]) == EXIT_OK
        rows = read_csv(tmp_path / "run" / "trace.csv")
        assert len(rows) == 6
        assert all(r["papr_db"] != "" for r in rows)
        header = json.loads((tmp_path / "run" / "pilots.json").read_text())["header"]
        assert header["config"]["papr"]["n_papr_reductions"] == 1

    def test_workers_do_not_change_output(self, tiny_config, tmp_path):
        one, two = tmp_path / "w1", tmp_path / "w2"
        assert main(["--workers", "1", "synthesize", "--config", str(tiny_config), "--out-dir", str(one)]) == EXIT_OK
        assert main(["--workers", "2", "synthesize", "--config", str(tiny_config), "--out-dir", str(two)]) == EXIT_OK
        assert (one / "pilots.json").read_bytes() == (two / "pilots.json").read_bytes()

    def test_missing_required_key(self, tmp_path, capsys):
        path = tmp_path / "broken.cfg"
        path.write_text(TINY_CONFIG.format(out_dir=tmp_path / "run").replace("n_fft = 64\n", ""))
        assert main(["synthesize", "--config", str(path)]) == EXIT_CONFIG
        assert "n_fft" in _flat(capsys.readouterr().out)
        assert not (tmp_path / "run").exists()

    def test_bad_value_names_line(self, tmp_path, capsys):
        path = tmp_path / "broken.cfg"
        path.write_text(TINY_CONFIG.format(out_dir=tmp_path / "run").replace("n_pilots = 3", "n_pilots = three"))
        assert main(["synthesize", "--config", str(path)]) == EXIT_CONFIG
        out = _flat(capsys.readouterr().out)
        assert "line 11" in out
        assert "n_pilots" in out

    def test_weight_count_mismatch(self, tiny_config):
        assert main(["synthesize", "--config", str(tiny_config), "--mixture-weights", "1,1"]) == EXIT_CONFIG


class TestEvaluate:
    def test_writes_plot_data(self, pilot_file, tmp_path):
        out = tmp_path / "eval"
        assert main(["evaluate", str(pilot_file), "--out-dir", str(out)]) == EXIT_OK
        for name in ("fd_magnitude.csv", "td_magnitude.csv", "profiles.csv", "mixture_profiles.csv", "report.json"):
            assert (out / name).exists()
        assert not (out / "channel_profiles.csv").exists()

        rows = read_csv(out / "td_magnitude.csv")
        for p in range(3):
            mags = np.array([float(r[f"pilot_{p}"]) for r in rows])
            tail = np.array([r["tail"] == "1" for r in rows])
            assert tail.sum() == 8
            assert mags[tail].max() <= 1e-9 * mags.max()

        profiles = read_csv(out / "profiles.csv")
        assert {r["kind"] for r in profiles} == {"acf", "mcf"}
        assert len(profiles) == (3 + 3) * 17

    def test_metrics_match_pilot_file(self, pilot_file, tmp_path):
        out = tmp_path / "eval"
        assert main(["evaluate", str(pilot_file), "--out-dir", str(out)]) == EXIT_OK
        stored = json.loads(pilot_file.read_text())["header"]["metrics"]
        report = json.loads((out / "report.json").read_text())
        for key in ("acf_db", "mixture_db", "papr_db"):
            assert np.allclose(report[key], stored[key], atol=0.01)
        assert report["mean_mixture_db"] == pytest.approx(stored["mean_mixture_db"], abs=0.01)

    def test_default_out_dir_and_channels(self, pilot_file):
        assert main(["evaluate", str(pilot_file), "--channels", "random:4", "--mixture-weights", "1,0.5,2"]) == EXIT_OK
        run = pilot_file.parent
        assert (run / "channel_profiles.csv").exists()
        assert {r["kind"] for r in read_csv(run / "channel_profiles.csv")} == {"channel"}

    def test_corrupt_pilot_file(self, tmp_path, capsys):
        path = tmp_path / "pilots.json"
        path.write_text("{\"header\": ")
        assert main(["evaluate", str(path)]) == EXIT_IO
        assert "I/O error" in capsys.readouterr().out

    def test_wrong_version(self, pilot_file):
        raw = json.loads(pilot_file.read_text())
        raw["header"]["format_version"] = 99
        pilot_file.write_text(json.dumps(raw))
        assert main(["evaluate", str(pilot_file)]) == EXIT_IO

    def test_missing_pilot_file(self, tmp_path):
        assert main(["evaluate", str(tmp_path / "absent.json")]) == EXIT_IO


class TestInfo:
    def test_full_scale_conversions(self, capsys):
        assert main(["info", str(CONFIGS / "full-scale.cfg")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "12.2 ns" in out
        assert "1.506 us" in out
        assert "14.24 us" in out
        assert "25.0%" in out

    def test_slot_savings_for_many_pilots(self, tmp_path, capsys):
        path = tmp_path / "many.cfg"
        path.write_text((CONFIGS / "full-scale.cfg").read_text().replace("n_pilots = 4", "n_pilots = 64"))
        assert main(["info", str(path)]) == EXIT_OK
        assert "95.3%" in capsys.readouterr().out

    def test_info_on_pilot_file(self, pilot_file, capsys):
        capsys.readouterr()
        assert main(["info", str(pilot_file)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "64 / 32 / 8" in out
        assert "0.0%" in out
