"""
Tests for configuration files, pilot files, channel specs, plot data and the pipeline.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.errors import ConfigError, InvalidChannel, PilotFileError
from src.evaluator import random_channels
from src.optimizer import PilotSet, init_pilots, synthesize
from src.pipeline import load_or_build_subspace, run_synthesis
from src.state import DescentMethod, LagWindow, PaprConfig, StepStrategy
from src.subspace import contiguous_centered, load_subspace
from src.tools.channels import load_channels
from src.tools.config_file import apply_overrides, load_config, parse_config_text
from src.tools.files import atomic_write_text, read_csv, write_csv
from src.tools.pilot_file import (
    PILOT_FILE_VERSION,
    file_config,
    read_pilot_file,
    to_pilot_file,
    to_pilot_set,
    write_pilot_file,
)
from src.tools.plot_data import (
    PROFILE_COLUMNS,
    TRACE_COLUMNS,
    write_fd_magnitude,
    write_profiles,
    write_td_magnitude,
    write_trace_csv,
)
from src.evaluator import acf_profile, mcf_profile
from tests.conftest import make_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_CONFIG = """\
[subspace]
n_fft = 64
n_sc = 32
t_zero = 8

[window]
t_min = 2
t_max = 16

[optimizer]
n_pilots = 3
max_iters = 20
seed = 1
"""


class TestConfigFile:
    """INI parsing, validation and overrides."""

    def test_desk_scale_file(self):
        config = load_config(CONFIGS / "desk-scale.cfg")
        assert (config.dims.n_fft, config.dims.n_sc, config.dims.t_zero) == (256, 200, 80)
        assert (config.window.t_min, config.window.t_max) == (2, 32)
        assert config.n_pilots == 4
        assert config.optimizer.method == DescentMethod.MAX_PEAK
        assert config.optimizer.step_strategy == StepStrategy.SHRINK_ON_WORSE
        assert config.optimizer.max_iters == 5000
        assert config.optimizer.seed == 42
        assert config.papr is None
        assert config.out_dir == "out/desk-scale"

    def test_full_scale_file(self):
        config = load_config(CONFIGS / "full-scale.cfg")
        assert (config.dims.n_fft, config.dims.n_sc, config.dims.t_zero) == (4096, 3300, 1750)
        assert config.window.t_max == 370
        assert config.delta_f == 30000.0
        assert config.carrier_placement == "contiguous-centered"
        assert config.subspace_cache == "out/full-scale.ztss"
        assert config.optimizer.epsilon == 1e-6

    def test_defaults(self):
        config = parse_config_text(SMALL_CONFIG)
        assert config.optimizer.h0 == 0.1
        assert config.optimizer.rollback is True
        assert config.delta_f == 30e3
        assert config.papr is None
        assert config.workers == 1

    def test_lists_and_papr_section(self):
        text = SMALL_CONFIG + (
            "method = weighted\nn_peaks = 2\nalpha_weights = 1.0, 0.5\nbeta_weights = 1, 0.5\n"
            "rollback = false\n\n[papr]\nn_peaks_td = 2\nmagnitude_floor = none\nstep_divisor = 3\n"
        )
        config = parse_config_text(text)
        assert config.optimizer.method == DescentMethod.WEIGHTED_PEAKS
        assert config.optimizer.alpha_weights == [1.0, 0.5]
        assert config.optimizer.beta_weights == [1.0, 0.5]
        assert config.optimizer.rollback is False
        assert config.papr == PaprConfig(n_peaks_td=2, step_divisor=3.0)

    def test_explicit_carrier_placement(self):
        text = SMALL_CONFIG.replace("t_zero = 8", "t_zero = 8\ncarrier_placement = " + ", ".join(map(str, range(32))))
        assert parse_config_text(text).carrier_placement == list(range(32))

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="n_fft") as err:
            parse_config_text(SMALL_CONFIG.replace("n_fft = 64\n", ""))
        assert err.value.key == "n_fft"

    def test_bad_value_reports_line(self):
        text = SMALL_CONFIG.replace("n_pilots = 3", "n_pilots = many")
        with pytest.raises(ConfigError) as err:
            parse_config_text(text)
        assert err.value.key == "n_pilots"
        assert err.value.line == 11
        assert str(err.value).startswith("line 11: ")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key 'colour'") as err:
            parse_config_text(SMALL_CONFIG + "colour = blue\n")
        assert err.value.line == 14

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config_text(SMALL_CONFIG + "\n[extras]\nfoo = 1\n")

    def test_geometry_errors_surface(self):
        with pytest.raises(ConfigError):
            parse_config_text(SMALL_CONFIG.replace("t_zero = 8", "t_zero = 40"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.cfg")

    def test_overrides(self):
        config = parse_config_text(SMALL_CONFIG)
        updated = apply_overrides(config, seed=9, max_iters=4, method="weighted", papr=True, out_dir="elsewhere", workers=2)
        assert updated.optimizer.seed == 9
        assert updated.optimizer.max_iters == 4
        assert updated.optimizer.method == DescentMethod.WEIGHTED_PEAKS
        assert updated.papr == PaprConfig()
        assert updated.out_dir == "elsewhere"
        assert updated.workers == 2
        assert config.optimizer.seed == 1
        assert apply_overrides(updated, papr=False).papr is None
        assert apply_overrides(config) is config

    def test_invalid_override(self):
        with pytest.raises(ConfigError, match="override"):
            apply_overrides(parse_config_text(SMALL_CONFIG), max_iters=-1)


class TestPilotFile:
    """JSON pilot file round trip and integrity checks."""

    @pytest.fixture
    def synthesized(self, sub_small):
        return synthesize(make_config(max_iters=9), sub_small).pilot_set

    def test_round_trip_is_exact(self, sub_small, synthesized, tmp_path):
        path = write_pilot_file(tmp_path / "pilots.json", synthesized, {"worst_peak_db": -12.5})
        document = read_pilot_file(path)
        assert document.header.format_version == PILOT_FILE_VERSION
        assert document.header.metrics == {"worst_peak_db": -12.5}
        reloaded = to_pilot_set(document, sub_small)
        for a, b in zip(reloaded.preimages, synthesized.preimages):
            assert_array_equal(a, b)
        for a, b in zip(reloaded.td_pilots, synthesized.td_pilots):
            assert_array_equal(a, b)
        assert reloaded.metadata == synthesized.metadata
        assert file_config(document).snapshot() == synthesized.metadata.config

    def test_tampered_td_is_rejected(self, sub_small, synthesized, tmp_path):
        path = write_pilot_file(tmp_path / "pilots.json", synthesized)
        raw = json.loads(path.read_text())
        raw["pilots"][0]["td"][3][0] += 1e-6
        path.write_text(json.dumps(raw))
        with pytest.raises(PilotFileError, match="disagree"):
            to_pilot_set(read_pilot_file(path), sub_small)

    def test_wrong_dims_are_rejected(self, sub_tiny, synthesized):
        with pytest.raises(PilotFileError, match="lengths"):
            to_pilot_set(to_pilot_file(synthesized), sub_tiny)

    def test_version_mismatch(self, synthesized, tmp_path):
        path = write_pilot_file(tmp_path / "pilots.json", synthesized)
        raw = json.loads(path.read_text())
        raw["header"]["format_version"] = PILOT_FILE_VERSION + 1
        path.write_text(json.dumps(raw))
        with pytest.raises(PilotFileError, match="format version"):
            read_pilot_file(path)

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "pilots.json"
        path.write_text("{not json")
        with pytest.raises(PilotFileError, match="not a pilot file"):
            read_pilot_file(path)
        with pytest.raises(PilotFileError, match="cannot read"):
            read_pilot_file(tmp_path / "absent.json")

    def test_set_without_snapshot(self):
        with pytest.raises(PilotFileError):
            to_pilot_file(PilotSet())


class TestChannelSpecs:
    """--channels values."""

    def test_random_spec(self, window_small):
        assert load_channels("random:7", 3, window_small) == random_channels(3, window_small, 7)

    def test_bad_random_seed(self, window_small):
        with pytest.raises(ConfigError):
            load_channels("random:x", 3, window_small)

    def test_json_file(self, tmp_path, window_small):
        path = tmp_path / "channels.json"
        entry = {"taps": [{"delay": 0, "gain": [1.0, 0.0]}, {"delay": 3, "gain": [0.0, 0.5]}], "path_loss_db": 3.0}
        path.write_text(json.dumps([entry, entry]))
        channels = load_channels(str(path), 2, window_small)
        assert len(channels) == 2
        assert channels[0].taps[1].delay == 3
        assert channels[0].taps[1].gain == 0.5j
        assert channels[1].path_loss_db == 3.0

    def test_count_mismatch(self, tmp_path, window_small):
        path = tmp_path / "channels.json"
        path.write_text(json.dumps([{"taps": [{"delay": 0, "gain": [1.0, 0.0]}]}]))
        with pytest.raises(InvalidChannel):
            load_channels(str(path), 2, window_small)

    def test_malformed_file(self, tmp_path, window_small):
        path = tmp_path / "channels.json"
        path.write_text(json.dumps([{"taps": []}]))
        with pytest.raises(ConfigError, match="malformed"):
            load_channels(str(path), 1, window_small)


class TestPlotData:
    """CSV output."""

    def test_csv_helpers(self, tmp_path):
        path = write_csv(tmp_path / "sub" / "x.csv", ["a", "b"], [(1, 2.5), (3, "")])
        assert read_csv(path) == [{"a": "1", "b": "2.5"}, {"a": "3", "b": ""}]
        assert [p.name for p in path.parent.iterdir()] == ["x.csv"]

    def test_atomic_write_replaces(self, tmp_path):
        path = atomic_write_text(tmp_path / "f.txt", "one")
        atomic_write_text(path, "two")
        assert path.read_text() == "two"

    def test_trace_csv(self, sub_small, tmp_path):
        trace = synthesize(make_config(max_iters=5, epsilon=1e-300), sub_small).trace
        rows = read_csv(write_trace_csv(tmp_path / "trace.csv", trace))
        assert len(rows) == 5
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert [int(r["iteration"]) for r in rows] == [1, 2, 3, 4, 5]
        assert float(rows[-1]["worst_peak_db"]) == pytest.approx(trace.records[-1].worst_peak_db)

    def test_magnitudes(self, sub_small, tmp_path):
        pilots = init_pilots(make_config(n_pilots=2), sub_small)
        fd_rows = read_csv(write_fd_magnitude(tmp_path / "fd.csv", sub_small, pilots))
        assert len(fd_rows) == 32
        bins = [int(r["bin"]) for r in fd_rows]
        assert bins == sorted(bins)
        assert set(fd_rows[0]) == {"bin", "pilot_0", "pilot_1"}

        td_rows = read_csv(write_td_magnitude(tmp_path / "td.csv", sub_small, pilots))
        assert len(td_rows) == 64
        assert [int(r["tail"]) for r in td_rows] == [0] * 56 + [1] * 8
        peak = max(float(r["pilot_0"]) for r in td_rows)
        assert max(float(r["pilot_0"]) for r in td_rows[56:]) <= 1e-9 * peak

    def test_profiles(self, sub_small, tmp_path, window_small):
        pilots = init_pilots(make_config(n_pilots=2), sub_small)
        profiles = [("acf", acf_profile(pilots, p, window_small)) for p in range(2)]
        profiles.append(("mcf", mcf_profile(pilots, 0, 1, window_small)))
        rows = read_csv(write_profiles(tmp_path / "profiles.csv", profiles))
        assert tuple(rows[0]) == PROFILE_COLUMNS
        assert len(rows) == 3 * 17
        acf = [r for r in rows if r["kind"] == "acf"]
        assert {r["component"] for r in acf} == {"1"}
        assert all(r["partner"] == "" for r in acf)
        main = [r for r in acf if r["lag"] == "0"]
        assert all(float(r["value"]) == 1.0 and r["suppressed"] == "0" for r in main)
        # inner zone is |lag| <= 1 for t_min = 2
        assert all(r["is_excluded"] == str(int(abs(int(r["lag"])) <= 1)) for r in acf)
        assert all(r["suppressed"] != r["is_excluded"] for r in acf)

        mcf = [r for r in rows if r["kind"] == "mcf"]
        assert {r["component"] for r in mcf} == {"2"}
        assert {(r["pilot"], r["partner"]) for r in mcf} == {("0", "1")}
        assert {r["suppressed"] for r in mcf} == {"1"}
        assert [r["lag"] for r in mcf if r["is_excluded"] == "1"] == ["-1", "0", "1"]


class TestPipeline:
    """Subspace caching and the synthesis workflow."""

    def test_cache_is_written_and_reused(self, tmp_path):
        cache = tmp_path / "small.ztss"
        config = make_config().model_copy(update={"subspace_cache": str(cache)})
        built = load_or_build_subspace(config)
        assert cache.exists()
        loaded = load_or_build_subspace(config)
        assert_array_equal(loaded.v0, built.v0)
        assert_array_equal(load_subspace(cache).v0, built.v0)

    def test_mismatched_cache_is_rebuilt(self, tmp_path):
        cache = tmp_path / "small.ztss"
        load_or_build_subspace(make_config().model_copy(update={"subspace_cache": str(cache)}))
        other = make_config(dims=(32, 16, 4), window=(2, 8)).model_copy(update={"subspace_cache": str(cache)})
        sub = load_or_build_subspace(other)
        assert sub.dims == other.dims
        assert load_subspace(cache).dims == other.dims

    def test_cache_with_other_placement_is_rebuilt(self, tmp_path):
        cache = tmp_path / "small.ztss"
        comb = list(range(0, 64, 2))
        load_or_build_subspace(make_config().model_copy(update={"subspace_cache": str(cache), "carrier_placement": comb}))
        assert_array_equal(load_subspace(cache).placement, comb)

        sub = load_or_build_subspace(make_config().model_copy(update={"subspace_cache": str(cache)}))
        assert_array_equal(sub.placement, contiguous_centered(64, 32))
        assert_array_equal(load_subspace(cache).placement, contiguous_centered(64, 32))

    def test_run_without_writing(self, tmp_path):
        config = make_config(max_iters=6).model_copy(update={"out_dir": str(tmp_path / "run")})
        run = run_synthesis(config, write=False)
        assert run.files == []
        assert not (tmp_path / "run").exists()
        assert run.report.n_pilots == 3

    def test_run_writes_artifacts(self, tmp_path):
        config = make_config(max_iters=6).model_copy(
            update={"out_dir": str(tmp_path / "run"), "papr": PaprConfig(n_papr_reductions=1)}
        )
        run = run_synthesis(config, channels=random_channels(3, config.window, 2))
        names = sorted(p.name for p in run.files)
        assert names == ["pilots.json", "report.json", "report.txt", "trace.csv"]
        header = read_pilot_file(tmp_path / "run" / "pilots.json").header
        assert header.metrics["mixture_db"] == pytest.approx(run.report.mixture_db)
        assert header.config["papr"]["n_papr_reductions"] == 1
        assert "Pilot Set Report" in (tmp_path / "run" / "report.txt").read_text()
        assert json.loads((tmp_path / "run" / "report.json").read_text())["channel_db"] == pytest.approx(run.report.channel_db)


def test_window_fits_fft():
    with pytest.raises(ValueError):
        make_config(dims=(16, 8, 2), window=(2, 40))
    assert LagWindow(t_min=2, t_max=16).outer == 8
    assert np.all(LagWindow(t_min=0, t_max=4).acf_scan_lags() == [1, 2])


def test_window_without_acf_lags_is_rejected():
    # t_min // 2 == t_max // 2 leaves the ACF scan set empty
    for t_min, t_max in ((2, 3), (4, 5), (0, 1)):
        with pytest.raises(ValueError, match="no ACF lags"):
            LagWindow(t_min=t_min, t_max=t_max)
    assert LagWindow(t_min=2, t_max=4).acf_scan_lags().tolist() == [2]
    with pytest.raises(ConfigError, match="no ACF lags"):
        parse_config_text(SMALL_CONFIG.replace("t_max = 16", "t_max = 3"))
