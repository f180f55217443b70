"""Config file round-trips and the command-line harness end to end."""

import pytest

from sparsewire.cli import main
from sparsewire.config import (ExperimentConfig, parse_config,
                               serialize_config)
from sparsewire.errors import ConfigError


class TestConfig:
    def test_roundtrip_is_canonical(self):
        config = ExperimentConfig(seed=7, scale=2, deep_r=False,
                                  bench_scales=(1, 3), l1_strength=0.01)
        text = serialize_config(config)
        assert parse_config(text) == config
        assert serialize_config(parse_config(text)) == text

    def test_defaults_from_empty_text(self):
        assert parse_config("") == ExperimentConfig()

    def test_comments_and_blanks_ignored(self):
        config = parse_config("# a comment\n\nseed = 9  # trailing\n")
        assert config.seed == 9

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("nonsense = 1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("seed = 1\nseed = 2\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("seed = banana\n")

    def test_bool_words(self):
        assert parse_config("deep_r = off\n").deep_r is False
        assert parse_config("deep_r = on\n").deep_r is True
        with pytest.raises(ConfigError):
            parse_config("deep_r = maybe\n")

    def test_tuple_field(self):
        assert parse_config("bench_scales = 2,4\n").bench_scales == (2, 4)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scale=9).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(input_density=0.0).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="nope").validate()
        ExperimentConfig(scale=0).validate()  # base grid alias


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestTopomapCommand:
    def test_outputs_and_determinism(self, tmp_path):
        args = ["topomap", "--seed", "11", "--scale", "1",
                "--duration-ms", "400", "--snapshot-every-ms", "200"]
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b), "--workers", "4"]) == 0
        names = ["degrees.csv", "profile.csv", "eliminations.csv",
                 "formations.csv", "connectivity_ff_initial.csv",
                 "connectivity_ff_final.csv", "connectivity_lat_initial.csv",
                 "connectivity_lat_final.csv", "timing.csv", "config.txt"]
        for name in names:
            assert (out_a / name).exists(), name
        # analysis outputs byte-identical across runs and worker counts
        # (timing.csv and config.txt are excluded: wall clock / workers differ)
        for name in names[:8]:
            assert _read(out_a / name) == _read(out_b / name), name

    def test_zero_duration_run(self, tmp_path):
        out = tmp_path / "z"
        assert main(["topomap", "--seed", "1", "--duration-ms", "0",
                     "--out", str(out)]) == 0
        events = (out / "eliminations.csv").read_text().splitlines()
        assert events == ["time_bin_ms,distance_bin,count"]
        init = (out / "connectivity_ff_initial.csv").read_text()
        final = (out / "connectivity_ff_final.csv").read_text()
        assert init == final
        assert init.splitlines()[1].endswith(",0.2")  # plain decimal weights

    def test_degrees_csv_schema(self, tmp_path):
        out = tmp_path / "s"
        main(["topomap", "--seed", "1", "--duration-ms", "200",
              "--out", str(out)])
        lines = (out / "degrees.csv").read_text().splitlines()
        assert lines[0] == "time_ms,projection,mean_in,std_in,mean_out,std_out"
        assert lines[1].startswith("0,ff,")


class TestClassifierCommand:
    def test_outputs(self, tmp_path):
        out = tmp_path / "clf"
        code = main(["classifier", "--seed", "5", "--batches", "6",
                     "--out", str(out)])
        assert code == 0
        metrics = (out / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "batch,loss,accuracy,fraction_rewired"
        assert len(metrics) == 7
        log = (out / "deep_r_log.csv").read_text().splitlines()
        assert log[0] == "update_index,removed,total,fraction_rewired"
        assert (out / "connectivity_in_final.csv").exists()
        assert (out / "summary.txt").exists()

    def test_deep_r_flag_off(self, tmp_path):
        out = tmp_path / "off"
        main(["classifier", "--seed", "5", "--batches", "3", "--deep-r", "off",
              "--out", str(out)])
        log = (out / "deep_r_log.csv").read_text().splitlines()[1:]
        assert all(line.split(",")[1] == "0" for line in log)

    def test_outputs_deterministic(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            main(["classifier", "--seed", "6", "--batches", "3",
                  "--out", str(out)])
            outs.append((out / "metrics.csv").read_bytes()
                        + (out / "connectivity_in_final.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("num_batches = 3\nseed = 8\nl1_strength = 0.01\n")
        out = tmp_path / "cfg_run"
        assert main(["classifier", "--config", str(cfg), "--seed", "9",
                     "--out", str(out)]) == 0
        saved = (out / "config.txt").read_text()
        assert "seed = 9" in saved            # flag wins
        assert "l1_strength = 0.01" in saved  # file value kept
        assert "num_batches = 3" in saved


class TestBenchCommand:
    def test_phases_reported(self, tmp_path):
        out = tmp_path / "bench"
        assert main(["bench", "--seed", "3", "--scales", "1",
                     "--duration-ms", "100", "--out", str(out)]) == 0
        lines = (out / "bench.csv").read_text().splitlines()
        assert lines[0] == "scale,phase,seconds"
        phases = {line.split(",")[1] for line in lines[1:]}
        assert phases == {"neuron_update", "presynaptic_update",
                          "postsynaptic_update", "host_update", "row_update",
                          "remap", "total"}
        by_phase = {line.split(",")[1]: float(line.split(",")[2])
                    for line in lines[1:]}
        total = by_phase.pop("total")
        assert sum(by_phase.values()) <= total


def test_bench_total_roughly_linear_in_duration(tmp_path):
    import time

    def run_total(duration, tag):
        out = tmp_path / tag
        main(["bench", "--seed", "3", "--scales", "1",
              "--duration-ms", str(duration), "--out", str(out)])
        for line in (out / "bench.csv").read_text().splitlines()[1:]:
            s, phase, seconds = line.split(",")
            if phase == "total":
                return float(seconds)

    base = run_total(600, "short")
    double = run_total(1200, "long")
    assert 2.0 * 0.7 < double / base < 2.0 * 1.3


def test_topomap_spike_recording_flag(tmp_path):
    out = tmp_path / "spk"
    assert main(["topomap", "--seed", "2", "--duration-ms", "20",
                 "--record-spikes", "--out", str(out)]) == 0
    lines = (out / "spikes_source.csv").read_text().splitlines()
    assert lines[0] == "time_ms,neuron_id"
    assert len(lines) > 1


def test_invalid_config_exits_nonzero(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scale = 99\n")
    assert main(["topomap", "--config", str(cfg),
                 "--out", str(tmp_path / "x")]) == 2


def test_missing_config_file_exits_nonzero(tmp_path):
    assert main(["topomap", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "x")]) == 2
