import dataclasses
import json

import numpy as np
import pytest

from pulsedelay import cli
from pulsedelay.harness import (ConfigError, ExperimentConfig, SweepFailure, emit_outputs,
                                pulse_dump, run_single, run_sweep, run_trial, trial_rng)
from pulsedelay.pulse import SubcarrierMask
from pulsedelay.sbl import NumericalFailure, SblHyperparams

SMALL = ExperimentConfig(snr_points_db=(30.0, 40.0), num_trials=3,
                         sbl=SblHyperparams(max_iterations=60))


def small_json(tmp_path, **changes):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(dataclasses.replace(SMALL, **changes).to_dict()))
    return str(path)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig().validate()
        assert cfg.model().sensing_matrix.shape == (52, 850)

    @pytest.mark.parametrize("changes", [
        dict(cir_length=65),
        dict(cir_length=0),
        dict(noise_variance=0.0),
        dict(snr_points_db=()),
        dict(snr_points_db=(20.0, 20.0)),
        dict(num_trials=0),
        dict(algorithms=("sbl", "music")),
        dict(workers=0),
        dict(master_seed=-1),
    ])
    def test_rejects(self, changes):
        with pytest.raises(ConfigError):
            dataclasses.replace(SMALL, **changes).validate()

    def test_rejects_delay_beyond_grid(self):
        cfg = ExperimentConfig.from_dict({"grid": {"num_points": 104}})
        assert cfg.grid.num_points == 104
        with pytest.raises(ConfigError, match="grid span"):
            ExperimentConfig.from_dict({"grid": {"num_points": 103}})

    def test_rejects_mask_index(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mask": {"fft_size": 64, "used_indices": [1, 64]}})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"sbl": {"eta": 3}})

    def test_partial_dict_takes_defaults(self):
        cfg = ExperimentConfig.from_dict({"num_trials": 7, "sbl": {"max_paths": 4}})
        assert cfg.num_trials == 7 and cfg.sbl.max_paths == 4
        assert cfg.sbl.a == 1e-6 and cfg.pulse.rolloff == 0.05

    def test_roundtrip(self):
        cfg = dataclasses.replace(SMALL, mask=SubcarrierMask(64, (1, 2, 3, 40)))
        back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    def test_bad_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(p)


class TestRng:
    def test_golden(self):
        # frozen outputs of the stream derivation; a change here breaks reproducibility
        r = trial_rng(20240501, 0, 0)
        assert r.random() == 0.9288017790289992
        assert r.standard_normal() == 0.565619029757701
        assert trial_rng(20240501, 3, 17).integers(0, 2 ** 63) == 225147223070207509
        assert trial_rng(7, 0, 0).random() == 0.3921071947199256

    def test_distinct_streams(self):
        draws = {trial_rng(1, s, t).random() for s in range(5) for t in range(50)}
        assert len(draws) == 250


@pytest.fixture(scope="module")
def serial():
    return run_sweep(SMALL)


class TestSweep:
    def test_shape(self, serial):
        assert len(serial.records) == 6
        assert len(serial.report.rows) == 6
        assert [(r.snr_db, r.trial_index) for r in serial.records] == [
            (30.0, 0), (30.0, 1), (30.0, 2), (40.0, 0), (40.0, 1), (40.0, 2)]

    def test_paired_measurement(self, serial):
        rec = serial.records[0]
        assert set(rec.results) == {"sbl", "omp", "sage"}
        assert rec.results["omp"].num_paths == rec.results["sage"].num_paths == 3

    def test_snr_bookkeeping(self, serial):
        for rec in serial.records:
            a0 = rec.ground_truth.amplitudes[0]
            assert 10 * np.log10(abs(a0) ** 2 / SMALL.noise_variance) == pytest.approx(rec.snr_db, abs=1e-12)

    def test_parallel_equals_serial(self, serial):
        par = run_sweep(SMALL, workers=2)
        assert par.report == serial.report
        for a, b in zip(serial.records, par.records):
            np.testing.assert_array_equal(a.results["sbl"].amplitudes, b.results["sbl"].amplitudes)

    def test_outputs(self, serial, tmp_path):
        paths = emit_outputs(serial.report, SMALL, tmp_path, records=serial.records)
        names = sorted(p.name for p in paths)
        assert names == ["fig2_nrmse.csv", "fig3_delaydiff.csv", "manifest.json", "table1.csv",
                         "trials.jsonl"]
        lines = (tmp_path / "fig2_nrmse.csv").read_text().splitlines()
        assert lines[0] == "snr_db,algorithm,nrmse_mean" and len(lines) == 7
        assert (tmp_path / "table1.csv").read_text().splitlines()[0] == \
            "snr_db,algorithm,prob_correct,count_mae"
        assert (tmp_path / "fig3_delaydiff.csv").read_text().splitlines()[0] == \
            "snr_db,algorithm,mae_ns,excluded_trials"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["status"] == "complete" and manifest["master_seed"] == SMALL.master_seed
        assert ExperimentConfig.from_dict(manifest) == SMALL
        with pytest.raises(FileExistsError):
            emit_outputs(serial.report, SMALL, tmp_path)
        emit_outputs(serial.report, SMALL, tmp_path, force=True)

    def test_numerical_failure_propagates(self, monkeypatch):
        import pulsedelay.harness as harness

        def boom(*args, **kwargs):
            raise NumericalFailure("not positive definite")

        monkeypatch.setattr(harness, "sbl_run", boom)
        with pytest.raises(SweepFailure) as info:
            run_sweep(SMALL)
        assert info.value.algorithm == "sbl" and info.value.trial_index == 0

    def test_single_trial_matches_sweep(self, serial):
        rec = run_trial(SMALL, SMALL.model(), 1, 2)
        np.testing.assert_array_equal(rec.results["sbl"].delays_ns,
                                      serial.records[5].results["sbl"].delays_ns)


class TestCli:
    def test_sweep_and_determinism(self, tmp_path, capsys):
        cfg = small_json(tmp_path)
        args = ["sweep", "--config", cfg, "--trials", "2", "--snr", "35"]
        assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("table1.csv", "fig2_nrmse.csv", "fig3_delaydiff.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert "snr=35" in capsys.readouterr().out

    def test_refuses_overwrite(self, tmp_path):
        cfg = small_json(tmp_path, num_trials=1, snr_points_db=(30.0,), algorithms=("omp",))
        out = str(tmp_path / "o")
        assert cli.main(["sweep", "--config", cfg, "--out", out]) == 0
        assert cli.main(["sweep", "--config", cfg, "--out", out]) == 1
        assert cli.main(["sweep", "--config", cfg, "--out", out, "--force"]) == 0

    def test_rerun_from_manifest(self, tmp_path):
        cfg = small_json(tmp_path, num_trials=2, algorithms=("omp", "sage"))
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["sweep", "--config", cfg, "--seed", "99", "--out", str(a)]) == 0
        assert cli.main(["sweep", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
        assert (a / "table1.csv").read_bytes() == (b / "table1.csv").read_bytes()
        assert json.loads((b / "manifest.json").read_text())["master_seed"] == 99

    def test_config_error_exit(self, tmp_path, capsys):
        assert cli.main(["sweep", "--config", small_json(tmp_path), "--algos", "foo"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_numerical_failure_exit(self, tmp_path, monkeypatch):
        import pulsedelay.harness as harness
        monkeypatch.setattr(harness, "sbl_run",
                            lambda *a, **k: (_ for _ in ()).throw(NumericalFailure("boom")))
        out = tmp_path / "f"
        assert cli.main(["sweep", "--config", small_json(tmp_path), "--out", str(out)]) == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "partial" and manifest["failure"]["algorithm"] == "sbl"

    def test_single(self, tmp_path, capsys):
        assert cli.main(["single", "--config", small_json(tmp_path), "--snr", "40", "--verbose"]) == 0
        out = capsys.readouterr().out
        assert "ground truth" in out and "[search]" in out and "[refine]" in out

    def test_single_returns_trace(self):
        dump = run_single(SMALL, 40.0, 1, echo=lambda s: None)
        assert dump["trace"][0]["iteration"] == 1
        assert dump["record"]["snr_db"] == 40.0

    def test_pulse_dump(self, tmp_path):
        out = tmp_path / "p"
        assert cli.main(["pulse-dump", "--out", str(out), "--delay", "20"]) == 0
        rows = (out / "dictionary_column.csv").read_text().splitlines()
        assert rows[0] == "n,t_ns,g"
        assert float(rows[1].split(",")[2]) == pytest.approx(0.7565437740107233, rel=1e-9)
        pulse = (out / "pulse.csv").read_text().splitlines()
        assert len(pulse) == 1 + 801
        assert cli.main(["pulse-dump", "--out", str(out)]) == 1
        paths = pulse_dump(ExperimentConfig(), out, force=True)
        assert len(paths) == 2
