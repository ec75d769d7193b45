import csv
import io
import json
import math

import numpy as np
import pytest

from kkdwave import cli, harness
from kkdwave.config import ExperimentConfig, load_config
from kkdwave.detector import Hypothesis
from kkdwave.errors import ParameterError

SMALL = dict(losses_db=(0.0, 1.0), averaging_times=(1, 5), trials=2000)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.band.samples_per_correlation_time == 10

    @pytest.mark.parametrize("bad", [
        dict(r_low=0), dict(r_low=20_000), dict(losses_db=(-1.0,)), dict(losses_db=()),
        dict(averaging_times=(0,)), dict(mode="quantum"), dict(trials=0), dict(seed=-1),
        dict(f_high=30_000),
    ])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ParameterError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ParameterError, match="bogus"):
            ExperimentConfig.from_dict({"bogus": 1})

    def test_roundtrip(self):
        cfg = ExperimentConfig(seed=9, losses_db=(0.5,))
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_toml(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('seed = 3\nlosses_db = [0.1, 1.0]\nmode = "probe"\n')
        cfg = load_config(p)
        assert cfg.seed == 3 and cfg.losses_db == (0.1, 1.0) and cfg.mode == "probe"

    def test_toml_nested_rejected(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[detector]\nx = 1\n")
        with pytest.raises(ParameterError):
            load_config(p)

    def test_toml_missing(self, tmp_path):
        with pytest.raises(ParameterError):
            load_config(tmp_path / "absent.toml")


def test_wilson_interval_against_scipy():
    from scipy.stats import binomtest
    lo, hi = harness.wilson_interval(37, 1000)
    ci = binomtest(37, 1000).proportion_ci(0.95, method="wilson")
    assert lo == pytest.approx(ci.low, rel=1e-9) and hi == pytest.approx(ci.high, rel=1e-9)
    assert harness.wilson_interval(0, 100)[0] == 0.0


def test_chunking():
    assert harness._chunks(25_000) == [10_000, 10_000, 5_000]
    assert harness._chunks(10_000) == [10_000]


class TestBer:
    def test_trends(self):
        curve = harness.run_ber_experiment(ExperimentConfig(**SMALL))
        assert len(curve.rows) == 4
        lossy = [curve.lookup(1.0, m)["ber"] for m in (1, 5)]
        assert lossy[1] < lossy[0] < 0.5
        for m in (1, 5):
            assert abs(curve.lookup(0.0, m)["ber"] - 0.5) < 0.05

    def test_independent_of_worker_count(self):
        cfg = ExperimentConfig(**{**SMALL, "trials": 25_000, "losses_db": (0.1,), "averaging_times": (3,)})
        a = harness.run_ber_experiment(cfg)
        b = harness.run_ber_experiment(cfg.replace(workers=2))
        assert a.rows == b.rows

    def test_grid_points_independent(self):
        cfg = ExperimentConfig(**SMALL)
        a = harness.run_ber_experiment(cfg)
        b = harness.run_ber_experiment(cfg.replace(losses_db=(1.0,)))
        assert b.rows == [r for r in a.rows if r["loss_db"] == 1.0]

    def test_curves_agree_detects_difference(self):
        cfg = ExperimentConfig(losses_db=(1.0,), averaging_times=(1,), trials=5000)
        a = harness.run_ber_experiment(cfg)
        b = harness.run_ber_experiment(cfg.replace(losses_db=(1.0,), r_high=2000.0))
        assert harness.curves_agree(a, a)[0]
        assert not harness.curves_agree(a, b)[0]


def test_bayes_error_limits():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20_000)
    assert harness.bayes_error(x, rng.standard_normal(20_000), 40)[0] > 0.45
    assert harness.bayes_error(x, x + 100, 40)[0] == 0.0


def test_probe_channel_pairs_shape():
    cfg = ExperimentConfig(losses_db=(0.1,), block_samples=2**15)
    probe, state = harness.calibrate_probe(cfg)
    ch = harness.ProbeChannel(cfg, 0.1, probe, state)
    p = ch.pairs(Hypothesis.C0, 5000, (1, 2))
    assert p.shape == (5000, 2) and np.all(np.isfinite(p))
    # short request, short block
    assert ch.pairs(Hypothesis.C1, 7, (1, 3)).shape == (7, 2)


def test_covariance_check_small():
    cfg = ExperimentConfig(losses_db=(0.0, 1.0), covariance_pairs=2**20)
    report = harness.run_covariance_check(cfg)
    assert report.passed
    assert [c.name for c in report.checks] == ["lossless_swap_symmetry", "matched_correlation"]


class TestCli:
    def run(self, capsys, *argv):
        code = cli.main(list(argv))
        out, err = capsys.readouterr()
        return code, out, err

    def test_ber_csv_contract(self, capsys, tmp_path):
        cfgfile = tmp_path / "c.toml"
        cfgfile.write_text("losses_db = [1.0]\naveraging_times = [1, 2]\n")
        code, out, _ = self.run(capsys, "ber", "--config", str(cfgfile), "--trials", "500")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert tuple(rows[0]) == harness.BER_COLUMNS
        assert len(rows) == 2 and rows[0]["trials"] == "500"
        assert float(rows[0]["ci95_low"]) <= float(rows[0]["ber"]) <= float(rows[0]["ci95_high"])

    def test_ber_json(self, capsys, tmp_path):
        out_file = tmp_path / "o.json"
        code, _, _ = self.run(capsys, "ber", "--trials", "200", "--format", "json", "--out", str(out_file))
        doc = json.loads(out_file.read_text())
        assert code == 0 and doc["command"] == "ber" and doc["config"]["trials"] == 200
        assert len(doc["rows"]) == 21

    def test_llr_hist(self, capsys):
        code, out, err = self.run(capsys, "llr-hist", "--trials", "300", "--correlation", "diagonal")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and {r["correlated"] for r in rows} == {"false"}
        assert len(err.strip().splitlines()) == 3

    def test_usage_errors_exit_1(self, capsys):
        assert self.run(capsys, "ber", "--trials", "0")[0] == 1
        with pytest.raises(SystemExit) as exc:
            cli.main(["nope"])
        assert exc.value.code == 1

    def test_bad_config_file_exit_1(self, capsys, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("unknown_knob = 1\n")
        assert self.run(capsys, "ber", "--config", str(p))[0] == 1

    def test_failed_check_exit_2(self, capsys, monkeypatch):
        bad = harness.ValidationReport()
        bad.add("x", 1.0, 0.0, 0.1)
        monkeypatch.setattr(harness, "run_probe_validation", lambda cfg: bad)
        code, out, err = self.run(capsys, "probe-validate")
        assert code == 2 and "FAIL x" in err
