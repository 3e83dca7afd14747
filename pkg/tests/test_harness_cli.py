import csv
import json
import math

import pytest

from kgslab import cli
from kgslab.harness import (
    ConfigError,
    RunConfig,
    RunRecord,
    format_float,
    read_series,
    series_columns,
    simulate,
    write_run,
)
from kgslab.kgs_model import InitialDataSpec

SMALL = {
    "dim": 1,
    "n": 64,
    "length": 4.0,
    "dt": 0.01,
    "T": 0.2,
    "output_every": 0.05,
    "monitor_sigmas": [0.1, 0.05],
    "band": [4, 21],
    "initial": {"sigma0": 0.5, "amp_u": 1.0, "amp_n0": 0.5, "amp_n1": 0.5, "seed": 1},
}


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def write_synthetic_series(path, ts, sigmas):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sigma_u"])
        for t, s in zip(ts, sigmas):
            w.writerow([format_float(t), format_float(s)])


class TestRunConfig:
    def test_defaults_are_production_run(self):
        cfg = RunConfig()
        assert (cfg.dim, cfg.n, cfg.length, cfg.dt, cfg.T) == (1, 512, 8.0, 2e-3, 50.0)
        assert len(cfg.times()) == 51

    def test_round_trip(self):
        cfg = RunConfig.from_dict(SMALL)
        again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_seed_overrides_initial(self):
        cfg = RunConfig.from_dict({**SMALL, "seed": 9})
        assert cfg.initial.seed == 9

    @pytest.mark.parametrize(
        "patch",
        [
            {"n": 60},
            {"dt": 0.0},
            {"T": 0.21},
            {"dt": 0.03},
            {"scheme": "euler"},
            {"monitor_sigmas": []},
            {"monitor_sigmas": [0.1, 0.1]},
            {"band": [5, 3]},
            {"initial": {"sigma0": -1.0}},
            {"bogus": 1},
        ],
    )
    def test_rejects(self, patch):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({**SMALL, **patch})

    def test_series_columns(self):
        assert series_columns([0.1, 0.05]) == [
            "t", "sigma_u", "sigma_nplus", "sigma_nminus", "charge",
            "M_0.1", "M_0.05", "N_0.1", "N_0.05", "residual_u",
        ]


class TestSimulate:
    def test_zero_data(self, tmp_path):
        zero = {**SMALL, "initial": {"sigma0": 0.5, "amp_u": 0.0, "amp_n0": 0.0, "amp_n1": 0.0}}
        code = cli.main(["simulate", "--config", write_config(tmp_path, zero), "--out", str(tmp_path / "run")])
        assert code == 0
        rows = read_series(tmp_path / "run" / "series.csv")
        assert len(rows) == 5
        assert all(v == 0.0 for r in rows for k, v in r.items() if k != "t")

    def test_bit_identical_reruns(self, tmp_path):
        # run.json records the output directory, so both runs write to the same one
        path = write_config(tmp_path, SMALL)
        out = tmp_path / "run"
        seen = []
        for _ in range(2):
            assert cli.main(["simulate", "--config", path, "--out", str(out)]) == 0
            seen.append([(out / f).read_bytes() for f in ("run.json", "series.csv")])
        assert seen[0] == seen[1]
        assert (out / "timing.json").exists()

    def test_seed_flag_changes_output(self, tmp_path):
        path = write_config(tmp_path, SMALL)
        cli.main(["simulate", "--config", path, "--out", str(tmp_path / "a")])
        cli.main(["simulate", "--config", path, "--out", str(tmp_path / "b"), "--seed", "5"])
        assert (tmp_path / "a" / "series.csv").read_bytes() != (tmp_path / "b" / "series.csv").read_bytes()
        assert json.loads((tmp_path / "b" / "run.json").read_text())["config"]["initial"]["seed"] == 5

    def test_run_json_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict(SMALL)
        record, wall = simulate(cfg)
        write_run(record, tmp_path, wall)
        data = json.loads((tmp_path / "run.json").read_text())
        back = RunRecord.from_dict(data)
        assert RunConfig.from_dict(back.config) == cfg
        assert back.p_bound == 4.0 and back.p_reference == {"1": 4.0, "2": 4.0, "3": 8.0}
        assert back.status == "ok" and back.failure is None
        rows = read_series(tmp_path / "series.csv")
        assert [r["t"] for r in rows] == pytest.approx([0.0, 0.05, 0.1, 0.15, 0.2])
        assert rows[0]["sigma_u"] == pytest.approx(0.5, abs=1e-6)
        assert rows == [{k: pytest.approx(v, rel=1e-16) for k, v in r.items()} for r in back.rows]

    def test_divergence_exit_code(self, tmp_path):
        huge = {**SMALL, "initial": {"sigma0": 0.5, "amp_u": 1e150, "amp_n0": 1e150, "amp_n1": 1e150}}
        with pytest.warns(RuntimeWarning):
            code = cli.main(["simulate", "--config", write_config(tmp_path, huge), "--out", str(tmp_path / "run")])
        assert code == 3
        data = json.loads((tmp_path / "run" / "run.json").read_text())
        assert data["status"] == "diverged" and data["failure"]["step"] >= 0

    def test_config_error_exit_code(self, tmp_path, capsys):
        code = cli.main(["simulate", "--config", write_config(tmp_path, {**SMALL, "n": 7}), "--out", str(tmp_path)])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


class TestProbeCommands:
    def test_lemma_integral_window(self, tmp_path, capsys):
        code = cli.main(["probe", "lemma-integral", "--alpha", "0.9", "--out", str(tmp_path)])
        assert code == 2
        assert "α > 1" in capsys.readouterr().err

    def test_lemma_integral_passes(self, tmp_path):
        code = cli.main(["probe", "lemma-integral", "--alpha", "1.5", "--radius", "20", "--out", str(tmp_path)])
        assert code == 0
        with open(tmp_path / "probe_lemma-integral.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6 and list(rows[0]) == cli.CAMPAIGN_COLUMNS

    def test_resonance(self, tmp_path):
        code = cli.main(["probe", "resonance", "--samples", "500", "--dim", "3", "--out", str(tmp_path)])
        assert code == 0
        with open(tmp_path / "probe_resonance.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["max_ratio"]) <= 1e-12 for r in rows)
        assert all(float(r["growth_factor"]) >= 0 for r in rows)

    def test_bilinear_deterministic(self, tmp_path):
        args = ["probe", "bilinear", "--samples", "100", "--cutoffs", "2", "4", "--seed", "3"]
        assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "probe_estimate1.csv").read_bytes()
        assert a == (tmp_path / "b" / "probe_estimate1.csv").read_bytes()

    def test_bilinear_window_violation(self, tmp_path, capsys):
        code = cli.main(["probe", "bilinear", "--b", "0.4", "--samples", "100", "--out", str(tmp_path)])
        assert code == 2
        assert "b > 1/2" in capsys.readouterr().err

    def test_commutator_small(self, tmp_path):
        args = ["probe", "commutator", "--cutoff", "4", "--samples", "100", "--out", str(tmp_path)]
        assert cli.main(args) == 0
        with open(tmp_path / "probe_commutator.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 3


class TestPicardCheck:
    def test_zero_u_converges_in_one_iteration(self, tmp_path):
        cfg = {"case": {"amp_u": 0.0}, "C": 128.0, "strang_steps": 200}
        assert cli.main(["picard-check", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "picard.json").read_text())
        assert report["picard"]["iterations"] == 1
        assert report["agreement_max"] <= 1e-10

    def test_oversized_delta(self, tmp_path, capsys):
        cfg = {"delta": 95.0, "max_iter": 8}
        code = cli.main(["picard-check", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)])
        assert code == 5
        assert "try delta" in capsys.readouterr().err
        report = json.loads((tmp_path / "picard.json").read_text())
        assert report["picard"]["suggested_delta"] == pytest.approx(47.5)

    def test_unknown_key(self, tmp_path):
        cfg = {"nodez": 3}
        assert cli.main(["picard-check", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == 2


class TestFitRadius:
    T = [1.0 + 0.5 * i for i in range(1, 40)]

    def run(self, tmp_path, sigmas, *extra):
        path = tmp_path / "series.csv"
        write_synthetic_series(path, self.T, sigmas)
        return cli.main(["fit-radius", str(path), "--out", str(tmp_path), *extra])

    def test_power_law_at_reference_passes(self, tmp_path):
        assert self.run(tmp_path, [0.3 * t**-4 for t in self.T]) == 0
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert fit["p_hat"] == pytest.approx(4.0, abs=1e-10) and fit["consistent"]

    def test_constant_passes(self, tmp_path):
        assert self.run(tmp_path, [0.3] * len(self.T)) == 0

    def test_fast_decay_fails(self, tmp_path):
        assert self.run(tmp_path, [0.3 * t**-9 for t in self.T]) == 4

    def test_fast_decay_passes_in_three_dimensions(self, tmp_path):
        # the one-sided bound is p + 0.5 = 8.5 for d = 3
        assert self.run(tmp_path, [0.3 * t**-8 for t in self.T], "--dim", "3") == 0

    def test_insufficient_rows(self, tmp_path):
        path = tmp_path / "series.csv"
        write_synthetic_series(path, [0.0, 0.5, 1.0, 1.5, 2.0], [0.3] * 5)
        assert cli.main(["fit-radius", str(path)]) == 2

    def test_dim_read_from_run_json(self, tmp_path):
        (tmp_path / "run.json").write_text(json.dumps({"config": {"dim": 3}}))
        assert self.run(tmp_path, [0.3 * t**-8 for t in self.T]) == 0


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, math.pi * 1e17):
        assert float(format_float(x)) == x


def test_initial_spec_in_config_is_dataclass():
    assert isinstance(RunConfig.from_dict(SMALL).initial, InitialDataSpec)
