import csv
import json
import math

import pytest

from satlink.cli import main
from satlink.scenario import ConfigError, ScenarioConfig, parse_grid


def read_csv(path):
    header, body = [], []
    with open(path) as fh:
        for line in fh:
            (header if line.startswith("#") else body).append(line)
    rows = list(csv.DictReader(body))
    return header, rows


def write_config(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ScenarioConfig()
        a = cfg.dump(tmp_path / "a.json")
        again = ScenarioConfig.load(a)
        b = again.dump(tmp_path / "b.json")
        assert again == cfg
        assert a.read_text() == b.read_text()

    def test_partial_sections(self):
        cfg = ScenarioConfig.from_dict({"orbit": {"H_km": 400.0}})
        assert cfg.orbit.H_km == 400.0 and cfg.beam == ScenarioConfig().beam

    @pytest.mark.parametrize("data", [
        {"orbitt": {}},
        {"orbit": {"altitude": 3}},
        {"qkd": {"mu_d": 0.9}},
        {"sweep": {"za_grid": "0:95:5"}},
        {"sweep": {"za_grid": "a:b"}},
        {"sweep": {"elongation": "magic"}},
        {"turbulence": {"model": "kolmogorov"}},
        {"beam": {"W0_m": -1}},
        [],
    ])
    def test_rejects(self, data):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(data)

    def test_defaults_match_reference_scenario(self):
        cfg = ScenarioConfig()
        assert (cfg.beam.W0_m, cfg.beam.aperture_a_m, cfg.beam.F_m, cfg.beam.wavelength_nm) == (0.02, 0.5, 1e5, 840.0)
        assert cfg.turbulence.rho0_zenith_m == 0.13 and cfg.turbulence.Cn0_sq == 1e-17
        assert cfg.observer.lat_deg == 48.0

    @pytest.mark.parametrize("text,expected", [("0:10:5", [0.0, 5.0, 10.0]), ("1,2.5", [1.0, 2.5])])
    def test_grid(self, text, expected):
        assert parse_grid(text) == expected


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        p = write_config(tmp_path, {"nope": {}})
        assert main(["loss-budget", "--config", str(p), "--out", str(tmp_path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_grid_flag(self, tmp_path):
        assert main(["loss-budget", "--grid", "0:x", "--out", str(tmp_path)]) == 2

    def test_unreadable_config(self, tmp_path):
        assert main(["loss-budget", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2

    def test_numerical_failure(self, tmp_path, capsys):
        p = write_config(tmp_path, {"sweep": {"mc_max_samples": 20000, "mc_target_rel_se": 1e-6}})
        assert main(["turb-stats", "--config", str(p), "--grid", "30", "--out", str(tmp_path)]) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_dump_config(self, tmp_path):
        assert main(["dump-config", "--seed", "9", "--out", str(tmp_path)]) == 0
        cfg = ScenarioConfig.load(tmp_path / "scenario.json")
        assert cfg.sweep.seed == 9


class TestLossBudget:
    def test_default(self, tmp_path):
        assert main(["loss-budget", "--grid", "0:85:5", "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "loss_budget.csv")
        assert header[0].startswith("# satlink") and header[1].startswith("# seed:")
        assert json.loads(header[2].split("config: ", 1)[1]) == ScenarioConfig.from_dict(
            json.loads(header[2].split("config: ", 1)[1])).to_dict()
        L_r = [float(r["L_r_km"]) for r in rows]
        assert all(b > a for a, b in zip(L_r, L_r[1:]))
        assert all(0 < float(r["eta_total"]) <= float(r["eta_mean"]) < 1 for r in rows)

    def test_no_refraction(self, tmp_path):
        p = write_config(tmp_path, {"sweep": {"elongation": "none"}})
        assert main(["loss-budget", "--config", str(p), "--grid", "0:80:20", "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "loss_budget.csv")
        assert all(float(r["elongation"]) == 1.0 for r in rows)

    def test_altitude_curves(self, tmp_path):
        assert main(["loss-budget", "--preset", "fig2", "--grid", "80,85", "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "elongation.csv")
        at85 = {float(r["H_km"]): float(r["elongation_apparent_Z"]) for r in rows if float(r["Z_a_deg"]) == 85}
        assert at85[400.0] > at85[780.0] > at85[2000.0]


class TestTurbulenceStats:
    def test_phenomenological_preset(self, tmp_path):
        assert main(["turb-stats", "--preset", "fig5", "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "scint_phenomenological.csv")
        z = [float(r["Z_a_deg"]) for r in rows]
        s = [float(r["scint_index"]) for r in rows]
        assert 60 < z[s.index(max(s))] < 89

    def test_bitwise_rerun(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            d = tmp_path / name
            assert main(["turb-stats", "--grid", "40", "--seed", "123", "--out", str(d)]) == 0
            outs.append((d / "turb_stats.csv").read_bytes())
        assert outs[0] == outs[1]
        assert b"# seed: 123" in outs[0]

    def test_inclination_preset(self, tmp_path):
        assert main(["turb-stats", "--preset", "fig3", "--grid", "10,30,60", "--out", str(tmp_path)]) == 0
        curves = {}
        for di in ("0", "25", "50"):
            header, rows = read_csv(tmp_path / f"turb_stats_di{di}.csv")
            zmin = float([h for h in header if "Z_a_min_deg" in h][0].split(":")[1])
            curves[di] = {float(r["Z_a_deg"]): r["scint_index"] for r in rows}
            assert all(z >= zmin for z in curves[di])
        assert sorted(curves["0"]) == [10.0, 30.0, 60.0]
        assert sorted(curves["25"]) == [30.0, 60.0]
        assert sorted(curves["50"]) == [60.0]
        assert curves["0"][60.0] == curves["25"][60.0] == curves["50"][60.0]

    def test_beam_angles_preset(self, tmp_path):
        assert main(["turb-stats", "--preset", "fig6", "--grid", "0,80", "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "beam_angles_di0.csv")
        w = [float(r["W_ST_over_L_urad"]) for r in rows]
        assert w[1] > w[0]
        assert all(float(r["W_ST_over_L_urad"]) <= float(r["W_LT_over_L_urad"]) for r in rows)


class TestOtherCommands:
    def test_pdt(self, tmp_path):
        assert main(["pdt", "--za", "30", "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "pdt.csv")
        assert len(rows) == 2048
        assert any("Z_a_deg: 30" in h for h in header)
        summary = json.loads((tmp_path / "pdt.json").read_text())
        assert 0 < summary["eta_mean"] < 1

    def test_qkd_pass_coarse(self, tmp_path):
        p = write_config(tmp_path, {"sweep": {"time_step_s": 120.0}})
        assert main(["qkd-pass", "--config", str(p), "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "qkd_pass.csv")
        assert list(rows[0]) == ["t_s", "Z_a_deg", "qber", "key_rate_bits_per_s", "Q_mu_s", "Y1_L", "e1_xU",
                                 "theta_U", "flags"]
        t = [float(r["t_s"]) for r in rows]
        za = [float(r["Z_a_deg"]) for r in rows]
        assert t[0] == 0.0 and all(b > a for a, b in zip(t, t[1:]))
        # symmetric pass: mirror samples carry identical values
        for i in range(len(rows)):
            assert rows[i]["qber"] == rows[-1 - i]["qber"]
        assert min(za) < 1.0 and math.isclose(za[0], za[-1])

    def test_atmosphere_tables(self, tmp_path):
        assert main(["atmosphere-tables", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "standard_atmosphere.csv").exists()
        assert (tmp_path / "cn2_profiles.csv").read_text().startswith("h_m,")
