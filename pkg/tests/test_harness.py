"""Scenario configuration, run protocol, metrics, and CSV logging tests."""

from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from morphwing.errors import ConfigError
from morphwing.harness import (
    RunLog,
    ScenarioConfig,
    certify_run,
    compare_controllers,
    compute_metrics,
    csv_header,
    emit_csv,
    frequency_sweep,
    gla_config,
    mla_config,
    parse_csv,
    reference_fn,
    run_scenario,
)


def short_cfg(controller="indi-qp-v", duration=1.5, **kw):
    cfg = ScenarioConfig(controller=controller, duration=duration)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def empty_log(q=5, m=12):
    z = lambda *shape: np.zeros(shape)
    return RunLog(controller="open-loop", q=q, t=z(0), u=z(0, m), u_v=z(0, q),
                  y_raw=z(0, 2), y_filt=z(0, 2), y_true=z(0, 2), y_ref=z(0, 2),
                  alpha_g=z(0), eps_ca_norm=z(0), iterations=z(0), sat_flags=z(0),
                  nu_c=z(0, 2), eps_ca=z(0, 2), hedge=z(0, 2), e_log=z(0, 2),
                  x=z(0, 4), u_eff=z(0, m), t_plant=z(0), y_true_plant=z(0, 2),
                  y_ref_plant=z(0, 2))


class TestConfig:
    def test_yaml_round_trip_is_identity(self):
        cfg = gla_config(1.5)
        cfg.noise.enabled = True
        assert ScenarioConfig.from_yaml(cfg.to_yaml()) == cfg

    def test_empty_yaml_gives_defaults(self):
        assert ScenarioConfig.from_yaml("") == ScenarioConfig()

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"controler": "lqg"})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"gust": {"amplitude": 3.0}})

    def test_unknown_controller_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(controller="pid")

    def test_tick_must_be_multiple_of_plant_step(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(dt_ctrl=0.0157)

    def test_presets_are_valid(self):
        assert mla_config("fy+30%").gust.enabled is False
        assert mla_config("fy+35%").command.profile == "fy+35%"
        assert gla_config(0.5).command.profile == "none"


class TestReference:
    def test_none_profile_is_zero(self):
        ref = reference_fn(short_cfg(command=replace(ScenarioConfig().command,
                                                     profile="none")))
        assert np.array_equal(ref(10.0), [0.0, 0.0])

    def test_custom_sigmoid_levels(self):
        cfg = ScenarioConfig()
        ref = reference_fn(cfg)
        c = cfg.command
        assert np.allclose(ref(c.t_start), [c.level / 2.0, 0.0])
        assert np.allclose(ref(c.t_start + 60.0), [c.level, 0.0], atol=1e-6)

    def test_shear_step_profile_final_values(self):
        cfg = mla_config("fy+30%")
        ref = reference_fn(cfg)
        c = cfg.command
        assert np.allclose(ref(1e3), [1.3 * c.f_nom, c.m_nom], atol=1e-6)


class TestMetrics:
    def _fake(self, err):
        n = len(err)
        return SimpleNamespace(controller="x",
                               y_true_plant=np.asarray(err, dtype=float),
                               y_ref_plant=np.zeros((n, 2)),
                               eps_ca_norm=np.zeros(n),
                               iterations=np.zeros(n, dtype=int),
                               sat_flags=np.zeros(n, dtype=int))

    def test_rms_reduction_arithmetic(self):
        closed = self._fake([[2.5, 1.0], [-2.5, -1.0]])
        open_ = self._fake([[10.0, 2.0], [-10.0, -2.0]])
        rep = compute_metrics(closed, open_)
        assert rep.red_rms_fy == pytest.approx(75.0)
        assert rep.red_max_fy == pytest.approx(75.0)
        assert rep.red_rms_mx == pytest.approx(50.0)

    def test_self_comparison_is_exactly_zero(self):
        log = self._fake([[1.0, 2.0], [3.0, 4.0]])
        rep = compute_metrics(log, log)
        assert np.array_equal(rep.reductions(), np.zeros(4))

    def test_open_loop_scenario_pairs_with_itself(self):
        _, rep = run_scenario(short_cfg("open-loop", duration=0.5))
        assert np.array_equal(rep.reductions(), np.zeros(4))


class TestRunProtocol:
    def test_log_shapes_are_consistent(self):
        cfg = short_cfg(duration=0.6)
        log, rep = run_scenario(cfg)
        n = log.t.size
        # 600 plant steps at a 15-step tick stride
        assert n == 40
        assert log.u.shape == (n, 12)
        assert log.u_v.shape == (n, 5)
        assert log.t_plant.size == int(round(0.6 / cfg.dt_plant))
        assert np.all(np.isfinite(log.u))
        assert rep.controller == "indi-qp-v"

    def test_commands_respect_position_limits(self):
        log, _ = run_scenario(short_cfg(duration=1.0))
        assert np.all(np.abs(log.u) <= 30.0 + 1e-9)

    def test_noisy_runs_reproduce_bit_for_bit(self, tmp_path):
        def once(path):
            cfg = short_cfg(duration=1.0)
            cfg.noise.enabled = True
            log, _ = run_scenario(cfg, pair_open_loop=False)
            emit_csv(log, path)
            return path.read_bytes()

        assert once(tmp_path / "a.csv") == once(tmp_path / "b.csv")

    def test_compare_controllers_shares_open_loop(self):
        cfg = short_cfg(duration=0.6)
        reports = compare_controllers(cfg, ("indi-qp-v", "open-loop"))
        assert np.array_equal(reports["open-loop"].reductions(), np.zeros(4))
        assert set(reports) == {"indi-qp-v", "open-loop"}

    def test_frequency_sweep_row_per_frequency(self):
        rows = frequency_sweep(gla_config(), [3.0])
        assert len(rows) == 1
        f, rep = rows[0]
        assert f == 3.0
        assert np.all(np.isfinite(rep.reductions()))

    def test_certificates_require_incremental_controller(self):
        cfg = short_cfg("lqg", duration=0.5)
        log, _ = run_scenario(cfg, pair_open_loop=False)
        with pytest.raises(ConfigError):
            certify_run(log, cfg)


class TestCsv:
    def test_header_layout(self):
        cols = csv_header(5, 12)
        assert cols[0] == "t"
        assert cols[1] == "u_1" and cols[12] == "u_12"
        assert cols[13] == "u_v_1" and cols[17] == "u_v_5"
        assert cols[-1] == "sat_flags"

    def test_empty_log_writes_header_only(self, tmp_path):
        path = emit_csv(empty_log(), tmp_path / "empty.csv")
        text = path.read_text()
        assert text == ",".join(csv_header(5, 12)) + "\n"

    def test_row_count_matches_ticks(self, tmp_path):
        log, _ = run_scenario(short_cfg(duration=0.03), pair_open_loop=False)
        path = emit_csv(log, tmp_path / "two.csv")
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 1 + log.t.size == 3

    def test_parse_round_trip_is_exact(self, tmp_path):
        cfg = short_cfg(duration=0.5)
        cfg.noise.enabled = True
        log, _ = run_scenario(cfg, pair_open_loop=False)
        cols = parse_csv(emit_csv(log, tmp_path / "r.csv"))
        assert np.array_equal(cols["t"], log.t)
        assert np.array_equal(cols["u_7"], log.u[:, 6])
        assert np.array_equal(cols["u_v_3"], log.u_v[:, 2])
        assert np.array_equal(cols["F_y_filt"], log.y_filt[:, 0])
        assert np.array_equal(cols["M_x_raw"], log.y_raw[:, 1])
        assert np.array_equal(cols["eps_ca_norm"], log.eps_ca_norm)
