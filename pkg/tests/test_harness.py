import dataclasses

import pytest

from app import harness
from app.errors import ConfigValidationError, OutputError, SweepError
from app.scenario import AdversaryTiming, default_slot_plan


@pytest.fixture
def quiet_cfg(small_cfg):
    """No adversary and no noise: every decision must be correct"""
    return small_cfg.replace(adversary=AdversaryTiming(mode="off"), noiseless=True)


def test_trial_is_deterministic(small_cfg):
    assert harness.run_trial(small_cfg, 3) == harness.run_trial(small_cfg, 3)
    assert harness.run_trial(small_cfg, 3) != harness.run_trial(small_cfg, 4)


@pytest.mark.parametrize("perfect_csi", [True, False])
def test_noiseless_clean_link_decodes_everything(quiet_cfg, perfect_csi):
    cfg = quiet_cfg.replace(perfect_csi=perfect_csi)
    for i in range(5):
        m = harness.run_trial(cfg, i)
        assert m.scenario_tag == "opt1"
        assert m.dl_symbols == len(cfg.slot.dl_data)
        assert m.ul_symbols == len(cfg.slot.ul_data)
        assert m.dl_errors == m.ul_errors == 0
        assert not m.pollution_detected and m.backoff == 0
        assert m.gain_deviation < 1e-9


def test_reciprocal_noiseless_link(quiet_cfg):
    m = harness.run_trial(quiet_cfg.replace(link_mode="reciprocal"), 0)
    assert m.dl_errors == m.ul_errors == 0


def test_pollution_is_tagged_and_detected(small_cfg):
    cfg = small_cfg.replace(adversary=AdversaryTiming(mode="pollute_cep"), noiseless=True)
    metrics = [harness.run_trial(cfg, i) for i in range(40)]
    assert all(m.scenario_tag == "polluted" for m in metrics)
    detected = sum(m.pollution_detected for m in metrics)
    assert detected >= 38
    assert all(m.backoff >= 1 for m in metrics if m.pollution_detected)
    # the UE's own estimates agree with its channel, so the SER alone misses some slots
    assert detected > sum(m.validation_ser > cfg.cep_threshold for m in metrics)


def test_noisy_clean_link_is_not_flagged(small_cfg):
    cfg = small_cfg.replace(adversary=AdversaryTiming(mode="off"), noiseless=False)
    assert not any(harness.run_trial(cfg, i).pollution_detected for i in range(30))


def test_short_slot_runs_with_capped_validation(small_cfg):
    cfg = small_cfg.replace(slot=default_slot_plan(10), adversary=AdversaryTiming(mode="off"), noiseless=True)
    m = harness.run_trial(cfg, 0)
    assert (m.dl_symbols, m.ul_symbols) == (3, 2)
    assert m.validation_symbols == 4
    assert m.dl_errors == m.ul_errors == 0


def test_injection_counts(small_cfg):
    cfg = small_cfg.replace(adversary=AdversaryTiming(mode="inject"))
    m = harness.run_trial(cfg, 0)
    assert m.injected == m.dl_symbols + m.ul_symbols
    assert 0 <= m.fake_decoded <= m.injected
    late = harness.run_trial(small_cfg.replace(adversary=AdversaryTiming(mode="inject", activation_symbol=14)), 0)
    assert late.injected == sum(1 for n in small_cfg.slot.dl_data + small_cfg.slot.ul_data if n >= 14)


def test_eavesdropping_counts(small_cfg):
    cfg = small_cfg.replace(adversary=AdversaryTiming(n_r=5, n_n=10, n_n_prime=10, mode="eavesdrop"))
    m = harness.run_trial(cfg, 0)
    assert m.eve_observed == m.dl_symbols + m.ul_symbols
    # Eve is blind until her precoder timer fires
    assert m.eve_blind_observed == sum(1 for n in cfg.slot.dl_data + cfg.slot.ul_data if n < 10)


def test_empty_sweep(small_cfg):
    assert harness.run_sweep(small_cfg, "m_a", []) == []


def test_unknown_axis(small_cfg):
    with pytest.raises(SweepError, match="unknown sweep axis"):
        harness.run_sweep(small_cfg, "k_subcarriers", [1.0])


def test_integer_axes_reject_fractions(small_cfg):
    with pytest.raises(SweepError):
        harness.apply_axis(small_cfg, "m_a", 10.5)


def test_eta_s_axis_sets_timers(small_cfg):
    point = harness.apply_axis(small_cfg, "eta_s", 0.5)
    assert (point.adversary.n_r, point.adversary.n_n) == (11, 22)


def test_fake_probability_falls_with_m_a(small_cfg):
    cfg = small_cfg.replace(adversary=AdversaryTiming(n_r=5, n_n=10, n_n_prime=11))
    rows = harness.run_sweep(cfg, "m_a", [32, 64, 128, 256], simulate=False)
    p_r = [row.p_r for row in rows]
    assert all(a > b for a, b in zip(p_r, p_r[1:]))
    assert all(row.trials == 0 and row.emp_p2 is None for row in rows)


def test_cross_validate_needs_simulated_rows(small_cfg):
    rows = harness.run_sweep(small_cfg, "m_a", [64], simulate=False)
    with pytest.raises(SweepError, match="no trials"):
        harness.cross_validate(rows)
    with pytest.raises(SweepError, match="lacks"):
        harness.cross_validate([dataclasses.replace(rows[0], trials=10)])


def test_cross_validate_report(small_cfg):
    rows = harness.run_sweep(small_cfg, "m_a", [64], trials=40, workers=1)
    report = harness.cross_validate(rows)
    assert {c.metric for c in report.checks} == {"p2", "rho_d", "rho_a", "rho_e"}
    assert rows[0].emp_ser_dl is not None


def test_emit_format(small_cfg, tmp_path):
    rows = harness.run_sweep(small_cfg, "m_e", [64, 128], simulate=False)
    path = harness.emit(rows, tmp_path / "sweep.csv", cfg=small_cfg, extra_meta={"axis": "m_e"})
    raw = (tmp_path / "sweep.csv").read_bytes()
    assert path.endswith("sweep.csv")
    assert raw.startswith(b"# schema=1\r\n# seed=11\r\n# config_sha256=")
    assert b"\n" not in raw.replace(b"\r\n", b"")
    lines = raw.decode().split("\r\n")
    assert "# axis=m_e" in lines
    header = next(line for line in lines if not line.startswith("#")).split(",")
    assert header[:3] == ["axis", "value", "seed"]
    assert lines[-1] == ""


def test_emit_reports_unwritable_destination(small_cfg, tmp_path):
    rows = harness.run_sweep(small_cfg, "m_a", [64], simulate=False)
    with pytest.raises(OutputError):
        harness.emit(rows, tmp_path / "missing" / "out.csv")


def test_output_independent_of_worker_count(small_cfg, tmp_path):
    outputs = []
    for workers in (1, 2):
        rows = harness.run_sweep(small_cfg, "m_a", [64], trials=12, workers=workers)
        target = tmp_path / f"w{workers}.csv"
        harness.emit(rows, target, cfg=small_cfg)
        outputs.append(target.read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize("scenario", ["opt1", "opt2", "polluted"])
def test_noiseless_cep_trace_is_exact(small_cfg, scenario):
    trace = harness.trace_cep(small_cfg, scenario, noiseless=True)
    errors = trace.errors()
    assert errors
    assert max(errors.values()) < 1e-9
    assert len(trace.pilots) == len(small_cfg.slot.pilot_symbols)
    assert all(not p.dris_on for p in trace.pilots if p.stage == "p0")


def test_cep_trace_tags(small_cfg):
    assert harness.trace_cep(small_cfg, "opt1", noiseless=True).ue.trusted
    opt2 = harness.trace_cep(small_cfg, "opt2", noiseless=True)
    assert opt2.ue.scenario_tag == opt2.bs.scenario_tag == "opt2"
    polluted = harness.trace_cep(small_cfg, "polluted", noiseless=True)
    assert polluted.ue.scenario_tag == "polluted" and not polluted.ue.trusted


def test_cep_trace_records(small_cfg):
    records = harness.trace_cep(small_cfg, "opt2", noiseless=True).records()
    assert len({tuple(r) for r in records}) == 1
    assert {r["kind"] for r in records} == {"pilot", "recovered"}


def test_unknown_cep_scenario(small_cfg):
    with pytest.raises(ConfigValidationError):
        harness.trace_cep(small_cfg, "opt3")
