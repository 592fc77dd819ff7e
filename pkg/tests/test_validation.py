import pytest

from app import harness, validation
from app.scenarios import load_scenario_file

FAST = {"cep_draws": 3}


@pytest.fixture
def cep_demo():
    return load_scenario_file("cep_demo")


def test_efficiency_check(reference):
    assert validation.check_efficiency(reference, FAST).passed


def test_closed_form_orderings(reference):
    assert validation.check_asr_ordering(reference, FAST).passed
    assert validation.check_fake_ordering(reference, FAST).passed


def test_noiseless_cep_checks(cep_demo):
    assert validation.check_cep_exactness(cep_demo, FAST).passed
    assert validation.check_phase_flip(cep_demo, FAST).passed


def test_run_checks_subset(reference):
    results = validation.run_checks(reference, "desk", ["efficiency"])
    assert [r.name for r in results] == ["efficiency constants"]
    assert results[0].seconds >= 0


def test_run_checks_rejects_unknown_names(reference):
    with pytest.raises(ValueError, match="unknown checks"):
        validation.run_checks(reference, "desk", ["efficiency", "nope"])
    with pytest.raises(ValueError, match="unknown scale"):
        validation.run_checks(reference, "huge")


def test_print_report(capsys):
    results = [validation.CheckResult("a", True, "fine"), validation.CheckResult("b", False, "broken")]
    assert not validation.print_report(results, color=False)
    out = capsys.readouterr().out
    assert "PASS  a" in out and "FAIL  b" in out
    assert "1/2 checks passed" in out
    assert validation.print_report(results[:1], color=False)


def test_combiner_rotation_defeats_unaware_injection(reference):
    n = reference.slot.n_total
    trials = 300
    unaware = harness.run_trials(validation._injection_point(reference, n), trials, 1)
    aware = harness.run_trials(validation._injection_point(reference, 0), trials, 1)
    # one common rotation per direction and slot: 600 independent draws
    assert unaware.count("fake_decoded") / unaware.count("injected") == pytest.approx(0.25, abs=0.07)
    assert aware.count("fake_decoded") / aware.count("injected") >= validation.FAKE_AWARE_FLOOR


def test_defense_ser_at_30_db(reference):
    result = validation.check_defense_ser(reference, {"ser_trials": 60})
    assert result.passed, result.detail


def test_eve_clear_on_reciprocal_uplink_blind_on_precoded_link(reference):
    result = validation.check_eavesdropping(reference, {"eve_trials": 1000})
    assert result.passed, result.detail


def test_pollution_detection_and_false_flags(reference):
    m = 256
    timing = reference.adversary.model_dump() | {"mode": "pollute_cep", "activation_symbol": 0}
    polluted = validation._isolated(reference, m_a=m, m_e=m, budget=validation._unit_budget(m), adversary=timing,
                                    noiseless=True, gain_mode="incoherent", link_mode="nonreciprocal")
    detected = harness.run_trials(polluted, 200, 1).count("pollution_detected")
    clean = validation._strong_link(reference, 20.0, perfect_csi=False, noiseless=False)
    false_flags = harness.run_trials(clean, 200, 1).count("pollution_detected")
    assert detected >= 196
    assert false_flags == 0
