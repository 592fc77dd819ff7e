"""
Acceptance checks for the simulator, run by `dris_sim.py validate`.

Every check returns a CheckResult with a pass flag and a one-line detail.
Sample sizes come from a scale profile: "desk" for a quick run, "full" for the
acceptance-size run.
"""
import filecmp
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app import analysis, harness
from app.channel import sample_cascade_powers
from app.errors import DrisError
from app.scenario import (
    PILOTS_DIRECT,
    PILOTS_NONRECIPROCAL,
    PILOTS_RECIPROCAL,
    BudgetSpec,
    ScenarioConfig,
    default_slot_plan,
    efficiency,
)

logger = logging.getLogger(__name__)

ETA_S_VALUES = tuple(round(0.05 * k, 2) for k in range(1, 13))
M_A_VALUES = (1000, 2000, 4000, 8000)
M_E_VALUES = (1000, 2000)
TAIL_RATIOS = (0.5, 1.0, 2.0)

EXACT_TOLERANCE = 1e-12
MEAN_POWER_TOLERANCE = 0.02
FAKE_UNAWARE_RATE = 0.25
FAKE_UNAWARE_TOLERANCE = 0.02
FAKE_AWARE_FLOOR = 0.999
POLLUTION_RATE_FLOOR = 0.99
FALSE_FLAG_CEILING = 1e-3
EVE_BLIND_SER_FLOOR = 0.7
EVE_CLEAR_SER_CEILING = 0.01

SCALES: Dict[str, Dict[str, int]] = {
    "desk": {
        "mean_power_draws": 50_000, "tail_draws": 50_000, "cep_draws": 200, "ser_trials": 600,
        "fake_trials": 1_500, "pollution_trials": 1_000, "determinism_trials": 40,
        "eve_trials": 2_000,
    },
    "full": {
        "mean_power_draws": 100_000, "tail_draws": 100_000, "cep_draws": 1_000, "ser_trials": 6_000,
        "fake_trials": 20_000, "pollution_trials": 10_000, "determinism_trials": 200,
        "eve_trials": 10_000,
    },
}
DETERMINISM_WORKERS = {"desk": (1, 4), "full": (1, 4, 8)}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _isolated(cfg: ScenarioConfig, **updates) -> ScenarioConfig:
    """Derived scenario with drawn dynamic phases and the D-RIS on from symbol 0"""
    return cfg.replace(phi_dl=None, phi_ul=None, dris_active_from=0, **updates)


def _unit_budget(m: int, rho_db: Optional[float] = None, **legs) -> BudgetSpec:
    """Unit per-leg gains; the noise gives the closed-form rho_a of rho_db"""
    values = dict(sigma_d2=0.01, sigma_qa2=1.0, sigma_ga2=1.0, sigma_qe2=1.0, sigma_ge2=1.0,
                  sigma_gv2=1.0, sigma_w2=1e-3, tx_power=1.0)
    if rho_db is not None:
        values["sigma_w2"] = m / 10.0 ** (rho_db / 10.0)
    values.update(legs)
    return BudgetSpec(**values)


def _strong_link(cfg: ScenarioConfig, rho_db: float, **updates) -> ScenarioConfig:
    """Phase-aligned 256-element D-RIS, no adversary"""
    m = 256
    timing = cfg.adversary.model_dump() | {"mode": "off"}
    return _isolated(cfg, m_a=m, m_e=m, budget=_unit_budget(m, rho_db), adversary=timing,
                     gain_mode="coherent", link_mode="nonreciprocal", constellation="qpsk", **updates)


def check_efficiency(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    slot = default_slot_plan(22)
    n = slot.n_total
    got = [efficiency(p, n) for p in (PILOTS_NONRECIPROCAL, PILOTS_RECIPROCAL, PILOTS_DIRECT)]
    wanted = [Fraction(19, 22), Fraction(18, 22), Fraction(20, 22)]
    rounded = [round(float(e), 4) for e in got]
    passed = got == wanted and rounded == [0.8636, 0.8182, 0.9091] and sum(slot.pilot_counts()) == 5
    return CheckResult("efficiency constants", passed,
                       f"eta_n={rounded[0]} eta_r={rounded[1]} eta_d={rounded[2]} pilots={slot.pilot_counts()}")


def check_mean_power(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    b = cfg.link_budget
    draws = scale["mean_power_draws"]
    links = {
        "h_a": (b.sigma_qa2, b.sigma_ga2, cfg.m_a),
        "h_e_u": (b.sigma_gv2, b.sigma_ge2, cfg.m_e),
        "h_e_b": (b.sigma_gv2, b.sigma_qe2, cfg.m_e),
    }
    details = []
    passed = True
    for i, (name, (var1, var2, m)) in enumerate(links.items()):
        powers = sample_cascade_powers(var1, var2, m, draws, harness.trial_rng(cfg.seed, i))
        expected = m * var1 * var2
        deviation = abs(float(np.mean(powers)) / expected - 1.0)
        passed &= deviation <= MEAN_POWER_TOLERANCE
        details.append(f"{name} {deviation:.2%}")
    return CheckResult("cascade mean power", passed, f"{draws} draws, deviation " + ", ".join(details))


def check_tail(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    b = cfg.link_budget
    draws = scale["tail_draws"]
    sigma_e = analysis.eve_sigma2(b, cfg.eve_side)
    worst = 0.0
    for i, m_e in enumerate(M_E_VALUES):
        powers = sample_cascade_powers(b.sigma_gv2, sigma_e, m_e, draws, harness.trial_rng(cfg.seed, 100 + i))
        mean = m_e * sigma_e * b.sigma_gv2
        for ratio in TAIL_RATIOS:
            p = math.exp(-ratio)
            empirical = float(np.mean(powers > ratio * mean))
            worst = max(worst, abs(empirical - p) / math.sqrt(p * (1 - p) / draws))
    return CheckResult("exponential tail of Eve's cascade", worst <= harness.Z_LIMIT,
                       f"{draws} draws per M_e, worst |z| = {worst:.2f}")


def check_cep_exactness(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    worst = {}
    flags_ok = True
    for scenario in harness.CEP_SCENARIOS:
        worst[scenario] = 0.0
        for i in range(scale["cep_draws"]):
            trace = harness.trace_cep(cfg, scenario, i, noiseless=True)
            worst[scenario] = max([worst[scenario]] + list(trace.errors().values()))
            if scenario == "polluted":
                flags_ok &= trace.ue.polluted and not trace.ue.trusted and not trace.bs.trusted
            else:
                flags_ok &= trace.ue.trusted and trace.bs.trusted
    passed = flags_ok and max(worst.values()) <= EXACT_TOLERANCE
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return CheckResult("noiseless CEP recovery", passed, f"worst relative error {detail}; trust flags ok={flags_ok}")


def check_phase_flip(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    worst = 0.0
    for i in range(scale["cep_draws"]):
        trace = harness.trace_cep(cfg, "opt1", i, noiseless=True)
        truth = trace.truth.h_a_dl
        worst = max(worst, abs(trace.bs.h_a_dl_hat - truth) / abs(truth))
    return CheckResult("BS-derived DL channel", worst <= EXACT_TOLERANCE, f"worst relative error {worst:.1e}")


def check_defense_ser(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    point = _strong_link(cfg, 30.0, perfect_csi=True, noiseless=False)
    totals = harness.run_trials(point, scale["ser_trials"], 1)
    dl = totals.count("dl_errors") / totals.count("dl_symbols")
    ul = totals.count("ul_errors") / totals.count("ul_symbols")
    return CheckResult("legitimate SER at rho_a = 30 dB", dl < 1e-3 and ul < 1e-3,
                       f"DL {dl:.2e} over {totals.count('dl_symbols')} symbols, "
                       f"UL {ul:.2e} over {totals.count('ul_symbols')} symbols")


def _injection_point(cfg: ScenarioConfig, timer: int) -> ScenarioConfig:
    m_a, m_e = 64, 256
    budget = _unit_budget(m_a, sigma_qe2=100.0, sigma_ge2=100.0, sigma_gv2=1e4)
    timing = {"n_r": timer, "n_n": 2 * timer, "n_n_prime": 2 * timer, "activation_symbol": 0, "mode": "inject"}
    return _isolated(cfg, m_a=m_a, m_e=m_e, budget=budget, adversary=timing, noiseless=True,
                     perfect_csi=True, gain_mode="incoherent", link_mode="nonreciprocal", constellation="qpsk")


def check_combiner_defense(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    trials = scale["fake_trials"]
    n = cfg.slot.n_total
    unaware = harness.run_trials(_injection_point(cfg, n), trials, 1)
    aware = harness.run_trials(_injection_point(cfg, 0), trials, 1)
    rate_unaware = unaware.count("fake_decoded") / unaware.count("injected")
    rate_aware = aware.count("fake_decoded") / aware.count("injected")
    # the rotation is common to a direction within a slot: 2 draws per trial
    tolerance = max(FAKE_UNAWARE_TOLERANCE, 4 * math.sqrt(0.25 * 0.75 / (2 * trials)))
    passed = abs(rate_unaware - FAKE_UNAWARE_RATE) <= tolerance and rate_aware >= FAKE_AWARE_FLOOR
    return CheckResult("combiner rotation against injection", passed,
                       f"fake decode rate unaware {rate_unaware:.4f} (0.25 +/- {tolerance:.3f}), "
                       f"aware {rate_aware:.4f}")


def check_asr_ordering(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    rows = harness.run_sweep(cfg, "eta_s", ETA_S_VALUES, simulate=False)
    ordered = all(row.e_an >= row.e_ar for row in rows)
    n = cfg.slot.n_total
    reduces = all(
        analysis.asr_timed(row.c_a, row.c_e, n, n) == row.c_a
        and analysis.asr_timed(row.c_a_recip, row.c_e, n, n) == row.c_a_recip
        for row in rows
    )
    margin = min(row.e_an - row.e_ar for row in rows)
    return CheckResult("ASR ordering over eta_s", ordered and reduces,
                       f"min E_an - E_ar = {margin:.4g} over {len(rows)} points, timer=N reduces to C_a: {reduces}")


def check_fake_ordering(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    bounded = True
    decreasing = True
    for m_e in M_E_VALUES:
        for eta in ETA_S_VALUES:
            series = []
            for m_a in M_A_VALUES:
                point = harness.apply_axis(cfg.replace(m_a=m_a, m_e=m_e), "eta_s", eta)
                forms = harness.closed_forms(point, point.link_budget)
                bounded &= forms["p_r"] <= forms["p_r_recip"]
                series.append((forms["p2"], forms["p_r"], point.adversary.n_n_prime < point.slot.n_total))
            decreasing &= all(a[0] > b[0] for a, b in zip(series, series[1:]))
            if series[0][2]:
                decreasing &= all(a[1] > b[1] for a, b in zip(series, series[1:]))

    n = cfg.slot.n_total
    base = cfg.replace(adversary={"n_r": 5, "n_n": 10, "n_n_prime": 10, "mode": cfg.adversary.mode})
    budget = base.link_budget
    scaled = True
    for k in range(10, n + 1):
        point = harness.apply_axis(base, "n_n_prime", k)
        forms = harness.closed_forms(point, budget)
        scaled &= math.isclose(forms["p_r"], (1 - k / n) * forms["p2"], rel_tol=EXACT_TOLERANCE, abs_tol=0.0)
    return CheckResult("fake-symbol probability ordering", bounded and decreasing and scaled,
                       f"P_r <= P_2: {bounded}, decreasing in M_a: {decreasing}, exposure factor exact: {scaled}")


def check_pollution_detection(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    trials = scale["pollution_trials"]
    m = 256
    timing = cfg.adversary.model_dump() | {"mode": "pollute_cep", "activation_symbol": 0}
    polluted = _isolated(cfg, m_a=m, m_e=m, budget=_unit_budget(m), adversary=timing, noiseless=True,
                         perfect_csi=False, gain_mode="incoherent", link_mode="nonreciprocal",
                         constellation="qpsk")
    detected = harness.run_trials(polluted, trials, 1).count("pollution_detected") / trials
    clean = _strong_link(cfg, 20.0, perfect_csi=False, noiseless=False)
    false_flags = harness.run_trials(clean, trials, 1).count("pollution_detected") / trials
    passed = detected > POLLUTION_RATE_FLOOR and false_flags < FALSE_FLAG_CEILING
    return CheckResult("pollution detection", passed,
                       f"detection rate {detected:.3f} (floor {POLLUTION_RATE_FLOOR}), "
                       f"false flags {false_flags:.1e} at rho_a = 20 dB")


def check_determinism(cfg: ScenarioConfig, scale: Dict[str, int], workers: Sequence[int] = (1, 4)) -> CheckResult:
    point = _isolated(cfg, m_a=64, m_e=64)
    trials = scale["determinism_trials"]
    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for w in tuple(workers) + (workers[0],):
            rows = harness.run_sweep(point, "m_a", (64, 128), trials=trials, workers=w)
            paths.append(harness.emit(rows, os.path.join(tmp, f"run{len(paths)}_w{w}.csv"), cfg=point))
        identical = all(filecmp.cmp(paths[0], p, shallow=False) for p in paths[1:])
    return CheckResult("determinism across runs and workers", identical,
                       f"{len(paths)} runs, workers {tuple(workers)}, byte-identical: {identical}")


def check_eavesdropping(cfg: ScenarioConfig, scale: Dict[str, int]) -> CheckResult:
    n = cfg.slot.n_total
    # Eve's timers never fire inside the slot
    timing = {"n_r": n, "n_n": 2 * n, "n_n_prime": 2 * n, "activation_symbol": 0, "mode": "eavesdrop"}
    common = dict(m_a=64, m_e=64, budget=_unit_budget(64), adversary=timing, perfect_csi=True,
                  gain_mode="incoherent", constellation="qpsk")
    trials = scale["eve_trials"]
    # the reciprocal uplink is not precoded, so a blind Eve decodes it at 1e-3 noise
    recip = harness.run_trials(_isolated(cfg, link_mode="reciprocal", noiseless=False, **common), trials, 1)
    clear = recip.count("eve_ul_errors") / recip.count("eve_ul_observed")
    nonrecip = harness.run_trials(_isolated(cfg, link_mode="nonreciprocal", noiseless=True, **common), trials, 1)
    blind = nonrecip.count("eve_blind_errors") / nonrecip.count("eve_blind_observed")
    passed = clear <= EVE_CLEAR_SER_CEILING and blind >= EVE_BLIND_SER_FLOOR
    return CheckResult("eavesdropping regimes", passed,
                       f"reciprocal unprecoded UL Eve SER {clear:.2e} over {recip.count('eve_ul_observed')} symbols, "
                       f"precoded before timer expiry {blind:.3f}")


CHECKS: Dict[str, Callable[[ScenarioConfig, Dict[str, int]], CheckResult]] = {
    "efficiency": check_efficiency,
    "mean_power": check_mean_power,
    "tail": check_tail,
    "cep": check_cep_exactness,
    "phase_flip": check_phase_flip,
    "defense_ser": check_defense_ser,
    "combiner": check_combiner_defense,
    "asr_ordering": check_asr_ordering,
    "fake_ordering": check_fake_ordering,
    "pollution": check_pollution_detection,
    "determinism": check_determinism,
    "eavesdropping": check_eavesdropping,
}


def run_checks(cfg: ScenarioConfig, scale: str = "desk", only: Optional[Sequence[str]] = None) -> List[CheckResult]:
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}; choose one of {', '.join(SCALES)}")
    names = list(only) if only else list(CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; available: {', '.join(CHECKS)}")
    results = []
    for name in names:
        start = time.time()
        try:
            if name == "determinism":
                result = check_determinism(cfg, SCALES[scale], DETERMINISM_WORKERS[scale])
            else:
                result = CHECKS[name](cfg, SCALES[scale])
        except DrisError as e:
            logger.error(f"check {name} raised: {e}")
            result = CheckResult(name, False, f"error: {e}")
        result = CheckResult(result.name, result.passed, result.detail, time.time() - start)
        logger.info(f"{result.name}: {'pass' if result.passed else 'FAIL'} ({result.seconds:.1f}s)")
        results.append(result)
    return results


class Colors:
    GREEN = '\033[92m'
    RED = '\033[91m'
    BLUE = '\033[94m'
    END = '\033[0m'


def print_report(results: Sequence[CheckResult], color: bool = True) -> bool:
    """Print one pass/fail line per check; True when all passed"""
    paint = (lambda code, text: f"{code}{text}{Colors.END}") if color else (lambda code, text: text)
    print(paint(Colors.BLUE, "=" * 60))
    for result in results:
        mark = paint(Colors.GREEN, "PASS") if result.passed else paint(Colors.RED, "FAIL")
        print(f"{mark}  {result.name} ({result.seconds:.1f}s)")
        print(f"      {result.detail}")
    passed = sum(r.passed for r in results)
    print(paint(Colors.BLUE, "=" * 60))
    print(f"{passed}/{len(results)} checks passed")
    return passed == len(results)
