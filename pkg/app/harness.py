"""
Monte Carlo orchestration: one simulated slot per trial, sweeps over a
configuration axis, closed-form cross-validation and CSV output.

Every trial draws from its own Philox stream keyed by (seed, trial_index), and
aggregates are exact integer counters or fsum totals, so results do not depend
on the worker count.
"""
import csv
import hashlib
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from multiprocessing import Pool
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app import adversary, analysis, cep, phy
from app.channel import (
    ChannelRealization,
    EffectiveChannels,
    compute_effective_channels,
    effective_response,
    sample_realization,
)
from app.errors import ChannelError, ConfigValidationError, DrisError, OutputError, SweepError, TrialError
from app.ris import RisPanel, align_static_phases, random_static_phases, rotate_csi, schedule_phases, TWO_PI
from app.scenario import (
    PILOTS_DIRECT,
    PILOTS_NONRECIPROCAL,
    PILOTS_RECIPROCAL,
    LinkBudget,
    ScenarioConfig,
    efficiency,
    eta_s,
    serialize_scenario,
)

logger = logging.getLogger(__name__)

CSV_SCHEMA = 1
Z_LIMIT = 3.0
CI_Z = 1.959963984540054

SWEEP_AXES = ("tx_power_dbm", "noise_dbm", "m_a", "m_e", "eta_s", "n_n_prime")


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Counter-based substream for one trial"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial_index,))))


@dataclass(frozen=True)
class TrialMetrics:
    trial_index: int
    scenario_tag: str
    snr_d: float
    snr_a: float
    snr_eu: float
    snr_eb: float
    dl_errors: int = 0
    dl_symbols: int = 0
    ul_errors: int = 0
    ul_symbols: int = 0
    eve_errors: int = 0
    eve_observed: int = 0
    eve_blind_errors: int = 0
    eve_blind_observed: int = 0
    eve_ul_errors: int = 0
    eve_ul_observed: int = 0
    injected: int = 0
    fake_decoded: int = 0
    validation_errors: int = 0
    validation_symbols: int = 0
    gain_deviation: float = 0.0
    pollution_detected: bool = False
    backoff: int = 0
    eve_dominant: bool = False

    @property
    def dl_ser(self) -> float:
        return self.dl_errors / self.dl_symbols if self.dl_symbols else 0.0

    @property
    def ul_ser(self) -> float:
        return self.ul_errors / self.ul_symbols if self.ul_symbols else 0.0

    @property
    def eve_ser(self) -> float:
        return self.eve_errors / self.eve_observed if self.eve_observed else 0.0

    @property
    def validation_ser(self) -> float:
        return self.validation_errors / self.validation_symbols if self.validation_symbols else 0.0

    @property
    def fake_decode(self) -> bool:
        return self.fake_decoded > 0


@dataclass(frozen=True)
class _LinkPlan:
    """Transmit precoder, receiver combiner phase and the receiver's expected gain for one direction"""
    precoder: complex
    rx_phase: float
    expected: complex
    # receiver's own D-RIS estimate
    h_a_hat: complex = 0j

    @property
    def rotation(self) -> complex:
        """Full unit rotation applied by the receiver before deciding"""
        return complex(np.exp(-1j * self.rx_phase) * np.conj(self.expected) / abs(self.expected))


class _SlotChannel:
    """Per-symbol responses of one trial, from the precomputed cascades"""

    def __init__(self, cfg: ScenarioConfig, real: ChannelRealization, eff: EffectiveChannels, dris: RisPanel,
                 adv: RisPanel, plan: adversary.ActivationPlan, schedule):
        self.cfg = cfg
        self.real = real
        self.eff = eff
        self.dris = dris
        self.adv = adv
        self.plan = plan
        self.schedule = schedule
        self.reflects = cfg.adversary.mode in ("eavesdrop", "pollute_cep")

    def eve_on(self, n: int) -> bool:
        return self.cfg.adversary.mode != "off" and self.adv.is_on(n, self.cfg.slot, off_at_p0=self.plan.off_at_p0)

    def eve_reflects(self, n: int) -> bool:
        return self.reflects and self.eve_on(n)

    def response(self, n: int, direction: str) -> complex:
        return effective_response(self.real, self.dris, self.adv, n, self.cfg.slot, self.dris.is_on(n, self.cfg.slot),
                                  self.eve_reflects(n), direction, self.schedule)


def _stage_tag(channel: _SlotChannel, side: str) -> str:
    presence = {}
    for stage, indices in cep.stage_indices(channel.cfg.slot, side).items():
        flags = {channel.eve_reflects(n) for n in indices}
        if len(flags) > 1:
            return "undetermined"
        presence[stage] = flags.pop()
    return cep.infer_scenario_tag(presence)


def _combine_tags(ue_tag: str, bs_tag: str) -> str:
    if ue_tag == bs_tag:
        return ue_tag
    if "polluted" in (ue_tag, bs_tag):
        return "polluted"
    return "undetermined"


def _estimate_csi(channel: _SlotChannel, noise_var: float, rng: np.random.Generator,
                  ue_tag: str, bs_tag: str) -> Tuple[cep.CsiResult, cep.CsiResult]:
    cfg = channel.cfg
    slot = cfg.slot
    # pilots in symbol order; the noise stream follows the same order
    samples = {"ue": [], "bs": []}
    for n in sorted(slot.pilot_symbols):
        direction = slot.direction(n)
        sample = phy.transmit(cep.PILOT, 1.0, channel.response(n, direction), 0j, noise_var, rng, n)
        samples["ue" if direction == "dl" else "bs"].append(sample)

    if cfg.perfect_csi:
        eff = channel.eff
        # Eve's presence on the first data symbol of each direction, if there is one
        eve_dl = any(channel.eve_reflects(n) for n in slot.dl_data[:1])
        eve_ul = any(channel.eve_reflects(n) for n in slot.ul_data[:1])
        ue = cep.CsiResult(
            h_a_dl_hat=eff.h_a_dl, h_a_ul_hat=eff.h_a_ul,
            h_d_hat=eff.h_d + (eff.h_e_u if eve_dl else 0j),
            scenario_tag=ue_tag, side="ue",
        )
        bs = cep.CsiResult(
            h_a_dl_hat=eff.h_a_dl, h_a_ul_hat=eff.h_a_ul,
            h_d_hat=eff.h_d + (eff.h_e_b if eve_ul else 0j),
            scenario_tag=bs_tag, side="bs",
        )
        return ue, bs

    ue = cep.recover_csi(cep.collect_stages(samples["ue"], slot, "ue"), ue_tag)
    bs = cep.recover_csi(cep.collect_stages(samples["bs"], slot, "bs"), bs_tag)
    return ue, cep.bs_derive_dl(bs, channel.dris)


def _link_plans(cfg: ScenarioConfig, ue: cep.CsiResult, bs: cep.CsiResult) -> Dict[str, _LinkPlan]:
    if cfg.link_mode == "reciprocal":
        # plain MRT downlink, unprecoded uplink combined by the BS
        if ue.h_a_dl_hat == 0 or bs.h_a_ul_hat == 0:
            raise ChannelError("D-RIS channel estimate is zero; its phase is undefined")
        v_b = complex(np.conj(bs.h_a_dl_hat))
        theta = float(np.angle(bs.h_a_ul_hat))
        return {
            "dl": _LinkPlan(v_b, 0.0, phy.expected_gain(0.0, ue.h_d_hat, ue.h_a_dl_hat, np.conj(ue.h_a_dl_hat)),
                            ue.h_a_dl_hat),
            "ul": _LinkPlan(1 + 0j, theta, phy.expected_gain(theta, bs.h_d_hat, bs.h_a_ul_hat, 1 + 0j), bs.h_a_ul_hat),
        }
    at_bs = phy.build_precoders(bs.h_a_dl_hat, bs.h_a_ul_hat, link="BS-side D-RIS")
    at_ue = phy.build_precoders(ue.h_a_dl_hat, ue.h_a_ul_hat, link="UE-side D-RIS")
    return {
        "dl": _LinkPlan(at_bs.v_b, at_ue.theta_ul,
                        phy.expected_gain(at_ue.theta_ul, ue.h_d_hat, ue.h_a_dl_hat, at_ue.v_b), ue.h_a_dl_hat),
        "ul": _LinkPlan(at_ue.v_u, at_bs.theta_dl,
                        phy.expected_gain(at_bs.theta_dl, bs.h_d_hat, bs.h_a_ul_hat, at_bs.v_u), bs.h_a_ul_hat),
    }


def run_trial(cfg: ScenarioConfig, trial_index: int, budget: Optional[LinkBudget] = None) -> TrialMetrics:
    """Simulate one slot; deterministic in (cfg.seed, trial_index)"""
    try:
        return _run_trial(cfg, trial_index, budget or cfg.link_budget)
    except DrisError as e:
        if isinstance(e, TrialError):
            raise
        raise TrialError(cfg.seed, trial_index, e) from e
    except (ValueError, ArithmeticError) as e:
        raise TrialError(cfg.seed, trial_index, e) from e


def _prepare_slot(cfg: ScenarioConfig, budget: LinkBudget,
                  rng: np.random.Generator) -> Tuple[_SlotChannel, adversary.EveState]:
    """Channel draw, dynamic and static phases, panels and the phase schedule of one slot"""
    real = sample_realization(budget, cfg.m_a, cfg.m_e, rng)
    phi_dl, phi_ul = rng.uniform(0.0, TWO_PI, 2)
    if cfg.phi_dl is not None:
        phi_dl = cfg.phi_dl
    if cfg.phi_ul is not None:
        phi_ul = cfg.phi_ul
    if cfg.link_mode == "reciprocal":
        phi_ul = phi_dl
    if cfg.gain_mode == "coherent":
        dris_static = align_static_phases(real.q_a, real.g_a)
        eve_static = align_static_phases(real.g_v, real.g_e)
    else:
        dris_static = random_static_phases(cfg.m_a, rng)
        eve_static = random_static_phases(cfg.m_e, rng)

    state = adversary.EveState(timing=cfg.adversary, regime=cfg.link_mode)
    plan = adversary.pollute_cep(state, cfg.dris_active_from)
    dris = RisPanel(m=cfg.m_a, static_phases=dris_static, phi_dl=phi_dl, phi_ul=phi_ul,
                    active_from=cfg.dris_active_from)
    adv = RisPanel(m=cfg.m_e, static_phases=eve_static, active_from=plan.active_from)
    eff = compute_effective_channels(real, dris, adv)
    schedule = schedule_phases(dris, cfg.slot, flip=cfg.link_mode == "nonreciprocal")
    return _SlotChannel(cfg, real, eff, dris, adv, plan, schedule), state


def _run_trial(cfg: ScenarioConfig, trial_index: int, budget: LinkBudget) -> TrialMetrics:
    rng = trial_rng(cfg.seed, trial_index)
    slot = cfg.slot
    kind = cfg.constellation
    points = phy.constellation_points(kind)

    channel, state = _prepare_slot(cfg, budget, rng)
    eff, plan = channel.eff, channel.plan
    noise_var = 0.0 if cfg.noiseless else budget.effective_noise

    ue_tag, bs_tag = _stage_tag(channel, "ue"), _stage_tag(channel, "bs")
    ue_csi, bs_csi = _estimate_csi(channel, noise_var, rng, ue_tag, bs_tag)
    plans = _link_plans(cfg, ue_csi, bs_csi)

    counts = dict.fromkeys(
        ("dl_errors", "dl_symbols", "ul_errors", "ul_symbols", "eve_errors", "eve_observed",
         "eve_blind_errors", "eve_blind_observed", "eve_ul_errors", "eve_ul_observed", "fake_decoded",
         "validation_errors", "validation_symbols"), 0)
    validation = set(slot.dl_data[:cfg.validation_count] + slot.ul_data[:cfg.validation_count])
    ratios = {"dl": [], "ul": []}

    for n in sorted(slot.dl_data + slot.ul_data):
        direction = slot.direction(n)
        link = plans[direction]
        state = adversary.advance(state, max(0, n - plan.active_from) - state.elapsed)
        sent = int(rng.integers(0, len(points)))
        symbol = phy.ConstellationSymbol.from_index(sent, kind)

        interference = 0j
        fake = None
        if cfg.adversary.mode == "inject" and channel.eve_on(n):
            fake = phy.ConstellationSymbol.from_index(int(rng.integers(0, len(points))), kind)
            victim_leg = eff.h_e_u if direction == "dl" else eff.h_e_b
            interference = adversary.inject(fake, victim_leg, state, link.rotation)
            state = adversary.record_injection(state, fake)

        sample = phy.transmit(symbol, link.precoder, channel.response(n, direction), interference, noise_var, rng, n)
        z = phy.combine(sample, link.rx_phase).z
        rotated, magnitude = phy.equalize(z, link.expected)
        decided = int(phy.decide_indices(np.array([rotated]), magnitude, kind)[0])

        counts[f"{direction}_symbols"] += 1
        counts[f"{direction}_errors"] += decided != sent
        if n in validation:
            counts["validation_symbols"] += 1
            counts["validation_errors"] += decided != sent
            ratios[direction].append(rotated / (magnitude * symbol.value))
        if fake is not None and decided == fake.index:
            counts["fake_decoded"] += 1

        if cfg.adversary.mode == "eavesdrop" and channel.eve_on(n):
            toward_eve = eff.h_e_b if direction == "dl" else eff.h_e_u
            y_e = adversary.eavesdrop(link.precoder * symbol.value, toward_eve, noise_var, rng)
            known = link.precoder if state.knows_precoders else None
            guess = int(adversary.eve_decide(np.array([y_e]), toward_eve, known, kind)[0])
            counts["eve_observed"] += 1
            counts["eve_errors"] += guess != sent
            if direction == "ul":
                counts["eve_ul_observed"] += 1
                counts["eve_ul_errors"] += guess != sent
            if not state.knows_precoders:
                counts["eve_blind_observed"] += 1
                counts["eve_blind_errors"] += guess != sent

    checked = counts["validation_symbols"]
    validation_ser = counts["validation_errors"] / checked if checked else 0.0
    # worst direction, measured against the allowance of its own receiver
    excess = [
        (cep.gain_deviation(r), cep.gain_allowance(cfg.gain_tolerance, noise_var, plans[d].h_a_hat, plans[d].expected))
        for d, r in ratios.items() if r
    ]
    deviation, allowance = max(excess, key=lambda pair: pair[0] - pair[1], default=(0.0, math.inf))
    flagged = cep.detect_pollution(validation_ser, cfg.cep_threshold, deviation, allowance)
    backoff = cep.backoff_and_restart(rng, cfg.max_backoff) if flagged else 0
    if flagged:
        logger.debug(f"trial {trial_index}: validation SER {validation_ser:.3f}, gain deviation "
                     f"{deviation:.3g} (allowed {allowance:.3g}), muting {backoff} slots")

    snr_scale = 1.0 / budget.effective_noise
    h_e_side = eff.h_e_u if cfg.eve_side == "ue" else eff.h_e_b
    beta = analysis.fake_threshold(budget, cfg.m_a)
    return TrialMetrics(
        trial_index=trial_index,
        scenario_tag=_combine_tags(ue_tag, bs_tag),
        snr_d=abs(eff.h_d) ** 2 * snr_scale,
        snr_a=abs(eff.h_a) ** 2 * snr_scale,
        snr_eu=abs(eff.h_e_u) ** 2 * snr_scale,
        snr_eb=abs(eff.h_e_b) ** 2 * snr_scale,
        injected=len(state.injected_stream),
        gain_deviation=deviation,
        pollution_detected=flagged,
        backoff=backoff,
        eve_dominant=abs(h_e_side) ** 2 > beta,
        **{k: int(v) for k, v in counts.items()},
    )


# Adversary mode that realizes each estimation scenario
CEP_SCENARIOS = {"opt1": "off", "opt2": "eavesdrop", "polluted": "pollute_cep"}

_TRACE_COLUMNS = ("kind", "quantity", "n", "side", "stage", "dris_on", "eve_on", "phase",
                  "re", "im", "expected_re", "expected_im", "rel_error", "tag")


@dataclass(frozen=True)
class PilotRecord:
    n: int
    side: str
    stage: str
    dris_on: bool
    eve_on: bool
    phase: Optional[float]
    y: complex
    estimate: complex


@dataclass(frozen=True)
class CepTrace:
    """Pilot-by-pilot walkthrough of one CEP run with the recovered CSI of both sides"""
    scenario: str
    pilots: Tuple[PilotRecord, ...]
    truth: EffectiveChannels
    ue: cep.CsiResult
    bs: cep.CsiResult
    expected: Dict[str, complex]
    precoders: phy.PrecoderPair

    def recovered(self) -> Dict[str, Optional[complex]]:
        return {
            "ue.h_a_dl": self.ue.h_a_dl_hat, "ue.h_a_ul": self.ue.h_a_ul_hat, "ue.h_d": self.ue.h_d_hat,
            "ue.h_e": self.ue.h_e_hat,
            "bs.h_a_dl": self.bs.h_a_dl_hat, "bs.h_a_ul": self.bs.h_a_ul_hat, "bs.h_d": self.bs.h_d_hat,
            "bs.h_e": self.bs.h_e_hat,
        }

    def errors(self) -> Dict[str, float]:
        """Relative error of every recovered quantity against its noiseless value"""
        out = {}
        recovered = self.recovered()
        for name, expected in self.expected.items():
            value = recovered[name]
            if value is None:
                continue
            out[name] = abs(value - expected) / abs(expected) if expected != 0 else abs(value)
        return out

    def records(self) -> List[Dict[str, object]]:
        rows = []
        for p in self.pilots:
            row = dict.fromkeys(_TRACE_COLUMNS)
            row.update(kind="pilot", quantity="ls_estimate", n=p.n, side=p.side, stage=p.stage,
                       dris_on=p.dris_on, eve_on=p.eve_on, phase=p.phase,
                       re=p.estimate.real, im=p.estimate.imag)
            rows.append(row)
        errors = self.errors()
        for name, value in self.recovered().items():
            if value is None:
                continue
            side = name.split(".", 1)[0]
            expected = self.expected.get(name)
            row = dict.fromkeys(_TRACE_COLUMNS)
            row.update(kind="recovered", quantity=name, side=side, re=value.real, im=value.imag,
                       tag=(self.ue if side == "ue" else self.bs).scenario_tag)
            if expected is not None:
                row.update(expected_re=expected.real, expected_im=expected.imag, rel_error=errors[name])
            rows.append(row)
        return rows


def trace_cep(cfg: ScenarioConfig, scenario: str, trial_index: int = 0,
              noiseless: Optional[bool] = None) -> CepTrace:
    """
    Run the estimation stages of one slot under opt1 (Eve absent), opt2 (Eve
    reflecting in every stage) or polluted (Eve mirroring the D-RIS), and
    recover the CSI at the UE and the BS.
    """
    if scenario not in CEP_SCENARIOS:
        raise ConfigValidationError("cep.scenario", f"unknown scenario {scenario!r}; choose one of "
                                                    f"{', '.join(CEP_SCENARIOS)}")
    timing = cfg.adversary.model_copy(update={"mode": CEP_SCENARIOS[scenario], "activation_symbol": 0})
    point = cfg.replace(adversary=timing, link_mode="nonreciprocal", dris_active_from=0,
                        noiseless=cfg.noiseless if noiseless is None else noiseless)
    budget = point.link_budget
    slot = point.slot
    rng = trial_rng(point.seed, trial_index)
    channel, _ = _prepare_slot(point, budget, rng)
    noise_var = 0.0 if point.noiseless else budget.effective_noise

    pilots = []
    samples = {"ue": [], "bs": []}
    for n in sorted(slot.pilot_symbols):
        direction = slot.direction(n)
        side = "ue" if direction == "dl" else "bs"
        sample = phy.transmit(cep.PILOT, 1.0, channel.response(n, direction), 0j, noise_var, rng, n)
        samples[side].append(sample)
        dris_on = channel.dris.is_on(n, slot)
        pilots.append(PilotRecord(
            n=n, side=side, stage=slot.stage_of(n).split("_", 1)[1], dris_on=dris_on,
            eve_on=channel.eve_reflects(n), phase=channel.schedule.phase_at(n) if dris_on else None,
            y=sample.y, estimate=cep.ls_estimate(sample.y),
        ))

    eff = channel.eff
    hint = None
    if scenario == "opt2":
        # direct-only measurement from an earlier slot with both panels in training
        hint = cep.ls_estimate(phy.transmit(cep.PILOT, 1.0, eff.h_d, 0j, noise_var, rng).y)
    ue = cep.recover_csi(cep.collect_stages(samples["ue"], slot, "ue"), _stage_tag(channel, "ue"), hint)
    bs = cep.recover_csi(cep.collect_stages(samples["bs"], slot, "bs"), _stage_tag(channel, "bs"), hint)
    bs = cep.bs_derive_dl(bs, channel.dris)

    e_u = eff.h_e_u if scenario == "polluted" else 0j
    e_b = eff.h_e_b if scenario == "polluted" else 0j
    expected = {
        "ue.h_a_dl": eff.h_a_dl + e_u,
        "ue.h_a_ul": eff.h_a_ul + e_u,
        "ue.h_d": eff.h_d + (eff.h_e_u if scenario == "opt2" else 0j),
        "bs.h_a_ul": eff.h_a_ul + e_b,
        "bs.h_a_dl": rotate_csi(eff.h_a_ul + e_b, channel.dris.phi_dl, channel.dris.phi_ul),
        "bs.h_d": eff.h_d + (eff.h_e_b if scenario == "opt2" else 0j),
    }
    if scenario == "opt2":
        expected.update({"ue.h_e": eff.h_e_u, "bs.h_e": eff.h_e_b})
    if scenario == "polluted":
        precoders = phy.build_polluted_precoders(eff.h_a_dl, eff.h_a_ul, eff.h_e_u, eff.h_e_u)
    else:
        precoders = phy.build_precoders(ue.h_a_dl_hat, ue.h_a_ul_hat, link="UE-side D-RIS")
    logger.info(f"CEP walkthrough {scenario}: UE tag {ue.scenario_tag}, BS tag {bs.scenario_tag}")
    return CepTrace(scenario=scenario, pilots=tuple(pilots), truth=eff, ue=ue, bs=bs,
                    expected=expected, precoders=precoders)


def _run_chunk(cfg: ScenarioConfig, budget: LinkBudget, indices: Sequence[int]) -> List[TrialMetrics]:
    return [run_trial(cfg, i, budget) for i in indices]


@dataclass
class TrialTotals:
    """Order-independent totals over trials"""
    trials: int = 0
    counters: Dict[str, int] = field(default_factory=dict)
    snr: Dict[str, List[float]] = field(default_factory=lambda: {"d": [], "a": [], "eu": [], "eb": []})
    tags: Dict[str, int] = field(default_factory=dict)

    def add(self, m: TrialMetrics) -> None:
        self.trials += 1
        for f in fields(TrialMetrics):
            value = getattr(m, f.name)
            if f.name in ("trial_index", "scenario_tag") or isinstance(value, float):
                continue
            self.counters[f.name] = self.counters.get(f.name, 0) + int(value)
        self.snr["d"].append(m.snr_d)
        self.snr["a"].append(m.snr_a)
        self.snr["eu"].append(m.snr_eu)
        self.snr["eb"].append(m.snr_eb)
        self.tags[m.scenario_tag] = self.tags.get(m.scenario_tag, 0) + 1

    def count(self, name: str) -> int:
        return self.counters.get(name, 0)

    def mean_and_radius(self, key: str) -> Tuple[float, float]:
        values = self.snr[key]
        n = len(values)
        if n == 0:
            return float("nan"), float("nan")
        mean = math.fsum(values) / n
        if n < 2:
            return mean, float("inf")
        variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        return mean, CI_Z * math.sqrt(variance / n)

    def rate_and_radius(self, hits: str, total: str) -> Tuple[float, float]:
        k = self.count(hits)
        n = self.trials if total == "trials" else self.count(total)
        if n == 0:
            return float("nan"), float("nan")
        p = k / n
        return p, CI_Z * math.sqrt(p * (1.0 - p) / n)


def run_trials(cfg: ScenarioConfig, trials: Optional[int] = None, workers: Optional[int] = None,
               budget: Optional[LinkBudget] = None) -> TrialTotals:
    trials = cfg.trials if trials is None else trials
    workers = max(1, cfg.workers if workers is None else workers)
    budget = budget or cfg.link_budget
    totals = TrialTotals()
    if trials <= 0:
        return totals
    if workers == 1:
        for m in _run_chunk(cfg, budget, range(trials)):
            totals.add(m)
        return totals
    size = max(1, math.ceil(trials / (workers * 4)))
    chunks = [range(start, min(start + size, trials)) for start in range(0, trials, size)]
    with Pool(processes=workers) as pool:
        # map keeps chunk order, so the fold is in trial-index order
        for chunk in pool.map(partial(_run_chunk, cfg, budget), chunks):
            for m in chunk:
                totals.add(m)
    return totals


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    seed: int
    trials: int
    m_a: int
    m_e: int
    n_r: int
    n_n: int
    n_n_prime: int
    eta_s_recip: float
    eta_s_nonrecip: float
    rho_d: float
    rho_a: float
    rho_eb: float
    rho_eu: float
    rho_e: float
    beta: float
    c_d: float
    c_a_recip: float
    c_a: float
    c_e: float
    e_d: float
    e_ar: float
    e_an: float
    e_an_approx: float
    e_an_approx_linear: float
    feasible: bool
    p2: float
    p_r: float
    p_r_recip: float
    emp_rho_d: Optional[float] = None
    emp_rho_d_ci: Optional[float] = None
    emp_rho_a: Optional[float] = None
    emp_rho_a_ci: Optional[float] = None
    emp_rho_e: Optional[float] = None
    emp_rho_e_ci: Optional[float] = None
    emp_p2: Optional[float] = None
    emp_p2_ci: Optional[float] = None
    emp_ser_dl: Optional[float] = None
    emp_ser_dl_ci: Optional[float] = None
    emp_ser_ul: Optional[float] = None
    emp_ser_ul_ci: Optional[float] = None
    emp_eve_ser: Optional[float] = None
    emp_eve_ser_ci: Optional[float] = None
    emp_fake_rate: Optional[float] = None
    emp_fake_rate_ci: Optional[float] = None
    emp_pollution_rate: Optional[float] = None
    emp_pollution_rate_ci: Optional[float] = None

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Configuration for one sweep point"""
    if axis == "tx_power_dbm":
        return cfg.replace(budget=cfg.budget.model_copy(update={"p_max_dbm": float(value), "tx_power": None}))
    if axis == "noise_dbm":
        return cfg.replace(budget=cfg.budget.model_copy(update={"noise_dbm": float(value), "sigma_w2": None}))
    if axis in ("m_a", "m_e", "n_n_prime"):
        if float(value) != int(value):
            raise SweepError(f"{axis} values must be integers, got {value}")
        if axis == "n_n_prime":
            return cfg.replace(adversary=cfg.adversary.model_copy(update={"n_n_prime": int(value)}))
        return cfg.replace(**{axis: int(value)})
    if axis == "eta_s":
        if not 0.0 <= value <= 1.0:
            raise SweepError(f"eta_s must lie in [0, 1], got {value}")
        n = cfg.slot.n_total
        n_r = int(round((1.0 - value) * n))
        n_n = 2 * n_r
        n_n_prime = n_n + (cfg.adversary.n_n_prime - cfg.adversary.n_n)
        timing = cfg.adversary.model_dump() | {"n_r": n_r, "n_n": n_n, "n_n_prime": n_n_prime}
        return cfg.replace(adversary=timing)
    raise SweepError(f"unknown sweep axis {axis!r}; choose one of {', '.join(SWEEP_AXES)}")


def closed_forms(cfg: ScenarioConfig, budget: LinkBudget) -> Dict[str, object]:
    n = cfg.slot.n_total
    timing = cfg.adversary
    snr = analysis.snr_closed_form(budget, cfg.m_a, cfg.m_e)
    rho_e = snr.rho_eu if cfg.eve_side == "ue" else snr.rho_eb
    eta_d = float(efficiency(PILOTS_DIRECT, n))
    eta_r = float(efficiency(PILOTS_RECIPROCAL, n))
    eta_n = float(efficiency(PILOTS_NONRECIPROCAL, n))

    def rate(eta, rho):
        return analysis.achievable_rate(analysis.RateInputs(eta=eta, rho=rho))

    c_d = rate(eta_d, snr.rho_d)
    c_a_recip = rate(eta_r, snr.rho_a)
    c_a = rate(eta_n, snr.rho_a)
    c_e = rate(eta_n, rho_e)
    approx = analysis.asr_approx(analysis.SecrecyInputs(
        rho_d=snr.rho_d, rho_a=snr.rho_a, rho_e=rho_e, eta=eta_n, n_total=n, n_timer=timing.n_n,
        m_a=cfg.m_a, m_e=cfg.m_e, budget=budget, eve_side=cfg.eve_side,
    ))
    fake = dict(m_a=cfg.m_a, m_e=cfg.m_e, budget=budget, eve_side=cfg.eve_side, n_total=n,
                n_n_prime=timing.n_n_prime, literal_recip_fake=cfg.literal_recip_fake)
    nonrecip = analysis.fake_prob(analysis.FakeProbInputs(**fake))
    recip = analysis.fake_prob(analysis.FakeProbInputs(**fake, link_mode="reciprocal"))
    return {
        "m_a": cfg.m_a, "m_e": cfg.m_e,
        "n_r": timing.n_r, "n_n": timing.n_n, "n_n_prime": timing.n_n_prime,
        "eta_s_recip": eta_s(timing, n, "reciprocal"),
        "eta_s_nonrecip": eta_s(timing, n, "nonreciprocal_eavesdrop"),
        "rho_d": snr.rho_d, "rho_a": snr.rho_a, "rho_eb": snr.rho_eb, "rho_eu": snr.rho_eu, "rho_e": rho_e,
        "beta": analysis.fake_threshold(budget, cfg.m_a),
        "c_d": c_d, "c_a_recip": c_a_recip, "c_a": c_a, "c_e": c_e,
        "e_d": analysis.asr_basic(c_d, rate(eta_d, rho_e), snr.rho_d, rho_e),
        "e_ar": analysis.asr_timed(c_a_recip, rate(eta_r, rho_e), timing.n_r, n),
        "e_an": analysis.asr_timed(c_a, c_e, timing.n_n, n),
        "e_an_approx": approx.quadratic,
        "e_an_approx_linear": approx.linear,
        "feasible": analysis.feasibility(PILOTS_NONRECIPROCAL, n, timing.n_n),
        "p2": nonrecip.p2, "p_r": nonrecip.p_r, "p_r_recip": recip.p_r,
    }


def _empirical(cfg: ScenarioConfig, totals: TrialTotals) -> Dict[str, float]:
    emp = {}
    for key, name in (("d", "emp_rho_d"), ("a", "emp_rho_a"), ("eu" if cfg.eve_side == "ue" else "eb", "emp_rho_e")):
        emp[name], emp[f"{name}_ci"] = totals.mean_and_radius(key)
    for name, hits, total in (
        ("emp_p2", "eve_dominant", "trials"),
        ("emp_ser_dl", "dl_errors", "dl_symbols"),
        ("emp_ser_ul", "ul_errors", "ul_symbols"),
        ("emp_eve_ser", "eve_errors", "eve_observed"),
        ("emp_fake_rate", "fake_decoded", "injected"),
        ("emp_pollution_rate", "pollution_detected", "trials"),
    ):
        emp[name], emp[f"{name}_ci"] = totals.rate_and_radius(hits, total)
    return emp


def run_sweep(cfg: ScenarioConfig, axis: str, values: Iterable[float], trials: Optional[int] = None,
              workers: Optional[int] = None, simulate: bool = True) -> List[SweepRow]:
    """One SweepRow per value; closed forms always, Monte Carlo columns when simulate"""
    if axis not in SWEEP_AXES:
        raise SweepError(f"unknown sweep axis {axis!r}; choose one of {', '.join(SWEEP_AXES)}")
    trials = (cfg.trials if trials is None else trials) if simulate else 0
    rows = []
    for value in values:
        point = apply_axis(cfg, axis, value)
        budget = point.link_budget
        columns = closed_forms(point, budget)
        if simulate and trials > 0:
            totals = run_trials(point, trials, workers, budget)
            columns.update(_empirical(point, totals))
            flagged = totals.count("pollution_detected")
            if flagged:
                logger.info(f"{axis}={value}: {flagged} of {trials} slots flagged for CEP restart")
        rows.append(SweepRow(axis=axis, value=float(value), seed=point.seed, trials=trials, **columns))
        logger.info(f"{axis}={value}: p_r={columns['p_r']:.4g} e_an={columns['e_an']:.4g} ({trials} trials)")
    return rows


@dataclass(frozen=True)
class ValidationCheck:
    row: int
    metric: str
    empirical: float
    closed_form: float
    z: float

    @property
    def flagged(self) -> bool:
        return not abs(self.z) <= Z_LIMIT


@dataclass(frozen=True)
class ValidationReport:
    checks: Tuple[ValidationCheck, ...]

    @property
    def flagged(self) -> List[ValidationCheck]:
        return [c for c in self.checks if c.flagged]

    @property
    def passed(self) -> bool:
        return not self.flagged


def _z(empirical: float, expected: float, standard_error: float) -> float:
    if standard_error > 0:
        return (empirical - expected) / standard_error
    return 0.0 if empirical == expected else math.inf


def cross_validate(rows: Sequence[SweepRow]) -> ValidationReport:
    """z-scores of the Monte Carlo P_2 and mean SNRs against their closed forms"""
    checks = []
    for i, row in enumerate(rows):
        if row.trials <= 0:
            raise SweepError(f"row {i} ({row.axis}={row.value}) has no trials")
        if row.emp_p2 is None or row.emp_rho_a is None:
            raise SweepError(f"row {i} ({row.axis}={row.value}) lacks empirical columns")
        p = row.p2
        checks.append(ValidationCheck(i, "p2", row.emp_p2, p, _z(row.emp_p2, p, math.sqrt(p * (1 - p) / row.trials))))
        for metric, emp, radius, expected in (
            ("rho_d", row.emp_rho_d, row.emp_rho_d_ci, row.rho_d),
            ("rho_a", row.emp_rho_a, row.emp_rho_a_ci, row.rho_a),
            ("rho_e", row.emp_rho_e, row.emp_rho_e_ci, row.rho_e),
        ):
            checks.append(ValidationCheck(i, metric, emp, expected, _z(emp, expected, radius / CI_Z)))
    report = ValidationReport(tuple(checks))
    for check in report.flagged:
        logger.warning(f"row {check.row} {check.metric}: empirical {check.empirical:.6g} vs "
                       f"closed form {check.closed_form:.6g} (z={check.z:.2f})")
    return report


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(serialize_scenario(cfg).encode("utf-8")).hexdigest()


def emit(data: Union[Sequence[SweepRow], ValidationReport, Sequence[Dict[str, object]]], destination,
         cfg: Optional[ScenarioConfig] = None, extra_meta: Optional[Dict[str, object]] = None) -> str:
    """
    Write rows, a validation report or plain dict records as CSV: `#` metadata
    lines (schema, seed, config hash), a header row, then data.
    """
    if isinstance(data, ValidationReport):
        records = [dict(asdict(c), flagged=c.flagged) for c in data.checks]
    else:
        records = [r.as_dict() if isinstance(r, SweepRow) else dict(r) for r in data]
    header = list(records[0].keys()) if records else [f.name for f in fields(SweepRow)]
    meta = {"schema": CSV_SCHEMA}
    if cfg is not None:
        meta.update(seed=cfg.seed, config_sha256=config_hash(cfg))
    meta.update(extra_meta or {})
    path = os.fspath(destination)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            for key, value in meta.items():
                f.write(f"# {key}={_cell(value)}\r\n")
            writer = csv.writer(f)
            writer.writerow(header)
            for record in records:
                writer.writerow([_cell(record.get(name)) for name in header])
    except OSError as e:
        raise OutputError(path, e) from e
    logger.info(f"wrote {len(records)} records to {path}")
    return path


def emit_plot_data(rows: Sequence[SweepRow], destination, series: Sequence[str] = ("e_ar", "e_an", "p2", "p_r")) -> str:
    """Whitespace-separated columns: the swept value then one column per series"""
    path = os.fspath(destination)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("# " + " ".join(("value",) + tuple(series)) + "\n")
            for row in rows:
                values = row.as_dict()
                f.write(" ".join(_cell(values[name]) for name in ("value",) + tuple(series)) + "\n")
    except OSError as e:
        raise OutputError(path, e) from e
    return path
