"""
Fading realizations, cascaded RIS responses and pathloss-derived link budgets.

Complex Gaussian convention: CN(0, s2) has real and imaginary parts with
variance s2/2 each, so E|h|^2 = s2.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from app.errors import ChannelError
from app.scenario import LinkBudget, ScenarioConfig, SlotPlan

logger = logging.getLogger(__name__)

# Indoor-factory NLOS: PL = 33 + 25.5 log10(d) + 20 log10(f_GHz), no shadowing
PL_INTERCEPT_DB = 33.0
PL_DISTANCE_SLOPE = 25.5
PL_FREQUENCY_SLOPE = 20.0
MIN_DISTANCE_M = 1.0

# Element budget per chunk in sample_cascade_powers
_CHUNK_ELEMENTS = 1 << 22


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def pathloss_db(distance: float, carrier_ghz: float) -> float:
    if not distance >= MIN_DISTANCE_M:
        raise ChannelError(f"distance {distance} m is below the {MIN_DISTANCE_M} m validity floor")
    if not carrier_ghz > 0:
        raise ChannelError(f"carrier must be positive, got {carrier_ghz} GHz")
    return PL_INTERCEPT_DB + PL_DISTANCE_SLOPE * math.log10(distance) + PL_FREQUENCY_SLOPE * math.log10(carrier_ghz)


def pathloss_nlos(distance: float, carrier_ghz: float) -> float:
    """Linear power gain in (0, 1]"""
    return 10.0 ** (-pathloss_db(distance, carrier_ghz) / 10.0)


# Node pair of every leg variance
LEGS = {
    "sigma_d2": ("bs", "ue"),
    "sigma_qa2": ("bs", "dris"),
    "sigma_ga2": ("dris", "ue"),
    "sigma_qe2": ("bs", "aris"),
    "sigma_ge2": ("ue", "aris"),
    "sigma_gv2": ("aris", "eve"),
}


def distances(cfg: ScenarioConfig) -> Dict[str, float]:
    """Euclidean distance of every link leg in meters, keyed by node pair such as bs-ue"""
    return {f"{a}-{b}": getattr(cfg, a).distance_to(getattr(cfg, b)) for a, b in LEGS.values()}


def derive_link_budget(cfg: ScenarioConfig) -> LinkBudget:
    """
    Per-leg variances from the pathloss of each Euclidean distance, with the
    noise and transmit power from the dBm levels. Values given directly in
    cfg.budget replace the derived ones key by key.
    """
    overrides = cfg.budget.overrides()
    span = distances(cfg)
    values = {}
    for name, (a, b) in LEGS.items():
        if name in overrides:
            continue
        distance = span[f"{a}-{b}"]
        if distance == 0:
            raise ChannelError(f"{a} and {b} are at the same position")
        values[name] = pathloss_nlos(distance, cfg.carrier_ghz)
    values["sigma_w2"] = dbm_to_watts(cfg.budget.noise_dbm)
    values["tx_power"] = dbm_to_watts(cfg.budget.p_max_dbm)
    values.update(overrides)
    return LinkBudget(**values)


def complex_gaussian(rng: np.random.Generator, variance: float, size=None):
    """CN(0, variance) samples; a Python complex when size is None"""
    scale = math.sqrt(variance / 2.0)
    if size is None:
        re, im = rng.normal(0.0, 1.0, 2)
        return complex(scale * re, scale * im)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass(frozen=True)
class ChannelRealization:
    h_d: complex
    q_a: np.ndarray
    g_a: np.ndarray
    q_e: np.ndarray
    g_e: np.ndarray
    g_v: np.ndarray

    @property
    def m_a(self) -> int:
        return len(self.q_a)

    @property
    def m_e(self) -> int:
        return len(self.q_e)


@dataclass(frozen=True)
class EffectiveChannels:
    h_a_dl: complex
    h_a_ul: complex
    theta_dl: float
    theta_ul: float
    h_e_u: complex
    h_e_b: complex
    h_d: complex
    # D-RIS response with static phases only
    h_a: complex = 0j


def sample_realization(budget: LinkBudget, m_a: int, m_e: int, rng: np.random.Generator) -> ChannelRealization:
    """One i.i.d. draw of every coefficient; draw order is fixed"""
    if m_a < 1 or m_e < 1:
        raise ChannelError(f"element counts must be >= 1, got m_a={m_a} m_e={m_e}")
    return ChannelRealization(
        h_d=complex_gaussian(rng, budget.sigma_d2),
        q_a=complex_gaussian(rng, budget.sigma_qa2, m_a),
        g_a=complex_gaussian(rng, budget.sigma_ga2, m_a),
        q_e=complex_gaussian(rng, budget.sigma_qe2, m_e),
        g_e=complex_gaussian(rng, budget.sigma_ge2, m_e),
        g_v=complex_gaussian(rng, budget.sigma_gv2, m_e),
    )


def cascaded_response(phases: Sequence[float], leg1: Sequence[complex], leg2: Sequence[complex]) -> complex:
    """h = sum_m exp(j phi_m) q_m g_m"""
    phases = np.asarray(phases, dtype=float)
    leg1 = np.asarray(leg1, dtype=complex)
    leg2 = np.asarray(leg2, dtype=complex)
    if not (phases.shape == leg1.shape == leg2.shape):
        raise ChannelError(
            f"length mismatch: {phases.shape[0] if phases.ndim else 0} phases, "
            f"{leg1.size} and {leg2.size} leg coefficients"
        )
    return complex(np.sum(np.exp(1j * phases) * leg1 * leg2))


def compute_effective_channels(real: ChannelRealization, dris, adv) -> EffectiveChannels:
    """
    Cascaded responses for one realization. `dris` and `adv` are RisPanels;
    Eve's cascades run over her own m_e elements.
    """
    if dris.m != real.m_a or adv.m != real.m_e:
        raise ChannelError(
            f"panel sizes ({dris.m}, {adv.m}) do not match the realization ({real.m_a}, {real.m_e})"
        )
    h_a = cascaded_response(dris.static_phases, real.q_a, real.g_a)
    h_a_dl = h_a * np.exp(1j * dris.phi_dl)
    h_a_ul = h_a * np.exp(1j * dris.phi_ul)
    return EffectiveChannels(
        h_a_dl=complex(h_a_dl),
        h_a_ul=complex(h_a_ul),
        theta_dl=float(np.angle(h_a_dl)),
        theta_ul=float(np.angle(h_a_ul)),
        h_e_u=cascaded_response(adv.static_phases, real.g_v, real.g_e),
        h_e_b=cascaded_response(adv.static_phases, real.g_v, real.q_e),
        h_d=real.h_d,
        h_a=h_a,
    )


def effective_response(real: ChannelRealization, dris, adv, symbol_index: int, slot: SlotPlan,
                       dris_on: bool, adv_on: bool, direction: str, schedule=None) -> complex:
    """
    h_r,n = h_d + [dris_on] exp(j phi_a(n)) h_a + [adv_on] h_e(direction).

    Eve's term uses the g_e legs in DL and the q_e legs in UL. Without an
    explicit schedule the unflipped DL/UL assignment is used.
    """
    from app.ris import schedule_phases

    if not 0 <= symbol_index < slot.n_total:
        raise ChannelError(f"symbol {symbol_index} outside slot of {slot.n_total}")
    if direction not in ("dl", "ul"):
        raise ChannelError(f"direction must be 'dl' or 'ul', got {direction!r}")
    response = complex(real.h_d)
    if dris_on:
        if schedule is None:
            schedule = schedule_phases(dris, slot, flip=False)
        h_a = cascaded_response(dris.static_phases, real.q_a, real.g_a)
        response += complex(np.exp(1j * schedule.phase_at(symbol_index)) * h_a)
    if adv_on:
        leg = real.g_e if direction == "dl" else real.q_e
        response += cascaded_response(adv.static_phases, real.g_v, leg)
    return response


def sample_cascade_powers(var1: float, var2: float, m: int, n_draws: int, rng: np.random.Generator,
                          coherent: bool = False, chunk_elements: int = _CHUNK_ELEMENTS) -> np.ndarray:
    """
    |h|^2 of n_draws independent cascades of m elements, without building full
    realizations. Incoherent draws skip the static phases: CN legs are
    circularly symmetric, so a uniform phase leaves the distribution unchanged.
    Coherent draws use aligned phases, |h| = sum |q_m||g_m|.
    """
    if m < 1 or n_draws < 0:
        raise ChannelError(f"need m >= 1 and n_draws >= 0, got m={m} n_draws={n_draws}")
    out = np.empty(n_draws, dtype=float)
    rows = max(1, chunk_elements // m)
    for start in range(0, n_draws, rows):
        count = min(rows, n_draws - start)
        q = complex_gaussian(rng, var1, (count, m))
        g = complex_gaussian(rng, var2, (count, m))
        if coherent:
            out[start:start + count] = np.sum(np.abs(q) * np.abs(g), axis=1) ** 2
        else:
            out[start:start + count] = np.abs(np.sum(q * g, axis=1)) ** 2
    logger.debug(f"sampled {n_draws} cascades of {m} elements (coherent={coherent})")
    return out
