"""
Eve: eavesdropping, MRT-precoded false-data injection, CEP pollution timing
and the discovery timers of her precoder/combiner search.

Eve's search is a deterministic timer. She learns the precoders after N_n
symbols (N_r on a reciprocal link) and the combiner factors after N'_n. Her
CSI is perfect once a timer fires.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from app.channel import complex_gaussian
from app.phy import ConstellationSymbol, decide_indices
from app.scenario import AdversaryTiming, LinkMode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EveState:
    timing: AdversaryTiming
    regime: LinkMode = "nonreciprocal"
    elapsed: int = 0
    injected_stream: Tuple[ConstellationSymbol, ...] = field(default_factory=tuple)

    @property
    def precoder_timer(self) -> int:
        return self.timing.n_r if self.regime == "reciprocal" else self.timing.n_n

    @property
    def combiner_timer(self) -> int:
        # a reciprocal link has no separate combiner secret
        return self.timing.n_r if self.regime == "reciprocal" else self.timing.n_n_prime

    @property
    def knows_precoders(self) -> bool:
        return self.elapsed >= self.precoder_timer

    @property
    def knows_combiners(self) -> bool:
        return self.knows_precoders and self.elapsed >= self.combiner_timer

    @property
    def can_prerotate(self) -> bool:
        """Whether injected symbols are aligned to the receiver rotation"""
        return self.regime == "reciprocal" or self.knows_combiners


@dataclass(frozen=True)
class ActivationPlan:
    active_from: int
    off_at_p0: bool
    mirrored: bool = False


def advance(state: EveState, symbols: int) -> EveState:
    if symbols < 0:
        raise ValueError(f"cannot advance by {symbols} symbols")
    return replace(state, elapsed=state.elapsed + symbols)


def record_injection(state: EveState, symbol: ConstellationSymbol) -> EveState:
    return replace(state, injected_stream=state.injected_stream + (symbol,))


def eavesdrop(symbol_sent: complex, h_toward_eve: complex, noise_var: float,
              rng: Optional[np.random.Generator] = None) -> complex:
    """y_e = h * s + w_e, where s is the transmitted (possibly precoded) value"""
    y = h_toward_eve * symbol_sent
    if noise_var > 0:
        y += complex_gaussian(rng, noise_var)
    return complex(y)


def eve_decide(y: np.ndarray, h_toward_eve, precoder=None, constellation: str = "qpsk") -> np.ndarray:
    """
    Eve's decision on eavesdropped samples. Without the precoder she assumes a
    unit one, so the reference is h alone; with it the reference is h * v.
    """
    reference = np.asarray(h_toward_eve, dtype=complex)
    if precoder is not None:
        reference = reference * np.asarray(precoder, dtype=complex)
    magnitude = np.abs(reference)
    safe = np.where(magnitude > 0, magnitude, 1.0)
    rotated = np.asarray(y, dtype=complex) * np.conj(reference) / safe
    return decide_indices(rotated, safe, constellation)


def inject(fake_symbol: ConstellationSymbol, h_e: complex, state: EveState,
           receiver_rotation: complex = 1 + 0j) -> complex:
    """
    Eve's MRT-precoded contribution |h_e|^2 x_e at the victim. Once she knows
    the combiners she pre-rotates by the inverse of the receiver rotation, so
    the symbol survives combining.
    """
    term = abs(h_e) ** 2 * fake_symbol.value
    if state.can_prerotate:
        term *= np.conj(receiver_rotation) / abs(receiver_rotation)
    return complex(term)


def pollute_cep(state: EveState, dris_active_from: int) -> ActivationPlan:
    """
    In pollute_cep mode Eve mirrors the D-RIS activation, so every pilot stage
    that contains h_a also contains h_e. Other modes keep the configured
    activation symbol.
    """
    if state.timing.mode != "pollute_cep":
        return ActivationPlan(active_from=state.timing.activation_symbol, off_at_p0=False)
    logger.debug(f"Eve mirrors the D-RIS activation at symbol {dris_active_from}")
    return ActivationPlan(active_from=dris_active_from, off_at_p0=True, mirrored=True)
