"""
Legitimate transceiver chain: Gray-mapped constellations, dual-CSI precoders,
transmission, phase-rotation combining and minimum-distance decisions.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.channel import complex_gaussian
from app.errors import ChannelError

logger = logging.getLogger(__name__)


def _qpsk() -> np.ndarray:
    # label b0 b1: b0 sets the I sign, b1 the Q sign; 00 -> (1+j)/sqrt2
    points = []
    for label in range(4):
        b0, b1 = (label >> 1) & 1, label & 1
        points.append(complex(1 - 2 * b0, 1 - 2 * b1))
    return np.array(points) / math.sqrt(2.0)


def _qam16() -> np.ndarray:
    # Gray levels per axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
    levels = {0b00: -3, 0b01: -1, 0b11: 1, 0b10: 3}
    points = []
    for label in range(16):
        points.append(complex(levels[(label >> 2) & 0b11], levels[label & 0b11]))
    return np.array(points) / math.sqrt(10.0)


CONSTELLATIONS: Dict[str, np.ndarray] = {"qpsk": _qpsk(), "qam16": _qam16()}
BITS_PER_SYMBOL: Dict[str, int] = {"qpsk": 2, "qam16": 4}


def constellation_points(kind: str) -> np.ndarray:
    try:
        return CONSTELLATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown constellation {kind!r}") from None


@dataclass(frozen=True)
class ConstellationSymbol:
    value: complex
    index: int

    @classmethod
    def from_index(cls, index: int, kind: str = "qpsk") -> "ConstellationSymbol":
        return cls(value=complex(constellation_points(kind)[index]), index=int(index))


@dataclass(frozen=True)
class PrecoderPair:
    v_b_dl: complex
    v_b_ul: complex
    v_u_ul: complex
    v_u_dl: complex
    theta_dl: float
    theta_ul: float

    @property
    def v_b(self) -> complex:
        return self.v_b_dl * self.v_b_ul

    @property
    def v_u(self) -> complex:
        return self.v_u_ul * self.v_u_dl

    @property
    def combiner_ue(self) -> complex:
        return complex(np.exp(-1j * self.theta_ul))

    @property
    def combiner_bs(self) -> complex:
        return complex(np.exp(-1j * self.theta_dl))


@dataclass(frozen=True)
class ReceivedSample:
    y: complex
    n: int = 0
    z: Optional[complex] = None


def map_symbols(bits: Sequence[int], constellation: str = "qpsk") -> List[ConstellationSymbol]:
    k = BITS_PER_SYMBOL.get(constellation)
    if k is None:
        raise ValueError(f"unknown constellation {constellation!r}")
    bits = [int(b) for b in bits]
    if len(bits) % k:
        raise ValueError(f"{len(bits)} bits is not a multiple of {k} bits per symbol")
    symbols = []
    for start in range(0, len(bits), k):
        label = 0
        for b in bits[start:start + k]:
            label = (label << 1) | (b & 1)
        symbols.append(ConstellationSymbol.from_index(label, constellation))
    return symbols


def demap_symbols(symbols: Sequence[ConstellationSymbol], constellation: str = "qpsk") -> List[int]:
    k = BITS_PER_SYMBOL[constellation]
    bits = []
    for symbol in symbols:
        bits.extend((symbol.index >> shift) & 1 for shift in range(k - 1, -1, -1))
    return bits


def build_precoders(h_a_dl: complex, h_a_ul: complex, link: str = "D-RIS") -> PrecoderPair:
    """
    v_b = conj(h_a^DL) exp(j theta_UL), v_u = conj(h_a^UL) exp(j theta_DL);
    the UE combines with exp(-j theta_UL) and the BS with exp(-j theta_DL).
    """
    if h_a_dl == 0:
        raise ChannelError(f"{link} DL channel is zero; its phase is undefined")
    if h_a_ul == 0:
        raise ChannelError(f"{link} UL channel is zero; its phase is undefined")
    theta_dl = float(np.angle(h_a_dl))
    theta_ul = float(np.angle(h_a_ul))
    return PrecoderPair(
        v_b_dl=complex(np.conj(h_a_dl)),
        v_b_ul=complex(np.exp(1j * theta_ul)),
        v_u_ul=complex(np.conj(h_a_ul)),
        v_u_dl=complex(np.exp(1j * theta_dl)),
        theta_dl=theta_dl,
        theta_ul=theta_ul,
    )


def build_polluted_precoders(h_a_dl: complex, h_a_ul: complex, h_e_dl: complex, h_e_ul: complex) -> PrecoderPair:
    """The same precoders evaluated on the composites h_a + h_e"""
    return build_precoders(h_a_dl + h_e_dl, h_a_ul + h_e_ul, link="polluted composite")


def transmit(symbol: ConstellationSymbol, precoder: complex, channel: complex, interference: complex,
             noise_var: float, rng: Optional[np.random.Generator] = None, n: int = 0) -> ReceivedSample:
    """y = channel * precoder * x + interference + w, w ~ CN(0, noise_var)"""
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    y = channel * precoder * symbol.value + interference
    if noise_var > 0:
        if rng is None:
            raise ValueError("a random stream is required when noise_var > 0")
        y += complex_gaussian(rng, noise_var)
    return ReceivedSample(y=complex(y), n=n)


def combine(sample: ReceivedSample, combiner_phase: float) -> ReceivedSample:
    """z = exp(-j theta) y"""
    z = complex(np.exp(-1j * combiner_phase) * sample.y)
    return ReceivedSample(y=sample.y, n=sample.n, z=z)


def decide_indices(z: np.ndarray, reference_gain, constellation: str = "qpsk") -> np.ndarray:
    """Vectorized minimum-distance decision on z / reference_gain"""
    points = constellation_points(constellation)
    gain = np.asarray(reference_gain, dtype=float)
    if np.any(gain <= 0):
        raise ValueError("reference_gain must be > 0")
    scaled = np.asarray(z, dtype=complex) / gain
    # argmin keeps the first minimum, i.e. the lowest label on ties
    return np.argmin(np.abs(scaled[..., None] - points), axis=-1)


def decide(z: complex, reference_gain: float, constellation: str = "qpsk") -> ConstellationSymbol:
    index = int(decide_indices(np.array([z]), reference_gain, constellation)[0])
    return ConstellationSymbol.from_index(index, constellation)


def symbol_error_rate(sent: Sequence, decided: Sequence) -> float:
    if len(sent) != len(decided):
        raise ValueError(f"length mismatch: {len(sent)} sent vs {len(decided)} decided")
    if not sent:
        raise ValueError("symbol_error_rate needs at least one symbol")
    errors = sum(_label(a) != _label(b) for a, b in zip(sent, decided))
    return errors / len(sent)


def _label(symbol) -> int:
    return symbol.index if isinstance(symbol, ConstellationSymbol) else int(symbol)


def expected_gain(combiner_phase: float, h_static_hat: complex, h_a_hat: complex, precoder_hat: complex) -> complex:
    """
    Composite gain the receiver expects on a data symbol:
    exp(-j psi) (h_static + h_a) v. Equals |h_a|^2 when h_static = 0 and v is
    the matching dual-CSI precoder.
    """
    return complex(np.exp(-1j * combiner_phase) * (h_static_hat + h_a_hat) * precoder_hat)


def equalize(z: complex, gain: complex) -> Tuple[complex, float]:
    """Rotate z by -angle(gain); returns (rotated z, |gain|)"""
    magnitude = abs(gain)
    if magnitude == 0:
        raise ChannelError("expected composite gain is zero")
    return complex(z * np.conj(gain) / magnitude), magnitude
