"""
Phase control of a metasurface panel
"""
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from app.errors import ChannelError
from app.scenario import SlotPlan

TWO_PI = 2.0 * math.pi


def wrap_phase(phase):
    """Map radians into [0, 2pi)"""
    # np.mod can return exactly 2pi for tiny negative inputs
    wrapped = np.mod(phase, TWO_PI)
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return float(wrapped) if np.ndim(phase) == 0 else wrapped


@dataclass(frozen=True)
class RisPanel:
    m: int
    static_phases: np.ndarray
    phi_dl: float = 0.0
    phi_ul: float = 0.0
    active_from: int = 0

    def __post_init__(self):
        phases = np.asarray(self.static_phases, dtype=float)
        if phases.shape != (self.m,):
            raise ChannelError(f"panel of {self.m} elements given {phases.size} static phases")
        if self.active_from < 0:
            raise ChannelError("active_from must be >= 0")
        phases = wrap_phase(phases)
        phases.setflags(write=False)
        object.__setattr__(self, "static_phases", phases)
        object.__setattr__(self, "phi_dl", wrap_phase(float(self.phi_dl)))
        object.__setattr__(self, "phi_ul", wrap_phase(float(self.phi_ul)))

    def is_on(self, n: int, slot: SlotPlan, off_at_p0: bool = True) -> bool:
        """Switched on from active_from; the D-RIS also stays off on every p0 symbol"""
        if n < self.active_from:
            return False
        return not (off_at_p0 and n in slot.p0_symbols)


@dataclass(frozen=True)
class PhaseSchedule:
    phases: Mapping[int, float] = field(default_factory=dict)
    flip_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "phases", MappingProxyType(dict(self.phases)))

    def phase_at(self, n: int) -> float:
        try:
            return self.phases[n]
        except KeyError:
            raise ChannelError(f"symbol {n} has no scheduled phase") from None


def align_static_phases(q: Sequence[complex], g: Sequence[complex]) -> np.ndarray:
    """phi_m = -phase(q_m g_m), so every cascaded term is real and non-negative"""
    q = np.asarray(q, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if q.shape != g.shape:
        raise ChannelError(f"length mismatch: {q.size} vs {g.size}")
    return wrap_phase(-np.angle(q * g))


def random_static_phases(m: int, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ChannelError(f"element count must be >= 1, got {m}")
    return rng.uniform(0.0, TWO_PI, m)


def schedule_phases(panel: RisPanel, slot: SlotPlan, flip: bool) -> PhaseSchedule:
    """
    Common dynamic phase for every symbol of the slot.

    Without flipping, DL symbols use phi_dl and UL symbols phi_ul. With
    flipping the DL p2 symbols carry phi_ul, so the UE observes the UL channel.
    """
    phases = {}
    for n in range(slot.n_total):
        phases[n] = panel.phi_dl if n in slot.dl_symbols else panel.phi_ul
    if flip:
        for n in slot.dl_p2:
            phases[n] = panel.phi_ul
    return PhaseSchedule(phases=phases, flip_enabled=flip)


def rotate_csi(h_ul: complex, phi_dl: float, phi_ul: float) -> complex:
    """h_a^DL = h_a^UL exp(j(phi_dl - phi_ul))"""
    return complex(h_ul * np.exp(1j * (phi_dl - phi_ul)))
