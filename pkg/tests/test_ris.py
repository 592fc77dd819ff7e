import math

import numpy as np
import pytest
from scipy.stats import chisquare

from app.channel import cascaded_response, complex_gaussian
from app.errors import ChannelError
from app.ris import (
    TWO_PI,
    RisPanel,
    align_static_phases,
    random_static_phases,
    rotate_csi,
    schedule_phases,
    wrap_phase,
)
from app.scenario import default_slot_plan


def test_wrap_phase():
    assert wrap_phase(-0.1) == pytest.approx(TWO_PI - 0.1)
    assert wrap_phase(TWO_PI) == 0.0
    assert wrap_phase(-1e-20) == 0.0
    wrapped = wrap_phase(np.array([-math.pi, 3 * math.pi]))
    assert np.allclose(wrapped, [math.pi, math.pi])
    assert np.all((wrapped >= 0) & (wrapped < TWO_PI))


def test_panel_phases_are_wrapped_and_frozen():
    panel = RisPanel(m=3, static_phases=[-1.0, 0.0, 7.0], phi_dl=-0.5, phi_ul=TWO_PI + 1.0)
    assert panel.static_phases[0] == pytest.approx(TWO_PI - 1.0)
    assert panel.phi_dl == pytest.approx(TWO_PI - 0.5)
    assert panel.phi_ul == pytest.approx(1.0)
    with pytest.raises(ValueError):
        panel.static_phases[0] = 0.0


def test_panel_size_mismatch():
    with pytest.raises(ChannelError):
        RisPanel(m=4, static_phases=np.zeros(3))


def test_activation_and_p0_gating():
    slot = default_slot_plan(22)
    panel = RisPanel(m=2, static_phases=np.zeros(2), active_from=3)
    assert not any(panel.is_on(n, slot) for n in range(3))
    assert panel.is_on(3, slot)
    early = RisPanel(m=2, static_phases=np.zeros(2))
    assert not early.is_on(0, slot) and not early.is_on(12, slot)
    assert early.is_on(12, slot, off_at_p0=False)
    assert early.is_on(1, slot) and early.is_on(2, slot)


def test_schedule_flips_only_p2():
    slot = default_slot_plan(22)
    panel = RisPanel(m=2, static_phases=np.zeros(2), phi_dl=0.4, phi_ul=2.2)
    flipped = schedule_phases(panel, slot, flip=True)
    plain = schedule_phases(panel, slot, flip=False)
    assert flipped.flip_enabled and not plain.flip_enabled
    assert flipped.phase_at(1) == pytest.approx(0.4)
    assert flipped.phase_at(2) == pytest.approx(2.2)
    assert plain.phase_at(2) == pytest.approx(0.4)
    for n in slot.dl_data:
        assert flipped.phase_at(n) == pytest.approx(0.4)
    for n in slot.ul_data + slot.ul_p1:
        assert flipped.phase_at(n) == pytest.approx(2.2)
    with pytest.raises(ChannelError):
        flipped.phase_at(22)
    with pytest.raises(TypeError):
        flipped.phases[0] = 1.0


def test_aligned_phases_add_coherently(rng):
    q = complex_gaussian(rng, 1.0, 64)
    g = complex_gaussian(rng, 1.0, 64)
    h = cascaded_response(align_static_phases(q, g), q, g)
    assert h.imag == pytest.approx(0.0, abs=1e-9)
    assert h.real == pytest.approx(np.sum(np.abs(q) * np.abs(g)))
    with pytest.raises(ChannelError):
        align_static_phases(q[:3], g)


def test_random_static_phases_range(rng):
    phases = random_static_phases(1000, rng)
    assert phases.shape == (1000,)
    assert np.all((phases >= 0) & (phases < TWO_PI))
    with pytest.raises(ChannelError):
        random_static_phases(0, rng)


def test_random_static_phases_are_uniform(rng):
    phases = random_static_phases(16_000, rng)
    observed, _ = np.histogram(phases, bins=16, range=(0.0, TWO_PI))
    assert observed.sum() == 16_000
    assert chisquare(observed).pvalue > 1e-3


def test_rotate_csi_identity():
    h_ul = 0.3 - 1.2j
    h_dl = rotate_csi(h_ul, 1.7, 0.2)
    assert abs(h_dl) == pytest.approx(abs(h_ul))
    assert rotate_csi(h_dl, 0.2, 1.7) == pytest.approx(h_ul)
