import math

import numpy as np
import pytest

from app.channel import (
    LEGS,
    cascaded_response,
    complex_gaussian,
    compute_effective_channels,
    dbm_to_watts,
    derive_link_budget,
    distances,
    effective_response,
    pathloss_db,
    pathloss_nlos,
    sample_cascade_powers,
    sample_realization,
)
from app.errors import ChannelError
from app.ris import RisPanel, random_static_phases, rotate_csi
from app.scenario import BudgetSpec, Position, default_slot_plan


def test_pathloss_formula():
    assert pathloss_db(1.0, 1.0) == pytest.approx(33.0)
    assert pathloss_db(10.0, 3.5) == pytest.approx(33.0 + 25.5 + 20 * math.log10(3.5))
    assert 0 < pathloss_nlos(20.0, 3.5) < pathloss_nlos(5.0, 3.5) <= 1.0


def test_pathloss_floor():
    with pytest.raises(ChannelError):
        pathloss_db(0.5, 3.5)
    with pytest.raises(ChannelError):
        pathloss_db(10.0, 0.0)


def test_derived_budget_from_geometry(reference):
    b = derive_link_budget(reference)
    assert b.sigma_d2 == pytest.approx(pathloss_nlos(20.0, 3.5))
    assert b.sigma_qa2 == pytest.approx(pathloss_nlos(math.sqrt(125.0), 3.5))
    assert b.sigma_qa2 == pytest.approx(b.sigma_ga2)
    assert b.sigma_gv2 == pytest.approx(pathloss_nlos(5.0, 3.5))
    assert b.tx_power == pytest.approx(dbm_to_watts(-30.0))
    assert b.tx_power == pytest.approx(1e-6)
    assert b.sigma_w2 == pytest.approx(1e-15)
    assert distances(reference)["aris-eve"] == pytest.approx(5.0)


def test_every_leg_is_priced_from_its_distance(reference):
    span = distances(reference)
    assert set(span) == {f"{a}-{b}" for a, b in LEGS.values()}
    b = derive_link_budget(reference)
    for name, (a, z) in LEGS.items():
        assert getattr(b, name) == pytest.approx(pathloss_nlos(span[f"{a}-{z}"], 3.5))


def test_direct_values_override_geometry(reference):
    cfg = reference.replace(budget=BudgetSpec(sigma_d2=0.5, tx_power=2.0))
    b = cfg.link_budget
    assert b.sigma_d2 == 0.5 and b.tx_power == 2.0
    assert b.effective_noise == pytest.approx(b.sigma_w2 / 2.0)
    assert b.sigma_qa2 == pytest.approx(derive_link_budget(reference).sigma_qa2)


def test_colocated_nodes_are_rejected(reference):
    with pytest.raises(ChannelError):
        derive_link_budget(reference.replace(eve=Position(x=10, y=-5)))


def test_complex_gaussian_moments(rng):
    h = complex_gaussian(rng, 2.0, 200_000)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(2.0, rel=0.02)
    assert np.var(h.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(h.imag) == pytest.approx(1.0, rel=0.02)
    assert isinstance(complex_gaussian(rng, 1.0), complex)


def test_cascaded_response_sum():
    phases = np.array([0.0, math.pi / 2, math.pi])
    q = np.array([1 + 0j, 2 + 0j, 1j])
    g = np.array([1 + 0j, 1j, 1 + 0j])
    expected = 1 + (1j * 2 * 1j) + (-1 * 1j)
    assert cascaded_response(phases, q, g) == pytest.approx(expected)
    with pytest.raises(ChannelError):
        cascaded_response(phases[:2], q, g)


def test_effective_channels_are_nonreciprocal(unit_budget, rng):
    real = sample_realization(unit_budget, 32, 16, rng)
    dris = RisPanel(m=32, static_phases=random_static_phases(32, rng), phi_dl=1.0, phi_ul=2.5)
    adv = RisPanel(m=16, static_phases=random_static_phases(16, rng))
    eff = compute_effective_channels(real, dris, adv)
    assert eff.h_a_dl == pytest.approx(rotate_csi(eff.h_a_ul, 1.0, 2.5), abs=1e-12)
    assert abs(eff.h_a_dl) == pytest.approx(abs(eff.h_a_ul))
    assert eff.h_e_u == pytest.approx(cascaded_response(adv.static_phases, real.g_v, real.g_e))
    assert eff.h_e_b == pytest.approx(cascaded_response(adv.static_phases, real.g_v, real.q_e))
    with pytest.raises(ChannelError):
        compute_effective_channels(real, adv, dris)


def test_effective_response_terms(unit_budget, rng):
    slot = default_slot_plan(22)
    real = sample_realization(unit_budget, 8, 8, rng)
    dris = RisPanel(m=8, static_phases=np.zeros(8), phi_dl=0.3, phi_ul=1.1)
    adv = RisPanel(m=8, static_phases=np.zeros(8))
    eff = compute_effective_channels(real, dris, adv)
    assert effective_response(real, dris, adv, 0, slot, False, False, "dl") == real.h_d
    dl = effective_response(real, dris, adv, 5, slot, True, True, "dl")
    assert dl == pytest.approx(real.h_d + eff.h_a_dl + eff.h_e_u)
    ul = effective_response(real, dris, adv, 15, slot, True, True, "ul")
    assert ul == pytest.approx(real.h_d + eff.h_a_ul + eff.h_e_b)
    with pytest.raises(ChannelError):
        effective_response(real, dris, adv, 22, slot, True, False, "dl")


def test_realization_rejects_empty_panel(unit_budget, rng):
    with pytest.raises(ChannelError):
        sample_realization(unit_budget, 0, 4, rng)


def test_cascade_mean_power(rng):
    m, draws = 256, 20_000
    powers = sample_cascade_powers(0.5, 2.0, m, draws, rng)
    assert powers.shape == (draws,)
    assert np.mean(powers) == pytest.approx(m * 0.5 * 2.0, rel=0.04)


def test_cascade_exponential_tail(rng):
    draws = 20_000
    powers = sample_cascade_powers(1.0, 1.0, 256, draws, rng, chunk_elements=1 << 16)
    p = math.exp(-1.0)
    assert abs(np.mean(powers > 256) - p) < 4 * math.sqrt(p * (1 - p) / draws)


def test_coherent_cascade_grows_quadratically(rng):
    m = 128
    coherent = np.mean(sample_cascade_powers(1.0, 1.0, m, 2_000, rng, coherent=True))
    # (sum |q||g|)^2 ~ (m pi/4)^2
    assert coherent == pytest.approx((m * math.pi / 4) ** 2, rel=0.05)
