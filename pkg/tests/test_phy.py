import math

import numpy as np
import pytest
from scipy.stats import norm

from app.channel import complex_gaussian
from app.errors import ChannelError
from app.phy import (
    BITS_PER_SYMBOL,
    ConstellationSymbol,
    ReceivedSample,
    build_polluted_precoders,
    build_precoders,
    combine,
    constellation_points,
    decide,
    decide_indices,
    demap_symbols,
    equalize,
    expected_gain,
    map_symbols,
    symbol_error_rate,
    transmit,
)


@pytest.mark.parametrize("kind", ["qpsk", "qam16"])
def test_unit_average_power(kind):
    points = constellation_points(kind)
    assert len(points) == 2 ** BITS_PER_SYMBOL[kind]
    assert np.mean(np.abs(points) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["qpsk", "qam16"])
def test_gray_neighbours_differ_in_one_bit(kind):
    points = constellation_points(kind)
    distances = np.abs(points[:, None] - points[None, :])
    nearest = np.min(distances + np.eye(len(points)) * 10, axis=1)
    for i in range(len(points)):
        for j in range(len(points)):
            if i != j and math.isclose(distances[i, j], nearest[i]):
                assert bin(i ^ j).count("1") == 1


def test_qpsk_labels():
    points = constellation_points("qpsk")
    assert points[0] == pytest.approx((1 + 1j) / math.sqrt(2))
    assert points[3] == pytest.approx((-1 - 1j) / math.sqrt(2))
    assert constellation_points("qam16")[0] == pytest.approx((-3 - 3j) / math.sqrt(10))


def test_map_and_demap():
    bits = [0, 0, 1, 1, 1, 0]
    symbols = map_symbols(bits)
    assert [s.index for s in symbols] == [0, 3, 2]
    assert demap_symbols(symbols) == bits
    assert [s.index for s in map_symbols([1, 0, 1, 1], "qam16")] == [11]
    with pytest.raises(ValueError):
        map_symbols([0, 1, 1])
    with pytest.raises(ValueError):
        map_symbols([0, 1], "bpsk")


def test_precoder_combiner_identity():
    h_dl = 0.7 * np.exp(1j * 2.1)
    h_ul = 0.7 * np.exp(1j * -0.4)
    pair = build_precoders(h_dl, h_ul)
    assert pair.theta_dl == pytest.approx(2.1)
    assert pair.theta_ul == pytest.approx(-0.4)
    # UE: exp(-j theta_ul) h_dl v_b and BS: exp(-j theta_dl) h_ul v_u are both |h|^2
    assert pair.combiner_ue * h_dl * pair.v_b == pytest.approx(abs(h_dl) ** 2)
    assert pair.combiner_bs * h_ul * pair.v_u == pytest.approx(abs(h_ul) ** 2)


def test_precoder_needs_nonzero_channel():
    with pytest.raises(ChannelError, match="UL"):
        build_precoders(1 + 1j, 0j)
    with pytest.raises(ChannelError, match="polluted"):
        build_polluted_precoders(1j, 1 + 0j, -1j, 0j)


def test_polluted_precoders_use_composites():
    pair = build_polluted_precoders(1 + 1j, 2 - 1j, 0.5j, -0.5 + 0j)
    clean = build_precoders(1 + 1.5j, 1.5 - 1j)
    assert pair == clean


def test_transmit_noiseless_and_guards(rng):
    symbol = ConstellationSymbol.from_index(2)
    sample = transmit(symbol, 2j, 0.5 + 0j, 0.1 + 0j, 0.0, n=4)
    assert sample.y == pytest.approx(0.5 * 2j * symbol.value + 0.1)
    assert sample.n == 4 and sample.z is None
    with pytest.raises(ValueError):
        transmit(symbol, 1, 1, 0, 0.1)
    with pytest.raises(ValueError):
        transmit(symbol, 1, 1, 0, -1.0, rng)


def test_combine_rotates():
    z = combine(ReceivedSample(y=1j, n=3), math.pi / 2)
    assert z.z == pytest.approx(1 + 0j)
    assert z.y == 1j and z.n == 3


def test_decision_ties_go_to_lowest_index():
    assert decide(0j, 1.0).index == 0
    assert decide_indices(np.array([0j]), 1.0, "qam16")[0] == 5
    with pytest.raises(ValueError):
        decide_indices(np.array([1 + 1j]), 0.0)


def test_decision_uses_reference_gain():
    points = constellation_points("qam16")
    z = 5.0 * points
    assert np.array_equal(decide_indices(z, 5.0, "qam16"), np.arange(16))


def test_symbol_error_rate():
    sent = [ConstellationSymbol.from_index(i) for i in (0, 1, 2, 3)]
    assert symbol_error_rate(sent, [0, 1, 2, 0]) == 0.25
    with pytest.raises(ValueError):
        symbol_error_rate(sent, [0, 1])
    with pytest.raises(ValueError):
        symbol_error_rate([], [])


def test_qpsk_awgn_ser_matches_theory(rng):
    n, noise = 200_000, 0.1
    points = constellation_points("qpsk")
    sent = rng.integers(0, 4, n)
    z = points[sent] + complex_gaussian(rng, noise, n)
    ser = np.mean(decide_indices(z, 1.0) != sent)
    p = norm.sf(math.sqrt(1.0 / noise))
    assert ser == pytest.approx(2 * p - p * p, rel=0.2)


def test_expected_gain_and_equalize():
    h_dl = 0.2 - 0.9j
    pair = build_precoders(h_dl, h_dl * np.exp(0.8j))
    gain = expected_gain(pair.theta_ul, 0j, h_dl, pair.v_b)
    assert gain == pytest.approx(abs(h_dl) ** 2)
    rotated, magnitude = equalize(2j * gain, 1j * gain)
    assert rotated == pytest.approx(2 * abs(gain) + 0j)
    assert magnitude == pytest.approx(abs(gain))
    with pytest.raises(ChannelError):
        equalize(1 + 0j, 0j)
