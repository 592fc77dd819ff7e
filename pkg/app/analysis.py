"""
Closed-form metrics: achievable rates, secrecy rates for the direct,
reciprocal and non-reciprocal regimes, feasibility of the slot length, and the
probability that an injected fake symbol is decoded.

All SNRs use the configured transmit power, rho = P * gain / sigma_w^2, which
is the unit-power form with noise sigma_w^2 / P.
"""
import logging
import math
from typing import Literal, NamedTuple

from pydantic import BaseModel, ConfigDict, Field

from app.scenario import LinkBudget, LinkMode

logger = logging.getLogger(__name__)

_FROZEN = ConfigDict(frozen=True)


class RateInputs(BaseModel):
    model_config = _FROZEN

    eta: float = Field(gt=0, le=1)
    rho: float = Field(ge=0)


class SecrecyInputs(BaseModel):
    model_config = _FROZEN

    rho_d: float = Field(ge=0)
    rho_a: float = Field(ge=0)
    rho_e: float = Field(ge=0)
    eta: float = Field(gt=0, le=1)
    n_total: int = Field(gt=0)
    n_timer: int = Field(ge=0)
    m_a: int = Field(ge=1)
    m_e: int = Field(ge=1)
    budget: LinkBudget
    eve_side: Literal["ue", "bs"] = "ue"


class FakeProbInputs(BaseModel):
    model_config = _FROZEN

    m_a: int = Field(ge=0)
    m_e: int = Field(ge=1)
    budget: LinkBudget
    eve_side: Literal["ue", "bs"] = "ue"
    n_total: int = Field(gt=0)
    n_n_prime: int = Field(ge=0)
    link_mode: LinkMode = "nonreciprocal"
    literal_recip_fake: bool = False


class SnrSet(NamedTuple):
    rho_d: float
    rho_eb: float
    rho_eu: float
    rho_a: float


class ApproxResult(NamedTuple):
    quadratic: float    # high-SNR form with an M_a^2 numerator
    linear: float       # the same form with rho_a linear in M_a
    exact: float        # asr_timed on the full rates


class FakeProb(NamedTuple):
    p2: float
    p_r: float


def achievable_rate(inputs: RateInputs) -> float:
    """C = eta * log2(1 + rho)"""
    return inputs.eta * math.log2(1.0 + inputs.rho)


def snr_closed_form(budget: LinkBudget, m_a: int, m_e: int) -> SnrSet:
    """Mean SNRs of the direct, Eve-BS, Eve-UE and D-RIS links"""
    scale = budget.tx_power / budget.sigma_w2
    return SnrSet(
        rho_d=scale * budget.sigma_d2,
        rho_eb=scale * m_e * budget.sigma_qe2 * budget.sigma_gv2,
        rho_eu=scale * m_e * budget.sigma_ge2 * budget.sigma_gv2,
        rho_a=scale * m_a * budget.sigma_qa2 * budget.sigma_ga2,
    )


def eve_sigma2(budget: LinkBudget, eve_side: str) -> float:
    """sigma_e^2: the UE-side leg sigma_ge^2 or the BS-side leg sigma_qe^2"""
    return budget.sigma_ge2 if eve_side == "ue" else budget.sigma_qe2


def asr_basic(c_main: float, c_eve: float, rho_main: float, rho_eve: float) -> float:
    if rho_main > rho_eve:
        return c_main - c_eve
    return 0.0


def exposure(n_timer: int, n_total: int) -> float:
    """1 - n_timer/N clamped to [0, 1]: the slot fraction Eve holds the secrets"""
    if n_total <= 0:
        raise ValueError(f"n_total must be > 0, got {n_total}")
    return min(1.0, max(0.0, 1.0 - n_timer / n_total))


def asr_timed(c_main: float, c_eve: float, n_timer: int, n_total: int) -> float:
    """E = C_main - (1 - n_timer/N) C_eve; negative when Eve out-rates the main link"""
    return c_main - exposure(n_timer, n_total) * c_eve


def asr_approx(inputs: SecrecyInputs) -> ApproxResult:
    b = inputs.budget
    noise = b.sigma_w2 / b.tx_power
    coef = 1.0 - inputs.n_timer / inputs.n_total
    eve_gain = inputs.m_e * eve_sigma2(b, inputs.eve_side) * b.sigma_gv2
    denominator = eve_gain ** coef * noise ** (inputs.n_timer / inputs.n_total)
    cascade = b.sigma_qa2 * b.sigma_ga2
    quadratic = inputs.eta * math.log2(inputs.m_a ** 2 * cascade / denominator)
    linear = inputs.eta * math.log2(inputs.m_a * cascade / denominator)
    c_main = achievable_rate(RateInputs(eta=inputs.eta, rho=inputs.rho_a))
    c_eve = achievable_rate(RateInputs(eta=inputs.eta, rho=inputs.rho_e))
    exact = asr_timed(c_main, c_eve, inputs.n_timer, inputs.n_total)
    return ApproxResult(quadratic=quadratic, linear=linear, exact=exact)


def feasibility(n_p: int, n_total: int, n_timer: int) -> bool:
    """N_p < N <= N_n"""
    return n_p < n_total <= n_timer


def fake_threshold(budget: LinkBudget, m_a: int) -> float:
    """
    beta = M_a sigma_qa^2 sigma_ga^2 + sigma_d^2 + sigma_w^2 / P

    All terms are linear powers on the unit-transmit-power scale: the leg
    variances are gains and the noise is divided by the transmit power in
    watts. With P = 1e-6 W and sigma_w^2 = 1e-15 W the noise term is 1e-9.
    """
    return m_a * budget.sigma_qa2 * budget.sigma_ga2 + budget.sigma_d2 + budget.sigma_w2 / budget.tx_power


def fake_prob(inputs: FakeProbInputs) -> FakeProb:
    """
    P_2 = exp(-beta / (M_e sigma_e^2 sigma_gv^2)); the non-reciprocal P_r
    scales it by the exposure 1 - N'_n/N. A reciprocal link exposes the whole
    slot, P_r = P_2, unless the literal 1 - P_2 reading is requested.
    """
    b = inputs.budget
    beta = fake_threshold(b, inputs.m_a)
    p2 = math.exp(-beta / (inputs.m_e * eve_sigma2(b, inputs.eve_side) * b.sigma_gv2))
    if inputs.link_mode == "reciprocal":
        return FakeProb(p2=p2, p_r=1.0 - p2 if inputs.literal_recip_fake else p2)
    return FakeProb(p2=p2, p_r=exposure(inputs.n_n_prime, inputs.n_total) * p2)
