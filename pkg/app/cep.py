"""
Channel estimation procedure for the non-reciprocal link.

Stages: p0 with the D-RIS off, p1 with the normal dynamic phase and, on DL
symbols, p2 with the flipped (UL) phase. The UE recovers both D-RIS channels
from the stage differences; the BS recovers the UL channel and rotates it to
obtain the DL one, so no CSI is fed back.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Literal, Mapping, Optional, Sequence

import numpy as np

from app.errors import EstimationError
from app.phy import ConstellationSymbol, ReceivedSample
from app.ris import RisPanel, rotate_csi
from app.scenario import SlotPlan

logger = logging.getLogger(__name__)

ScenarioTag = Literal["opt1", "opt2", "polluted", "undetermined"]
Side = Literal["ue", "bs"]

# Unit-power pilot, the first QPSK point
PILOT = ConstellationSymbol(value=complex((1 + 1j) / np.sqrt(2.0)), index=0)

# Estimation-noise standard deviations tolerated by the gain check
GAIN_NOISE_SIGMAS = 10.0


@dataclass(frozen=True)
class StageEstimates:
    side: Side
    p0: complex
    p1: complex
    p2: Optional[complex] = None
    counts: Optional[Mapping[str, int]] = None


@dataclass(frozen=True)
class CsiResult:
    h_a_dl_hat: Optional[complex]
    h_a_ul_hat: Optional[complex]
    h_d_hat: complex
    scenario_tag: ScenarioTag
    h_e_hat: Optional[complex] = None
    polluted: bool = False
    trusted: bool = True
    side: Side = "ue"


def ls_estimate(y: complex, pilot: ConstellationSymbol = PILOT) -> complex:
    if abs(pilot.value) == 0:
        raise EstimationError("pilot symbol has zero amplitude")
    return complex(y / pilot.value)


def stage_indices(slot: SlotPlan, side: Side) -> Dict[str, tuple]:
    """Pilot stages observed by a side: the UE sees DL pilots, the BS UL pilots"""
    if side == "ue":
        return {"p0": slot.dl_p0, "p1": slot.dl_p1, "p2": slot.dl_p2}
    if side == "bs":
        return {"p0": slot.ul_p0, "p1": slot.ul_p1}
    raise EstimationError(f"unknown side {side!r}")


def collect_stages(received: Sequence[ReceivedSample], slot: SlotPlan, side: Side,
                   pilot: ConstellationSymbol = PILOT) -> StageEstimates:
    """Per-stage mean of the per-symbol LS estimates"""
    by_index = {sample.n: sample for sample in received}
    means = {}
    counts = {}
    for stage, indices in stage_indices(slot, side).items():
        estimates = []
        for n in indices:
            if n not in by_index:
                raise EstimationError(f"no received pilot at symbol {n} ({side} stage {stage})")
            estimates.append(ls_estimate(by_index[n].y, pilot))
        means[stage] = complex(np.mean(estimates))
        counts[stage] = len(estimates)
    return StageEstimates(side=side, p0=means["p0"], p1=means["p1"], p2=means.get("p2"), counts=counts)


def recover_csi(stages: StageEstimates, scenario_tag: ScenarioTag,
                direct_hint: Optional[complex] = None) -> CsiResult:
    """
    Linear recovery from the stage estimates.

    opt1 (Eve absent from all stages) and opt2 (Eve present in all stages)
    recover h_a from differences against p0; the common terms cancel. Under
    pollution the differences carry Eve's term and the result is untrusted.
    `direct_hint` is an earlier direct-only estimate; in opt2 it separates
    h_e from the p0 estimate.
    """
    if stages.p0 is None or stages.p1 is None:
        raise EstimationError("stages p0 and p1 are required")
    if stages.side == "ue" and stages.p2 is None:
        raise EstimationError("UE-side recovery needs stage p2")
    h_a_ul = stages.p1 - stages.p0 if stages.side == "bs" else stages.p2 - stages.p0
    h_a_dl = stages.p1 - stages.p0 if stages.side == "ue" else None
    h_e_hat = None
    if scenario_tag == "opt2" and direct_hint is not None:
        h_e_hat = stages.p0 - direct_hint
    polluted = scenario_tag == "polluted"
    result = CsiResult(
        h_a_dl_hat=h_a_dl,
        h_a_ul_hat=h_a_ul,
        h_d_hat=stages.p0,
        h_e_hat=h_e_hat,
        scenario_tag=scenario_tag,
        polluted=polluted,
        trusted=scenario_tag in ("opt1", "opt2"),
        side=stages.side,
    )
    if not result.trusted:
        logger.debug(f"{stages.side} CSI recovered under tag {scenario_tag}; estimates untrusted")
    return result


def bs_derive_dl(result: CsiResult, panel: RisPanel) -> CsiResult:
    """h_a^DL from the BS's own UL estimate and the panel's dynamic phases"""
    if result.h_a_ul_hat is None:
        raise EstimationError("BS-side DL derivation needs a UL estimate")
    return replace(result, h_a_dl_hat=rotate_csi(result.h_a_ul_hat, panel.phi_dl, panel.phi_ul))


def infer_scenario_tag(eve_in_stage: Mapping[str, bool]) -> ScenarioTag:
    """
    Tag from Eve's presence in each pilot stage: absent everywhere is opt1,
    present everywhere is opt2, present in the h_a stages but not p0 is
    polluted.
    """
    present = list(eve_in_stage.values())
    if not any(present):
        return "opt1"
    if all(present):
        return "opt2"
    carriers = [v for k, v in eve_in_stage.items() if k != "p0"]
    if not eve_in_stage.get("p0", False) and all(carriers):
        return "polluted"
    return "undetermined"


def gain_deviation(ratios: Sequence[complex]) -> float:
    """
    |mean(r) - 1| over the validation symbols of one direction, where r is the
    equalized sample divided by |expected gain| times the known symbol. A link
    whose CSI matches at both ends gives r = 1; precoders built from a polluted
    estimate do not.
    """
    if len(ratios) == 0:
        raise ValueError("gain deviation needs at least one validation symbol")
    return abs(complex(np.mean(ratios)) - 1.0)


def gain_allowance(tolerance: float, noise_var: float, h_a_hat: complex, expected: complex) -> float:
    """
    Largest gain deviation accepted as estimation noise: the base tolerance
    plus GAIN_NOISE_SIGMAS relative standard deviations of the receiver's
    D-RIS estimate and of one equalized data symbol.
    """
    if h_a_hat == 0 or expected == 0:
        return math.inf
    spread = math.sqrt(noise_var) * (1.0 / abs(h_a_hat) + 1.0 / abs(expected))
    return tolerance + GAIN_NOISE_SIGMAS * spread


def detect_pollution(validation_ser: float, threshold: float = 0.1,
                     deviation: float = 0.0, allowance: float = math.inf) -> bool:
    """
    Flag the slot when the validation SER exceeds the threshold or the
    validation gain deviates from what the receiver's own CSI predicts.
    """
    if not 0.0 <= validation_ser <= 1.0:
        raise ValueError(f"validation SER must lie in [0, 1], got {validation_ser}")
    return validation_ser > threshold or deviation > allowance


def backoff_and_restart(rng: np.random.Generator, max_backoff: int) -> int:
    """Number of slots to stay muted before re-running the CEP, uniform on [1, max_backoff]"""
    if max_backoff < 1:
        raise ValueError(f"max_backoff must be >= 1, got {max_backoff}")
    return int(rng.integers(1, max_backoff, endpoint=True))
