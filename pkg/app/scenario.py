"""
Scenario configuration: geometry, link budget, slot structure, adversary timing
and run control.

All models are frozen pydantic models, so a loaded ScenarioConfig can be shared
between trial workers. The text format is flat `section.key = value` lines with
`#` comments, see load_scenario().
"""
import logging
import math
from fractions import Fraction
from typing import Dict, FrozenSet, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.errors import ConfigParseError, ConfigValidationError

logger = logging.getLogger(__name__)

# Pilot symbols per direction used by the efficiency factor C = eta*log2(1+rho)
PILOTS_NONRECIPROCAL = 3
PILOTS_RECIPROCAL = 4
PILOTS_DIRECT = 2

MIN_SLOT_SYMBOLS = 6
# Known symbols per direction checked after the CEP, capped by the data symbols
DEFAULT_VALIDATION_SYMBOLS = 4

GainMode = Literal["incoherent", "coherent"]
Constellation = Literal["qpsk", "qam16"]
AdversaryMode = Literal["off", "eavesdrop", "inject", "pollute_cep"]
LinkMode = Literal["nonreciprocal", "reciprocal"]
EtaRegime = Literal["reciprocal", "nonreciprocal_eavesdrop", "nonreciprocal_inject"]

_FROZEN = ConfigDict(frozen=True, extra="forbid")


class Position(BaseModel):
    model_config = _FROZEN

    x: float
    y: float
    z: float = 0.0

    @field_validator("x", "y", "z")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("coordinate must be finite")
        return value

    def distance_to(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    @classmethod
    def parse(cls, text: str) -> "Position":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) not in (2, 3) or not all(parts):
            raise ValueError(f"expected 'x,y[,z]', got {text!r}")
        names = ("x", "y", "z")
        return cls(**dict(zip(names, parts)))

    def to_text(self) -> str:
        return f"{self.x!r},{self.y!r},{self.z!r}"


class LinkBudget(BaseModel):
    """Linear per-leg power gains, noise power and transmit power"""
    model_config = _FROZEN

    sigma_d2: float
    sigma_qa2: float
    sigma_ga2: float
    sigma_qe2: float
    sigma_ge2: float
    sigma_gv2: float
    sigma_w2: float
    tx_power: float = 1.0

    @field_validator("*")
    @classmethod
    def _positive_finite(cls, value: float) -> float:
        if not (math.isfinite(value) and value > 0):
            raise ValueError("must be strictly positive and finite")
        return value

    @property
    def effective_noise(self) -> float:
        """Noise power seen by a unit-power transmitter"""
        return self.sigma_w2 / self.tx_power


class BudgetSpec(BaseModel):
    """
    How the LinkBudget is obtained: dBm levels for the geometry-derived budget,
    plus optional direct values that win key by key over the derived ones.
    """
    model_config = _FROZEN

    p_max_dbm: float = -30.0
    noise_dbm: float = -120.0
    sigma_d2: Optional[float] = None
    sigma_qa2: Optional[float] = None
    sigma_ga2: Optional[float] = None
    sigma_qe2: Optional[float] = None
    sigma_ge2: Optional[float] = None
    sigma_gv2: Optional[float] = None
    sigma_w2: Optional[float] = None
    tx_power: Optional[float] = None

    def overrides(self) -> Dict[str, float]:
        return {name: value for name, value in self.model_dump().items()
                if name in LinkBudget.model_fields and value is not None}


class SlotPlan(BaseModel):
    """Partition of the N-symbol TDD slot into data and pilot-stage subsets"""
    model_config = _FROZEN

    n_total: int = Field(ge=MIN_SLOT_SYMBOLS)
    dl_data: Tuple[int, ...]
    dl_p0: Tuple[int, ...]
    dl_p1: Tuple[int, ...]
    dl_p2: Tuple[int, ...]
    ul_data: Tuple[int, ...]
    ul_p0: Tuple[int, ...]
    ul_p1: Tuple[int, ...]
    k_subcarriers: int = Field(default=600, ge=1)

    @model_validator(mode="after")
    def _check_partition(self) -> "SlotPlan":
        subsets = self.subsets()
        for name in ("dl_p0", "dl_p1", "dl_p2", "ul_p0", "ul_p1"):
            if not subsets[name]:
                raise ValueError(f"pilot stage {name} is empty")
        seen: Dict[int, str] = {}
        for name, indices in subsets.items():
            if len(set(indices)) != len(indices):
                raise ValueError(f"{name} repeats a symbol index")
            for n in indices:
                if not 0 <= n < self.n_total:
                    raise ValueError(f"{name} index {n} outside 0..{self.n_total - 1}")
                if n in seen:
                    raise ValueError(f"symbol {n} is in both {seen[n]} and {name}")
                seen[n] = name
        if len(seen) != self.n_total:
            missing = sorted(set(range(self.n_total)) - set(seen))
            raise ValueError(f"symbols {missing} are in no subset")
        return self

    def subsets(self) -> Dict[str, Tuple[int, ...]]:
        return {
            "dl_data": self.dl_data, "dl_p0": self.dl_p0, "dl_p1": self.dl_p1, "dl_p2": self.dl_p2,
            "ul_data": self.ul_data, "ul_p0": self.ul_p0, "ul_p1": self.ul_p1,
        }

    @property
    def dl_symbols(self) -> FrozenSet[int]:
        return frozenset(self.dl_data + self.dl_p0 + self.dl_p1 + self.dl_p2)

    @property
    def ul_symbols(self) -> FrozenSet[int]:
        return frozenset(self.ul_data + self.ul_p0 + self.ul_p1)

    @property
    def p0_symbols(self) -> FrozenSet[int]:
        return frozenset(self.dl_p0 + self.ul_p0)

    @property
    def pilot_symbols(self) -> FrozenSet[int]:
        return frozenset(self.dl_p0 + self.dl_p1 + self.dl_p2 + self.ul_p0 + self.ul_p1)

    def direction(self, n: int) -> str:
        if n in self.dl_symbols:
            return "dl"
        if n in self.ul_symbols:
            return "ul"
        raise ValueError(f"symbol {n} outside slot of {self.n_total}")

    def stage_of(self, n: int) -> str:
        for name, indices in self.subsets().items():
            if n in indices:
                return name
        raise ValueError(f"symbol {n} outside slot of {self.n_total}")

    def pilot_counts(self) -> Tuple[int, int]:
        """(DL-symbol pilots, UL-symbol pilots)"""
        return (len(self.dl_p0) + len(self.dl_p1) + len(self.dl_p2),
                len(self.ul_p0) + len(self.ul_p1))


class AdversaryTiming(BaseModel):
    model_config = _FROZEN

    n_r: int = Field(default=11, ge=0)
    n_n: int = Field(default=22, ge=0)
    n_n_prime: int = Field(default=22, ge=0)
    activation_symbol: int = Field(default=0, ge=0)
    mode: AdversaryMode = "eavesdrop"

    @model_validator(mode="before")
    @classmethod
    def _default_timers(cls, data):
        # n_n doubles n_r and n_n_prime starts at n_n unless given
        if isinstance(data, dict):
            data = dict(data)
            if data.get("n_n") is None and data.get("n_r") is not None:
                data["n_n"] = 2 * int(_strict_int(data["n_r"], "n_r"))
            if data.get("n_n_prime") is None and data.get("n_n") is not None:
                data["n_n_prime"] = data["n_n"]
        return data

    @model_validator(mode="after")
    def _ordered(self) -> "AdversaryTiming":
        if self.n_n_prime < self.n_n:
            raise ValueError("n_n_prime must be >= n_n")
        return self


class ScenarioConfig(BaseModel):
    model_config = _FROZEN

    bs: Position = Position(x=0, y=0)
    ue: Position = Position(x=20, y=0)
    dris: Position = Position(x=10, y=5)
    aris: Position = Position(x=10, y=-5)
    eve: Position = Position(x=10, y=-10)
    carrier_ghz: float = Field(default=3.5, gt=0)
    m_a: int = Field(default=2000, ge=1)
    m_e: int = Field(default=1000, ge=1)
    phi_dl: Optional[float] = None
    phi_ul: Optional[float] = None
    dris_active_from: int = Field(default=0, ge=0)
    budget: BudgetSpec = BudgetSpec()
    slot: SlotPlan = Field(default_factory=lambda: default_slot_plan(22))
    adversary: AdversaryTiming = AdversaryTiming()
    validation_symbols: Optional[int] = Field(default=None, ge=1)
    cep_threshold: float = Field(default=0.1, ge=0, le=1)
    gain_tolerance: float = Field(default=0.02, gt=0)
    max_backoff: int = Field(default=8, ge=1)
    gain_mode: GainMode = "incoherent"
    constellation: Constellation = "qpsk"
    link_mode: LinkMode = "nonreciprocal"
    perfect_csi: bool = False
    noiseless: bool = False
    seed: int = Field(default=1, ge=0, lt=2 ** 64)
    trials: int = Field(default=10_000, ge=0)
    workers: int = Field(default=1, ge=1)
    eve_side: Literal["ue", "bs"] = "ue"
    literal_recip_fake: bool = False

    @model_validator(mode="after")
    def _fits_slot(self) -> "ScenarioConfig":
        n = self.slot.n_total
        if self.validation_symbols is not None and self.validation_symbols > self.data_per_direction:
            raise ConfigValidationError(
                "cep.validation_symbols",
                f"{self.validation_symbols} exceeds the {self.data_per_direction} data symbols of a direction",
            )
        if self.dris_active_from >= n:
            raise ConfigValidationError("ris.dris_active_from", f"symbol {self.dris_active_from} is outside the slot of {n}")
        if self.adversary.activation_symbol >= n:
            raise ConfigValidationError(
                "adv.activation_symbol", f"symbol {self.adversary.activation_symbol} is outside the slot of {n}"
            )
        return self

    @property
    def data_per_direction(self) -> int:
        return min(len(self.slot.dl_data), len(self.slot.ul_data))

    @property
    def validation_count(self) -> int:
        """Validation symbols per direction; unset means the default capped by the slot"""
        if self.validation_symbols is not None:
            return self.validation_symbols
        return min(DEFAULT_VALIDATION_SYMBOLS, self.data_per_direction)

    @property
    def link_budget(self) -> LinkBudget:
        from app.channel import derive_link_budget
        return derive_link_budget(self)

    def replace(self, **updates) -> "ScenarioConfig":
        """Validated copy with top-level fields replaced"""
        data = self.model_dump()
        for key, value in updates.items():
            data[key] = value.model_dump() if isinstance(value, BaseModel) else value
        return _validate(ScenarioConfig, data)


def _strict_int(value, name: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"{name} must be an integer symbol count")
    if isinstance(value, str) and not value.strip().lstrip("+-").isdigit():
        raise ValueError(f"{name} must be an integer symbol count")
    return int(value)


def default_slot_plan(n_total: int, k_subcarriers: int = 600) -> SlotPlan:
    """
    Pilot stages first in each direction (DL p0, p1, p2 then UL p0, p1), one
    symbol each; the remaining symbols are data, DL taking the larger half.
    """
    n_total = _strict_int(n_total, "n_total")
    if n_total < MIN_SLOT_SYMBOLS:
        raise ConfigValidationError("slot.n_total", f"needs at least {MIN_SLOT_SYMBOLS} symbols, got {n_total}")
    n_data = n_total - 5
    n_dl_data = (n_data + 1) // 2
    dl_end = 3 + n_dl_data
    return SlotPlan(
        n_total=n_total,
        dl_p0=(0,), dl_p1=(1,), dl_p2=(2,),
        dl_data=tuple(range(3, dl_end)),
        ul_p0=(dl_end,), ul_p1=(dl_end + 1,),
        ul_data=tuple(range(dl_end + 2, n_total)),
        k_subcarriers=k_subcarriers,
    )


def efficiency(n_pilots: int, n_total: int) -> Fraction:
    """eta = 1 - N_p / N, exact"""
    return 1 - Fraction(n_pilots, n_total)


def eta_s(timing: AdversaryTiming, n_total: int, regime: EtaRegime) -> float:
    """Fraction of the slot during which Eve holds the current secrets"""
    timers = {
        "reciprocal": ("adv.n_r", timing.n_r),
        "nonreciprocal_eavesdrop": ("adv.n_n", timing.n_n),
        "nonreciprocal_inject": ("adv.n_n_prime", timing.n_n_prime),
    }
    if regime not in timers:
        raise ConfigValidationError("regime", f"unknown regime {regime!r}")
    key, timer = timers[regime]
    if isinstance(timer, bool) or not isinstance(timer, int):
        raise ConfigValidationError(key, "timers are integer symbol counts")
    if timer > n_total:
        logger.warning(f"{key}={timer} exceeds the slot length {n_total}; eta_s clamped to 0")
        return 0.0
    return float(1 - Fraction(timer, n_total))


# --- text format -----------------------------------------------------------

_POSITION_KEYS = {"geom.bs": "bs", "geom.ue": "ue", "geom.dris": "dris", "geom.aris": "aris", "geom.eve": "eve"}
_SCALAR_KEYS = {
    "geom.carrier_ghz": "carrier_ghz",
    "ris.m_a": "m_a",
    "ris.m_e": "m_e",
    "ris.phi_dl": "phi_dl",
    "ris.phi_ul": "phi_ul",
    "ris.dris_active_from": "dris_active_from",
    "cep.validation_symbols": "validation_symbols",
    "cep.threshold": "cep_threshold",
    "cep.gain_tolerance": "gain_tolerance",
    "cep.max_backoff": "max_backoff",
    "run.seed": "seed",
    "run.trials": "trials",
    "run.workers": "workers",
    "run.gain_mode": "gain_mode",
    "run.constellation": "constellation",
    "run.link_mode": "link_mode",
    "run.perfect_csi": "perfect_csi",
    "run.noiseless": "noiseless",
    "analysis.eve_side": "eve_side",
    "analysis.literal_recip_fake": "literal_recip_fake",
}
_ADV_KEYS = ("n_r", "n_n", "n_n_prime", "activation_symbol", "mode")
_SLOT_LISTS = ("dl_data", "dl_p0", "dl_p1", "dl_p2", "ul_data", "ul_p0", "ul_p1")


def _parse_lines(source: str) -> Dict[str, Tuple[int, str]]:
    entries: Dict[str, Tuple[int, str]] = {}
    for line_no, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'section.key = value'", line_no, raw)
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key or not value:
            raise ConfigParseError("expected 'section.key = value'", line_no, raw)
        if key in entries:
            raise ConfigParseError(f"duplicate key {key}", line_no, raw)
        entries[key] = (line_no, value)
    return entries


def _validate(model, data):
    try:
        return model.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        cause = error.get("ctx", {}).get("error")
        if isinstance(cause, ConfigValidationError):
            raise cause from e
        raise ConfigValidationError(_dotted_key(error["loc"]), error["msg"]) from e


def _dotted_key(loc) -> str:
    parts = [str(p) for p in loc]
    if not parts:
        return "scenario"
    head = parts[0]
    if head in _POSITION_KEYS.values():
        return f"geom.{head}"
    for key, name in _SCALAR_KEYS.items():
        if name == head:
            return key
    if head == "slot":
        return "slot." + (parts[1] if len(parts) > 1 else "n_total")
    if head == "adversary":
        return "adv." + (parts[1] if len(parts) > 1 else "n_r")
    if head == "budget":
        return "budget." + (parts[1] if len(parts) > 1 else "p_max_dbm")
    return ".".join(parts)


def load_scenario(source: str) -> ScenarioConfig:
    """Parse and validate scenario text; unspecified keys take the reference defaults"""
    entries = _parse_lines(source)
    data: Dict[str, object] = {}
    adversary: Dict[str, object] = {}
    budget: Dict[str, object] = {}
    slot_lists: Dict[str, List[str]] = {}
    slot_scalars: Dict[str, str] = {}

    for key, (line_no, value) in entries.items():
        section, name = key.split(".", 1)
        if key in _POSITION_KEYS:
            try:
                data[_POSITION_KEYS[key]] = Position.parse(value)
            except (ValueError, ValidationError) as e:
                raise ConfigParseError(f"{key}: {e}", line_no, value) from None
        elif key in _SCALAR_KEYS:
            data[_SCALAR_KEYS[key]] = value
        elif section == "adv" and name in _ADV_KEYS:
            adversary[name] = value
        elif section == "budget" and name in BudgetSpec.model_fields:
            budget[name] = value
        elif section == "slot" and name in _SLOT_LISTS:
            slot_lists[name] = [v.strip() for v in value.split(",") if v.strip()]
        elif section == "slot" and name in ("n_total", "k_subcarriers"):
            slot_scalars[name] = value
        else:
            raise ConfigParseError(f"unknown key {key}", line_no, key)

    if "n_r" in adversary:
        try:
            _strict_int(adversary["n_r"], "n_r")
        except ValueError as e:
            raise ConfigValidationError("adv.n_r", str(e)) from None
    data["adversary"] = _validate(AdversaryTiming, adversary)
    data["budget"] = _validate(BudgetSpec, budget)
    data["slot"] = _build_slot(slot_scalars, slot_lists)
    return _validate(ScenarioConfig, data)


def _build_slot(scalars: Dict[str, str], lists: Dict[str, List[str]]) -> SlotPlan:
    try:
        n_total = _strict_int(scalars.get("n_total", "22"), "n_total")
        k = _strict_int(scalars.get("k_subcarriers", "600"), "k_subcarriers")
    except ValueError as e:
        raise ConfigValidationError("slot.n_total", str(e)) from None
    if not lists:
        plan = default_slot_plan(n_total)
        return plan if k == plan.k_subcarriers else _validate(SlotPlan, {**plan.model_dump(), "k_subcarriers": k})
    missing = [name for name in _SLOT_LISTS if name not in lists]
    if missing:
        raise ConfigValidationError(f"slot.{missing[0]}", "explicit slot subsets must all be given")
    return _validate(SlotPlan, {"n_total": n_total, "k_subcarriers": k, **lists})


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Canonical text form; load_scenario(serialize_scenario(cfg)) == cfg"""
    lines = []
    for key, name in _POSITION_KEYS.items():
        lines.append(f"{key} = {getattr(cfg, name).to_text()}")
    for key, name in _SCALAR_KEYS.items():
        value = getattr(cfg, name)
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    for name, value in cfg.budget.model_dump().items():
        if value is not None:
            lines.append(f"budget.{name} = {float(value)!r}")
    lines.append(f"slot.n_total = {cfg.slot.n_total}")
    lines.append(f"slot.k_subcarriers = {cfg.slot.k_subcarriers}")
    for name, indices in cfg.slot.subsets().items():
        if indices:
            lines.append(f"slot.{name} = {','.join(str(i) for i in indices)}")
    for name in _ADV_KEYS:
        lines.append(f"adv.{name} = {getattr(cfg.adversary, name)}")
    return "\n".join(lines) + "\n"
