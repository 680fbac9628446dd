"""Parameter types, validation, presets and config loading.

All internal durations are in idle-slot units. Microsecond values only
appear at the I/O boundary (config files, presets, CLI flags) and are
converted with :func:`normalize_us`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml


class ValidationError(ValueError):
    """Raised when a parameter bundle violates one of its invariants."""


@dataclass(frozen=True)
class NetworkParams:
    n_primary: int = 6
    n_secondary: int = 15
    w_primary: int = 32
    w_secondary: int = 32
    m_primary: int = 4
    m_secondary: int = 4
    lambda_primary: float = 1.0
    lambda_secondary: float = 1.0

    def window(self, stage: int, secondary: bool = False) -> int:
        """Contention window of back-off ``stage``: W_i = 2**i * W_0."""
        w0 = self.w_secondary if secondary else self.w_primary
        return (2 ** stage) * w0

    @property
    def saturated(self) -> bool:
        return self.lambda_primary == 1.0 and self.lambda_secondary == 1.0


SUCCESS_CREDITS = ("airtime", "slot")


@dataclass(frozen=True)
class TimingParams:
    """Durations in idle-slot units.

    ``success_credit`` selects what a successful transmission contributes to
    throughput: ``"airtime"`` credits the packet duration only, ``"slot"``
    credits the whole success slot (packet plus DIFS).
    """

    tp_suc: float
    ts_suc: float
    tp_col: float
    ts_col: float
    difs: float
    eifs: float
    scan_t: float
    period_T: float
    idle_slot_us: float = 20.0
    success_credit: str = "airtime"

    @property
    def success_slot_p(self) -> float:
        return self.tp_suc + self.difs

    @property
    def success_slot_s(self) -> float:
        return self.ts_suc + self.difs

    @property
    def collision_slot_p(self) -> float:
        return self.tp_col + self.eifs

    @property
    def collision_slot_s(self) -> float:
        return self.ts_col + self.eifs

    @property
    def collision_slot_ps(self) -> float:
        return max(self.tp_col, self.ts_col) + self.eifs

    @property
    def credit_p(self) -> float:
        return self.success_slot_p if self.success_credit == "slot" else self.tp_suc

    @property
    def credit_s(self) -> float:
        return self.success_slot_s if self.success_credit == "slot" else self.ts_suc

    def to_us(self, name: str) -> float:
        return denormalize(getattr(self, name), self.idle_slot_us)


class Scheme(str, enum.Enum):
    SENSING = "sensing"
    SILENT = "silent"
    COEXIST = "coexist"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.SENSING
    beta: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.scheme is Scheme.COEXIST and self.beta != 1.0:
            raise ValidationError("coexist scheme requires beta = 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")

    @classmethod
    def silent_from_timing(cls, timing: TimingParams) -> "SchemeConfig":
        """Silent-period scheme with beta = (T - t) / T."""
        return cls(Scheme.SILENT, (timing.period_T - timing.scan_t) / timing.period_T)


def normalize_us(duration_us: float, idle_slot_us: float) -> float:
    if idle_slot_us <= 0:
        raise ValidationError(f"idle_slot_us must be > 0, got {idle_slot_us}")
    return duration_us / idle_slot_us


def denormalize(duration_slots: float, idle_slot_us: float) -> float:
    if idle_slot_us <= 0:
        raise ValidationError(f"idle_slot_us must be > 0, got {idle_slot_us}")
    return duration_slots * idle_slot_us


def validate(params: NetworkParams, timing: TimingParams) -> tuple[NetworkParams, TimingParams]:
    """Check every invariant and return the bundle unchanged.

    The first violated invariant is reported by name in the raised
    :class:`ValidationError`.
    """
    _int_at_least(params.n_primary, 1, "n_primary")
    _int_at_least(params.n_secondary, 0, "n_secondary")
    _int_at_least(params.w_primary, 1, "w_primary")
    _int_at_least(params.w_secondary, 1, "w_secondary")
    _int_at_least(params.m_primary, 0, "m_primary")
    _int_at_least(params.m_secondary, 0, "m_secondary")
    for name in ("lambda_primary", "lambda_secondary"):
        lam = getattr(params, name)
        if not 0.0 < lam <= 1.0:
            raise ValidationError(f"{name} must lie in (0, 1], got {lam}")

    for name in ("tp_suc", "ts_suc", "tp_col", "ts_col", "difs", "eifs", "scan_t"):
        if getattr(timing, name) < 0:
            raise ValidationError(f"{name} must be >= 0, got {getattr(timing, name)}")
    if timing.idle_slot_us <= 0:
        raise ValidationError(f"idle_slot_us must be > 0, got {timing.idle_slot_us}")
    if timing.period_T <= timing.scan_t:
        raise ValidationError(
            f"T must exceed t: period_T={timing.period_T} <= scan_t={timing.scan_t}"
        )
    if timing.success_credit not in SUCCESS_CREDITS:
        raise ValidationError(
            f"success_credit must be one of {SUCCESS_CREDITS}, got {timing.success_credit!r}"
        )
    return params, timing


def _int_at_least(value: Any, lo: int, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < lo:
        raise ValidationError(f"{name} must be >= {lo}, got {value}")


# --------------------------------------------------------------------------
# presets and flat config files

NETWORK_KEYS = tuple(f.name for f in fields(NetworkParams))
US_KEYS = ("tp_suc", "ts_suc", "tp_col", "ts_col", "difs", "eifs", "scan_t", "period_T")
SCHEME_KEYS = ("scheme", "beta")
SIM_KEYS = ("run_length", "seed", "warmup", "count_partial")
CONFIG_KEYS = (
    NETWORK_KEYS
    + tuple(f"{k}_us" for k in US_KEYS)
    + ("idle_slot_us", "success_credit")
    + SCHEME_KEYS
    + SIM_KEYS
)

# 802.11b-style timing in microseconds. W_s and m_s default to the primary
# values. eifs_us=414 (364 + one DIFS) together with slot-level success
# credit is the calibrated accounting; "-nominal" keeps EIFS=364 and credits
# airtime only. See README.
PRESETS: dict[str, dict[str, Any]] = {
    "paper-2011": {
        "n_primary": 6,
        "n_secondary": 15,
        "w_primary": 32,
        "w_secondary": 32,
        "m_primary": 4,
        "m_secondary": 4,
        "lambda_primary": 1.0,
        "lambda_secondary": 1.0,
        "tp_suc_us": 1178.0,
        "ts_suc_us": 1178.0,
        "tp_col_us": 864.0,
        "ts_col_us": 864.0,
        "difs_us": 50.0,
        "eifs_us": 414.0,
        "scan_t_us": 50.0,
        "period_T_us": 500_000.0,
        "idle_slot_us": 20.0,
        "success_credit": "slot",
        "scheme": "sensing",
        "beta": 1.0,
    },
}
PRESETS["paper-2011-nominal"] = {**PRESETS["paper-2011"], "eifs_us": 364.0, "success_credit": "airtime"}


@dataclass(frozen=True)
class Scenario:
    params: NetworkParams
    timing: TimingParams
    scheme: SchemeConfig = SchemeConfig()

    def with_network(self, **changes: Any) -> "Scenario":
        return replace(self, params=replace(self.params, **changes))

    def with_timing(self, **changes: Any) -> "Scenario":
        return replace(self, timing=replace(self.timing, **changes))


def scenario_from_mapping(mapping: Mapping[str, Any]) -> Scenario:
    """Build a validated scenario from flat config keys (``*_us`` in microseconds)."""
    unknown = set(mapping) - set(CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    base = dict(PRESETS["paper-2011"])
    base.update(mapping)

    net = {}
    for key in NETWORK_KEYS:
        value = base[key]
        net[key] = float(value) if key.startswith("lambda") else _as_int(value, key)
    params = NetworkParams(**net)

    slot = float(base["idle_slot_us"])
    if slot <= 0:
        raise ValidationError(f"idle_slot_us must be > 0, got {slot}")
    timing = TimingParams(
        **{k: normalize_us(float(base[f"{k}_us"]), slot) for k in US_KEYS},
        idle_slot_us=slot,
        success_credit=str(base["success_credit"]),
    )
    validate(params, timing)

    scheme = Scheme(str(base["scheme"]).lower())
    beta = float(base["beta"])
    if scheme is Scheme.SILENT and "beta" not in mapping:
        beta = (timing.period_T - timing.scan_t) / timing.period_T
    if scheme is not Scheme.SILENT:
        beta = 1.0
    return Scenario(params, timing, SchemeConfig(scheme, beta))


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            pass
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    raise ValidationError(f"{key} must be an integer, got {value!r}")


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a flat ``key: value`` YAML file into a plain dict."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ValidationError(f"{path}: config must be a flat mapping of keys to scalars")
    return data


def preset(name: str) -> dict[str, Any]:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def sim_options(mapping: Mapping[str, Any]) -> dict[str, Any]:
    return {k: mapping[k] for k in SIM_KEYS if k in mapping}
