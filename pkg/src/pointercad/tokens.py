"""Token vocabulary and value quantization.

Label and pointer-state tokens occupy ids 1-23; quantized values start at
``VALUE_OFFSET`` and take ``2**q`` consecutive ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import RangeError

EM = 1  # end of model
ES = 2  # end of step
SS = 3  # start of sketch
SE = 4  # start of extrusion
SC = 5  # start of chamfer
SF = 6  # start of fillet
SP = 7  # start of profile
SL = 8  # start of loop
SX = 9  # start of curve
PE = 10  # pointer enabled
PD = 11  # pointer disabled
OR_CW = 12
OR_CCW = 13
DR_BASE = 14
BO_BASE = 20
VALUE_OFFSET = 24

DIRECTIONS = ("X+", "X-", "Y+", "Y-", "Z+", "Z-")
BOOLEANS = ("New", "Join", "Cut", "Intersect")
ORIENTATIONS = ("CW", "CCW")

# direction symbol -> (primary direction, auxiliary direction)
DIRECTION_TABLE = {
    14: ("X+", "Y+"),
    15: ("X-", "Z+"),
    16: ("Y+", "Z+"),
    17: ("Y-", "X+"),
    18: ("Z+", "X+"),
    19: ("Z-", "Y+"),
}

LABELS = {
    "em": EM,
    "es": ES,
    "ss": SS,
    "se": SE,
    "sc": SC,
    "sf": SF,
    "sp": SP,
    "sl": SL,
    "sx": SX,
    "pe": PE,
    "pd": PD,
}

POINTER_STATES = frozenset({PE, PD})

_AXES = {
    "X+": (1.0, 0.0, 0.0),
    "X-": (-1.0, 0.0, 0.0),
    "Y+": (0.0, 1.0, 0.0),
    "Y-": (0.0, -1.0, 0.0),
    "Z+": (0.0, 0.0, 1.0),
    "Z-": (0.0, 0.0, -1.0),
}


def axis_vector(direction: str) -> tuple[float, float, float]:
    return _AXES[direction]


def direction_token(direction: str) -> int:
    return DR_BASE + DIRECTIONS.index(direction)


def direction_of(token: int) -> str:
    return DIRECTIONS[token - DR_BASE]


def auxiliary_direction(direction: str) -> str:
    return DIRECTION_TABLE[direction_token(direction)][1]


def boolean_token(op: str) -> int:
    return BO_BASE + BOOLEANS.index(op)


def boolean_of(token: int) -> str:
    return BOOLEANS[token - BO_BASE]


def orientation_token(orientation: str) -> int:
    return OR_CW if orientation == "CW" else OR_CCW


def orientation_of(token: int) -> str:
    return "CW" if token == OR_CW else "CCW"


class ValueKind(str, Enum):
    NV = "nv"
    AG = "ag"


@dataclass(frozen=True)
class QuantConfig:
    q: int = 8
    value_range: tuple[float, float] = (0.0, 1.0)
    angle_range: tuple[float, float] = (0.0, 360.0)

    def __post_init__(self):
        if not isinstance(self.q, int) or self.q < 1:
            raise ValueError(f"bit width must be a positive integer, got {self.q!r}")

    @property
    def levels(self) -> int:
        return 2**self.q

    @property
    def vocab_size(self) -> int:
        return VALUE_OFFSET + self.levels

    def half_bin(self, kind: ValueKind = ValueKind.NV) -> float:
        lo, hi = self.angle_range if kind is ValueKind.AG else self.value_range
        return 0.5 * (hi - lo) / (self.levels - 1)


def quantize_value(v: float, cfg: QuantConfig, kind: ValueKind | str = ValueKind.NV, path: str = "") -> int:
    """Map ``v`` to its bin, rounding half away from zero."""
    kind = ValueKind(kind)
    top = cfg.levels - 1
    if not math.isfinite(v):
        raise RangeError(v, cfg.value_range if kind is ValueKind.NV else cfg.angle_range, path)
    if kind is ValueKind.AG:
        lo, hi = cfg.angle_range
        if v < lo or v > hi:
            raise RangeError(v, f"[{lo}, {hi})", path)
        unit = (v % hi - lo) / (hi - lo)
    else:
        lo, hi = cfg.value_range
        if v < lo or v > hi:
            raise RangeError(v, f"[{lo}, {hi}]", path)
        unit = (v - lo) / (hi - lo)
    return min(int(math.floor(unit * top + 0.5)), top)


def dequantize_value(bin_: int, cfg: QuantConfig, kind: ValueKind | str = ValueKind.NV) -> float:
    kind = ValueKind(kind)
    top = cfg.levels - 1
    if not 0 <= bin_ <= top:
        raise RangeError(bin_, f"[0, {cfg.levels})")
    if kind is ValueKind.AG:
        lo, hi = cfg.angle_range
        return (lo + bin_ * (hi - lo) / top) % hi
    lo, hi = cfg.value_range
    return lo + bin_ * (hi - lo) / top


def is_value_token(token: int, cfg: QuantConfig) -> bool:
    return VALUE_OFFSET <= token < cfg.vocab_size


def is_known_token(token: int, cfg: QuantConfig) -> bool:
    return 1 <= token < cfg.vocab_size
