"""Value types shared by every stage of the codec.

Planes are 8-bit grayscale rasters. Intra modes follow the HEVC numbering:
0 is planar, 1 is DC and 2..34 are angular, with the displacement of each
angular mode given in 1/32 pel by :data:`ANGLES`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

NUM_MODES = 35
PLANAR = 0
DC = 1

WEIGHT_SCALE = 64
WEIGHT_SHIFT = 6
WEIGHT_ROUND = 32
WEIGHT_MIN = -128
WEIGHT_MAX = 192

MASK64 = (1 << 64) - 1

# intraPredAngle for modes 2..34; planar and DC carry a placeholder 0.
ANGLES: tuple[int, ...] = (
    0, 0,
    32, 26, 21, 17, 13, 9, 5, 2, 0, -2, -5, -9, -13, -17, -21, -26,
    -32, -26, -21, -17, -13, -9, -5, -2, 0, 2, 5, 9, 13, 17, 21, 26, 32,
)


class PgmError(ValueError):
    """Raised for unreadable PGM input."""


class WeightTableError(ValueError):
    """Raised when a weight table violates its format or invariants."""


def _check_angle_table() -> None:
    assert len(ANGLES) == NUM_MODES
    assert ANGLES[10] == 0 and ANGLES[26] == 0
    assert ANGLES[2] == 32 and ANGLES[34] == 32
    for k in range(17):
        assert ANGLES[18 + k] == ANGLES[18 - k], k


_check_angle_table()


def is_angular(mode: int) -> bool:
    return 2 <= mode <= 34


def check_mode(mode: int) -> int:
    if not 0 <= mode < NUM_MODES:
        raise ValueError(f"intra mode out of range: {mode}")
    return mode


@dataclass(frozen=True, eq=False)
class Plane:
    """Row-major 8-bit sample raster.

    ``samples`` is a read-only ``(height, width)`` uint8 array.
    """

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("plane dimensions must be positive")
        arr = np.asarray(self.samples)
        if arr.size != self.width * self.height:
            raise ValueError(
                f"expected {self.width * self.height} samples, got {arr.size}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr.reshape(self.height, self.width), dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_array(cls, array) -> Plane:
        array = np.asarray(array)
        if array.ndim != 2:
            raise ValueError("plane arrays must be two-dimensional")
        return cls(array.shape[1], array.shape[0], array)

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.samples, other.samples))

    def __hash__(self):
        return hash((self.width, self.height, self.samples.tobytes()))

    def __repr__(self):
        return f"Plane({self.width}x{self.height})"


_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def load_pgm(data: bytes) -> Plane:
    """Parse a binary (P5) PGM with maxval 255."""
    data = bytes(data)
    if data[:2] != b"P5":
        raise PgmError("malformed header: not a binary PGM")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise PgmError("malformed header: missing field")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise PgmError(f"malformed header: {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PgmError("malformed header: non-positive dimensions")
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        if width * height:
            raise PgmError("truncated payload")
    pos += 1
    payload = data[pos:pos + width * height]
    if len(payload) < width * height:
        raise PgmError(
            f"truncated payload: expected {width * height} bytes, got {len(payload)}")
    return Plane(width, height, np.frombuffer(payload, dtype=np.uint8))


def store_pgm(plane: Plane) -> bytes:
    header = f"P5\n{plane.width} {plane.height}\n255\n".encode("ascii")
    return header + plane.samples.tobytes()


@dataclass(frozen=True)
class WeightSet:
    """Three fixed-point tap weights in units of 1/64."""

    rho1: int
    rho2: int
    rho3: int

    def __post_init__(self):
        for v in self:
            if not WEIGHT_MIN <= v <= WEIGHT_MAX:
                raise ValueError(f"weight component out of range: {tuple(self)}")
        if self.rho1 + self.rho2 + self.rho3 != WEIGHT_SCALE:
            raise ValueError(f"weights must sum to {WEIGHT_SCALE}: {tuple(self)}")

    def __iter__(self) -> Iterator[int]:
        return iter((self.rho1, self.rho2, self.rho3))

    def shifted(self, d1: int, d2: int, d3: int) -> WeightSet:
        return WeightSet(self.rho1 + d1, self.rho2 + d2, self.rho3 + d3)


class WeightTable(Sequence[WeightSet]):
    """Immutable per-mode weight sets, indexed by intra mode id."""

    def __init__(self, sets: Iterable[WeightSet]):
        sets = tuple(sets)
        if len(sets) != NUM_MODES:
            raise WeightTableError(f"expected {NUM_MODES} weight sets, got {len(sets)}")
        for s in sets:
            if not isinstance(s, WeightSet):
                raise WeightTableError(f"not a WeightSet: {s!r}")
        self._sets = sets
        arr = np.array([tuple(s) for s in sets], dtype=np.int64)
        arr.setflags(write=False)
        self._array = arr

    @classmethod
    def from_rows(cls, rows) -> WeightTable:
        return cls(WeightSet(*map(int, r)) for r in rows)

    def __getitem__(self, mode):
        return self._sets[mode]

    def __len__(self):
        return NUM_MODES

    def __eq__(self, other):
        if not isinstance(other, WeightTable):
            return NotImplemented
        return self._sets == other._sets

    def __hash__(self):
        return hash(self._sets)

    def __repr__(self):
        return f"WeightTable({[tuple(s) for s in self._sets]})"

    @property
    def array(self) -> np.ndarray:
        """``(35, 3)`` int64 view used by the prediction kernels."""
        return self._array

    def replace(self, mode: int, weights: WeightSet) -> WeightTable:
        sets = list(self._sets)
        sets[mode] = weights
        return WeightTable(sets)


def format_weight_table(table: WeightTable, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    lines.append("# mode rho1 rho2 rho3 (units of 1/64)")
    for mode, ws in enumerate(table):
        lines.append(f"{mode} {ws.rho1} {ws.rho2} {ws.rho3}")
    return "\n".join(lines) + "\n"


def parse_weight_table(text: str) -> WeightTable:
    """Parse the ``mode rho1 rho2 rho3`` text format."""
    rows: dict[int, WeightSet] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise WeightTableError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            mode, r1, r2, r3 = (int(p) for p in parts)
        except ValueError:
            raise WeightTableError(f"line {lineno}: non-integer field") from None
        if not 0 <= mode < NUM_MODES:
            raise WeightTableError(f"line {lineno}: mode {mode} out of range")
        if mode in rows:
            raise WeightTableError(f"line {lineno}: duplicate mode {mode}")
        if r1 + r2 + r3 != WEIGHT_SCALE:
            raise WeightTableError(
                f"line {lineno}: weights of mode {mode} sum to {r1 + r2 + r3}, not {WEIGHT_SCALE}")
        try:
            rows[mode] = WeightSet(r1, r2, r3)
        except ValueError as exc:
            raise WeightTableError(f"line {lineno}: {exc}") from None
    missing = sorted(set(range(NUM_MODES)) - rows.keys())
    if missing:
        raise WeightTableError(f"missing modes: {missing}")
    return WeightTable(rows[m] for m in range(NUM_MODES))


def splitmix64_next(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Prng64:
    """splitmix64 generator; the output stream is a pure function of the seed."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state, out = splitmix64_next(self.state)
        return out

    def below(self, bound: int) -> int:
        return self.next() % bound


def pu_seed(frame_index: int, pu_x: int, pu_y: int, mode: int) -> int:
    if min(frame_index, pu_x, pu_y, mode) < 0:
        raise ValueError("seed inputs must be non-negative")
    return ((frame_index << 48) ^ (pu_x << 28) ^ (pu_y << 8) ^ mode) & MASK64


def prng_for_pu(frame_index: int, pu_x: int, pu_y: int, mode: int) -> Prng64:
    """Generator shared by encoder and decoder for one (PU, mode) pair."""
    return Prng64(pu_seed(frame_index, pu_x, pu_y, mode))
