"""Illumination pattern generation.

Hadamard pattern sets (Sylvester construction, +-1 entries with the usual
normalization dropped so all arithmetic stays in integers), their 0/1
binarization used for projection, square-wave flicker sequences, tile
macro-pixel rendering for binary projectors, and column-stripe scan plans.

Everything here is a pure function of its inputs plus an explicit seed;
returned arrays are safe to share between concurrent acquisitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PlanError, SizeLimitError, StimulusSpecError

MAX_ORDER_EXPONENT = 12


@dataclass(frozen=True)
class HadamardMatrix:
    """Sylvester +-1 matrix of size 2^m with all-plus first row and column."""

    m: int
    entries: np.ndarray

    @property
    def size(self) -> int:
        return 1 << self.m


@dataclass
class PatternMatrix:
    """Binary patterns stored as columns, with carving provenance.

    ``column_ids`` are the 1-based ids of the original Hadamard columns each
    pattern came from; ``row_ids`` are the 1-based pixel indices the rows
    still cover. An uncarved set has ids 1..N on both axes.
    """

    entries: np.ndarray
    column_ids: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.int64)
        self.column_ids = np.asarray(self.column_ids, dtype=np.int64)
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        if self.entries.ndim != 2:
            raise ValueError("pattern entries must be a 2-D array")
        vals = np.unique(self.entries)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("pattern entries must be 0/1")
        if len(set(self.column_ids.tolist())) != len(self.column_ids):
            raise ValueError("column_ids must be unique")
        if len(set(self.row_ids.tolist())) != len(self.row_ids):
            raise ValueError("row_ids must be unique")
        if not np.all(np.diff(self.row_ids) > 0):
            raise ValueError("row_ids must be sorted ascending")
        if self.entries.shape != (len(self.row_ids), len(self.column_ids)):
            raise ValueError("entries shape does not match id vectors")

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_columns(self) -> int:
        return self.entries.shape[1]

    def column(self, column_id: int) -> np.ndarray:
        """Pattern for an original column id, over the retained rows."""
        hits = np.nonzero(self.column_ids == column_id)[0]
        if len(hits) != 1:
            raise KeyError(f"column id {column_id} not in pattern set")
        return self.entries[:, hits[0]]

    def to_text(self) -> str:
        """Plain-text export: one row per line, space-separated 0/1."""
        return "\n".join(" ".join(str(int(v)) for v in row) for row in self.entries) + "\n"


def pattern_matrix_from_text(text: str) -> PatternMatrix:
    rows = [[int(tok) for tok in line.split()] for line in text.strip().splitlines()]
    entries = np.array(rows, dtype=np.int64)
    n, k = entries.shape
    return PatternMatrix(entries, np.arange(1, k + 1), np.arange(1, n + 1))


def hadamard(m: int) -> HadamardMatrix:
    """Sylvester-recursive +-1 matrix of order 2^m.

    The doubling step is H -> [[H, H], [H, -H]] starting from [[1]]; the
    conventional 1/sqrt(2) factor is dropped so H @ H.T == 2^m * I holds in
    exact integer arithmetic.
    """
    if m < 0 or int(m) != m:
        raise SizeLimitError(f"order exponent must be a non-negative integer, got {m}")
    if m > MAX_ORDER_EXPONENT:
        raise SizeLimitError(
            f"order exponent {m} exceeds limit {MAX_ORDER_EXPONENT} (2^{m} x 2^{m} entries)"
        )
    h = np.array([[1]], dtype=np.int64)
    for _ in range(int(m)):
        h = np.block([[h, h], [h, -h]])
    return HadamardMatrix(int(m), h)


def binarize(h: HadamardMatrix) -> PatternMatrix:
    """Map entries -1 -> 0 and +1 -> 1, keeping column order."""
    n = h.size
    entries = (h.entries + 1) // 2
    ids = np.arange(1, n + 1)
    return PatternMatrix(entries, ids, ids.copy())


@dataclass(frozen=True)
class StimulusSpec:
    """One flicker presentation: intensity level, frequency, duty, timing."""

    level: float
    freq_hz: float
    duty: float = 0.5
    frame_rate: float = 60.0
    duration_s: float = 2.0
    level_max: float = 255.0

    def __post_init__(self):
        if not (3.0 <= self.freq_hz < self.frame_rate / 2.0):
            raise StimulusSpecError(
                f"flicker frequency {self.freq_hz} Hz outside [3, frame_rate/2) "
                f"with frame_rate {self.frame_rate}"
            )
        if not (0.0 < self.duty < 1.0):
            raise StimulusSpecError(f"duty cycle must lie in (0, 1), got {self.duty}")
        if self.duration_s <= 0:
            raise StimulusSpecError("duration must be positive")
        if self.level < 0 or self.level > self.level_max:
            raise StimulusSpecError(
                f"intensity level {self.level} outside [0, {self.level_max}]"
            )

    @property
    def normalized_level(self) -> float:
        return self.level / self.level_max


def stimulus_frames(spec: StimulusSpec) -> np.ndarray:
    """Per-frame intensities of the square-wave flicker.

    Frame j (timestamp j / frame_rate) carries the full level while the
    square wave is in its high phase and 0 otherwise; the sequence covers
    floor(duration * frame_rate) frames.
    """
    n_frames = int(math.floor(spec.duration_s * spec.frame_rate))
    j = np.arange(n_frames)
    phase = np.mod(spec.freq_hz * j / spec.frame_rate, 1.0)
    return np.where(phase < spec.duty, float(spec.level), 0.0)


@dataclass(frozen=True)
class TileSpec:
    """Macro-pixel geometry for binary projectors.

    A gray level is produced by switching on a fraction ``on_fraction`` of
    the tile's sub-pixels at random positions; the achievable level count is
    tile_side^2 + 1.
    """

    tile_side: int = 32
    on_fraction: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.tile_side < 1:
            raise ValueError("tile_side must be >= 1")
        if not (0.0 <= self.on_fraction <= 1.0):
            raise ValueError("on_fraction must lie in [0, 1]")

    @property
    def levels(self) -> int:
        return self.tile_side * self.tile_side + 1

    def on_subpixels(self, fraction: float | None = None) -> int:
        p = self.on_fraction if fraction is None else fraction
        return int(round(p * self.tile_side * self.tile_side))


def render_tile_frame(
    pattern_column: np.ndarray,
    intensity_fraction: float | np.ndarray,
    tile: TileSpec,
) -> np.ndarray:
    """Render one stripe pattern as a sub-pixel bitmap.

    Each pattern element becomes a tile_side x tile_side block: lit elements
    get exactly round(p * tile_side^2) on-sub-pixels at seeded-random
    positions, dark elements stay all off. Placement is drawn once per
    (seed, macro-pixel) pair, so a fixed seed gives a fixed bitmap.
    """
    col = np.asarray(pattern_column).ravel()
    fractions = np.broadcast_to(np.asarray(intensity_fraction, dtype=float), col.shape)
    if np.any((fractions < 0) | (fractions > 1)):
        raise ValueError("intensity fractions must lie in [0, 1]")
    side = tile.tile_side
    out = np.zeros((len(col) * side, side), dtype=np.uint8)
    for i, (lit, p) in enumerate(zip(col, fractions)):
        if not lit:
            continue
        n_on = int(round(p * side * side))
        if n_on == 0:
            continue
        rng = np.random.default_rng([tile.rng_seed, i])
        flat = rng.permutation(side * side)[:n_on]
        block = np.zeros(side * side, dtype=np.uint8)
        block[flat] = 1
        out[i * side : (i + 1) * side, :] = block.reshape(side, side)
    return out


@dataclass(frozen=True)
class ScanPlan:
    """Column-stripe segmentation of the pixel grid.

    Stripes partition the image one pixel column at a time; segment
    geometry is stored as flat row-major pixel indices, iterated left to
    right.
    """

    width: int
    height: int
    segments: tuple = field(default_factory=tuple)

    @property
    def segment_count(self) -> int:
        return len(self.segments)

    @property
    def stripe_length(self) -> int:
        return self.height


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def make_scan_plan(width: int, height: int) -> ScanPlan:
    """One stripe per pixel column, left to right.

    Both sides must be powers of two so each stripe admits a full Hadamard
    pattern set.
    """
    if not _is_power_of_two(width) or not _is_power_of_two(height):
        raise PlanError(f"grid {width}x{height} is not power-of-2 per side")
    segments = tuple(
        tuple(int(y * width + x) for y in range(height)) for x in range(width)
    )
    return ScanPlan(width=width, height=height, segments=segments)
