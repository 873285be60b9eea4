"""Adaptive Hadamard matrix carving.

A pattern measured below the zero-threshold proves its lit pixels dark, so
those rows are carved out of the pattern matrix; a greedy left-to-right pass
then keeps only columns that raise the rank, leaving a square full-rank set
half the size. The acquisition loop interleaves projection with carving and
keeps already-measured bucket values attached to surviving columns — valid
because carved rows carry zero object intensity, so removing them changes no
inner product (asserted by tests, not assumed).

Rank arithmetic is exact (Gaussian elimination over rationals): float rank
of 0/1 matrices is exactly the kind of ambiguity this module must not have.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import AcquisitionAborted, CalibrationError, SessionPaused, StateError
from .patterns import PatternMatrix, binarize, hadamard


class _ExactBasis:
    """Incremental row-echelon basis over the rationals."""

    def __init__(self):
        self._rows: list[list[Fraction]] = []
        self._pivots: list[int] = []

    @property
    def rank(self) -> int:
        return len(self._rows)

    def _reduce(self, vec):
        v = [Fraction(int(x)) for x in vec]
        for row, piv in zip(self._rows, self._pivots):
            if v[piv]:
                coef = v[piv] / row[piv]
                v = [a - coef * b for a, b in zip(v, row)]
        return v

    def try_add(self, vec) -> bool:
        """Add a vector if independent of the basis; report whether it was."""
        v = self._reduce(vec)
        for i, x in enumerate(v):
            if x:
                self._rows.append(v)
                self._pivots.append(i)
                return True
        return False


def exact_rank(mat: np.ndarray) -> int:
    basis = _ExactBasis()
    for col in np.asarray(mat).T:
        basis.try_add(col)
    return basis.rank


def zero_threshold(mu0: float) -> float:
    """Energy level separating zero-overlap buckets from real signal.

    mu0 + 2*sigma with sigma pinned at 0.5*mu0, i.e. exactly 2*mu0.
    """
    if mu0 <= 0:
        raise CalibrationError(f"baseline energy must be positive, got {mu0}")
    return 2.0 * mu0


@dataclass
class BucketEntry:
    column_id: int
    energy: float
    below_threshold: bool
    pattern: np.ndarray  # as projected, full stripe coordinates


@dataclass
class BucketRecord:
    """Measured detector outputs, one entry per projected pattern, in order."""

    entries: list[BucketEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def column_ids(self) -> list[int]:
        return [e.column_id for e in self.entries]

    def energy_for(self, column_id: int) -> float:
        for e in self.entries:
            if e.column_id == column_id:
                return e.energy
        raise KeyError(f"no bucket recorded for column {column_id}")

    def to_jsonable(self) -> list[dict]:
        return [
            {
                "column_id": int(e.column_id),
                "energy": float(e.energy),
                "below_threshold": bool(e.below_threshold),
                "pattern": [int(v) for v in e.pattern],
            }
            for e in self.entries
        ]

    @classmethod
    def from_jsonable(cls, items: list[dict]) -> "BucketRecord":
        return cls(
            [
                BucketEntry(
                    int(d["column_id"]),
                    float(d["energy"]),
                    bool(d["below_threshold"]),
                    np.asarray(d["pattern"], dtype=np.int64),
                )
                for d in items
            ]
        )


@dataclass
class CarveState:
    """Current carved pattern set plus the bookkeeping the loop needs.

    ``dropped_masks`` holds one full-stripe binary mask per carving round:
    the lit pixels of the pattern whose below-threshold measurement fired
    the round. When the all-ones pattern itself measures below threshold the
    stripe is provably empty; ``empty`` is set and a full-coverage mask is
    recorded instead of carving down to rank zero.
    """

    current: PatternMatrix
    n_pixels: int
    threshold: float
    dropped_masks: list[np.ndarray] = field(default_factory=list)
    carve_depth: int = 0
    projected: set[int] = field(default_factory=set)
    empty: bool = False

    @classmethod
    def fresh(cls, n_pixels: int, threshold: float) -> "CarveState":
        m = int(n_pixels).bit_length() - 1
        if (1 << m) != n_pixels:
            raise StateError(f"stripe length {n_pixels} is not a power of 2")
        return cls(current=binarize(hadamard(m)), n_pixels=n_pixels, threshold=threshold)

    def full_pattern(self, column_id: int) -> np.ndarray:
        """Projected form of a column: zeros at carved-away pixels."""
        out = np.zeros(self.n_pixels, dtype=np.int64)
        out[self.current.row_ids - 1] = self.current.column(column_id)
        return out

    def to_jsonable(self) -> dict:
        return {
            "n_pixels": int(self.n_pixels),
            "threshold": float(self.threshold),
            "column_ids": [int(c) for c in self.current.column_ids],
            "row_ids": [int(r) for r in self.current.row_ids],
            "entries": [[int(v) for v in row] for row in self.current.entries],
            "dropped_masks": [[int(v) for v in m] for m in self.dropped_masks],
            "carve_depth": int(self.carve_depth),
            "projected": sorted(int(c) for c in self.projected),
            "empty": bool(self.empty),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable())

    @classmethod
    def from_jsonable(cls, d: dict) -> "CarveState":
        current = PatternMatrix(
            np.asarray(d["entries"], dtype=np.int64),
            np.asarray(d["column_ids"], dtype=np.int64),
            np.asarray(d["row_ids"], dtype=np.int64),
        )
        return cls(
            current=current,
            n_pixels=int(d["n_pixels"]),
            threshold=float(d["threshold"]),
            dropped_masks=[np.asarray(m, dtype=np.int64) for m in d["dropped_masks"]],
            carve_depth=int(d["carve_depth"]),
            projected=set(int(c) for c in d["projected"]),
            empty=bool(d.get("empty", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "CarveState":
        return cls.from_jsonable(json.loads(text))


def row_carve(state: CarveState, trigger_column_id: int) -> PatternMatrix:
    """Remove every retained row where the trigger pattern is lit.

    The trigger must belong to the current set and must have measured below
    threshold (the caller guarantees the latter). The removed pixels are
    recorded as a dropped mask in full stripe coordinates. Returns the
    row-reduced, no-longer-square pattern set; ``state.current`` is left for
    :func:`column_carve`'s result via :func:`carve`.
    """
    if trigger_column_id not in state.current.column_ids:
        raise StateError(f"trigger column {trigger_column_id} not in current set")
    trig = state.current.column(trigger_column_id)
    state.dropped_masks.append(state.full_pattern(trigger_column_id))
    keep = trig == 0
    return PatternMatrix(
        state.current.entries[keep, :],
        state.current.column_ids.copy(),
        state.current.row_ids[keep],
    )


def column_carve(row_reduced: PatternMatrix) -> PatternMatrix:
    """Greedy left-to-right retention of rank-increasing columns.

    Scans columns in original-id order and keeps one iff it strictly raises
    the rank of the kept set; the result is square with full rank equal to
    its row count. Carved Sylvester sets always reach full rank — anything
    else is a hard internal failure, not a recoverable condition.
    """
    basis = _ExactBasis()
    keep_idx = [
        j for j in range(row_reduced.n_columns) if basis.try_add(row_reduced.entries[:, j])
    ]
    result = PatternMatrix(
        row_reduced.entries[:, keep_idx],
        row_reduced.column_ids[keep_idx],
        row_reduced.row_ids,
    )
    if result.n_columns != result.n_rows:
        raise AssertionError(
            f"column carve left a {result.n_rows}x{result.n_columns} set; "
            "carved Hadamard sets must reduce to square full rank"
        )
    return result


def carve(state: CarveState, trigger_column_id: int) -> None:
    """One carving round: row carve on the trigger, then column carve."""
    state.current = column_carve(row_carve(state, trigger_column_id))
    state.carve_depth += 1


def adaptive_acquire(
    detector,
    object_stripe: np.ndarray,
    threshold: float,
    state: CarveState | None = None,
    record: BucketRecord | None = None,
    on_measure=None,
) -> tuple[CarveState, BucketRecord]:
    """Project, measure, carve until every surviving column is measured.

    ``detector(pattern, object_stripe) -> energy`` is the only use made of
    the object; the loop itself never inspects it. Columns are projected in
    ascending original id, skipping ids already measured; each
    below-threshold measurement fires a carving round (or, for the all-ones
    column, the empty-stripe shortcut). ``state``/``record`` allow resuming
    a checkpointed session mid-stripe. ``on_measure(entry)`` is called after
    each measurement, before any carve.

    Detector failures abort with partial results attached.
    """
    obj = np.asarray(object_stripe)
    if state is None:
        state = CarveState.fresh(len(obj), threshold)
    if record is None:
        record = BucketRecord()

    while not state.empty:
        pending = [
            c for c in sorted(state.current.column_ids.tolist()) if c not in state.projected
        ]
        if not pending:
            break
        col_id = pending[0]
        pattern = state.full_pattern(col_id)
        try:
            energy = float(detector(pattern, obj))
        except SessionPaused:
            # Not a failure: the human loop checkpointed; resume re-projects
            # this same pattern.
            raise
        except Exception as exc:  # noqa: BLE001 - any detector failure aborts
            raise AcquisitionAborted(
                f"detector failed on column {col_id}: {exc}", state=state, record=record
            ) from exc
        below = energy < state.threshold
        entry = BucketEntry(col_id, energy, below, pattern)
        record.entries.append(entry)
        state.projected.add(col_id)
        if on_measure is not None:
            on_measure(entry)
        if below:
            if col_id == 1:
                # All-ones pattern dark: the whole stripe is empty; mask
                # everything rather than carving to rank zero.
                state.dropped_masks.append(np.ones(state.n_pixels, dtype=np.int64))
                state.empty = True
            else:
                carve(state, col_id)
    return state, record


def surviving_record(state: CarveState, record: BucketRecord) -> tuple[np.ndarray, np.ndarray]:
    """Bucket values for surviving columns, in current column order.

    Pre-carve measurements remain valid for surviving columns because carved
    pixels are provably dark. Returns (energies, column_ids).
    """
    energies = np.array(
        [record.energy_for(c) for c in state.current.column_ids], dtype=float
    )
    return energies, state.current.column_ids.copy()
