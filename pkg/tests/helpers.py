"""Shared test oracles, independent of the engine's implementation choices.

The Hadamard set is built by Kronecker doubling (the engine uses block
recursion), rank checks use numpy's SVD-based float rank (the engine uses
exact rational elimination), and the carve trace reads the object directly
instead of going through a detector.
"""

import numpy as np


def sylvester_binarized(n: int) -> np.ndarray:
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < n:
        h = np.kron(np.array([[1, 1], [1, -1]], dtype=np.int64), h)
    assert h.shape == (n, n)
    return (h > 0).astype(np.int64)


def oracle_trace(obj):
    """Brute-force prediction of a noiseless adaptive acquisition.

    Knows the object; fires a carve exactly when the projected pattern has
    zero overlap. Returns (patterns_projected, dropped_masks, retained_rows,
    surviving_columns) with 0-based row/column indexing.
    """
    obj = np.asarray(obj, dtype=np.int64)
    n = len(obj)
    hb = sylvester_binarized(n)
    rows = list(range(n))
    cols = list(range(n))
    projected = set()
    masks = []
    count = 0
    while True:
        pending = [c for c in cols if c not in projected]
        if not pending:
            break
        c = pending[0]
        projected.add(c)
        count += 1
        pattern = np.zeros(n, dtype=np.int64)
        pattern[rows] = hb[rows, c]
        if int(pattern @ obj) != 0:
            continue
        if c == 0:
            masks.append(np.ones(n, dtype=np.int64))
            break
        masks.append(pattern)
        rows = [r for r in rows if hb[r, c] == 0]
        kept = []
        for cc in cols:
            candidate = hb[np.ix_(rows, kept + [cc])]
            if np.linalg.matrix_rank(candidate) > len(kept):
                kept.append(cc)
        cols = kept
    return count, masks, rows, cols


def oracle_image_trace(scene):
    """Per-stripe oracle pattern counts for a full scene (columns as stripes)."""
    scene = np.asarray(scene)
    counts = []
    for x in range(scene.shape[1]):
        count, _, _, _ = oracle_trace(scene[:, x].astype(np.int64))
        counts.append(count)
    return counts


def ideal_detector(pattern, obj):
    return float(np.dot(pattern, obj))
