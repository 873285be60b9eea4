"""Image recovery from bucket records.

Two routes: classic weighted-pattern summation (noisy but dependency-free)
and the carved-set linear solve (Hc Hc^T) x = Hc B, which is exact for
noiseless buckets because carved pattern sets stay square and full-rank.
Dropped masks from carving pin provably-dark pixels to zero. Stripe
estimates are assembled column by column into the scene and scored with a
windowed SSIM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, SolveError
from .patterns import PatternMatrix, ScanPlan


@dataclass
class SceneImage:
    """Grayscale image in [0, 1]; ground-truth objects are binary."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("scene must be 2-D")
        if self.values.min() < -1e-9 or self.values.max() > 1 + 1e-9:
            raise ValueError("scene values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class Reconstruction:
    """A recovered image plus the bookkeeping that produced it."""

    image: SceneImage
    method: str
    ssim: float
    patterns_used: int
    simulated_time_s: float
    parameters: dict


def normalize_unit(values: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]; an (almost) constant input maps to zeros."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi - lo < 1e-12:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def standard_gi(
    energies: np.ndarray, patterns: np.ndarray, baseline: float = 0.0
) -> np.ndarray:
    """Bucket-weighted pattern sum, baseline-subtracted, rescaled to [0, 1].

    ``patterns`` holds one projected pattern per column; one bucket per
    column is required.
    """
    a = np.asarray(energies, dtype=float)
    p = np.asarray(patterns, dtype=float)
    if p.ndim != 2 or p.shape[1] != len(a):
        raise ValueError(
            f"need one bucket per pattern column: {p.shape} patterns vs {len(a)} buckets"
        )
    return normalize_unit(p @ (a - baseline))


def carved_gi(
    energies: np.ndarray,
    carved: PatternMatrix,
    n_pixels: int | None = None,
    cond_limit: float = 1e8,
    stripe_label: str = "",
) -> np.ndarray:
    """Solve (Hc Hc^T) x = Hc B for the reduced object, scatter to the stripe.

    ``energies`` must already be baseline-subtracted and calibration-inverted
    to linear intensity units, ordered like ``carved.column_ids``. The solve
    goes through QR of Hc^T rather than forming the inverse; a condition
    number above ``cond_limit`` is a hard error naming the stripe.
    """
    b = np.asarray(energies, dtype=float)
    if carved.n_columns != len(b):
        raise ValueError(
            f"bucket count {len(b)} does not match carved column count {carved.n_columns}"
        )
    where = f" (stripe {stripe_label})" if stripe_label else ""
    if carved.n_columns != carved.n_rows:
        raise SolveError(f"carved matrix is {carved.n_rows}x{carved.n_columns}, not square{where}")
    hc = carved.entries.astype(float)
    cond = np.linalg.cond(hc.T)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SolveError(
            f"carved system condition number {cond:.3g} exceeds {cond_limit:.3g}{where}"
        )
    q, r = np.linalg.qr(hc.T)
    x = np.linalg.solve(r, q.T @ b)
    if n_pixels is None:
        n_pixels = int(carved.row_ids.max())
    out = np.zeros(n_pixels, dtype=float)
    out[carved.row_ids - 1] = x
    return out


def apply_zero_masks(estimate: np.ndarray, masks) -> np.ndarray:
    """Pin every pixel covered by any dropped mask's lit region to zero."""
    out = np.array(estimate, dtype=float, copy=True)
    for mask in masks:
        out[np.asarray(mask) != 0] = 0.0
    return out


def assemble(stripes, plan: ScanPlan) -> SceneImage:
    """Place per-stripe estimates at their columns of the scene.

    Estimates are clipped to [0, 1] at placement; missing entries raise with
    the full gap list.
    """
    if len(stripes) != plan.segment_count:
        raise AssemblyError(
            f"got {len(stripes)} stripe estimates for {plan.segment_count} segments"
        )
    missing = [i for i, s in enumerate(stripes) if s is None]
    if missing:
        raise AssemblyError(f"missing stripe estimates at columns {missing}")
    flat = np.zeros(plan.width * plan.height, dtype=float)
    for idx, stripe in zip(plan.segments, stripes):
        vals = np.asarray(stripe, dtype=float)
        if len(vals) != len(idx):
            raise AssemblyError(
                f"stripe length {len(vals)} does not match segment size {len(idx)}"
            )
        flat[list(idx)] = vals
    return SceneImage(np.clip(flat.reshape(plan.height, plan.width), 0.0, 1.0))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _correlate_same(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' correlation; pair with a ones-image run to renormalize."""
    size = kernel.shape[0]
    pad = size // 2
    padded = np.zeros((img.shape[0] + 2 * pad, img.shape[1] + 2 * pad))
    padded[pad : pad + img.shape[0], pad : pad + img.shape[1]] = img
    out = np.zeros_like(img, dtype=float)
    for dy in range(size):
        for dx in range(size):
            w = kernel[dy, dx]
            if w == 0.0:
                continue
            out += w * padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out


def ssim(a: SceneImage | np.ndarray, b: SceneImage | np.ndarray) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    The window is clipped and renormalized where it overhangs the border, so
    small (16x16) inputs use every pixel; stabilizers k1=0.01, k2=0.03 at
    dynamic range 1.0.
    """
    x = a.values if isinstance(a, SceneImage) else np.asarray(a, dtype=float)
    y = b.values if isinstance(b, SceneImage) else np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    kernel = _gaussian_kernel(11, 1.5)
    support = _correlate_same(np.ones_like(x), kernel)
    mx = _correlate_same(x, kernel) / support
    my = _correlate_same(y, kernel) / support
    vx = _correlate_same(x * x, kernel) / support - mx * mx
    vy = _correlate_same(y * y, kernel) / support - my * my
    cov = _correlate_same(x * y, kernel) / support - mx * my
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))
