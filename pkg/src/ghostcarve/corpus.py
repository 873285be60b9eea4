"""Bundled binary test scenes (16x16 glyphs plus small 8x8 shapes)."""

from __future__ import annotations

from importlib import resources

import numpy as np

from . import imageio

GLYPHS_16 = ("zero16", "one16", "seven16", "smiley16", "sad16")
GLYPHS_8 = ("seven8", "tee8", "ell8")


def corpus_names(side: int | None = None) -> tuple:
    if side == 16:
        return GLYPHS_16
    if side == 8:
        return GLYPHS_8
    if side is None:
        return GLYPHS_16 + GLYPHS_8
    raise ValueError(f"no bundled scenes with side {side}")


def scene_path(name: str):
    """Filesystem path of a bundled scene (usable as a CLI --scene value)."""
    ref = resources.files("ghostcarve").joinpath(f"data/scenes/{name}.txt")
    if not ref.is_file():
        raise KeyError(f"no bundled scene named {name!r}")
    return ref


def load_scene_array(name: str) -> np.ndarray:
    """Bundled scene as a binary float array."""
    with resources.as_file(scene_path(name)) as path:
        return (imageio.read_text_grid(path) >= 0.5).astype(float)
