"""Seeded synthetic frames and sequences for demos, tests and benchmarks."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .imaging import Frame, RoiMask, Sequence
from .rng import SplitMix64, derive_seed


def texture(height: int, width: int, seed: int, sigma: float = 3.0, contrast: float = 90.0,
            base=(128, 128, 128)) -> np.ndarray:
    """Smooth color noise as float RGB, roughly centered on ``base``."""
    raw = SplitMix64(seed).bulk(3 * height * width)
    noise = (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53 - 0.5
    noise = noise.reshape(3, height, width)
    out = np.empty((height, width, 3))
    for c in range(3):
        sm = ndimage.gaussian_filter(noise[c], sigma, mode="wrap")
        sm /= max(np.abs(sm).max(), 1e-12)
        out[..., c] = base[c] + contrast * sm
    return out


def textured_frame(height: int = 96, width: int = 128, seed: int = 0) -> Frame:
    return Frame(np.clip(np.rint(texture(height, width, seed)), 0, 255).astype(np.uint8))


def drifting_square(n_frames: int = 40, height: int = 120, width: int = 160, size: int = 30,
                    speed: int = 2, seed: int = 0, start=(10, 45)):
    """A textured square translating ``speed`` px/frame to the right over a static background.

    Returns the sequence (reference frame 0) and the per-frame ground-truth masks.
    """
    bg = texture(height, width, derive_seed(seed, 1), sigma=4.0, contrast=70.0)
    fg = texture(size, size, derive_seed(seed, 2), sigma=2.5, contrast=60.0, base=(200, 60, 60))
    x0, y0 = start
    frames, masks = [], []
    for n in range(n_frames):
        img = bg.copy()
        m = np.zeros((height, width), dtype=bool)
        x = x0 + speed * n
        xa, xb = max(x, 0), min(x + size, width)
        if xb > xa:
            img[y0:y0 + size, xa:xb] = fg[:, xa - x:xb - x]
            m[y0:y0 + size, xa:xb] = True
        frames.append(Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8)))
        masks.append(RoiMask(m))
    return Sequence(frames, 0, [f"{n:04d}" for n in range(n_frames)]), masks
