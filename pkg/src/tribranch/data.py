"""Procedural training images: band-limited colour textures and box downsampling."""

import numpy as np


def textures(rng: np.random.Generator, n: int, size: int = 64, channels: int = 3,
             n_waves: int = 12, max_freq: float = 8.0) -> np.ndarray:
    """``(n, channels, size, size)`` sums of random plane waves, scaled into [0, 1].

    Frequencies are in cycles per image and capped at ``max_freq``, so the
    images are band-limited.
    """
    coords = np.arange(size) / size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    out = np.empty((n, channels, size, size))
    for i in range(n):
        freqs = rng.uniform(-max_freq, max_freq, size=(n_waves, 2))
        phases = rng.uniform(0, 2 * np.pi, size=n_waves)
        amps = rng.uniform(0.2, 1.0, size=n_waves) / (1.0 + np.hypot(freqs[:, 0], freqs[:, 1]))
        mix = rng.uniform(0.0, 1.0, size=(channels, n_waves))
        waves = amps[:, None, None] * np.sin(
            2 * np.pi * (freqs[:, 0, None, None] * yy + freqs[:, 1, None, None] * xx) + phases[:, None, None]
        )
        img = np.tensordot(mix, waves, axes=1)
        lo, hi = img.min(), img.max()
        out[i] = (img - lo) / (hi - lo) if hi > lo else 0.5
    return out


def box_downsample(x: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def lr_batch(seed: int, batch: int = 8, lr_size: int = 16, factor: int = 4, channels: int = 3) -> np.ndarray:
    """Low-resolution inputs made by box-downsampling procedural HR textures."""
    rng = np.random.default_rng(seed)
    return box_downsample(textures(rng, batch, lr_size * factor, channels), factor)
