"""Structural similarity between grayscale images.

Gaussian 11x11 window (sigma 1.5), K1 = 0.01, K2 = 0.03, data range 1.0,
population (biased) local statistics, averaged over window positions lying
fully inside the image.
"""

import numpy as np

K1, K2 = 0.01, 0.03
WIN_SIZE, SIGMA = 11, 1.5


def gaussian_window(size=WIN_SIZE, sigma=SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _valid_filter(images, g):
    # separable valid-mode correlation over the last two axes
    k = g.size
    rows = sum(g[i] * images[..., i : images.shape[-2] - k + 1 + i, :] for i in range(k))
    return sum(g[i] * rows[..., :, i : images.shape[-1] - k + 1 + i] for i in range(k))


def ssim_map(a, b, data_range=1.0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[-1] < WIN_SIZE or a.shape[-2] < WIN_SIZE:
        raise ValueError("images smaller than the SSIM window")
    g = gaussian_window()
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mu_a, mu_b = _valid_filter(a, g), _valid_filter(b, g)
    var_a = _valid_filter(a * a, g) - mu_a * mu_a
    var_b = _valid_filter(b * b, g) - mu_b * mu_b
    cov = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range=1.0):
    """Mean SSIM of two 2-D images."""
    return float(ssim_map(a, b, data_range).mean())


def ssim_batch(a, b, side=28, data_range=1.0):
    """Row-wise SSIM for two stacks of flattened ``side x side`` images."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, side, side)
    b = np.asarray(b, dtype=np.float64).reshape(-1, side, side)
    return ssim_map(a, b, data_range).mean(axis=(-2, -1))
