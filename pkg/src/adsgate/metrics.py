"""Utility metrics (PSNR, SSIM) and security metrics (BER, success, failure rate).

Signed images are compared on the [0, 1] scale via (x + 1) / 2.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_THRESHOLD = 0.48
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def to_unit(x) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """10 log10(1 / MSE) on the unit scale; inf for identical images."""
    a, b = _same_shape(a, b)
    mse = float(np.mean((to_unit(a) - to_unit(b)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window_1d(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-r**2 / (2.0 * sigma**2))
    return g / g.sum()


def _local_mean(x, g):
    # separable Gaussian average, then keep only windows fully inside the image
    half = len(g) // 2
    out = ndimage.correlate1d(x, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[half:x.shape[0] - half, half:x.shape[1] - half]


def ssim_map(a, b) -> np.ndarray:
    """Per-window, per-channel SSIM on valid 11x11 Gaussian windows."""
    a, b = _same_shape(a, b)
    if a.shape[0] < SSIM_WIN or a.shape[1] < SSIM_WIN:
        raise ValueError(f"SSIM needs images of at least {SSIM_WIN}x{SSIM_WIN}")
    x = to_unit(a)
    y = to_unit(b)
    g = gaussian_window_1d()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mx = _local_mean(x, g)
    my = _local_mean(y, g)
    sxx = _local_mean(x * x, g) - mx * mx
    syy = _local_mean(y * y, g) - my * my
    sxy = _local_mean(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b) -> float:
    return float(np.mean(ssim_map(a, b)))


def ber(sent, received) -> float:
    sent = np.asarray(sent).ravel()
    received = np.asarray(received).ravel()
    if sent.size != received.size:
        raise ValueError(f"payload length mismatch: {sent.size} vs {received.size}")
    if sent.size == 0:
        raise ValueError("empty payload")
    return float(np.mean(sent != received))


def decode_success(ber_value: float, threshold: float = DEFAULT_THRESHOLD) -> bool:
    if not 0.0 <= ber_value <= 1.0:
        raise ValueError("BER must lie in [0, 1]")
    return bool(ber_value <= threshold)


def failure_rate(successes) -> float:
    successes = list(successes)
    if not successes:
        raise ValueError("failure rate of an empty list")
    return 100.0 * sum(1 for s in successes if not s) / len(successes)


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    ber: float = None
    threshold: float = DEFAULT_THRESHOLD

    @property
    def success(self) -> bool:
        return self.ber is not None and decode_success(self.ber, self.threshold)


def evaluate(reference, sanitized, sent=None, received=None,
             threshold: float = DEFAULT_THRESHOLD) -> MetricReport:
    b = ber(sent, received) if sent is not None else None
    return MetricReport(psnr(reference, sanitized), ssim(reference, sanitized), b, threshold)
