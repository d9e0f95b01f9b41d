"""Adversarial diffusion sanitisation and the baseline gateway transforms.

ADS noises the image once, takes a single gradient-ascent step on the
proxy's reconstruction error in diffusion space, and maps back with the
proxy's one-step clean estimate. Two update rules are provided: a signed
(l_inf) step and a per-pixel RGB-normalised step whose pixel norm is the
norm of the pure quaternion (0, G_r, G_g, G_b).
"""

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from . import determinism as det
from .diffusion import (
    BlurDenoiser,
    Denoiser,
    NoiseSchedule,
    check_image,
    clamp_signed,
    forward_step,
    make_schedule,
    x0_from_eps,
)
from .hypercomplex import image_to_quat, quat_norm

FGSM = "fgsm"
QDIR = "qdir"


@dataclass(frozen=True)
class AdsConfig:
    schedule: NoiseSchedule
    denoiser: Denoiser
    noise_stream: det.StreamKey
    update: str = FGSM
    t: int = 1
    eps_adv: float = 0.01
    delta: float = 1e-8

    def __post_init__(self):
        if self.update not in (FGSM, QDIR):
            raise ValueError(f"unknown update rule {self.update!r}")
        if not 1 <= self.t <= self.schedule.T:
            raise ValueError(f"t must lie in 1..{self.schedule.T}")
        if not self.eps_adv >= 0:
            raise ValueError("eps_adv must be non-negative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def default_proxy(T: int = 10, sigma: float = 0.3):
    """Proxy schedule (linear betas 1e-4 .. 0.02) and blur denoiser."""
    sched = make_schedule(T, 1e-4, 0.02)
    return sched, BlurDenoiser(sched, sigma=sigma)


def make_ads(update=FGSM, eps_adv=0.01, key=b"ads", stream_id=0, t=1, delta=1e-8,
             proxy=None) -> AdsConfig:
    sched, den = proxy if proxy is not None else default_proxy()
    return AdsConfig(sched, den, det.StreamKey(det.key_from_text(key), stream_id),
                     update, t, eps_adv, delta)


def ads_loss_from_estimate(g, x0) -> float:
    return float(np.mean((np.asarray(g) - np.asarray(x0)) ** 2))


def ads_loss(x_t, x0, cfg: AdsConfig) -> float:
    """Mean squared error (1/3HW) ||g(x_t, t) - x0||^2 of the proxy's clean estimate."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != np.shape(x0):
        raise ValueError("x_t and x0 must have the same shape")
    g = x0_from_eps(x_t, cfg.denoiser.predict(x_t, cfg.t), cfg.t, cfg.schedule)
    return ads_loss_from_estimate(g, x0)


def _grad_from_residual(x_t, r, cfg: AdsConfig) -> np.ndarray:
    # dg/dx^T r = (r - sqrt(1 - abar) J_eps^T r) / sqrt(abar)
    ab = cfg.schedule.abar(cfg.t)
    jt_r = (r - np.sqrt(1.0 - ab) * cfg.denoiser.vjp(x_t, cfg.t, r)) / np.sqrt(ab)
    return (2.0 / r.size) * jt_r


def ads_grad(x_t, x0, cfg: AdsConfig) -> np.ndarray:
    """Gradient of ads_loss with respect to x_t through the frozen proxy."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != np.shape(x0):
        raise ValueError("x_t and x0 must have the same shape")
    g = x0_from_eps(x_t, cfg.denoiser.predict(x_t, cfg.t), cfg.t, cfg.schedule)
    return _grad_from_residual(x_t, g - x0, cfg)


def fgsm_delta(G, eps_adv: float) -> np.ndarray:
    # np.sign(0) == 0: no movement where the loss is flat
    return eps_adv * np.sign(G)


def qdir_delta(G, eps_adv: float, delta: float = 1e-8) -> np.ndarray:
    """eps * G(u,v) / (||G(u,v)|| + delta) with the pure-quaternion pixel norm."""
    G = np.asarray(G, dtype=np.float64)
    norm = quat_norm(image_to_quat(G))
    return eps_adv * G / (norm[..., None] + delta)


def fgsm_update(x_t, G, eps_adv: float) -> np.ndarray:
    if np.shape(x_t) != np.shape(G):
        raise ValueError("x_t and G must have the same shape")
    return clamp_signed(x_t + fgsm_delta(G, eps_adv))


def qdir_update(x_t, G, eps_adv: float, delta: float = 1e-8) -> np.ndarray:
    if np.shape(x_t) != np.shape(G):
        raise ValueError("x_t and G must have the same shape")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return clamp_signed(x_t + qdir_delta(G, eps_adv, delta))


@dataclass
class AdsTrace:
    x_t: np.ndarray
    grad: np.ndarray
    x_adv: np.ndarray
    loss: float


def ads_sanitize(x0, cfg: AdsConfig, return_trace: bool = False):
    """Forward noise, one ascent step on the proxy loss, one-step reverse, clamp.

    Uses exactly two denoiser predictions and one VJP.
    """
    x0 = check_image(x0, "x0")
    h, w, c = x0.shape
    eps, _ = det.gaussian_field(cfg.noise_stream, h, w, c)
    x_t = forward_step(x0, cfg.t, eps, cfg.schedule)
    g = x0_from_eps(x_t, cfg.denoiser.predict(x_t, cfg.t), cfg.t, cfg.schedule)
    loss = ads_loss_from_estimate(g, x0)
    G = _grad_from_residual(x_t, g - x0, cfg)
    if cfg.update == FGSM:
        x_adv = fgsm_update(x_t, G, cfg.eps_adv)
    else:
        x_adv = qdir_update(x_t, G, cfg.eps_adv, cfg.delta)
    out = clamp_signed(x0_from_eps(x_adv, cfg.denoiser.predict(x_adv, cfg.t), cfg.t, cfg.schedule))
    if return_trace:
        return out, AdsTrace(x_t, G, x_adv, loss)
    return out


# ------------------------------------------------------------------ baselines

IDENTITY = "identity"
BLUR = "blur"
RESIZE = "resize"
DCT_QUANTIZE = "dct_quantize"
DIFFUSION_1STEP = "diffusion_1step"
BASELINES = (IDENTITY, BLUR, RESIZE, DCT_QUANTIZE, DIFFUSION_1STEP)

# standard JPEG luminance quantisation table (ITU-T T.81, Annex K)
JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = IDENTITY
    blur_sigma: float = 0.5
    resize_factor: Fraction = Fraction(7, 8)
    quality: int = 90
    ads: AdsConfig = None  # proxy and noise stream for diffusion_1step

    def __post_init__(self):
        if self.kind not in BASELINES:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.kind == BLUR and not self.blur_sigma > 0:
            raise ValueError("blur sigma must be positive")
        if self.kind == RESIZE and not 0 < self.resize_factor <= 1:
            raise ValueError("resize factor must lie in (0, 1]")
        if self.kind == DCT_QUANTIZE and not 1 <= int(self.quality) <= 100:
            raise ValueError("quality must lie in 1..100")
        if self.kind == DIFFUSION_1STEP and self.ads is None:
            raise ValueError("diffusion_1step needs an AdsConfig for its proxy and noise")


def gaussian_blur(x, sigma: float) -> np.ndarray:
    """Separable Gaussian, radius ceil(3 sigma), mirrored (reflect) edges."""
    radius = int(math.ceil(3.0 * sigma))
    taps = np.exp(-np.arange(-radius, radius + 1) ** 2 / (2.0 * sigma**2))
    taps /= taps.sum()
    out = ndimage.correlate1d(np.asarray(x, dtype=np.float64), taps, axis=0, mode="reflect")
    return ndimage.correlate1d(out, taps, axis=1, mode="reflect")


def bilinear_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Half-pixel-centred linear interpolation from n_in samples to n_out."""
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1.0 - frac
    m[np.arange(n_out), hi] += frac
    return m


def resize_bilinear(x, h_out: int, w_out: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rows = bilinear_matrix(h_out, x.shape[0])
    cols = bilinear_matrix(w_out, x.shape[1])
    out = np.tensordot(rows, x, axes=(1, 0))
    return np.moveaxis(np.tensordot(cols, out, axes=(1, 1)), 0, 1)


def resize_round_trip(x, factor=Fraction(7, 8)) -> np.ndarray:
    h, w = x.shape[:2]
    f = Fraction(factor)
    small = resize_bilinear(x, max(1, int(h * f)), max(1, int(w * f)))
    return resize_bilinear(small, h, w)


def quant_table(quality: int) -> np.ndarray:
    """JPEG luminance table under the usual quality scaling, entries in 1..255."""
    quality = int(quality)
    if not 1 <= quality <= 100:
        raise ValueError("quality must lie in 1..100")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    table = np.floor((JPEG_LUMA * scale + 50) / 100)
    return np.clip(table, 1, 255)


def dct_quantize(x, quality: int = 90) -> np.ndarray:
    """Blockwise 8x8 orthonormal DCT-II quantisation per channel on the 0..255 scale.

    Edge blocks are completed by edge replication and cropped afterwards.
    """
    x = np.asarray(x, dtype=np.float64)
    h, w, c = x.shape
    hp, wp = -(-h // 8) * 8, -(-w // 8) * 8
    v = (x + 1.0) * 127.5 - 128.0
    v = np.pad(v, ((0, hp - h), (0, wp - w), (0, 0)), mode="edge")
    blocks = v.reshape(hp // 8, 8, wp // 8, 8, c).transpose(0, 2, 4, 1, 3)
    coef = sfft.dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    q = quant_table(quality)
    coef = np.round(coef / q) * q
    back = sfft.idctn(coef, type=2, norm="ortho", axes=(-2, -1))
    v = back.transpose(0, 3, 1, 4, 2).reshape(hp, wp, c)[:h, :w]
    return (v + 128.0) / 127.5 - 1.0


def baseline_apply(x0, cfg: BaselineConfig) -> np.ndarray:
    x0 = check_image(x0, "x0")
    if cfg.kind == IDENTITY:
        return x0.copy()
    if cfg.kind == BLUR:
        out = gaussian_blur(x0, cfg.blur_sigma)
    elif cfg.kind == RESIZE:
        out = resize_round_trip(x0, cfg.resize_factor)
    elif cfg.kind == DCT_QUANTIZE:
        out = dct_quantize(x0, cfg.quality)
    else:
        out = ads_sanitize(x0, replace(cfg.ads, eps_adv=0.0))
    return clamp_signed(out)
