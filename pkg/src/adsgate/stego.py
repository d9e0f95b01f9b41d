"""Toy coverless diffusion steganography: carrier = G(message, key) and its
extractor.

sign_codec hides codeword bits in the signs of a keyed Gaussian latent and
renders it with deterministic DDIM sampling; the decoder inverts the
sampler and reads the signs back. stream_codec picks, at every stochastic
sampling step, which of two keyed noise fields to inject; the decoder
re-derives the injected noise by inversion and correlates it with both
candidates.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import determinism as det
from .diffusion import (
    BlurDenoiser,
    Denoiser,
    NoiseSchedule,
    check_image,
    clamp_signed,
    ddim_invert,
    ddim_sample,
    make_geometric_schedule,
    make_schedule,
    x0_from_eps,
)

SIGN = "sign_codec"
STREAM = "stream_codec"

# sub-stream labels under one (key, stream_id) address
SUB_LATENT = 0
SUB_NOISE_A = 1
SUB_NOISE_B = 2
SUB_PAYLOAD = 3


class CapacityError(ValueError):
    """Payload does not fit the carrier."""


@dataclass(frozen=True)
class EccConfig:
    scheme: str = "repetition"
    repetition_factor: int = 3

    def __post_init__(self):
        if self.scheme not in ("none", "repetition"):
            raise ValueError(f"unknown ECC scheme {self.scheme!r}")
        k = self.repetition_factor
        if k < 1 or k % 2 == 0:
            raise ValueError("repetition factor must be an odd positive integer")

    @property
    def factor(self) -> int:
        return 1 if self.scheme == "none" else self.repetition_factor


def ecc_encode(bits, cfg: EccConfig) -> np.ndarray:
    return np.repeat(np.asarray(bits, dtype=np.uint8), cfg.factor)


def ecc_decode(bits, cfg: EccConfig) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    k = cfg.factor
    if bits.size % k:
        raise ValueError(f"codeword length {bits.size} not divisible by {k}")
    votes = bits.reshape(-1, k).sum(axis=1, dtype=np.int64)
    return (2 * votes > k).astype(np.uint8)


def sign_codec_defaults():
    """Schedule and denoiser the sign codec is calibrated with.

    Geometric betas from 1e-10 to 0.1 over T = 10 with a sigma = 0.55 blur
    denoiser: early steps are nearly noise free, so inversion has a large
    gain on fine detail while the fixed point still converges.
    """
    sched = make_geometric_schedule(10, 1e-10, 0.1)
    return sched, BlurDenoiser(sched, sigma=0.55)


def stream_codec_defaults(T: int = 32):
    sched = make_schedule(T, 1e-4, 0.02)
    return sched, BlurDenoiser(sched, sigma=0.3)


@dataclass(frozen=True)
class CodecConfig:
    kind: str
    key: det.StreamKey
    schedule: NoiseSchedule
    denoiser: Denoiser
    carrier_size: tuple = (64, 64)
    ecc: EccConfig = field(default_factory=EccConfig)
    # decoder-side inversion controls
    refine_iters: int = 2000
    tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in (SIGN, STREAM):
            raise ValueError(f"unknown codec kind {self.kind!r}")
        h, w = self.carrier_size
        if h < 8 or w < 8:
            raise ValueError("carrier must be at least 8x8")

    @property
    def capacity(self) -> int:
        h, w = self.carrier_size
        if self.kind == SIGN:
            return h * w * 3
        return self.schedule.T - 1

    def with_key(self, key: det.StreamKey) -> "CodecConfig":
        return replace(self, key=key)


def make_codec(kind: str, key, carrier_size=(64, 64), ecc: EccConfig = None, T: int = None) -> CodecConfig:
    """CodecConfig with the calibrated schedule and denoiser for `kind`."""
    if isinstance(key, (str, bytes)):
        key = det.StreamKey(det.key_from_text(key))
    if kind == SIGN:
        sched, den = sign_codec_defaults() if T is None else _sign_with_T(T)
    else:
        sched, den = stream_codec_defaults(32 if T is None else T)
    return CodecConfig(kind, key, sched, den, tuple(carrier_size), ecc or EccConfig())


def _sign_with_T(T):
    sched = make_geometric_schedule(T, 1e-10, 0.1)
    return sched, BlurDenoiser(sched, sigma=0.55)


def substream(key: det.StreamKey, sub: int) -> det.StreamKey:
    # two low bits name the sub-stream, the rest carry the caller's stream id
    return key.with_stream(((key.stream_id << 2) | sub) & det.MASK64)


def random_payload(key: det.StreamKey, n_bits: int) -> np.ndarray:
    """Keyed test payload for the image addressed by key.stream_id."""
    return det.bits(substream(key, SUB_PAYLOAD), n_bits)[0]


def _codeword(payload, cfg: CodecConfig) -> np.ndarray:
    bits = np.asarray(payload, dtype=np.uint8).ravel()
    if bits.size == 0:
        raise ValueError("payload must contain at least one bit")
    if np.any(bits > 1):
        raise ValueError("payload must be a bit sequence")
    n = bits.size * cfg.ecc.factor
    if n > cfg.capacity:
        raise CapacityError(f"{n} codeword bits exceed capacity {cfg.capacity}")
    return ecc_encode(bits, cfg.ecc)


def _payload_length(n_bits, cfg: CodecConfig) -> int:
    n = int(n_bits) * cfg.ecc.factor
    if n_bits < 1 or n > cfg.capacity:
        raise CapacityError(f"{n} codeword bits exceed capacity {cfg.capacity}")
    return n


# ---------------------------------------------------------------- sign codec

def _sign_layout(cfg: CodecConfig, n: int):
    """Keyed base latent and the first n permuted positions (flat indices)."""
    h, w = cfg.carrier_size
    key = substream(cfg.key, SUB_LATENT)
    latent, key = det.gaussian_field(key, h, w, 3)
    perm, _ = det.permutation(key, h * w * 3)
    return latent, perm[:n]


def _sign_positions(cfg: CodecConfig, n: int) -> np.ndarray:
    # skip the 2*h*w*3 latent draws without generating them
    h, w = cfg.carrier_size
    key = substream(cfg.key, SUB_LATENT).advanced(2 * h * w * 3)
    perm, _ = det.permutation(key, h * w * 3)
    return perm[:n]


def encode_sign(payload, cfg: CodecConfig) -> np.ndarray:
    code = _codeword(payload, cfg)
    latent, pos = _sign_layout(cfg, code.size)
    flat = latent.reshape(-1)
    flat[pos] = np.abs(flat[pos]) * np.where(code == 1, 1.0, -1.0)
    return clamp_signed(ddim_sample(latent, cfg.denoiser, cfg.schedule))


@dataclass
class DecodeInfo:
    raw_bits: np.ndarray
    margins: np.ndarray
    inversion_residual: float
    converged: bool


def decode_sign(carrier, cfg: CodecConfig, n_bits: int):
    """Recover an n_bits payload. Returns (bits, DecodeInfo)."""
    carrier = check_image(carrier, "carrier")
    if carrier.shape[:2] != tuple(cfg.carrier_size):
        raise ValueError(f"carrier is {carrier.shape[:2]}, codec expects {cfg.carrier_size}")
    n = _payload_length(n_bits, cfg)
    xT, info = ddim_invert(carrier, cfg.denoiser, cfg.schedule, cfg.refine_iters,
                           tol=cfg.tol, return_info=True)
    vals = xT.reshape(-1)[_sign_positions(cfg, n)]
    raw = (vals > 0).astype(np.uint8)
    out = ecc_decode(raw, cfg.ecc)
    return out, DecodeInfo(raw, np.abs(vals), info.max_residual, info.converged)


# -------------------------------------------------------------- stream codec

def _sigma(sched: NoiseSchedule, t: int) -> float:
    ab, ab_prev = sched.abar(t), sched.abar(t - 1)
    return float(np.sqrt((1 - ab_prev) / (1 - ab)) * np.sqrt(1 - ab / ab_prev))


def _mean_step(x_t, t, eps_hat, sched, sigma):
    """Deterministic part of the stochastic DDIM step t -> t - 1."""
    ab_prev = sched.abar(t - 1)
    x0_hat = x0_from_eps(x_t, eps_hat, t, sched)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1 - ab_prev - sigma**2) * eps_hat


def _mean_step_inverse(y, t, eps_hat, sched, sigma):
    ab, ab_prev = sched.abar(t), sched.abar(t - 1)
    return np.sqrt(ab / ab_prev) * (y - np.sqrt(1 - ab_prev - sigma**2) * eps_hat) + np.sqrt(1 - ab) * eps_hat


def _candidates(cfg: CodecConfig, m: int):
    """Keyed noise pair for embedding slot m (step t = T - m)."""
    h, w = cfg.carrier_size
    per = 2 * h * w * 3
    za, _ = det.gaussian_field(substream(cfg.key, SUB_NOISE_A).advanced(m * per), h, w, 3)
    zb, _ = det.gaussian_field(substream(cfg.key, SUB_NOISE_B).advanced(m * per), h, w, 3)
    return za, zb


def _stream_latent(cfg: CodecConfig):
    h, w = cfg.carrier_size
    return det.gaussian_field(substream(cfg.key, SUB_LATENT), h, w, 3)[0]


def encode_stream(payload, cfg: CodecConfig) -> np.ndarray:
    code = _codeword(payload, cfg)
    sched, den = cfg.schedule, cfg.denoiser
    x = _stream_latent(cfg)
    for m, t in enumerate(range(sched.T, 0, -1)):
        eps_hat = den.predict(x, t)
        if m < code.size:
            sigma = _sigma(sched, t)
            z = _candidates(cfg, m)[int(code[m])]
            x = _mean_step(x, t, eps_hat, sched, sigma) + sigma * z
        else:
            x = _mean_step(x, t, eps_hat, sched, 0.0)
    return clamp_signed(x)


def decode_stream(carrier, cfg: CodecConfig, n_bits: int, swap: bool = False):
    """Recover an n_bits payload. Returns (bits, DecodeInfo).

    Backward pass: invert the carrier level by level, taking the mid-point
    of the two candidates as the injected noise. Forward pass: from the
    keyed start latent, estimate the injected noise at each step as
    (x~_{t-1} - mean(x_t)) / sigma_t, pick the candidate with the larger
    inner product, and continue from the re-synthesised state. `swap`
    exchanges the candidates, which must flip every raw bit.
    """
    carrier = check_image(carrier, "carrier")
    if carrier.shape[:2] != tuple(cfg.carrier_size):
        raise ValueError(f"carrier is {carrier.shape[:2]}, codec expects {cfg.carrier_size}")
    n = _payload_length(n_bits, cfg)
    sched, den = cfg.schedule, cfg.denoiser
    T = sched.T
    pairs = [_candidates(cfg, m) for m in range(n)]
    if swap:
        pairs = [(b, a) for a, b in pairs]

    # backward: levels[s] estimates x_s, s = 0..T-1 is all that is needed
    levels = [np.asarray(carrier, dtype=np.float64)]
    worst = 0.0
    for s in range(1, T):
        m = T - s
        sigma = _sigma(sched, s) if m < n else 0.0
        y = levels[-1] - (sigma * 0.5 * (pairs[m][0] + pairs[m][1]) if m < n else 0.0)
        x = _mean_step_inverse(y, s, den.predict(levels[-1], s), sched, sigma)
        for _ in range(cfg.refine_iters):
            x_new = _mean_step_inverse(y, s, den.predict(x, s), sched, sigma)
            change = np.max(np.abs(x_new - x))
            x = x_new
            if change <= cfg.tol:
                break
        worst = max(worst, float(np.max(np.abs(_mean_step_inverse(y, s, den.predict(x, s), sched, sigma) - x))))
        levels.append(x)

    raw = np.zeros(n, dtype=np.uint8)
    margins = np.zeros(n)
    x = _stream_latent(cfg)
    for m in range(n):
        t = T - m
        sigma = _sigma(sched, t)
        mu = _mean_step(x, t, den.predict(x, t), sched, sigma)
        z_hat = (levels[t - 1] - mu) / sigma
        c0 = float(np.sum(z_hat * pairs[m][0]))
        c1 = float(np.sum(z_hat * pairs[m][1]))
        bit = int(c1 > c0)
        raw[m] = bit
        margins[m] = abs(c1 - c0)
        x = mu + sigma * pairs[m][bit]
    out = ecc_decode(raw, cfg.ecc)
    return out, DecodeInfo(raw, margins, worst, worst <= 1e-3)


def encode(payload, cfg: CodecConfig) -> np.ndarray:
    return encode_sign(payload, cfg) if cfg.kind == SIGN else encode_stream(payload, cfg)


def decode(carrier, cfg: CodecConfig, n_bits: int):
    if cfg.kind == SIGN:
        return decode_sign(carrier, cfg, n_bits)
    return decode_stream(carrier, cfg, n_bits)
