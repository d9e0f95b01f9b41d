"""Noise schedules, forward noising, one-step reverse estimate, DDIM sampling
and inversion, and the denoiser interface with exact vector-Jacobian products.

Images are float64 arrays of shape (H, W, 3) on the signed range [-1, 1].
Step indices are 1-based: t = 1..T, with alpha_bar_0 taken as 1.
"""

import warnings
from dataclasses import dataclass

import numpy as np

MIN_SIDE = 8
INVERSION_RESIDUAL_LIMIT = 1e-3


class InversionWarning(RuntimeWarning):
    """Fixed-point inversion left a residual above the reporting limit."""


def check_image(x, name: str = "image") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"{name} must be H x W x 3, got shape {x.shape}")
    if x.shape[0] < MIN_SIDE or x.shape[1] < MIN_SIDE:
        raise ValueError(f"{name} must be at least {MIN_SIDE}x{MIN_SIDE}, got {x.shape[:2]}")
    return x


def clamp_signed(x) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


@dataclass(frozen=True)
class NoiseSchedule:
    alpha: tuple
    alpha_bar: tuple

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar)
        if len(self.alpha) != len(self.alpha_bar) or len(self.alpha) == 0:
            raise ValueError("alpha and alpha_bar must be non-empty and of equal length")
        if not (np.all(ab > 0) and np.all(ab < 1) and np.all(np.diff(ab) < 0)):
            raise ValueError("alpha_bar must lie in (0, 1) and strictly decrease")

    @property
    def T(self) -> int:
        return len(self.alpha)

    def abar(self, t: int) -> float:
        """alpha_bar_t with alpha_bar_0 = 1."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.T:
            raise ValueError(f"step {t} outside 1..{self.T}")
        return self.alpha_bar[t - 1]


def schedule_from_alphas(alphas) -> NoiseSchedule:
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size == 0 or np.any(alphas <= 0) or np.any(alphas >= 1):
        raise ValueError("alphas must be a non-empty sequence in (0, 1)")
    return NoiseSchedule(tuple(alphas.tolist()), tuple(np.cumprod(alphas).tolist()))


def _check_betas(T, beta_start, beta_end):
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError("need 0 < beta_start <= beta_end < 1")


def make_schedule(T: int = 10, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule, alpha_s = 1 - beta_s."""
    _check_betas(T, beta_start, beta_end)
    return schedule_from_alphas(1.0 - np.linspace(beta_start, beta_end, T))


def make_geometric_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Betas spaced geometrically, so early steps add very little noise."""
    _check_betas(T, beta_start, beta_end)
    return schedule_from_alphas(1.0 - np.geomspace(beta_start, beta_end, T))


class Denoiser:
    """Noise predictor eps_theta(x_t, t) with an exact transposed-Jacobian product."""

    schedule: NoiseSchedule

    def predict(self, x_t, t: int) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, x_t, t: int, cotangent) -> np.ndarray:
        raise NotImplementedError


class ZeroDenoiser(Denoiser):
    def __init__(self, schedule: NoiseSchedule = None):
        self.schedule = schedule

    def predict(self, x_t, t):
        return np.zeros_like(x_t, dtype=np.float64)

    def vjp(self, x_t, t, cotangent):
        return np.zeros_like(cotangent, dtype=np.float64)


def wrapped_gaussian_1d(n: int, sigma: float) -> np.ndarray:
    """Periodic 1-D Gaussian taps indexed by offset 0..n-1, truncated at ceil(4 sigma)."""
    dist = np.minimum(np.arange(n), n - np.arange(n)).astype(np.float64)
    k = np.exp(-dist**2 / (2.0 * sigma**2))
    k[dist > np.ceil(4.0 * sigma)] = 0.0
    return k / k.sum()


class BlurDenoiser(Denoiser):
    """Analytic denoiser whose clean estimate is a circular Gaussian blur.

    predict(x, t) = (x - sqrt(abar_t) S x) / sqrt(1 - abar_t). S is a
    symmetric periodic convolution, hence self-adjoint, and the VJP is the
    same linear map applied to the cotangent.
    """

    def __init__(self, schedule: NoiseSchedule, sigma: float = 0.3):
        if not sigma > 0:
            raise ValueError("blur width must be positive")
        self.schedule = schedule
        self.sigma = float(sigma)
        self._spectra = {}

    def spectrum(self, h: int, w: int) -> np.ndarray:
        """Real transfer function of S on the rfft2 grid, shape (h, w//2 + 1)."""
        key = (h, w)
        if key not in self._spectra:
            kh = np.fft.fft(wrapped_gaussian_1d(h, self.sigma)).real
            kw = np.fft.rfft(wrapped_gaussian_1d(w, self.sigma)).real
            self._spectra[key] = np.outer(kh, kw)
        return self._spectra[key]

    def blur(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        h, w = x.shape[:2]
        f = np.fft.rfft2(x, axes=(0, 1))
        f *= self.spectrum(h, w)[:, :, None]
        return np.fft.irfft2(f, s=(h, w), axes=(0, 1))

    def _affine(self, u, t):
        ab = self.schedule.abar(t)
        return (u - np.sqrt(ab) * self.blur(u)) / np.sqrt(1.0 - ab)

    def predict(self, x_t, t):
        return self._affine(x_t, t)

    def vjp(self, x_t, t, cotangent):
        return self._affine(cotangent, t)


def forward_step(x0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, unclamped."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape and eps.ndim != 0 and x0.ndim != 0:
        raise ValueError(f"noise shape {eps.shape} does not match image shape {x0.shape}")
    ab = sched.abar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def x0_from_eps(x_t, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.abar(t)
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def reverse_estimate(x_t, t: int, den: Denoiser, sched: NoiseSchedule) -> np.ndarray:
    """g(x_t, t) = (x_t - sqrt(1 - abar_t) eps_theta(x_t, t)) / sqrt(abar_t), unclamped."""
    return x0_from_eps(x_t, den.predict(x_t, t), t, sched)


def ddim_step(x_t, t: int, eps_hat, sched: NoiseSchedule) -> np.ndarray:
    """Deterministic DDIM move from step t to t - 1 given the noise estimate."""
    x0_hat = x0_from_eps(x_t, eps_hat, t, sched)
    ab_prev = sched.abar(t - 1)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat


def ddim_step_inverse(x_prev, t: int, eps_hat, sched: NoiseSchedule) -> np.ndarray:
    """Solve ddim_step(x_t, t, eps_hat) = x_prev for x_t with eps_hat held fixed."""
    ab = sched.abar(t)
    ab_prev = sched.abar(t - 1)
    return np.sqrt(ab / ab_prev) * (x_prev - np.sqrt(1.0 - ab_prev) * eps_hat) + np.sqrt(1.0 - ab) * eps_hat


def ddim_sample(x_T, den: Denoiser, sched: NoiseSchedule) -> np.ndarray:
    """Run t = T..1 deterministically; the last step returns the clean estimate."""
    x = np.asarray(x_T, dtype=np.float64)
    for t in range(sched.T, 0, -1):
        x = ddim_step(x, t, den.predict(x, t), sched)
    return x


@dataclass
class InversionInfo:
    residuals: list  # final fixed-point residual (max abs) at each step
    iterations: list  # corrections applied at each step

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0

    @property
    def converged(self) -> bool:
        return self.max_residual <= INVERSION_RESIDUAL_LIMIT


def ddim_invert(x0, den: Denoiser, sched: NoiseSchedule, refine_iters: int = 3,
                tol: float = None, return_info: bool = False):
    """Map an image back to the step-T latent along the DDIM trajectory.

    Each step starts from eps_theta(x_{t-1}, t) as a stand-in for
    eps_theta(x_t, t), then applies up to `refine_iters` fixed-point
    corrections x_t <- step_inverse(x_{t-1}, eps_theta(x_t, t)). With `tol`
    set, a step stops early once a correction moves x_t by at most `tol`.

    A residual above 1e-3 after the corrections raises an InversionWarning;
    pass return_info=True to get the per-step residuals as well.
    """
    if refine_iters < 0:
        raise ValueError("refine_iters must be non-negative")
    x = np.asarray(x0, dtype=np.float64)
    residuals = []
    iterations = []
    for t in range(1, sched.T + 1):
        x_prev = x
        x = ddim_step_inverse(x_prev, t, den.predict(x_prev, t), sched)
        done = 0
        for _ in range(refine_iters):
            x_new = ddim_step_inverse(x_prev, t, den.predict(x, t), sched)
            change = np.max(np.abs(x_new - x))
            x = x_new
            done += 1
            if tol is not None and change <= tol:
                break
        res = np.max(np.abs(ddim_step_inverse(x_prev, t, den.predict(x, t), sched) - x))
        residuals.append(float(res))
        iterations.append(done)
    info = InversionInfo(residuals, iterations)
    if not info.converged:
        warnings.warn(f"DDIM inversion residual {info.max_residual:.3g} exceeds "
                      f"{INVERSION_RESIDUAL_LIMIT:g}", InversionWarning, stacklevel=2)
    if return_info:
        return x, info
    return x
