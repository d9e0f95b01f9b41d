"""Gateway sanitisation of diffusion-steganography carriers.

Modules: hypercomplex (quaternion algebras), determinism (keyed streams),
diffusion (schedules, denoisers, DDIM), stego (toy codecs), sanitize (ADS
and baselines), metrics (PSNR, SSIM, BER), harness and cli (experiments).
"""

__version__ = "0.1.0"
