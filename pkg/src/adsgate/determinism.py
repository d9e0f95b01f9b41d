"""Keyed counter-based random streams (splitmix64 + FNV-1a seeding).

A stream is addressed by (key_bytes, stream_id, counter). Output number
`counter` is splitmix64's finaliser applied to seed0 + (counter + 1) * GAMMA,
which is the value the classic sequential splitmix64 generator returns
after `counter + 1` steps from state seed0. Because every output depends
only on its address, batches are generated in one vectorised call.
"""

from dataclasses import dataclass, replace

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
U64_MAX = MASK64

_TWO_NEG53 = 2.0 ** -53


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def mix64(z: int) -> int:
    """splitmix64 finaliser on a Python int."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2^64, which is what splitmix64 wants
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def key_from_text(text) -> bytes:
    """CLI key material: "hex:..." is decoded as hex, anything else as UTF-8."""
    if isinstance(text, bytes):
        return text
    if text.startswith("hex:"):
        return bytes.fromhex(text[4:])
    return text.encode("utf-8")


@dataclass(frozen=True)
class StreamKey:
    key_bytes: bytes
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        if isinstance(self.key_bytes, str):
            object.__setattr__(self, "key_bytes", key_from_text(self.key_bytes))
        if not 0 <= self.stream_id <= U64_MAX:
            raise ValueError("stream_id must be an unsigned 64-bit value")
        if not 0 <= self.counter <= U64_MAX:
            raise ValueError("counter must be an unsigned 64-bit value")

    @property
    def seed0(self) -> int:
        # one splitmix64 step from state fnv ^ stream_id
        return mix64((fnv1a64(self.key_bytes) ^ self.stream_id) + GAMMA & MASK64)

    def with_stream(self, stream_id: int) -> "StreamKey":
        return replace(self, stream_id=stream_id, counter=0)

    def advanced(self, n: int) -> "StreamKey":
        return replace(self, counter=_check_advance(self.counter, n))


def _check_advance(counter: int, n: int) -> int:
    if n < 0:
        raise ValueError("cannot rewind a stream")
    # drawing at counter 2^64 - 1 would need counter 2^64: refuse, never wrap
    if counter + n > U64_MAX:
        raise OverflowError("stream counter would pass 2^64 - 1")
    return counter + n


def splitmix64_outputs(seed: int, start: int, n: int) -> np.ndarray:
    """Outputs start .. start+n-1 of sequential splitmix64 seeded with `seed`."""
    # state after m + 1 steps is seed + (m + 1) * GAMMA modulo 2^64
    steps = np.arange(n, dtype=np.uint64) + np.uint64((start + 1) & MASK64)
    z = np.uint64(seed) + steps * np.uint64(GAMMA)
    return _mix64_array(z)


def u64_block(s: StreamKey, n: int):
    """The next n u64 outputs of the stream, as a uint64 array, plus the advanced key."""
    n = int(n)
    end = _check_advance(s.counter, n)
    return splitmix64_outputs(s.seed0, s.counter, n), replace(s, counter=end)


def next_u64(s: StreamKey):
    out, s2 = u64_block(s, 1)
    return int(out[0]), s2


def _uniform_open0(v: np.ndarray) -> np.ndarray:
    # 53-bit grid value in [0, 1) mapped to (0, 1] so log() is always finite
    return 1.0 - (v >> np.uint64(11)).astype(np.float64) * _TWO_NEG53


def uniform_block(s: StreamKey, n: int):
    v, s2 = u64_block(s, n)
    return _uniform_open0(v), s2


def gaussian_block(s: StreamKey, n: int):
    """n standard normals via cosine-branch Box-Muller; consumes 2n draws."""
    u, s2 = uniform_block(s, 2 * int(n))
    u1 = u[0::2]
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2), s2


def next_gaussian(s: StreamKey):
    z, s2 = gaussian_block(s, 1)
    return float(z[0]), s2


def gaussian_field(s: StreamKey, h: int, w: int, c: int = 3):
    """(h, w, c) field of standard normals in row-major order; 2*h*w*c draws."""
    if h <= 0 or w <= 0 or c <= 0:
        raise ValueError("field dimensions must be positive")
    z, s2 = gaussian_block(s, h * w * c)
    return z.reshape(h, w, c), s2


def permutation(s: StreamKey, n: int):
    """Keyed permutation of range(n): stable argsort of n u64 draws."""
    v, s2 = u64_block(s, n)
    return np.argsort(v, kind="stable"), s2


def bits(s: StreamKey, n: int):
    """n pseudorandom bits (top bit of each draw); n draws."""
    v, s2 = u64_block(s, n)
    return (v >> np.uint64(63)).astype(np.uint8), s2
