"""Counter-based random numbers for reproducible Brownian increments.

Every increment is a pure function of ``(seed, path, channel code, step)``
evaluated with the Philox4x32-10 block cipher, so ensembles can be split,
reordered or run in parallel without changing a single bit of output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function, vectorised over leading axes.

    ``counter`` has shape ``(..., 4)`` and ``key`` shape ``(..., 2)`` (both
    broadcast). Returns uint32 words of shape ``(..., 4)``.
    """
    ctr = np.asarray(counter, dtype=np.uint64) & _MASK32
    k = np.asarray(key, dtype=np.uint64) & _MASK32
    c0, c1, c2, c3 = (ctr[..., i] for i in range(4))
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + np.uint64(_W0)) & _MASK32
            k1 = (k1 + np.uint64(_W1)) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    out = np.stack(np.broadcast_arrays(c0, c1, c2, c3), axis=-1)
    return out.astype(np.uint32)


def _unit_open(hi, lo) -> np.ndarray:
    # 53-bit uniform in the open interval (0, 1)
    bits = (hi.astype(np.uint64) >> np.uint64(5)) * np.uint64(1 << 26) + (
        lo.astype(np.uint64) >> np.uint64(6)
    )
    return (bits.astype(np.float64) + 0.5) / float(1 << 53)


def standard_normals(seed: int, path, code, step) -> np.ndarray:
    """Standard normal draws keyed by ``(seed, path, code, step)``.

    ``path``, ``code`` and ``step`` are broadcast against each other.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    path, code, step = np.broadcast_arrays(
        np.asarray(path, dtype=np.uint64),
        np.asarray(code, dtype=np.uint64),
        np.asarray(step, dtype=np.uint64),
    )
    counter = np.stack(
        [step & _MASK32, step >> _SHIFT32, code & _MASK32, path & _MASK32], axis=-1
    )
    key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)
    w = philox4x32(counter, key)
    u1 = _unit_open(w[..., 0], w[..., 1])
    u2 = _unit_open(w[..., 2], w[..., 3])
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class BrownianDriver:
    """Stateless source of Brownian increments over a set of channels.

    ``codes`` are the global channel identifiers (see
    :meth:`wavenoise.noise.NoiseBasis.channel_codes`); two bases that share
    a channel get the same increments for it.
    """

    seed: int
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def increments(self, codes, step: int, paths=(0,)) -> np.ndarray:
        """Increments of shape ``(len(paths), len(codes))`` for one step."""
        codes = np.asarray(codes, dtype=np.uint64)
        paths = np.asarray(paths, dtype=np.uint64)
        if codes.size == 0:
            return np.zeros((paths.size, 0))
        z = standard_normals(self.seed, paths[:, None], codes[None, :], step)
        return np.sqrt(self.dt) * z

    def sample_increments(self, codes, step: int, path: int = 0) -> dict:
        """Map channel code -> increment for a single path and step."""
        row = self.increments(codes, step, (path,))[0]
        return {int(c): float(x) for c, x in zip(codes, row)}
