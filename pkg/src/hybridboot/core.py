"""Deterministic random streams and the dense tensor carrier.

Tensors are plain C-order float64 numpy arrays (NCHW for images, NF for
flat data). Randomness comes from numpy's Philox counter-based generator
keyed by (seed, stream key tuple): identical keys give identical draw
sequences on every platform, and distinct keys give statistically
independent streams, so each (layer, epoch, example) context can own a
stream without shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

# Stream-domain constants so unrelated subsystems never collide on a key.
DOMAIN_INIT = 1
DOMAIN_SHUFFLE = 2
DOMAIN_CORRUPT = 3
DOMAIN_SUBSET = 4
DOMAIN_EXPAND = 5
DOMAIN_CHECK = 6
DOMAIN_GRADNORM = 7

_U64 = 1 << 64


@dataclass
class Rng:
    """A single-owner deterministic stream. Never share across workers;
    derive children with :meth:`child` up front instead."""

    seed: int
    key: tuple[int, ...]
    generator: np.random.Generator = field(repr=False)

    @property
    def stream_id(self) -> int:
        return self.key[-1] if self.key else 0

    def child(self, *subkeys: int) -> "Rng":
        """Derive an independent stream labelled by ``subkeys``."""
        return _make(self.seed, self.key + tuple(int(k) for k in subkeys))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform draws on [0, 1), float64."""
        return self.generator.random(size)


def _make(seed: int, key: tuple[int, ...]) -> Rng:
    ss = np.random.SeedSequence(entropy=seed % _U64, spawn_key=key)
    return Rng(seed=seed, key=key, generator=np.random.Generator(np.random.Philox(ss)))


def rng_new(seed: int, stream_id: int = 0) -> Rng:
    """Create the root generator for stream ``stream_id`` under ``seed``."""
    return _make(int(seed), (int(stream_id) % _U64,))


def rng_uniform(rng: Rng) -> float:
    """One uniform draw on the half-open interval [0, 1)."""
    return float(rng.generator.random())


def as_tensor(values) -> np.ndarray:
    """Coerce to a C-order float64 array, the package-wide tensor form."""
    return np.ascontiguousarray(values, dtype=np.float64)


def require_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{what} contains non-finite values")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D tensors, shape [a rows, b cols]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b
