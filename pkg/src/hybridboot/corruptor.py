"""Corruption operators: dropout and the hybrid bootstrap.

Dropout zeroes a random subset of coordinates, optionally rescaling the
survivors by 1/(1-p). The hybrid bootstrap replaces the same subset with
the values of another training point, so every corrupted coordinate still
holds a value that occurs at that coordinate in the real data:

    dropout:  x~ = x * eps / (1 - p)        eps_i ~ Ber(1 - p)
    hybrid:   x' = x * eps + partner * (1 - eps)

Masks use 1 = keep own value, 0 = replace/zero, so p is the fraction
corrupted under both schemes. Levels are drawn per example per corruption
layer from Uniform[0, u), and partners inside a minibatch come from the
batch shifted by (layer ordinal + 1) positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Rng, as_tensor
from .errors import InsufficientBatchError, InvalidLevelError, ShapeError

SCHEMES = ("dropout", "hybrid")
STRUCTURES = ("elementwise", "spatial_grid", "channel")


@dataclass(frozen=True)
class CorruptionSpec:
    """What to corrupt and how much.

    ``u`` bounds the sampled level; ``fixed_p`` overrides sampling entirely.
    ``normalize`` applies the inverted-dropout 1/(1-p) scaling and is only
    meaningful for scheme="dropout" here.
    """

    scheme: str = "hybrid"
    structure: str = "elementwise"
    u: float = 0.45
    fixed_p: float | None = None
    normalize: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidLevelError(f"unknown scheme {self.scheme!r}")
        if self.structure not in STRUCTURES:
            raise InvalidLevelError(f"unknown mask structure {self.structure!r}")
        if not 0.0 <= self.u <= 1.0:
            raise InvalidLevelError(f"u must lie in [0, 1], got {self.u}")
        if self.fixed_p is not None and not 0.0 <= self.fixed_p <= 1.0:
            raise InvalidLevelError(f"fixed_p must lie in [0, 1], got {self.fixed_p}")


@dataclass
class CorruptionRecord:
    """Per-example draws retained from one corrupt_minibatch call.

    ``levels[i]`` is the p drawn for example i, ``masks[i]`` the realized
    keep-mask (broadcast to the example shape), ``partners[i]`` the batch
    row that supplied replacement values (hybrid only).
    """

    spec: CorruptionSpec
    layer_ordinal: int
    levels: np.ndarray
    masks: np.ndarray
    partners: np.ndarray | None


def sample_level(rng: Rng, spec: CorruptionSpec) -> float:
    """Draw the corruption level for one sample: fixed_p if set, else
    a fresh draw from Uniform[0, u)."""
    if spec.fixed_p is not None:
        return float(spec.fixed_p)
    if spec.u == 0.0:
        return 0.0
    return float(spec.u * rng.generator.random())


def sample_mask(rng: Rng, shape, p: float, structure: str = "elementwise") -> np.ndarray:
    """Sample a keep-mask over ``shape``; each independent site is 0 with
    probability p.

    elementwise draws every element independently; spatial_grid draws one
    H x W pattern shared by all channels of a C x H x W tensor; channel
    draws one bit per whole channel.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidLevelError(f"p must lie in [0, 1], got {p}")
    shape = tuple(int(s) for s in shape)
    if structure == "elementwise":
        draw_shape = shape
    elif structure in ("spatial_grid", "channel"):
        if len(shape) != 3:
            raise ShapeError(
                f"{structure} masks need a CxHxW shape, got {shape}"
            )
        c, h, w = shape
        draw_shape = (1, h, w) if structure == "spatial_grid" else (c, 1, 1)
    else:
        raise InvalidLevelError(f"unknown mask structure {structure!r}")
    bits = (rng.generator.random(draw_shape) >= p).astype(np.float64)
    return np.broadcast_to(bits, shape).copy() if draw_shape != shape else bits


def dropout_apply(x, mask, p: float, normalize: bool = False) -> np.ndarray:
    """Eq. (1): x * eps, scaled by 1/(1-p) when normalize."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=np.float64)
    out = x * mask
    if normalize:
        if p >= 1.0:
            raise InvalidLevelError("cannot normalize dropout at p = 1")
        out = out / (1.0 - p)
    return out


def hybrid_apply(x, partner, mask) -> np.ndarray:
    """Eq. (2): x * eps + partner * (1 - eps). No rescaling."""
    x = as_tensor(x)
    partner = as_tensor(partner)
    if x.shape != partner.shape:
        raise ShapeError(f"hybrid shapes differ: {x.shape} vs {partner.shape}")
    mask = np.asarray(mask, dtype=np.float64)
    return x * mask + partner * (1.0 - mask)


def partner_index(i: int, layer_ordinal: int, m: int) -> int:
    """Minibatch-shift partner: layer 0 pairs i with i+1, layer 1 with
    i+2, and so on, wrapping modulo the batch size."""
    if m < 2:
        raise InsufficientBatchError(f"no distinct partner exists in a batch of {m}")
    if not 0 <= i < m:
        raise ShapeError(f"batch position {i} outside batch of {m}")
    return (i + layer_ordinal + 1) % m


def _batch_masks(gen, batch_shape, levels, structure):
    """Per-example keep-masks, one draw per independent site; identical in
    distribution to per-example sample_mask calls but drawn in one shot."""
    m = batch_shape[0]
    example_shape = batch_shape[1:]
    lev = levels.reshape((m,) + (1,) * len(example_shape))
    if structure == "elementwise":
        draw = gen.random(batch_shape)
    else:
        if len(example_shape) != 3:
            raise ShapeError(
                f"{structure} masks need CxHxW examples, got {example_shape}"
            )
        c, h, w = example_shape
        site_shape = (m, 1, h, w) if structure == "spatial_grid" else (m, c, 1, 1)
        draw = np.broadcast_to(gen.random(site_shape), batch_shape)
    return (draw >= lev).astype(np.float64)


def corrupt_minibatch_recorded(
    batch, spec: CorruptionSpec, rng: Rng, layer_ordinal: int = 0
) -> tuple[np.ndarray, CorruptionRecord]:
    """Corrupt a batch and keep the per-example draws.

    Each example gets its own level p (fixed_p or Uniform[0, u)) and its
    own keep-mask; hybrid examples take replacement values from the batch
    row selected by partner_index. The record retains levels, masks and
    the partner map for gradient routing and the grad-norm harness.
    """
    batch = as_tensor(batch)
    m = batch.shape[0]
    example_shape = batch.shape[1:]
    gen = rng.generator
    if spec.fixed_p is not None:
        levels = np.full(m, float(spec.fixed_p))
    else:
        levels = spec.u * gen.random(m)
    masks = _batch_masks(gen, batch.shape, levels, spec.structure)

    if spec.scheme == "dropout":
        out = batch * masks
        if spec.normalize:
            if np.any(levels >= 1.0):
                raise InvalidLevelError("cannot normalize dropout at p = 1")
            out = out / (1.0 - levels).reshape((m,) + (1,) * len(example_shape))
        partners = None
    else:
        if m < 2:
            raise InsufficientBatchError(
                f"hybrid corruption needs a batch of at least 2, got {m}"
            )
        partners = np.array(
            [partner_index(i, layer_ordinal, m) for i in range(m)], dtype=np.int64
        )
        if np.any(levels > 0.0):
            out = batch * masks + batch[partners] * (1.0 - masks)
        else:
            out = batch.copy()  # keep zero corruption bit-identical

    record = CorruptionRecord(
        spec=spec, layer_ordinal=layer_ordinal, levels=levels, masks=masks,
        partners=partners,
    )
    return out, record


def corrupt_minibatch(batch, spec: CorruptionSpec, rng: Rng, layer_ordinal: int = 0) -> np.ndarray:
    """Corrupt a batch; see corrupt_minibatch_recorded for the draws."""
    out, _ = corrupt_minibatch_recorded(batch, spec, rng, layer_ordinal)
    return out


def route_gradient(record: CorruptionRecord, dout: np.ndarray) -> np.ndarray:
    """Backward map of the corruption the record describes.

    Masks are constants. Dropout passes gradient through kept coordinates
    (with the same 1/(1-p) scale). Hybrid additionally routes the gradient
    of each swapped coordinate back to the partner row that supplied it;
    the minibatch shift is a bijection, so the routing is a permutation.
    """
    dout = np.asarray(dout, dtype=np.float64)
    m = dout.shape[0]
    trailing = (1,) * (dout.ndim - 1)
    if record.spec.scheme == "dropout":
        dx = dout * record.masks
        if record.spec.normalize:
            dx = dx / (1.0 - record.levels).reshape((m,) + trailing)
        return dx
    dx = dout * record.masks
    swapped = dout * (1.0 - record.masks)
    dx[record.partners] += swapped
    return dx
