"""Filter-redundancy diagnostics for convolutional layers.

Redundancy is measured as the median absolute pairwise Pearson
correlation between filter responses on a probe set, each filter's
response pooled jointly over (example, h, w). Responses are taken
post-activation: when a relu immediately follows the addressed conv
layer, its output is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLayerError, ShapeError
from .nn.network import Model


@dataclass
class CorrelationReport:
    layer_index: int
    filter_indices: np.ndarray      # filters retained (nonzero variance)
    abs_correlations: np.ndarray    # symmetric matrix over retained filters
    median_abs_corr: float


def filter_correlation(model: Model, probe_set, layer_index: int) -> CorrelationReport:
    """Pairwise |Pearson| between filter responses at a conv layer."""
    if not 0 <= layer_index < len(model.specs):
        raise ShapeError(f"layer index {layer_index} outside model of {len(model.specs)}")
    if model.specs[layer_index].kind != "conv2d":
        raise ShapeError(f"layer {layer_index} is {model.specs[layer_index].kind}, not conv2d")
    probe = np.asarray(probe_set, dtype=np.float64)
    if probe.shape[0] < 2:
        raise ShapeError("probe set needs at least 2 examples")

    # capture the response after the layer, or after its relu when one
    # directly follows
    capture = layer_index
    if capture + 1 < len(model.specs) and model.specs[capture + 1].kind == "relu":
        capture += 1
    response = _activation_at(model, probe, capture)

    f = response.shape[1]
    vectors = response.transpose(1, 0, 2, 3).reshape(f, -1)
    variances = vectors.var(axis=1)
    retained = np.flatnonzero(variances > 0.0)
    if retained.size < 2:
        raise DegenerateLayerError(
            f"layer {layer_index}: fewer than 2 filters with variance on the probe set"
        )
    corr = np.corrcoef(vectors[retained])
    abs_corr = np.abs(corr)
    iu = np.triu_indices(retained.size, k=1)
    abs_corr[(iu[1], iu[0])] = abs_corr[iu]  # exact symmetry, last-ulp safe
    return CorrelationReport(
        layer_index=layer_index,
        filter_indices=retained,
        abs_correlations=abs_corr,
        median_abs_corr=float(np.median(abs_corr[iu])),
    )


def _activation_at(model, probe, capture):
    """Replay the stack up to ``capture`` inclusive in eval mode."""
    from .nn import layers as L

    x = probe
    for index in range(capture + 1):
        spec = model.specs[index]
        p = model.params[index]
        if spec.kind == "dense":
            x, _ = L.dense_forward(x, p["w"], p["b"])
        elif spec.kind == "conv2d":
            x, _ = L.conv2d_forward(x, p["w"], p["b"], spec.stride, spec.pad)
        elif spec.kind == "relu":
            x, _ = L.relu_forward(x)
        elif spec.kind == "flatten":
            x, _ = L.flatten_forward(x)
        # corruption is identity in eval mode; softmax never precedes capture
    return x
