"""Desk-scale reference architectures.

Corruption sites sit in front of every weight layer (the layerwise
placement dropout conventionally uses): the MLP corrupts the flat input
and each hidden activation, the small CNN corrupts after each conv block
and after the first dense layer.
"""

from __future__ import annotations

from ..corruptor import CorruptionSpec
from .network import (
    LayerSpec,
    conv2d,
    corruption,
    dense,
    flatten,
    relu,
    softmax_output,
)


def mlp_specs(hidden=(256, 256), class_count=10,
              corruption_spec: CorruptionSpec | None = None,
              sites: tuple[int, ...] | None = None) -> list[LayerSpec]:
    """flatten, then dense-relu per hidden width, then dense(k)-softmax,
    with a corruption site in front of each selected dense layer.

    ``sites`` indexes the dense layers (0 = the first hidden layer, whose
    site corrupts the flat input); None corrupts in front of every dense
    layer, the layerwise placement dropout conventionally uses.
    """
    specs: list[LayerSpec] = [flatten()]
    if corruption_spec is None:
        sites = ()
    elif sites is None:
        sites = tuple(range(len(hidden) + 1))
    for index, width in enumerate(hidden):
        if index in sites:
            specs.append(corruption(corruption_spec))
        specs += [dense(width), relu()]
    if len(hidden) in sites:
        specs.append(corruption(corruption_spec))
    specs += [dense(class_count), softmax_output()]
    return specs


def standin_cnn_specs(class_count=10,
                      corruption_spec: CorruptionSpec | None = None) -> list[LayerSpec]:
    """conv(32,3x3,pad1)-relu-[corr]-conv(32,3x3,s2)-relu-[corr]-
    dense(128)-relu-[corr]-dense(k)-softmax.

    Structured mask schemes only exist on feature maps, so the corruption
    site after the dense layer always falls back to elementwise.
    """
    def corr(structure_ok):
        if corruption_spec is None:
            return []
        spec = corruption_spec
        if not structure_ok and spec.structure != "elementwise":
            spec = CorruptionSpec(scheme=spec.scheme, structure="elementwise",
                                  u=spec.u, fixed_p=spec.fixed_p,
                                  normalize=spec.normalize)
        return [corruption(spec)]

    specs: list[LayerSpec] = [conv2d(32, (3, 3), stride=1, pad=1), relu()]
    specs += corr(True)
    specs += [conv2d(32, (3, 3), stride=2, pad=0), relu()]
    specs += corr(True)
    specs += [flatten(), dense(128), relu()]
    specs += corr(False)
    specs += [dense(class_count), softmax_output()]
    return specs
