from .network import (
    LayerSpec,
    Model,
    build_model,
    backward,
    conv2d,
    corruption,
    dense,
    flatten,
    forward,
    load_model,
    relu,
    save_model,
    softmax_output,
)
from .train import (
    HistoryRow,
    LevelNorms,
    TrainConfig,
    default_schedules,
    evaluate,
    grad_norm_by_level,
    gradient_check,
    schedule_value,
    sgd_momentum_step,
    train,
)

__all__ = [
    "LayerSpec", "Model", "build_model", "backward", "conv2d", "corruption",
    "dense", "flatten", "forward", "load_model", "relu", "save_model",
    "softmax_output", "HistoryRow", "LevelNorms", "TrainConfig",
    "default_schedules", "evaluate", "grad_norm_by_level", "gradient_check",
    "schedule_value", "sgd_momentum_step", "train",
]
