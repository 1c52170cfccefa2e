"""SGD-with-momentum training, evaluation, and the gradient oracles.

Everything is keyed off deterministic streams: per-epoch shuffles come
from (seed, shuffle-domain, epoch), corruption draws from
(seed, corrupt-domain, epoch, batch, layer ordinal), so one seed pins the
whole run bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import (
    DOMAIN_CHECK,
    DOMAIN_CORRUPT,
    DOMAIN_SHUFFLE,
    Rng,
    as_tensor,
    rng_new,
)
from ..errors import ConfigError, DivergenceError, ShapeError
from .network import Model, ForwardResult, backward, forward


def _validate_schedule(name, schedule):
    if not schedule:
        raise ConfigError(f"{name} schedule must be nonempty")
    keys = [int(e) for e, _ in schedule]
    if keys[0] != 0:
        raise ConfigError(f"{name} schedule must start at epoch 0")
    if any(b <= a for a, b in zip(keys, keys[1:])):
        raise ConfigError(f"{name} schedule epochs must be strictly increasing")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    epochs: int
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.1),)
    momentum_schedule: tuple[tuple[int, float], ...] = ((0, 0.9),)
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        _validate_schedule("lr", self.lr_schedule)
        _validate_schedule("momentum", self.momentum_schedule)


def default_schedules(epochs, base_lr=0.1):
    """lr 0.1 with x0.2 drops at 1/3 and 2/3 of the budget; momentum 0.9
    ramping to 0.99 together with the final drop (high momentum needs the
    already-decayed lr to stay stable)."""
    marks = {0: (base_lr, 0.9)}
    if epochs >= 3:
        marks[epochs // 3] = (base_lr * 0.2, 0.9)
        marks[2 * epochs // 3] = (base_lr * 0.04, 0.99)
    lr = tuple((e, v[0]) for e, v in sorted(marks.items()))
    mom = tuple((e, v[1]) for e, v in sorted(marks.items()))
    return lr, mom


def schedule_value(schedule, epoch):
    value = schedule[0][1]
    for start, v in schedule:
        if epoch >= start:
            value = v
    return value


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    train_loss: float
    eval_loss: float
    eval_error: float


def sgd_momentum_step(model: Model, grads, lr, momentum, weight_decay=0.0) -> Model:
    """v <- mu*v - lr*(g + wd*theta); theta <- theta + v. Updates in place
    and returns the model."""
    if lr <= 0:
        raise ConfigError(f"lr must be positive, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
    for index, (p, v, g) in enumerate(zip(model.params, model.velocity, grads)):
        if p is None:
            continue
        for key in p:
            if not np.all(np.isfinite(g[key])):
                raise DivergenceError(f"non-finite gradient at layer {index} ({key})")
            v[key] *= momentum
            v[key] -= lr * (g[key] + weight_decay * p[key])
            p[key] += v[key]
            if not np.all(np.isfinite(p[key])):
                raise DivergenceError(f"non-finite parameters at layer {index} ({key})")
    return model


def _as_xy(dataset):
    if hasattr(dataset, "examples"):
        return as_tensor(dataset.examples), np.asarray(dataset.labels, dtype=np.int64)
    x, y = dataset
    return as_tensor(x), np.asarray(y, dtype=np.int64)


def train(model: Model, train_set, config: TrainConfig, eval_set=None) -> list[HistoryRow]:
    """Epochs x batches of forward/backward/step with per-epoch shuffling.

    The last partial batch of each epoch is dropped (partner shifting
    assumes a stable batch size). On divergence the raised error carries
    the partial history.
    """
    x, y = _as_xy(train_set)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("train set is empty")
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds train-set size {n}")
    shuffle_root = rng_new(config.seed, DOMAIN_SHUFFLE)
    corrupt_root = rng_new(config.seed, DOMAIN_CORRUPT)
    m = config.batch_size
    history: list[HistoryRow] = []
    for epoch in range(config.epochs):
        lr = schedule_value(config.lr_schedule, epoch)
        momentum = schedule_value(config.momentum_schedule, epoch)
        order = shuffle_root.child(epoch).generator.permutation(n)
        losses = []
        for bi in range(n // m):
            sel = order[bi * m:(bi + 1) * m]
            rng = corrupt_root.child(epoch, bi)
            try:
                fwd = forward(model, x[sel], y[sel], mode="train", rng=rng)
                grads = backward(model, fwd, y[sel])
                sgd_momentum_step(model, grads, lr, momentum, config.weight_decay)
            except DivergenceError as exc:
                raise DivergenceError(str(exc), history=history) from exc
            losses.append(fwd.loss)
        if eval_set is not None:
            eval_error, eval_loss = evaluate(model, eval_set)
        else:
            eval_error = eval_loss = float("nan")
        history.append(HistoryRow(
            epoch=epoch, train_loss=float(np.mean(losses)) if losses else float("nan"),
            eval_loss=eval_loss, eval_error=eval_error,
        ))
    return history


def evaluate(model: Model, dataset, chunk: int = 2048) -> tuple[float, float]:
    """(error rate under argmax with lowest-index ties, mean cross-entropy)
    on clean inputs; corruption layers are identities here."""
    x, y = _as_xy(dataset)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("evaluation set is empty")
    wrong = 0
    loss_total = 0.0
    for start in range(0, n, chunk):
        sel = slice(start, min(start + chunk, n))
        fwd = forward(model, x[sel], y[sel], mode="eval")
        wrong += int(np.sum(np.argmax(fwd.probs, axis=1) != y[sel]))
        loss_total += float(fwd.per_example_losses.sum())
    return wrong / n, loss_total / n


@dataclass
class LevelNorms:
    """One corruption layer's per-example levels paired with the gradient
    norms of one downstream weight layer."""

    corruption_layer: int
    corruption_ordinal: int
    target_layer: int
    levels: np.ndarray
    norms: np.ndarray


def grad_norm_by_level(model: Model, batch, labels, rng: Rng) -> list[LevelNorms]:
    """Pair each example's drawn corruption levels with the Euclidean norm
    of its own-loss gradient contribution, per weight layer.

    One entry per (corruption layer, downstream weight layer) pair,
    ordered by corruption layer then depth, so the last entry of a
    corruption layer always reports the output-side weight layer.
    """
    if not any(s.kind == "corruption" for s in model.specs):
        raise ShapeError("model has no corruption layer")
    x = as_tensor(batch)
    y = np.asarray(labels, dtype=np.int64)
    m = x.shape[0]
    fwd = forward(model, x, y, mode="train", rng=rng)

    pairs = []  # (corruption layer, weight layer)
    weight_layers = [j for j, s in enumerate(model.specs)
                     if s.kind in ("dense", "conv2d")]
    for index, spec in enumerate(model.specs):
        if spec.kind == "corruption":
            pairs.extend((index, j) for j in weight_layers if j > index)

    norms = {j: np.empty(m) for j in weight_layers}
    for i in range(m):
        dlogits = np.zeros_like(fwd.probs)
        dlogits[i] = fwd.probs[i]
        dlogits[i, y[i]] -= 1.0
        grads = backward(model, fwd, y, dlogits=dlogits)
        for j in weight_layers:
            g = grads[j]
            norms[j][i] = np.sqrt(sum(float(np.sum(g[k] ** 2)) for k in g))
    return [
        LevelNorms(
            corruption_layer=index,
            corruption_ordinal=model.corruption_ordinals[index],
            target_layer=target,
            levels=fwd.records[index].levels.copy(),
            norms=norms[target].copy(),
        )
        for index, target in pairs
    ]


def _relu_patterns(model: Model, fwd: ForwardResult):
    return [fwd.caches[i] > 0.0 for i, s in enumerate(model.specs) if s.kind == "relu"]


def gradient_check(model: Model, batch, labels, perturbation: float = 1e-6,
                   seed: int = 0) -> float:
    """Worst relative error between backward() and central finite
    differences over every parameter.

    Every forward call reuses the same stream so corruption masks are
    frozen across perturbations. Perturbations that flip any relu
    activation pattern straddle a non-differentiable point and are
    excluded from the max.
    """
    x = as_tensor(batch)
    y = np.asarray(labels, dtype=np.int64)

    def run():
        return forward(model, x, y, mode="train", rng=rng_new(seed, DOMAIN_CHECK))

    base = run()
    analytic = backward(model, base, y)
    worst = 0.0
    for li, p in enumerate(model.params):
        if p is None:
            continue
        for key, theta in p.items():
            flat = theta.reshape(-1)
            ana = analytic[li][key].reshape(-1)
            for idx in range(flat.size):
                keep = flat[idx]
                flat[idx] = keep + perturbation
                plus = run()
                flat[idx] = keep - perturbation
                minus = run()
                flat[idx] = keep
                patterns_differ = any(
                    not np.array_equal(a, b)
                    for a, b in zip(_relu_patterns(model, plus), _relu_patterns(model, minus))
                )
                if patterns_differ:
                    continue
                numeric = (plus.loss - minus.loss) / (2.0 * perturbation)
                denom = max(abs(numeric), abs(ana[idx]), 1e-8)
                worst = max(worst, abs(numeric - ana[idx]) / denom)
    return worst
