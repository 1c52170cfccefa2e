"""Config-driven experiment front end.

    hybridboot <command> <config-file> [--set section.key=value]...
               [--out path] [--seed n]

Commands: train, sweep, sizes, gradnorm, correlate, expand. The config is
an INI file (sections documented in each subcommand's --help); --set
overrides individual keys. Every command writes one CSV metrics file with
a fixed, documented column order, and is byte-identical for identical
config and seed. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys

from .core import DOMAIN_EXPAND, DOMAIN_GRADNORM, DOMAIN_SUBSET, rng_new
from .corruptor import CorruptionSpec
from .data import load_csv, load_idx, standardize, stratified_split, write_csv
from .errors import (
    ConfigError,
    CsvParseError,
    DegenerateChannelError,
    DegenerateLayerError,
    DivergenceError,
    HybridBootError,
    IdxFormatError,
    InsufficientClassError,
    InsufficientDataError,
)
from .expander import ExpansionSpec, expand
from .metrics import filter_correlation
from .nn.network import build_model, save_model
from .nn.presets import mlp_specs, standin_cnn_specs
from .nn.train import (
    TrainConfig,
    default_schedules,
    evaluate,
    grad_norm_by_level,
    train,
)

DATA_ERRORS = (
    IdxFormatError, CsvParseError, InsufficientClassError,
    InsufficientDataError, DegenerateChannelError, DegenerateLayerError,
    FileNotFoundError, IsADirectoryError,
)

COLUMNS = {
    "train": ["epoch", "train_loss", "eval_loss", "eval_error"],
    "sweep": ["mode", "level", "test_error", "test_logloss", "status"],
    "sizes": ["scheme", "n", "test_error", "test_logloss", "status"],
    "gradnorm": ["corruption_layer", "target_layer", "example", "p", "grad_norm"],
    "correlate": ["seed", "layer", "median_abs_corr"],
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_metrics(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


class Config:
    """configparser wrapper with typed getters that raise ConfigError."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser

    def get(self, section, key, default=None, required=False):
        if self.parser.has_option(section, key):
            value = self.parser.get(section, key).strip()
            if value != "":
                return value
        if required:
            raise ConfigError(f"missing required config key [{section}] {key}")
        return default

    def get_int(self, section, key, default=None, required=False):
        raw = self.get(section, key, required=required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from None

    def get_float(self, section, key, default=None, required=False):
        raw = self.get(section, key, required=required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from None

    def get_bool(self, section, key, default=None, required=False):
        raw = self.get(section, key, required=required)
        if raw is None:
            return default
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean, got {raw!r}")

    def get_floats(self, section, key, default=None, required=False):
        raw = self.get(section, key, required=required)
        if raw is None:
            return default
        try:
            return [float(v) for v in raw.split(",") if v.strip() != ""]
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be comma-separated numbers") from None

    def get_ints(self, section, key, default=None, required=False):
        raw = self.get(section, key, required=required)
        if raw is None:
            return default
        try:
            return [int(v) for v in raw.split(",") if v.strip() != ""]
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be comma-separated integers") from None


def load_config(path, overrides) -> Config:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from None
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        section, key = target.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), key.strip(), value.strip())
    return Config(parser)


def _schedule(raw, epochs, base_lr, which):
    """'auto' or 'epoch:value,epoch:value,...'."""
    if raw is None or raw == "auto":
        lr, mom = default_schedules(epochs, base_lr)
        return lr if which == "lr" else mom
    pairs = []
    try:
        for chunk in raw.split(","):
            e, v = chunk.split(":")
            pairs.append((int(e), float(v)))
    except ValueError:
        raise ConfigError(f"bad {which} schedule {raw!r}; want epoch:value,...") from None
    return tuple(pairs)


def _corruption_spec(cfg: Config) -> CorruptionSpec | None:
    scheme = cfg.get("model", "scheme", "none").lower()
    if scheme in ("none", "baseline"):
        return None
    if scheme not in ("hybrid", "dropout"):
        raise ConfigError(f"[model] scheme must be hybrid/dropout/none, got {scheme!r}")
    fixed_p = cfg.get_float("model", "fixed_p")
    default_norm = scheme == "dropout"
    return CorruptionSpec(
        scheme=scheme,
        structure=cfg.get("model", "structure", "elementwise"),
        u=cfg.get_float("model", "u", 0.45),
        fixed_p=fixed_p,
        normalize=cfg.get_bool("model", "normalize", default_norm),
    )


def _model_specs(cfg: Config, class_count, corruption_spec):
    arch = cfg.get("model", "arch", "mlp").lower()
    if arch == "mlp":
        hidden = tuple(cfg.get_ints("model", "hidden", [256, 256]))
        sites = cfg.get_ints("model", "corrupt_sites")
        return mlp_specs(hidden, class_count, corruption_spec,
                         sites=None if sites is None else tuple(sites))
    if arch == "cnn":
        return standin_cnn_specs(class_count, corruption_spec)
    raise ConfigError(f"[model] arch must be mlp or cnn, got {arch!r}")


def _train_config(cfg: Config, seed) -> TrainConfig:
    epochs = cfg.get_int("train", "epochs", required=True)
    base_lr = cfg.get_float("train", "base_lr", 0.1)
    return TrainConfig(
        batch_size=cfg.get_int("train", "batch_size", required=True),
        epochs=epochs,
        lr_schedule=_schedule(cfg.get("train", "lr", "auto"), epochs, base_lr, "lr"),
        momentum_schedule=_schedule(cfg.get("train", "momentum", "auto"), epochs, base_lr, "momentum"),
        weight_decay=cfg.get_float("train", "weight_decay", 0.0),
        seed=seed,
    )


def _load_datasets(cfg: Config, seed):
    """(train subset, eval set), standardized with train-subset stats.

    When no eval pair is configured, the complement of the stratified
    subset serves as the held-out set.
    """
    train_images = cfg.get("data", "train_images", required=True)
    train_labels = cfg.get("data", "train_labels", required=True)
    pool = load_idx(train_images, train_labels)
    eval_images = cfg.get("data", "eval_images")
    eval_labels = cfg.get("data", "eval_labels")
    subset = cfg.get_int("data", "subset")

    held_out = None
    if eval_images or eval_labels:
        if not (eval_images and eval_labels):
            raise ConfigError("[data] eval_images and eval_labels go together")
        held_out = load_idx(eval_images, eval_labels)
    if subset is not None:
        train_set, rest = stratified_split(pool, subset, rng_new(seed, DOMAIN_SUBSET))
        if held_out is None:
            held_out = rest
    else:
        train_set = pool
        if held_out is None:
            raise ConfigError("[data] needs eval_images/eval_labels or a subset")
    if cfg.get_bool("data", "standardize", True):
        train_set, stats = standardize(train_set)
        held_out, _ = standardize(held_out, stats)
    return train_set, held_out


def _resolve_seed(cfg: Config, args, section="train") -> int:
    if args.seed is not None:
        return args.seed
    seed = cfg.get_int(section, "seed")
    if seed is None:
        raise ConfigError(f"seed is mandatory: set [{section}] seed or pass --seed")
    return seed


def _resolve_out(cfg: Config, args, command) -> str:
    out = args.out or cfg.get(command, "out")
    if out is None:
        raise ConfigError(f"output path is mandatory: set [{command}] out or pass --out")
    return out


def _train_one(cfg, train_set, eval_set, corruption_spec, tc: TrainConfig):
    specs = _model_specs(cfg, train_set.class_count, corruption_spec)
    model = build_model(train_set.examples.shape[1:], specs, seed=tc.seed)
    history = train(model, train_set, tc, eval_set)
    return model, history


def cmd_train(cfg: Config, args) -> int:
    seed = _resolve_seed(cfg, args)
    out = _resolve_out(cfg, args, "train")
    train_set, eval_set = _load_datasets(cfg, seed)
    tc = _train_config(cfg, seed)
    model, history = _train_one(cfg, train_set, eval_set, _corruption_spec(cfg), tc)
    _write_metrics(out, COLUMNS["train"], [
        (row.epoch, row.train_loss, row.eval_loss, row.eval_error) for row in history
    ])
    checkpoint = cfg.get("train", "checkpoint")
    if checkpoint:
        save_model(model, checkpoint)
    return 0


def cmd_sweep(cfg: Config, args) -> int:
    seed = _resolve_seed(cfg, args)
    out = _resolve_out(cfg, args, "sweep")
    levels = cfg.get_floats("sweep", "levels", required=True)
    modes = [m.strip() for m in cfg.get("sweep", "modes", "sampled_u,fixed_p").split(",")]
    base = _corruption_spec(cfg)
    if base is None:
        raise ConfigError("[model] scheme must be hybrid or dropout for sweep")
    train_set, eval_set = _load_datasets(cfg, seed)
    tc = _train_config(cfg, seed)
    rows = []
    for mode in modes:
        if mode not in ("sampled_u", "fixed_p"):
            raise ConfigError(f"[sweep] modes must be sampled_u/fixed_p, got {mode!r}")
        for level in levels:
            if mode == "sampled_u":
                spec = CorruptionSpec(scheme=base.scheme, structure=base.structure,
                                      u=level, normalize=base.normalize)
            else:
                spec = CorruptionSpec(scheme=base.scheme, structure=base.structure,
                                      u=base.u, fixed_p=level, normalize=base.normalize)
            try:
                model, _ = _train_one(cfg, train_set, eval_set, spec, tc)
                error, logloss = evaluate(model, eval_set)
                rows.append((mode, level, error, logloss, "ok"))
            except HybridBootError as exc:
                rows.append((mode, level, "", "", f"failed:{type(exc).__name__}"))
    _write_metrics(out, COLUMNS["sweep"], rows)
    return 0


def cmd_sizes(cfg: Config, args) -> int:
    seed = _resolve_seed(cfg, args)
    out = _resolve_out(cfg, args, "sizes")
    sizes = cfg.get_ints("sizes", "sizes", required=True)
    hybrid_u = cfg.get_float("sizes", "hybrid_u", 0.45)
    dropout_u = cfg.get_float("sizes", "dropout_u", 0.65)
    structure = cfg.get("model", "structure", "elementwise")
    tc = _train_config(cfg, seed)

    train_images = cfg.get("data", "train_images", required=True)
    train_labels = cfg.get("data", "train_labels", required=True)
    pool = load_idx(train_images, train_labels)
    eval_images = cfg.get("data", "eval_images")
    eval_labels = cfg.get("data", "eval_labels")
    fixed_eval = load_idx(eval_images, eval_labels) if eval_images else None

    schemes = {
        "hybrid": CorruptionSpec(scheme="hybrid", structure=structure, u=hybrid_u),
        "dropout": CorruptionSpec(scheme="dropout", structure=structure, u=dropout_u,
                                  normalize=True),
    }
    rows = []
    for n in sizes:
        subset, rest = stratified_split(pool, n, rng_new(seed, DOMAIN_SUBSET))
        eval_set = fixed_eval if fixed_eval is not None else rest
        if cfg.get_bool("data", "standardize", True):
            subset_std, stats = standardize(subset)
            eval_std, _ = standardize(eval_set, stats)
        else:
            subset_std, eval_std = subset, eval_set
        # tiny subsets cannot fill the configured batch
        tc_n = TrainConfig(
            batch_size=min(tc.batch_size, n), epochs=tc.epochs,
            lr_schedule=tc.lr_schedule, momentum_schedule=tc.momentum_schedule,
            weight_decay=tc.weight_decay, seed=tc.seed,
        )
        for name, spec in schemes.items():
            try:
                model, _ = _train_one(cfg, subset_std, None, spec, tc_n)
                error, logloss = evaluate(model, eval_std)
                rows.append((name, n, error, logloss, "ok"))
            except HybridBootError as exc:
                rows.append((name, n, "", "", f"failed:{type(exc).__name__}"))
    _write_metrics(out, COLUMNS["sizes"], rows)
    return 0


def cmd_gradnorm(cfg: Config, args) -> int:
    seed = _resolve_seed(cfg, args)
    out = _resolve_out(cfg, args, "gradnorm")
    spec = _corruption_spec(cfg)
    if spec is None:
        raise ConfigError("[model] scheme must be hybrid or dropout for gradnorm")
    train_set, eval_set = _load_datasets(cfg, seed)
    tc = _train_config(cfg, seed)
    model, _ = _train_one(cfg, train_set, eval_set, spec, tc)
    batch = cfg.get_int("gradnorm", "batch", min(100, len(train_set)))
    x = train_set.examples[:batch]
    y = train_set.labels[:batch]
    report = grad_norm_by_level(model, x, y, rng_new(seed, DOMAIN_GRADNORM))
    rows = []
    for entry in report:
        for i in range(entry.levels.shape[0]):
            rows.append((entry.corruption_layer, entry.target_layer, i,
                         float(entry.levels[i]), float(entry.norms[i])))
    _write_metrics(out, COLUMNS["gradnorm"], rows)
    return 0


def cmd_correlate(cfg: Config, args) -> int:
    seed = _resolve_seed(cfg, args)
    out = _resolve_out(cfg, args, "correlate")
    seeds = cfg.get_ints("correlate", "seeds", [seed])
    spec = _corruption_spec(cfg)
    if cfg.get("model", "arch", "mlp").lower() != "cnn":
        raise ConfigError("correlate needs [model] arch = cnn (conv layers required)")
    tc_base = _train_config(cfg, seed)
    rows = []
    for s in seeds:
        train_set, eval_set = _load_datasets(cfg, s)
        tc = TrainConfig(batch_size=tc_base.batch_size, epochs=tc_base.epochs,
                         lr_schedule=tc_base.lr_schedule,
                         momentum_schedule=tc_base.momentum_schedule,
                         weight_decay=tc_base.weight_decay, seed=s)
        model, _ = _train_one(cfg, train_set, eval_set, spec, tc)
        probe_cap = cfg.get_int("correlate", "probe", 512)
        probe = train_set.examples[:probe_cap]
        for index, layer_spec in enumerate(model.specs):
            if layer_spec.kind == "conv2d":
                report = filter_correlation(model, probe, index)
                rows.append((s, index, report.median_abs_corr))
    _write_metrics(out, COLUMNS["correlate"], rows)
    return 0


def cmd_expand(cfg: Config, args) -> int:
    seed = _resolve_seed(cfg, args, section="expand")
    out = _resolve_out(cfg, args, "expand")
    path = cfg.get("expand", "input", required=True)
    target = cfg.get("expand", "target", required=True)
    table = load_csv(path, target=target)
    spec = ExpansionSpec(
        scheme=cfg.get("expand", "scheme", required=True),
        u=cfg.get_float("expand", "u", 0.45),
        factor=cfg.get_int("expand", "factor", 1),
        include_originals=cfg.get_bool("expand", "include_originals", False),
    )
    expanded = expand(table, spec, rng_new(seed, DOMAIN_EXPAND))
    write_csv(expanded, out)
    return 0


COMMANDS = {
    "train": (cmd_train, "train one model; metrics CSV columns: "
              + ",".join(COLUMNS["train"])),
    "sweep": (cmd_sweep, "train a grid of levels in sampled_u/fixed_p modes; "
              "metrics CSV columns: " + ",".join(COLUMNS["sweep"])),
    "sizes": (cmd_sizes, "training-set size sweep for hybrid (u=0.45) and dropout "
              "(u=0.65); metrics CSV columns: " + ",".join(COLUMNS["sizes"])),
    "gradnorm": (cmd_gradnorm, "per-example corruption level vs gradient norm after "
                 "training; metrics CSV columns: " + ",".join(COLUMNS["gradnorm"])),
    "correlate": (cmd_correlate, "median absolute filter correlation per conv layer "
                  "across seeds; metrics CSV columns: " + ",".join(COLUMNS["correlate"])),
    "expand": (cmd_expand, "expand a CSV table with a stochastic scheme; output is "
               "the expanded CSV"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridboot",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value")
        p.add_argument("--out", default=None, help="metrics output path")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        handler = COMMANDS[args.command][0]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
