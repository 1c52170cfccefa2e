"""Stochastic training-set expansion for arbitrary downstream learners.

Each synthetic row draws a level p ~ Uniform(0, u), an elementwise
keep-mask over the predictor columns, and a partner row chosen uniformly
excluding the base row, then applies one of six schemes:

  hb              cellwise Eq. (2); categorical cells swap atomically
  dropout         numeric keep -> x/(1-p), drop -> 0; categorical drop -> token
  hb_norm         Eq. (2) with kept own numeric cells scaled by 1/(1-p);
                  categorical cells keep the own value
  hb_perm_norm    hb_norm with the per-position scale factors randomly
                  permuted across predictor positions before application
  dropout_nonorm  numeric keep -> x, drop -> 0; categorical drop -> token
  norm_only       every numeric cell scaled by 1/(1-p); nothing else

The target column of a synthetic row is always copied from the base row.
Rows are generated from streams keyed by (base row, replicate), so the
output is deterministic under a seed and ordered (base row, replicate)
regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Rng
from .data import CATEGORICAL, NUMERIC, Table
from .errors import ConfigError, InsufficientDataError, InvalidLevelError

SCHEMES = ("hb", "dropout", "hb_norm", "hb_perm_norm", "dropout_nonorm", "norm_only")
DROPPED_TOKEN = "__DROPPED__"

_PARTNER_SCHEMES = {"hb", "hb_norm", "hb_perm_norm"}
_NORMALIZING_SCHEMES = {"dropout", "hb_norm", "hb_perm_norm", "norm_only"}


@dataclass(frozen=True)
class ExpansionSpec:
    scheme: str
    u: float = 0.45
    factor: int = 1
    include_originals: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown expansion scheme {self.scheme!r}")
        if not 0.0 <= self.u <= 1.0:
            raise InvalidLevelError(f"u must lie in [0, 1], got {self.u}")
        if self.factor < 1:
            raise ConfigError(f"factor must be >= 1, got {self.factor}")


def _synthetic_row(table: Table, base_index: int, spec: ExpansionSpec, rng: Rng):
    predictors = table.predictor_indices()
    row = list(table.rows[base_index])
    p = spec.u * rng.generator.random()
    if p >= 1.0 and spec.scheme in _NORMALIZING_SCHEMES:
        raise InvalidLevelError(f"scheme {spec.scheme} cannot normalize at p = 1")
    scale = 1.0 / (1.0 - p)
    keep = rng.generator.random(len(predictors)) >= p

    partner_row = None
    if spec.scheme in _PARTNER_SCHEMES:
        n = len(table.rows)
        if n < 2:
            raise InsufficientDataError("partner schemes need at least 2 rows")
        offset = int(rng.generator.integers(1, n))
        partner_row = table.rows[(base_index + offset) % n]

    if spec.scheme == "hb_perm_norm":
        factors = np.where(
            [keep[jj] and table.kinds[col] == NUMERIC
             for jj, col in enumerate(predictors)],
            scale, 1.0)
        factors = factors[rng.generator.permutation(len(predictors))]
    else:
        factors = None

    for jj, col in enumerate(predictors):
        kind = table.kinds[col]
        own = table.rows[base_index][col]
        kept = bool(keep[jj])
        if spec.scheme == "hb":
            row[col] = own if kept else partner_row[col]
        elif spec.scheme == "dropout":
            if kind == NUMERIC:
                row[col] = own * scale if kept else 0.0
            else:
                row[col] = own if kept else DROPPED_TOKEN
        elif spec.scheme == "dropout_nonorm":
            if kind == NUMERIC:
                row[col] = own if kept else 0.0
            else:
                row[col] = own if kept else DROPPED_TOKEN
        elif spec.scheme == "hb_norm":
            if kind == NUMERIC:
                row[col] = own * scale if kept else partner_row[col]
            else:
                row[col] = own      # factors never touch categorical cells
        elif spec.scheme == "hb_perm_norm":
            if kind == NUMERIC:
                value = own if kept else partner_row[col]
                row[col] = value * factors[jj]
            else:
                row[col] = own
        else:  # norm_only
            if kind == NUMERIC:
                row[col] = own * scale
    return row


def expand(table: Table, spec: ExpansionSpec, rng: Rng) -> Table:
    """factor synthetic rows per input row (originals prepended when
    include_originals), ordered (base row, replicate)."""
    if table.target is None:
        raise ConfigError("expansion needs a designated target column")
    if not table.rows:
        raise InsufficientDataError("cannot expand an empty table")
    out_rows = []
    if spec.include_originals:
        out_rows.extend(list(r) for r in table.rows)
    for i in range(len(table.rows)):
        for r in range(spec.factor):
            out_rows.append(_synthetic_row(table, i, spec, rng.child(i, r)))
    return Table(
        columns=list(table.columns), kinds=list(table.kinds),
        rows=out_rows, target=table.target,
    )
