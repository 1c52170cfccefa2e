"""Dataset ingestion (MNIST IDX, CSV), stratified subsetting,
channel-wise standardization, and the column-typed Table for the
expander.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

from .core import Rng, as_tensor
from .errors import (
    CsvParseError,
    DegenerateChannelError,
    IdxFormatError,
    InsufficientClassError,
    ShapeError,
)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass
class Dataset:
    examples: np.ndarray        # (N, C, H, W) images or (N, F) flat
    labels: np.ndarray          # (N,) int64 in [0, class_count)
    class_count: int

    def __post_init__(self):
        self.examples = as_tensor(self.examples)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.examples.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.examples.shape[0]} examples vs {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeError(f"labels outside [0, {self.class_count})")

    def __len__(self):
        return self.examples.shape[0]

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.examples[indices], self.labels[indices], self.class_count)


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray            # per channel
    std: np.ndarray


def _read_be32(blob, offset, what):
    if offset + 4 > len(blob):
        raise IdxFormatError(f"truncated while reading {what}", offset=offset)
    return struct.unpack_from(">I", blob, offset)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse a big-endian IDX image/label pair.

    Image layout: u32 magic 0x00000803 | u32 count | u32 rows | u32 cols |
    u8 pixels row-wise. Label layout: u32 magic 0x00000801 | u32 count |
    u8 labels. Pixels map to [0, 1] by /255; images come back N x 1 x H x W.
    """
    with open(images_path, "rb") as fh:
        blob = fh.read()
    magic = _read_be32(blob, 0, "image magic")
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"image magic 0x{magic:08x} != 0x{IDX_IMAGE_MAGIC:08x}", offset=0
        )
    count = _read_be32(blob, 4, "image count")
    rows = _read_be32(blob, 8, "row count")
    cols = _read_be32(blob, 12, "column count")
    expected = 16 + count * rows * cols
    if len(blob) != expected:
        raise IdxFormatError(
            f"image payload is {len(blob)} bytes, expected {expected}",
            offset=min(len(blob), expected),
        )
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
    images = pixels.reshape(count, 1, rows, cols).astype(np.float64) / 255.0

    with open(labels_path, "rb") as fh:
        lblob = fh.read()
    magic = _read_be32(lblob, 0, "label magic")
    if magic != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"label magic 0x{magic:08x} != 0x{IDX_LABEL_MAGIC:08x}", offset=0
        )
    lcount = _read_be32(lblob, 4, "label count")
    if len(lblob) != 8 + lcount:
        raise IdxFormatError(
            f"label payload is {len(lblob)} bytes, expected {8 + lcount}",
            offset=min(len(lblob), 8 + lcount),
        )
    if lcount != count:
        raise IdxFormatError(
            f"label count {lcount} != image count {count}", offset=4
        )
    labels = np.frombuffer(lblob, dtype=np.uint8, offset=8).astype(np.int64)
    class_count = int(labels.max()) + 1 if lcount else 0
    return Dataset(images, labels, class_count)


def _stratified_indices(ds: Dataset, n: int, rng: Rng) -> np.ndarray:
    if n > len(ds):
        raise InsufficientClassError(f"requested {n} of {len(ds)} examples")
    k = ds.class_count
    quota = n // k
    remainder = n - quota * k
    chosen = []
    for cls in range(k):
        want = quota + (1 if cls < remainder else 0)
        members = np.flatnonzero(ds.labels == cls)
        if members.size < want:
            raise InsufficientClassError(
                f"class {cls} has {members.size} members, quota is {want}"
            )
        if want:
            chosen.append(rng.generator.choice(members, size=want, replace=False))
    return np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)


def stratified_subset(ds: Dataset, n: int, rng: Rng) -> Dataset:
    """Subset of size n with per-class quotas floor(n/k), the remainder
    going to the lowest class indices; without replacement."""
    return ds.take(_stratified_indices(ds, n, rng))


def stratified_split(ds: Dataset, n: int, rng: Rng) -> tuple[Dataset, Dataset]:
    """(stratified subset of size n, everything else). Same index logic as
    stratified_subset; the complement serves as the held-out set in the
    size-sweep harnesses."""
    idx = _stratified_indices(ds, n, rng)
    mask = np.ones(len(ds), dtype=bool)
    mask[idx] = False
    return ds.take(idx), ds.take(np.flatnonzero(mask))


def standardize(ds: Dataset, stats: StandardizeStats | None = None) -> tuple[Dataset, StandardizeStats]:
    """(x - mean)/std per channel; stats computed from ds when absent
    (training role) or applied as given (test role)."""
    x = ds.examples
    axes = tuple(i for i in range(x.ndim) if i != 1)
    if stats is None:
        mean = x.mean(axis=axes)
        std = x.std(axis=axes)
        if np.any(std == 0.0):
            bad = np.flatnonzero(std == 0.0)
            raise DegenerateChannelError(f"zero-variance channel(s) {bad.tolist()}")
        stats = StandardizeStats(mean=mean, std=std)
    shape = tuple(x.shape[1] if i == 1 else 1 for i in range(x.ndim))
    out = (x - stats.mean.reshape(shape)) / stats.std.reshape(shape)
    return Dataset(out, ds.labels, ds.class_count), stats


@dataclass
class Table:
    """Column-typed rows: numeric cells are floats, categorical cells are
    opaque string tokens. ``target`` names the prediction column."""

    columns: list[str]
    kinds: list[str]
    rows: list[list]
    target: str | None = None

    def __post_init__(self):
        if len(self.columns) != len(self.kinds):
            raise CsvParseError("column/kind arity mismatch")
        if self.target is not None and self.target not in self.columns:
            raise CsvParseError(f"target column {self.target!r} not present")

    def column_index(self, name: str) -> int:
        return self.columns.index(name)

    def predictor_indices(self) -> list[int]:
        t = self.column_index(self.target) if self.target else -1
        return [j for j in range(len(self.columns)) if j != t]

    def with_target(self, target: str) -> "Table":
        return replace(self, target=target)


def _parse_number(cell: str):
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if np.isfinite(value) else None


def load_csv(path, target: str | None = None, kinds: list[str] | None = None) -> Table:
    """RFC-4180-style CSV with a header row.

    A column is numeric iff every non-empty cell parses as a finite
    number, otherwise categorical; ``kinds`` overrides inference.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file, no header row", row=1) from None
        raw_rows = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvParseError(
                    f"expected {len(header)} cells, got {len(row)}", row=rownum
                )
            raw_rows.append(row)

    if kinds is None:
        kinds = []
        for j in range(len(header)):
            numeric = all(
                _parse_number(row[j]) is not None
                for row in raw_rows if row[j] != ""
            )
            kinds.append(NUMERIC if numeric and raw_rows else CATEGORICAL)
    rows = []
    for rownum, raw in enumerate(raw_rows, start=2):
        cells = []
        for j, cell in enumerate(raw):
            if kinds[j] == NUMERIC:
                value = _parse_number(cell)
                if value is None:
                    raise CsvParseError(
                        f"column {header[j]!r} declared numeric, "
                        f"cell {cell!r} does not parse", row=rownum
                    )
                cells.append(value)
            else:
                cells.append(cell)
        rows.append(cells)
    return Table(columns=list(header), kinds=kinds, rows=rows, target=target)


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    # repr round-trips float64 exactly; integral floats print bare
    f = float(value)
    if f.is_integer() and abs(f) < 1e16 and not (f == 0.0 and np.signbit(f)):
        return str(int(f))
    return repr(f)


def write_csv(table: Table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_format_cell(c) for c in row])
