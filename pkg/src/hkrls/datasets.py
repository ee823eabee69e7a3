"""Grid construction, synthetic fields, per-axis splits and grid CSV files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .hierarchic import GridDataset

__all__ = [
    "SYNTH2D_RANGES",
    "SYNTH3D_RANGES",
    "COMPACT_RANGES",
    "make_grid",
    "synth_2d",
    "synth_3d",
    "synth2d_dataset",
    "synth3d_dataset",
    "SplitSpec",
    "split_axes",
    "restrict",
    "gaussian_filter_2d",
    "GridParseError",
    "load_grid_csv",
    "save_grid_csv",
]

SYNTH2D_RANGES = ((0.1, 4 * math.pi), (0.1, 8 * math.pi))
SYNTH3D_RANGES = SYNTH2D_RANGES + ((0.1, 12 * math.pi),)
COMPACT_RANGES = ((0.1, 0.4244), (0.1, 0.8488))


def make_grid(ranges: Sequence[Sequence[float]], counts: Sequence[int]) -> list:
    """Evenly spaced axes, endpoints included."""
    if len(ranges) != len(counts):
        raise ValueError(f"{len(ranges)} ranges for {len(counts)} counts")
    axes = []
    for k, ((lo, hi), m) in enumerate(zip(ranges, counts)):
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"axis {k}: invalid range [{lo}, {hi}]")
        if int(m) != m or m < 2:
            raise ValueError(f"axis {k}: need an integer count >= 2, got {m}")
        axes.append(np.linspace(float(lo), float(hi), int(m)))
    return axes


def synth_2d(x, d):
    """``sin(x) cos(d / 2)``."""
    return np.sin(x) * np.cos(np.asarray(d) / 2)


def synth_3d(x, d1, d2):
    """``cos(x) sin(d1 / 2) sin(d2 / 3)``."""
    return np.cos(x) * np.sin(np.asarray(d1) / 2) * np.sin(np.asarray(d2) / 3)


def synth2d_dataset(counts=(145, 150), ranges=SYNTH2D_RANGES) -> GridDataset:
    x, d = make_grid(ranges, counts)
    return GridDataset((x, d), synth_2d(x[:, None], d[None, :]))


def synth3d_dataset(counts=(145, 150, 100), ranges=SYNTH3D_RANGES) -> GridDataset:
    x, d1, d2 = make_grid(ranges, counts)
    return GridDataset((x, d1, d2), synth_3d(x[:, None, None], d1[None, :, None], d2[None, None, :]))


@dataclass(frozen=True, eq=False)
class SplitSpec:
    """Per-axis train/validation index lists.

    Axes with ``split[k] = False`` keep every index in both lists, so the
    validation grid covers them in full.
    """

    train: tuple
    validation: tuple
    seed: int
    fraction: float
    split: tuple

    def counts(self, part: str) -> tuple:
        return tuple(len(ix) for ix in self._part(part))

    def _part(self, part: str):
        if part == "train":
            return self.train
        if part == "validation":
            return self.validation
        raise ValueError(f"part must be 'train' or 'validation', got {part!r}")

    def __eq__(self, other):
        if not isinstance(other, SplitSpec):
            return NotImplemented
        return (self.seed == other.seed and self.fraction == other.fraction
                and self.split == other.split
                and all(np.array_equal(a, b) for a, b in zip(self.train, other.train))
                and all(np.array_equal(a, b) for a, b in zip(self.validation, other.validation)))


def _n_train(fraction: float, m: int) -> int:
    # round half up
    return int(math.floor(fraction * m + 0.5))


def split_axes(axes, fraction: float = 0.8, seed: int = 0,
               split: Optional[Sequence[bool]] = None,
               train_counts: Optional[Sequence[int]] = None) -> SplitSpec:
    """Random per-axis partition into training and validation indices.

    One generator seeded with ``seed`` draws a permutation for every axis in
    order (also for axes that are not split, so the flags do not change the
    other axes' draws).  Both index lists are returned sorted.

    Parameters
    ----------
    axes : sequence of 1-D arrays
    fraction : float
        Training share per split axis; axis ``k`` keeps ``round(fraction * m_k)``
        training indices (halves round up).
    seed : int
    split : sequence of bool, optional
        Per-axis flags; unsplit axes use every index for both parts.
    train_counts : sequence of int, optional
        Explicit training sizes per axis, overriding ``fraction`` on split axes.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    sizes = [len(a) for a in axes]
    if split is None:
        split = [True] * len(sizes)
    split = tuple(bool(s) for s in split)
    if len(split) != len(sizes):
        raise ValueError(f"{len(split)} split flags for {len(sizes)} axes")
    if train_counts is not None and len(train_counts) != len(sizes):
        raise ValueError(f"{len(train_counts)} training sizes for {len(sizes)} axes")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for k, m in enumerate(sizes):
        perm = rng.permutation(m)
        if not split[k]:
            train.append(np.arange(m))
            val.append(np.arange(m))
            continue
        n = _n_train(fraction, m) if train_counts is None else int(train_counts[k])
        if n <= 0 or n >= m:
            raise ValueError(
                f"axis {k}: fraction {fraction} of {m} samples leaves an empty "
                f"{'training' if n == 0 else 'validation'} set")
        train.append(np.sort(perm[:n]))
        val.append(np.sort(perm[n:]))
    return SplitSpec(tuple(train), tuple(val), int(seed), float(fraction), split)


def restrict(data: GridDataset, split: SplitSpec, part: str) -> GridDataset:
    """Sub-grid on the Cartesian product of one part's indices."""
    idx = split._part(part)
    if len(idx) != data.ndim:
        raise ValueError(f"split has {len(idx)} axes, data has {data.ndim}")
    for k, (ix, a) in enumerate(zip(idx, data.axes)):
        if len(ix) and (ix.max() >= a.size or ix.min() < 0):
            raise ValueError(f"split indices out of range on axis {k}")
    axes = tuple(a[ix] for a, ix in zip(data.axes, idx))
    return GridDataset(axes, data.values[np.ix_(*idx)])


def gaussian_filter_2d(grid, variance: float = 5.0, size: int = 6) -> np.ndarray:
    """Same-size smoothing with a normalised ``size x size`` sampled Gaussian.

    Samples sit at offsets ``k - (size - 1) / 2``; borders use replicate
    padding.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2 or g.size == 0:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {g.shape}")
    if int(size) != size or size < 1:
        raise ValueError(f"size must be a positive integer, got {size}")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    off = np.arange(size) - (size - 1) / 2
    w1 = np.exp(-off ** 2 / (2 * variance))
    w = np.outer(w1, w1)
    w /= w.sum()
    # filter deviations from the midrange so constant fields come back exactly
    mid = 0.5 * (g.min() + g.max())
    return mid + ndimage.correlate(g - mid, w, mode="nearest")


class GridParseError(ValueError):
    """Malformed grid CSV file."""


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".axes")


def _parse_floats(cells, lineno: int, path: Path, first_col: int = 0) -> list:
    out = []
    for c, cell in enumerate(cells):
        try:
            v = float(cell)
        except ValueError:
            raise GridParseError(
                f"{path}:{lineno}: column {first_col + c + 1}: cannot parse {cell.strip()!r} as a number"
            ) from None
        if not math.isfinite(v):
            raise GridParseError(f"{path}:{lineno}: column {first_col + c + 1}: value is not finite")
        out.append(v)
    return out


def _check_increasing(coords, what: str, where: str):
    if any(b <= a for a, b in zip(coords, coords[1:])):
        raise GridParseError(f"{where}: {what} coordinates are not strictly increasing")


def load_grid_csv(path) -> GridDataset:
    """Read a grid CSV.

    Line 1 holds the second-axis coordinates after a label cell, each later
    line holds a first-axis coordinate followed by that row's values.  If a
    sidecar ``<file>.axes`` exists, it lists the coordinates of axes 1..n (one
    axis per line, label first) and the header cells of the main file are
    ignored apart from their count; columns then run over axes 1..n with
    axis 1 fastest.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise GridParseError(f"{path}: need a header line and at least one data line")
    header_line, header = rows[0]
    ncols = len(header) - 1
    if ncols < 1:
        raise GridParseError(f"{path}:{header_line}: header has no coordinates")

    side = _sidecar(path)
    if side.exists():
        with open(side, newline="", encoding="utf-8") as fh:
            srows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if any(c.strip() for c in r)]
        outer = []
        for lineno, r in srows:
            coords = _parse_floats(r[1:], lineno, side, first_col=1)
            _check_increasing(coords, f"axis {len(outer) + 1}", f"{side}:{lineno}")
            outer.append(np.array(coords))
        if not outer or math.prod(a.size for a in outer) != ncols:
            raise GridParseError(
                f"{path}: sidecar axes give {math.prod(a.size for a in outer) if outer else 0} "
                f"columns, header has {ncols}")
    else:
        coords = _parse_floats(header[1:], header_line, path, first_col=1)
        _check_increasing(coords, "header (axis 1)", f"{path}:{header_line}")
        outer = [np.array(coords)]

    first, body = [], []
    for lineno, r in rows[1:]:
        if len(r) != ncols + 1:
            raise GridParseError(
                f"{path}:{lineno}: row has {len(r)} fields, expected {ncols + 1} (ragged row)")
        vals = _parse_floats(r, lineno, path)
        if first and vals[0] <= first[-1]:
            raise GridParseError(
                f"{path}:{lineno}: first-column (axis 0) coordinates are not strictly increasing")
        first.append(vals[0])
        body.append(vals[1:])
    values = np.array(body).reshape((len(first),) + tuple(a.size for a in outer), order="F")
    return GridDataset((np.array(first),) + tuple(outer), values)


def save_grid_csv(data: GridDataset, path, names: Optional[Sequence[str]] = None) -> Path:
    """Write ``data`` in the grid CSV layout; floats use shortest round-trip repr."""
    path = Path(path)
    names = list(names) if names else [f"axis{k}" for k in range(data.ndim)]
    if len(names) != data.ndim:
        raise ValueError(f"{len(names)} names for {data.ndim} axes")
    if data.ndim < 2:
        raise ValueError("grid CSV needs at least two axes")
    body = data.values.reshape(data.shape[0], -1, order="F")
    if data.ndim == 2:
        head = [repr(float(c)) for c in data.axes[1]]
    else:
        head = [str(j) for j in range(body.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["\\".join(names)] + head)
        for c, row in zip(data.axes[0], body):
            w.writerow([repr(float(c))] + [repr(float(v)) for v in row])
    side = _sidecar(path)
    if data.ndim > 2:
        with open(side, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for name, a in zip(names[1:], data.axes[1:]):
                w.writerow([name] + [repr(float(c)) for c in a])
    elif side.exists():
        side.unlink()
    return path
