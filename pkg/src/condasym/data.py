"""Ingestion, validation, standardization, and splitting of (X, Y, Z) samples."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

MIN_ROWS = 20


@dataclass(frozen=True)
class Dataset:
    """Immutable column blocks plus the affine parameters applied at load.

    ``standardization`` maps each column key ("x", "y", "z1"[, "z2"]) to
    the (shift, scale) pair with stored = (raw - shift) / scale; identity
    pairs mean the column was left on its original scale.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    names: dict = field(default_factory=dict)
    standardization: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def destandardized(self):
        """Recover the original-scale columns (x, y, z)."""
        sx = self.standardization.get("x", (0.0, 1.0))
        sy = self.standardization.get("y", (0.0, 1.0))
        x = self.x * sx[1] + sx[0]
        y = self.y * sy[1] + sy[0]
        z = self.z.copy()
        for j in range(self.d):
            sj = self.standardization.get(f"z{j + 1}", (0.0, 1.0))
            z[:, j] = z[:, j] * sj[1] + sj[0]
        return x, y, z


@dataclass(frozen=True)
class SplitPair:
    """Disjoint index halves covering every row, sizes differing by at most one."""

    d1: np.ndarray
    d2: np.ndarray
    seed: int


def make_dataset(x, y, z, names=None, standardize: bool = False) -> Dataset:
    """Assemble and validate a Dataset from numeric columns."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2 or z.shape[1] not in (1, 2):
        raise DataError(f"Z block must have 1 or 2 columns, got shape {z.shape}")
    if not (x.size == y.size == z.shape[0]):
        raise DataError(
            f"column blocks disagree on row count: x={x.size}, y={y.size}, z={z.shape[0]}"
        )
    if x.size < MIN_ROWS:
        raise DataError(f"need at least {MIN_ROWS} rows, got {x.size}")
    for label, block in (("x", x), ("y", y), ("z", z)):
        if not np.all(np.isfinite(block)):
            raise DataError(f"column block {label!r} contains non-finite values")

    standardization = {}
    if standardize:
        x, standardization["x"] = _standardize_column(x, "x")
        y, standardization["y"] = _standardize_column(y, "y")
        z = z.copy()
        for j in range(z.shape[1]):
            z[:, j], standardization[f"z{j + 1}"] = _standardize_column(
                z[:, j], f"z{j + 1}"
            )
    x.setflags(write=False)
    y.setflags(write=False)
    z.setflags(write=False)
    return Dataset(x=x, y=y, z=z, names=dict(names or {}), standardization=standardization)


def _standardize_column(col: np.ndarray, label: str):
    shift = float(np.mean(col))
    scale = float(np.std(col, ddof=1))
    if scale <= 0.0:
        raise DataError(f"column {label!r} has zero variance; cannot standardize")
    return (col - shift) / scale, (shift, scale)


def load_csv(path, columns: dict, standardize: bool = True) -> Dataset:
    """Load a one-header-row comma-separated file into a Dataset.

    ``columns`` maps roles to header names: {"x": name, "y": name,
    "z": [name] or [name, name]}.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"input file not found: {path}")
    for role in ("x", "y", "z"):
        if role not in columns:
            raise ConfigurationError(f"role {role!r} missing from column mapping")
    znames = list(columns["z"]) if isinstance(columns["z"], (list, tuple)) else [columns["z"]]
    if len(znames) not in (1, 2):
        raise ConfigurationError(f"role 'z' must map to 1 or 2 columns, got {len(znames)}")
    wanted = [columns["x"], columns["y"], *znames]

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [c.strip() for c in header]
        positions = {}
        for name in wanted:
            if name not in header:
                raise ConfigurationError(
                    f"column {name!r} not found in {path} (header: {header})"
                )
            positions[name] = header.index(name)

        cols = {name: [] for name in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            for name in wanted:
                pos = positions[name]
                if pos >= len(row):
                    raise DataError(f"{path} line {lineno}: missing value in column {name!r}")
                cell = row[pos].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path} line {lineno}: non-numeric value {cell!r} in column {name!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(
                        f"{path} line {lineno}: non-finite value {cell!r} in column {name!r}"
                    )
                cols[name].append(value)

    n = len(cols[columns["x"]])
    if n < MIN_ROWS:
        raise DataError(f"{path}: need at least {MIN_ROWS} rows, got {n}")
    z = np.column_stack([cols[name] for name in znames])
    names = {"x": columns["x"], "y": columns["y"], "z": znames}
    return make_dataset(cols[columns["x"]], cols[columns["y"]], z, names, standardize)


def split_half(ds: Dataset, seed: int) -> SplitPair:
    """Uniform random partition into two halves, deterministic per seed.

    For odd n the first half receives the extra row.
    """
    n = ds.n
    if n < MIN_ROWS:
        raise DataError(f"need at least {MIN_ROWS} rows to split, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFF, 0x51]))
    perm = rng.permutation(n)
    half = (n + 1) // 2
    d1 = np.sort(perm[:half])
    d2 = np.sort(perm[half:])
    d1.setflags(write=False)
    d2.setflags(write=False)
    return SplitPair(d1=d1, d2=d2, seed=int(seed))
