"""Dataset ingestion, sorting, group splitting and synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, SizeError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``(x_i, y_i)`` sorted ascending by ``x``.

    Sorting is stable, so tied ``x`` values keep their input order. The
    constructor sorts; arrays are read-only afterwards.
    """

    x: np.ndarray
    y: np.ndarray
    group: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise InputError(f"x and y lengths differ ({x.size} vs {y.size})")
        if x.size < 2:
            raise SizeError(f"need at least 2 observations, got {x.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("x and y must be finite")
        order = np.argsort(x, kind="stable")
        object.__setattr__(self, "x", _frozen(x[order]))
        object.__setattr__(self, "y", _frozen(y[order]))
        if self.group is not None:
            if len(self.group) != x.size:
                raise InputError("group labels must match the number of points")
            g = tuple(str(self.group[k]) for k in order)
            object.__setattr__(self, "group", g)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def __len__(self):
        return self.n

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def groups(self) -> list[str]:
        """Distinct group labels in sorted order (empty when ungrouped)."""
        if self.group is None:
            return []
        return sorted(set(self.group))

    def split_groups(self) -> dict[str, "Dataset"]:
        """Split into independent per-group datasets.

        An ungrouped dataset is returned under the key ``"all"``.
        """
        if self.group is None:
            return {"all": self}
        labels = np.asarray(self.group, dtype=object)
        out = {}
        for g in self.groups():
            mask = labels == g
            out[g] = Dataset(self.x[mask], self.y[mask])
        return out


_CURVES = ("sine", "piecewise_flat", "polynomial")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for ``y = f(x) + N(0, noise_sd^2)`` on an equally spaced grid.

    ``mean_function`` is one of ``sine``, ``piecewise_flat`` or
    ``polynomial``; ``params`` holds the curve's parameters:

    * sine: ``amplitude`` (1), ``frequency`` (1), ``phase`` (0)
    * piecewise_flat: ``breakpoint`` (midpoint of ``x_range``), ``level`` (0),
      ``amplitude`` (1), ``frequency`` (1). Constant at ``level`` left of the
      breakpoint, ``level + amplitude*sin(frequency*(x - breakpoint))`` right of it.
    * polynomial: ``coefficients`` in ascending powers.
    """

    mean_function: str = "sine"
    noise_sd: float = 0.1
    n: int = 100
    x_range: tuple[float, float] = (0.0, 2 * math.pi)
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        name = self.mean_function.replace("-", "_")
        object.__setattr__(self, "mean_function", name)
        if name not in _CURVES:
            raise InputError(f"unknown mean function {self.mean_function!r}; choose from {_CURVES}")
        if not self.noise_sd > 0:
            raise InputError("noise_sd must be positive")
        if self.n < 2:
            raise SizeError("n must be at least 2")
        lo, hi = self.x_range
        if not hi > lo:
            raise InputError("x_range must be an increasing interval")
        if self.seed < 0:
            raise InputError("seed must be a non-negative integer")

    def mean(self, x):
        """Evaluate the noise-free curve at ``x``."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.mean_function == "sine":
            return p.get("amplitude", 1.0) * np.sin(p.get("frequency", 1.0) * x + p.get("phase", 0.0))
        if self.mean_function == "piecewise_flat":
            bp = p.get("breakpoint", 0.5 * (self.x_range[0] + self.x_range[1]))
            level = p.get("level", 0.0)
            wave = p.get("amplitude", 1.0) * np.sin(p.get("frequency", 1.0) * (x - bp))
            return np.where(x < bp, level, level + wave)
        coefs = p.get("coefficients", (0.0,))
        return np.polynomial.polynomial.polyval(x, coefs)


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw a synthetic dataset; a pure function of ``spec`` (seed included)."""
    rng = np.random.default_rng(spec.seed)
    x = np.linspace(spec.x_range[0], spec.x_range[1], spec.n)
    y = spec.mean(x) + rng.normal(0.0, spec.noise_sd, size=spec.n)
    return Dataset(x, y)


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise InputError(f"cannot parse {text!r} as a number", row=row, column=column) from None
    if not math.isfinite(value):
        raise InputError(f"non-finite value {text!r}", row=row, column=column)
    return value


def load_csv(path) -> Dataset:
    """Read a CSV with header ``x,y`` and optional ``group`` column.

    Rows are numbered from 1 after the header in error messages.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        names = [h.strip().lower() for h in header]
        for required in ("x", "y"):
            if required not in names:
                raise InputError(f"missing required column {required!r} in header of {path}")
        ix, iy = names.index("x"), names.index("y")
        ig = names.index("group") if "group" in names else None

        xs, ys, gs = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            for col, idx in (("x", ix), ("y", iy)):
                if idx >= len(row):
                    raise InputError("missing field", row=row_no, column=col)
            xs.append(_parse_float(row[ix], row_no, "x"))
            ys.append(_parse_float(row[iy], row_no, "y"))
            if ig is not None:
                if ig >= len(row) or not row[ig].strip():
                    raise InputError("missing field", row=row_no, column="group")
                gs.append(row[ig].strip())

    if len(xs) < 2:
        raise SizeError(f"{path} has {len(xs)} data rows; need at least 2")
    return Dataset(xs, ys, tuple(gs) if ig is not None else None)


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if data.group is None:
            w.writerow(["x", "y"])
            for xi, yi in zip(data.x.tolist(), data.y.tolist()):
                w.writerow([repr(xi), repr(yi)])
        else:
            w.writerow(["x", "y", "group"])
            for xi, yi, gi in zip(data.x.tolist(), data.y.tolist(), data.group):
                w.writerow([repr(xi), repr(yi), gi])
