"""Loading, rescaling and centering of tabular regression data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConstantColumn, DataError, EmptyFile, MissingColumn, NonNumericCell


@dataclass(frozen=True)
class ColumnTransform:
    """Affine map ``scaled = (raw - offset) / scale`` for one column."""

    name: str
    offset: float = 0.0
    scale: float = 1.0

    def apply(self, raw):
        return (np.asarray(raw, dtype=float) - self.offset) / self.scale

    def invert(self, scaled):
        return np.asarray(scaled, dtype=float) * self.scale + self.offset

    def then(self, other: "ColumnTransform") -> "ColumnTransform":
        # other applied after self
        return ColumnTransform(self.name, self.offset + other.offset * self.scale, self.scale * other.scale)


@dataclass(frozen=True)
class Dataset:
    """Response, covariates and optional index variable.

    Arrays are copied and made read-only at construction. ``transforms`` maps
    column name to the affine map from raw values to the stored values; it is
    empty until :func:`rescale_unit_interval` is applied.
    """

    y: np.ndarray
    X: np.ndarray
    z: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    z_name: str | None = None
    response_name: str = "y"
    transforms: dict[str, ColumnTransform] = field(default_factory=dict)
    y_bar: float = field(init=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.size == 0:
            X = X.reshape(y.shape[0], 0)
        n = y.shape[0]
        if n < 1:
            raise DataError("dataset needs at least one row")
        if X.shape[0] != n:
            raise DataError(f"X has {X.shape[0]} rows, y has {n}")
        z = None
        if self.z is not None:
            z = np.array(self.z, dtype=float).reshape(-1)
            if z.shape[0] != n:
                raise DataError(f"z has {z.shape[0]} rows, y has {n}")
        for name, arr in (("y", y), ("X", X), ("z", z)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        names = tuple(self.x_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} covariate names for {X.shape[1]} columns")
        for arr in (y, X, z):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x_names", names)
        if z is not None and self.z_name is None:
            object.__setattr__(self, "z_name", "z")
        object.__setattr__(self, "transforms", dict(self.transforms))
        object.__setattr__(self, "y_bar", math.fsum(y) / n)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        if name in self.x_names:
            return self.X[:, self.x_names.index(name)]
        if name == self.z_name and self.z is not None:
            return self.z
        if name == self.response_name:
            return self.y
        raise MissingColumn(name, self.x_names + ((self.z_name,) if self.z is not None else ()))

    def select(self, names: Sequence[str]) -> "Dataset":
        """Dataset whose covariates are ``names``, in that order.

        ``names`` may include the index variable, which is then also used as an
        ordinary covariate (the z-component of an additive model).
        """
        cols = [self.column(nm) for nm in names]
        X = np.column_stack(cols) if cols else np.empty((self.n, 0))
        return replace(self, X=X, x_names=tuple(names))

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(
            self,
            y=self.y[rows],
            X=self.X[rows],
            z=None if self.z is None else self.z[rows],
        )


def load_csv(path, response_col: str, index_col: str | None = None,
             columns: Sequence[str] | None = None) -> Dataset:
    """Read a header-ed CSV of finite reals.

    Every column other than the response and the index variable becomes a
    covariate unless ``columns`` restricts the set. Error rows count the
    header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise EmptyFile(path)
        header = [h.strip() for h in header]
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(path)
    for col in [response_col] + ([index_col] if index_col else []) + list(columns or []):
        if col not in header:
            raise MissingColumn(col, header)
    if columns is None:
        columns = [h for h in header if h not in (response_col, index_col)]
    wanted = [response_col] + list(columns) + ([index_col] if index_col else [])
    pos = [header.index(c) for c in wanted]

    values = np.empty((len(rows), len(wanted)))
    for r, row in enumerate(rows):
        for c, (col, j) in enumerate(zip(wanted, pos)):
            cell = row[j].strip() if j < len(row) else ""
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(r + 2, col, cell) from None
            if not math.isfinite(v):
                raise NonNumericCell(r + 2, col, cell)
            values[r, c] = v

    p = len(columns)
    return Dataset(
        y=values[:, 0],
        X=values[:, 1 : 1 + p],
        z=values[:, -1] if index_col else None,
        x_names=tuple(columns),
        z_name=index_col,
        response_name=response_col,
    )


def _unit_transform(name: str, col: np.ndarray) -> ColumnTransform:
    lo, hi = float(col.min()), float(col.max())
    if not hi > lo:
        raise ConstantColumn(name)
    return ColumnTransform(name, lo, hi - lo)


def rescale_unit_interval(d: Dataset) -> Dataset:
    """Min-max rescale every covariate (and z) to span exactly [0, 1].

    The response is left alone. Transforms compose with any already recorded,
    so ``transforms[name].invert`` always maps back to the raw column.
    """
    transforms = dict(d.transforms)
    X = np.empty_like(d.X)
    for j, name in enumerate(d.x_names):
        t = _unit_transform(name, d.X[:, j])
        X[:, j] = t.apply(d.X[:, j])
        transforms[name] = transforms[name].then(t) if name in transforms else t
    z = None
    if d.z is not None:
        t = _unit_transform(d.z_name, d.z)
        z = t.apply(d.z)
        transforms[d.z_name] = transforms[d.z_name].then(t) if d.z_name in transforms else t
    # exact endpoints despite rounding in (x - lo) / range
    X = np.clip(X, 0.0, 1.0)
    if z is not None:
        z = np.clip(z, 0.0, 1.0)
    return replace(d, X=X, z=z, transforms=transforms)


def center_response(d: Dataset) -> tuple[np.ndarray, float]:
    """Response minus its full-sample mean, and that mean."""
    return d.y - d.y_bar, d.y_bar


# -- report serialization ----------------------------------------------------


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and infinities into JSON-safe values.

    Infinite floats become the strings ``"+inf"``/``"-inf"``; NaN becomes null.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        return v
    return obj


def from_json_float(v) -> float:
    """Inverse of :func:`to_jsonable` for one scalar.

    Also accepts the legacy sentinel ``1e16`` as infinity.
    """
    if v is None:
        return math.nan
    if isinstance(v, str):
        return float(v.replace("+", ""))
    v = float(v)
    return math.inf if v >= 1e16 else v


def dumps(obj: Any) -> str:
    # float repr is the shortest string that round-trips (<= 17 significant digits)
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False)
