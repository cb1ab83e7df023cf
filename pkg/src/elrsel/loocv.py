"""Least-squares fits, leverages, and exact leave-one-out prediction errors.

The fast path uses one pivoted QR of the full design: with residuals ``e`` and
leverages ``p`` the held-out prediction error is ``e_i / (1 - p_i)``.
:func:`loocv_naive` refits ``n`` times and exists as a test oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .data_io import Dataset
from .errors import (
    DegenerateLeverage,
    EmptyGrid,
    ElrError,
    NotEnoughRows,
    RankDeficient,
    RankDeficientOnDeletion,
)
from .splines import (
    ADDITIVE,
    VARYCOEF,
    BasisSpec,
    DesignMatrix,
    additive_specs,
    design_additive,
    design_varycoef,
    varycoef_specs,
)

LEVERAGE_CUTOFF = 1e-10


@dataclass(frozen=True)
class FittedModel:
    coefficients: np.ndarray
    residuals: np.ndarray
    design_kind: str | None = None


@dataclass(frozen=True)
class LoocvResult:
    """Leave-one-out prediction errors and their mean square (the APE)."""

    leverages: np.ndarray
    loocv_errors: np.ndarray
    ape: float
    kappa: int
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.loocv_errors.shape[0]


def _rows(D) -> np.ndarray:
    return D.rows if isinstance(D, DesignMatrix) else np.asarray(D, dtype=float)


def _kind(D) -> str | None:
    return D.kind if isinstance(D, DesignMatrix) else None


def _qr(A: np.ndarray):
    """Economic pivoted QR with a rank check; returns ``(Q, R, perm)``."""
    n, K = A.shape
    if n <= K:
        raise NotEnoughRows(f"{n} rows for {K} columns")
    Q, R, perm = sla.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, K) * np.finfo(float).eps * (diag[0] if K else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < K:
        raise RankDeficient(rank, K)
    return Q, R, perm


def least_squares(D, y) -> FittedModel:
    A = _rows(D)
    y = np.asarray(y, dtype=float)
    Q, R, perm = _qr(A)
    coef = np.empty(A.shape[1])
    coef[perm] = sla.solve_triangular(R, Q.T @ y)
    return FittedModel(coef, y - A @ coef, _kind(D))


def leverages(D) -> np.ndarray:
    """Diagonal of the hat matrix, from the orthogonal factor's row norms."""
    Q, _, _ = _qr(_rows(D))
    return np.einsum("ij,ij->i", Q, Q)


def reduce_rank(D: DesignMatrix) -> DesignMatrix:
    """Keep a full-rank subset of columns spanning the same column space.

    Fitted values and leave-one-out errors depend only on the column space,
    so this makes aliased designs usable (e.g. a varying-coefficient model
    whose index variable is also a covariate).
    """
    A = D.rows
    _, R, perm = sla.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    keep = np.sort(perm[: int(np.sum(diag > tol))])
    cmap = tuple(D.column_map[c] for c in keep)
    means = None if D.column_means is None else D.column_means[keep]
    return replace(D, rows=A[:, keep], column_map=cmap, column_means=means, rank_reduced=True)


def loocv_fast(D, y) -> LoocvResult:
    A = _rows(D)
    y = np.asarray(y, dtype=float)
    n, K = A.shape
    if n <= K + 1:
        raise NotEnoughRows(f"leave-one-out needs n > K + 1 (n={n}, K={K})")
    Q, _, _ = _qr(A)
    e = y - Q @ (Q.T @ y)
    p = np.einsum("ij,ij->i", Q, Q)
    bad = np.flatnonzero(p >= 1.0 - LEVERAGE_CUTOFF)
    if bad.size:
        raise DegenerateLeverage(int(bad[0]), float(p[bad[0]]))
    err = e / (1.0 - p)
    return LoocvResult(p, err, float(np.mean(err**2)), K, e)


def loocv_naive(D, y) -> LoocvResult:
    """Refit once per held-out observation.

    Equivalent closed form (not used here): deleting row ``i`` moves the
    coefficients by ``-(D'D)^{-1} d_i e_i / (1 - p_i)``.
    """
    A = _rows(D)
    y = np.asarray(y, dtype=float)
    n, K = A.shape
    if n <= K:
        raise NotEnoughRows(f"leave-one-out needs n > K (n={n}, K={K})")
    err = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        coef, _, rank, _ = np.linalg.lstsq(A[mask], y[mask], rcond=None)
        mask[i] = True
        if rank < K:
            raise RankDeficientOnDeletion(i)
        err[i] = y[i] - A[i] @ coef
    # leverages through an explicit inverse, independent of the QR path
    p = np.einsum("ij,jk,ik->i", A, np.linalg.inv(A.T @ A), A)
    return LoocvResult(p, err, float(np.mean(err**2)), K)


# -- knot-count selection ------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Which covariates enter a model and how.

    ``kind`` is ``"additive"`` or ``"varycoef"``; ``linear`` lists (0-based)
    additive components entered as straight lines instead of splines.
    ``reduce`` drops aliased columns before fitting (see :func:`reduce_rank`).
    """

    kind: str
    order: int = 4
    placement: str = "quantile"
    linear: tuple[int, ...] = ()
    drop: int | None = None
    reduce: bool = False


@dataclass(frozen=True)
class KnotSelection:
    specs: tuple[BasisSpec, ...]
    q: object
    kappa: int
    loocv: LoocvResult
    design: DesignMatrix
    table: list[dict]


def build_design(d: Dataset, model: ModelSpec, q) -> DesignMatrix:
    if model.kind == ADDITIVE:
        specs = additive_specs(d, q, model.order, model.placement, model.linear)
        D = design_additive(d, specs, model.drop)
    elif model.kind == VARYCOEF:
        D = design_varycoef(d, varycoef_specs(d, q, model.order, model.placement))
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return reduce_rank(D) if model.reduce else D


def response_for(d: Dataset, model: ModelSpec) -> np.ndarray:
    """Additive fits use the response centered at its full-sample mean."""
    return d.y - d.y_bar if model.kind == ADDITIVE else d.y


def default_q_grid(n: int) -> list[int]:
    return list(range(1, math.ceil(n ** 0.2) + 3))


def _grid_key(q) -> tuple:
    return tuple(np.atleast_1d(q).tolist())


def select_knot_counts(d: Dataset, model: ModelSpec, grid: Iterable | None = None) -> KnotSelection:
    """Pick the knot counts minimising ``SSE / (n - kappa)`` over ``grid``.

    ``kappa`` counts full basis dimensions of the components in the model
    (so a dropped component does not contribute). Ties go to the smaller
    ``kappa``, then to the earlier grid point. Grid points whose fit fails are
    skipped with a warning.
    """
    grid = list(default_q_grid(d.n) if grid is None else grid)
    if not grid:
        raise EmptyGrid("knot-count grid is empty")
    y = response_for(d, model)
    table, best = [], None
    for pos, q in enumerate(grid):
        row = {"q": _grid_key(q)}
        try:
            D = build_design(d, model, q)
            res = loocv_fast(D, y)
        except ElrError as exc:
            warnings.warn(f"knot grid point q={row['q']} skipped: {exc}", stacklevel=2)
            row.update(status=f"failed: {type(exc).__name__}")
            table.append(row)
            continue
        kappa = D.kappa
        ape_adj = float(np.sum(res.loocv_errors**2)) / (d.n - kappa)
        row.update(kappa=kappa, K=D.K, ape=res.ape, ape_adj=ape_adj, status="ok")
        table.append(row)
        key = (ape_adj, kappa, pos)
        if best is None or key < best[0]:
            best = (key, q, D, res)
    if best is None:
        raise ElrError("every knot grid point failed")
    _, q, D, res = best
    return KnotSelection(D.specs, q, D.kappa, res, D, table)

