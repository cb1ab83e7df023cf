"""Sharded variable-significance test for additive models.

Workers are logical partitions of one dataset. The only payloads crossing
the worker boundary are small messages: per-shard moments (for centering),
Gram/moment sums (:class:`WorkerStats`), broadcast coefficient vectors, and
per-iteration partial sums of the multiplier equation. Every reduction is
taken in ascending ``worker_id`` order, and the leave-one-out scores each
worker produces equal the single-machine scores of the same observations,
so the statistic does not depend on the number of workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from . import rng as _rng
from .data_io import Dataset
from .elr import (
    DEFAULT_MAX_ITER,
    DEFAULT_STEP_TOL,
    DEFAULT_TOL,
    ElrReport,
    check_feasible,
    chi2_1_sf,
    decide,
    multiplier_bracket,
    newton_multiplier,
)
from .errors import (
    AllZeroScores,
    DataError,
    DegenerateLeverage,
    DimensionMismatch,
    ElrError,
    EmptyGrid,
    IndexOutOfRange,
    Infeasible,
    NTooLarge,
    SingularAggregate,
)
from .loocv import LEVERAGE_CUTOFF, default_q_grid
from .quantile import interpolate
from .splines import BasisSpec, additive_blocks, make_knots_uniform

SHARD_FORMAT = "elrsel.worker_stats"
SHARD_VERSION = 1


# -- partitioning ----------------------------------------------------------------


@dataclass(frozen=True)
class PartitionMap:
    """Bijection between (local row j, worker k) and global row i.

    ``shards[k]`` lists the 0-based global rows held by worker ``k`` (0-based).
    :meth:`nu` and :meth:`inverse` use the 1-based convention ``i = nu(j, k)``.
    """

    n: int
    N: int
    shards: tuple[np.ndarray, ...]
    seed: int | None = None

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.shards)

    def nu(self, j: int, k: int) -> int:
        return int(self.shards[k - 1][j - 1]) + 1

    def inverse(self, i: int) -> tuple[int, int]:
        where = self._where()
        k, j = where[i - 1]
        return int(j) + 1, int(k) + 1

    def _where(self) -> np.ndarray:
        out = np.empty((self.n, 2), dtype=np.int64)
        for k, rows in enumerate(self.shards):
            out[rows, 0] = k
            out[rows, 1] = np.arange(rows.size)
        return out

    def gather(self, per_worker: Sequence[np.ndarray]) -> np.ndarray:
        """Place per-worker vectors back into global row order."""
        out = np.empty(self.n)
        for rows, vals in zip(self.shards, per_worker):
            out[rows] = vals
        return out


def partition(d: Dataset, N: int, seed: int | None = None) -> tuple[PartitionMap, list[Dataset]]:
    """Split rows over ``N`` workers.

    Without a seed the split is sequential, ``nu(j, k) = j + (k - 1) m``; with a
    seed the rows are shuffled first. When ``N`` does not divide ``n`` the
    first ``n mod N`` shards get one extra row.
    """
    n = d.n
    if N < 1 or N > n:
        raise NTooLarge(f"cannot split {n} rows over {N} workers without an empty shard")
    order = np.arange(n) if seed is None else _rng.substream(seed, _rng.PARTITION).permutation(n)
    base, extra = divmod(n, N)
    bounds = np.cumsum([0] + [base + (k < extra) for k in range(N)])
    shards = tuple(order[bounds[k] : bounds[k + 1]] for k in range(N))
    if seed is not None:
        shards = tuple(np.sort(s) for s in shards)
    pmap = PartitionMap(n, N, shards, seed)
    return pmap, [d.take(rows) for rows in shards]


# -- worker messages ---------------------------------------------------------------


@dataclass(frozen=True)
class ShardMoments:
    worker_id: int
    count: int
    sum_y: float
    basis_sums: np.ndarray


@dataclass(frozen=True)
class WorkerStats:
    """Gram matrix and moment vector of one shard, for the full and the reduced model."""

    worker_id: int
    n_rows: int
    drop: int | None
    a_full: np.ndarray
    b_full: np.ndarray
    a_drop: np.ndarray | None = None
    b_drop: np.ndarray | None = None


@dataclass(frozen=True)
class Aggregate:
    n: int
    a_full: np.ndarray
    b_full: np.ndarray
    a_drop: np.ndarray | None
    b_drop: np.ndarray | None


@dataclass(frozen=True)
class Centering:
    y_bar: float
    column_means: np.ndarray


class ShardBasis:
    """Uncentered additive basis rows of one shard, built once per knot configuration."""

    def __init__(self, shard: Dataset, specs: Sequence[BasisSpec]):
        self.shard = shard
        self.blocks, self.column_map = additive_blocks(shard.X, specs)

    def designs(self, drop: int | None, cen: Centering):
        full = self.blocks - cen.column_means
        red = None
        if drop is not None:
            keep = np.array([c != drop - 1 for c in self.column_map])
            red = full[:, keep]
        return full, red, self.shard.y - cen.y_bar


def _basis(shard, specs) -> ShardBasis:
    return shard if isinstance(shard, ShardBasis) else ShardBasis(shard, specs)


def shard_moments(shard: Dataset, specs: Sequence[BasisSpec], worker_id: int) -> ShardMoments:
    sb = _basis(shard, specs)
    return ShardMoments(worker_id, sb.shard.n, math.fsum(sb.shard.y), sb.blocks.sum(axis=0))


def centering(moments: Iterable[ShardMoments]) -> Centering:
    moments = sorted(moments, key=lambda m: m.worker_id)
    n = sum(m.count for m in moments)
    y_bar = math.fsum(m.sum_y for m in moments) / n
    sums = np.zeros_like(moments[0].basis_sums)
    for m in moments:
        sums = sums + m.basis_sums
    return Centering(y_bar, sums / n)


def worker_stats(shard: Dataset, specs: Sequence[BasisSpec], drop: int | None, cen: Centering,
                 worker_id: int = 0) -> WorkerStats:
    full, red, y = _basis(shard, specs).designs(drop, cen)
    a_drop = b_drop = None
    if red is not None:
        a_drop, b_drop = red.T @ red, red.T @ y
    return WorkerStats(worker_id, full.shape[0], drop, full.T @ full, full.T @ y, a_drop, b_drop)


def aggregate(stats: Iterable[WorkerStats]) -> Aggregate:
    """Sum worker statistics in ascending ``worker_id`` order."""
    stats = sorted(stats, key=lambda s: s.worker_id)
    if not stats:
        raise DataError("no worker statistics to aggregate")
    first = stats[0]
    for s in stats[1:]:
        if s.a_full.shape != first.a_full.shape or s.drop != first.drop or (
            s.a_drop is not None and s.a_drop.shape != first.a_drop.shape
        ):
            raise DimensionMismatch(f"worker {s.worker_id} statistics do not match worker {first.worker_id}")
    a, b = first.a_full.copy(), first.b_full.copy()
    ad = None if first.a_drop is None else first.a_drop.copy()
    bd = None if first.b_drop is None else first.b_drop.copy()
    for s in stats[1:]:
        a += s.a_full
        b += s.b_full
        if ad is not None:
            ad += s.a_drop
            bd += s.b_drop
    return Aggregate(sum(s.n_rows for s in stats), a, b, ad, bd)


class _GramSolver:
    """Cholesky of a symmetrically rescaled Gram matrix."""

    def __init__(self, A: np.ndarray):
        d = np.sqrt(np.diag(A))
        if not np.all(d > 0):
            raise SingularAggregate("aggregate Gram matrix has a zero diagonal entry")
        self.scale = 1.0 / d
        S = A * np.outer(self.scale, self.scale)
        try:
            self.factor = sla.cho_factor(S, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularAggregate(f"aggregate Gram matrix is not positive definite: {exc}") from None
        L = np.diag(self.factor[0])
        if L.min() <= math.sqrt(A.shape[0] * np.finfo(float).eps) * L.max():
            raise SingularAggregate("aggregate Gram matrix is numerically singular")

    def solve(self, B: np.ndarray) -> np.ndarray:
        s = self.scale if B.ndim == 1 else self.scale[:, None]
        return s * sla.cho_solve(self.factor, s * B)


@dataclass(frozen=True)
class Broadcast:
    """Coefficients and factorizations sent back to every worker."""

    coef_full: np.ndarray
    coef_drop: np.ndarray | None
    solver_full: _GramSolver = field(repr=False)
    solver_drop: _GramSolver | None = field(default=None, repr=False)


def broadcast(agg: Aggregate) -> Broadcast:
    sf = _GramSolver(agg.a_full)
    sd = None if agg.a_drop is None else _GramSolver(agg.a_drop)
    return Broadcast(sf.solve(agg.b_full), None if sd is None else sd.solve(agg.b_drop), sf, sd)


def _loo_errors(rows: np.ndarray, y: np.ndarray, coef: np.ndarray, solver: _GramSolver, offset: int):
    e = y - rows @ coef
    p = np.einsum("ij,ji->i", rows, solver.solve(rows.T))
    bad = np.flatnonzero(p >= 1.0 - LEVERAGE_CUTOFF)
    if bad.size:
        raise DegenerateLeverage(offset + int(bad[0]), float(p[bad[0]]))
    return e / (1.0 - p)


@dataclass(frozen=True)
class WorkerScores:
    worker_id: int
    err_full: np.ndarray
    err_drop: np.ndarray | None
    eta: np.ndarray | None


def worker_scores(shard: Dataset, specs, drop, cen: Centering, bc: Broadcast, worker_id: int = 0) -> WorkerScores:
    full, red, y = _basis(shard, specs).designs(drop, cen)
    e2 = _loo_errors(full, y, bc.coef_full, bc.solver_full, 0)
    if red is None:
        return WorkerScores(worker_id, e2, None, None)
    e3 = _loo_errors(red, y, bc.coef_drop, bc.solver_drop, 0)
    return WorkerScores(worker_id, e2, e3, e3**2 - e2**2)


# -- orchestration -------------------------------------------------------------------


def _map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    threads = min(_rng.thread_count(threads), len(items))
    if threads <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def distributed_scores(shards: Sequence[Dataset], specs: Sequence[BasisSpec], drop: int | None,
                       threads: int | None = None, stats: Sequence[WorkerStats] | None = None):
    """Run the moment, statistics and scoring rounds.

    Returns ``(scores, stats, centering)`` with one :class:`WorkerScores` per
    shard. Precomputed ``stats`` (for instance read back from shard files)
    replace the statistics round.
    """
    bases = _map(lambda s, k: ShardBasis(s, specs), [(s, k) for k, s in enumerate(shards)], threads)
    work = [(b, k) for k, b in enumerate(bases)]
    cen = centering(_map(lambda s, k: shard_moments(s, specs, k), work, threads))
    if stats is None:
        stats = _map(lambda s, k: worker_stats(s, specs, drop, cen, k), work, threads)
    if len(stats) != len(shards):
        raise DimensionMismatch(f"{len(stats)} worker statistics for {len(shards)} shards")
    bc = broadcast(aggregate(stats))
    scores = _map(lambda s, k: worker_scores(s, specs, drop, cen, bc, k), work, threads)
    return scores, list(stats), cen


def distributed_elr(eta: Sequence[np.ndarray], alpha: float = 0.05, tol: float = DEFAULT_TOL,
                    step_tol: float = DEFAULT_STEP_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ElrReport:
    """ELR statistic from per-worker scores via map-reduce Newton rounds."""
    eta = [np.asarray(e, dtype=float) for e in eta]
    n = sum(e.size for e in eta)
    dape = math.fsum(math.fsum(e) for e in eta) / n
    smin = min(float(e.min()) for e in eta if e.size)
    smax = max(float(e.max()) for e in eta if e.size)
    try:
        check_feasible(smin, smax, not any(np.any(e) for e in eta))
    except Infeasible:
        return decide(ElrReport(math.inf, None, 0.0, False, dape, 0, "infeasible", n), alpha, nested=True)
    except AllZeroScores:
        return decide(ElrReport(0.0, 0.0, 1.0, True, dape, 0, "all_zero", n), alpha, nested=True)
    if smin == 0.0 or smax == 0.0:
        return decide(ElrReport(math.inf, None, 0.0, True, dape, 0, "boundary", n), alpha, nested=True)

    def evaluate(tau):
        d1 = d2 = 0.0
        for e in eta:  # worker-side partial sums, reduced in worker order
            t = e / (1.0 + tau * e)
            d1 += float(t.sum())
            d2 += float(np.dot(t, t))
        return d1, d2

    scale = sum(float(np.abs(e).sum()) for e in eta)
    lo, hi = multiplier_bracket(smin, smax)
    tau, it, why = newton_multiplier(evaluate, lo, hi, scale, tol, step_tol, max_iter)
    stat = max(sum(2.0 * float(np.sum(np.log1p(tau * e))) for e in eta), 0.0)
    return decide(ElrReport(stat, tau, chi2_1_sf(stat), True, dape, it, why, n), alpha, nested=True)


# -- distributed order statistics -------------------------------------------------------


def distributed_order_statistic(shard_values: Sequence, l: int, seed: int = 0,
                                generator: np.random.Generator | None = None) -> float:
    """The ``l``-th smallest value (1-based) of the union of all shards.

    Each round picks a random shard and a random pivot from it, counts values
    below and equal to the pivot on every shard, and either returns the pivot
    or keeps only the side that holds the target.
    """
    F = [np.asarray(v, dtype=float).ravel() for v in shard_values]
    total = sum(f.size for f in F)
    if not 1 <= l <= total:
        raise IndexOutOfRange(f"order statistic {l} requested from {total} values")
    gen = generator if generator is not None else _rng.substream(seed, _rng.PIVOT, l)
    while True:
        live = [k for k, f in enumerate(F) if f.size]
        k = live[int(gen.integers(len(live)))]
        a = F[k][int(gen.integers(F[k].size))]
        below = sum(int(np.count_nonzero(f < a)) for f in F)
        equal = sum(int(np.count_nonzero(f == a)) for f in F)
        if below < l <= below + equal:
            return float(a)
        if l <= below:
            F = [f[f < a] for f in F]
        else:
            F = [f[f > a] for f in F]
            l -= below + equal


def distributed_quantile(shard_values: Sequence, q: float, seed: int = 0) -> float:
    """Interpolated sample quantile (type 7) of the union of all shards."""
    n = sum(np.asarray(v).size for v in shard_values)
    return interpolate(lambda l: distributed_order_statistic(shard_values, l, seed), n, q)


def distributed_knots(shards: Sequence[Dataset], column: int, q: int, placement: str = "quantile",
                      seed: int = 0, cache: dict | None = None) -> tuple[float, ...]:
    """Knots for one covariate; ``cache`` memoises quantiles by (column, level)."""
    if placement == "uniform":
        return make_knots_uniform(q)
    cache = {} if cache is None else cache
    values = [s.X[:, column] for s in shards]
    interior = []
    for k in range(1, q + 1):
        key = (column, k / (q + 1))
        if key not in cache:
            cache[key] = distributed_quantile(values, key[1], seed)
        interior.append(cache[key])
    return (0.0, *interior, 1.0)


def distributed_specs(shards: Sequence[Dataset], q, order: int = 4, placement: str = "quantile",
                      seed: int = 0, cache: dict | None = None) -> tuple[BasisSpec, ...]:
    p = shards[0].p
    qs = [int(q)] * p if np.ndim(q) == 0 else [int(v) for v in q]
    cache = {} if cache is None else cache
    return tuple(BasisSpec(order, distributed_knots(shards, j, qs[j], placement, seed, cache))
                 for j in range(p))


# -- end-to-end ------------------------------------------------------------------------


@dataclass(frozen=True)
class DistributedResult:
    report: ElrReport
    partition: PartitionMap
    specs: tuple[BasisSpec, ...]
    q: object
    scores: list[WorkerScores]
    stats: list[WorkerStats]
    table: list[dict]

    @property
    def eta(self) -> np.ndarray:
        """Scores in global row order."""
        return self.partition.gather([s.eta for s in self.scores])


def select_q_distributed(shards, grid, order=4, placement="quantile", seed=0, threads=None, cache=None):
    """Shared knot count minimising the full model's ``SSE / (n - kappa)``."""
    grid = list(grid)
    if not grid:
        raise EmptyGrid("knot-count grid is empty")
    n = sum(s.n for s in shards)
    table, best = [], None
    for pos, q in enumerate(grid):
        row = {"q": tuple(np.atleast_1d(q).tolist())}
        try:
            specs = distributed_specs(shards, q, order, placement, seed, cache)
            scores, _, _ = distributed_scores(shards, specs, None, threads)
        except ElrError as exc:
            row.update(status=f"failed: {type(exc).__name__}")
            table.append(row)
            continue
        kappa = sum(s.dimension for s in specs)
        sse = math.fsum(float(np.dot(s.err_full, s.err_full)) for s in scores)
        row.update(kappa=kappa, ape=sse / n, ape_adj=sse / (n - kappa), status="ok")
        table.append(row)
        key = (row["ape_adj"], kappa, pos)
        if best is None or key < best[0]:
            best = (key, q)
    if best is None:
        raise ElrError("every knot grid point failed")
    return best[1], table


def run_distributed_test(d: Dataset, drop: int, N: int, q=None, grid=None, order: int = 4,
                         placement: str = "quantile", seed: int | None = 0, alpha: float = 0.05,
                         tol: float = DEFAULT_TOL, step_tol: float = DEFAULT_STEP_TOL,
                         max_iter: int = DEFAULT_MAX_ITER, threads: int | None = None,
                         stats: Sequence[WorkerStats] | None = None) -> DistributedResult:
    """Variable-significance test of covariate ``drop`` (1-based) on ``N`` workers.

    ``d`` must already be rescaled to [0, 1]. Both models share the knot
    sequences; when ``q`` is None it is chosen over ``grid`` from the full
    model's adjusted APE.
    """
    if d.p < 2 or not 1 <= drop <= d.p:
        raise DataError(f"cannot drop covariate {drop} of a {d.p}-covariate model")
    pmap, shards = partition(d, N, seed)
    key = 0 if seed is None else seed
    table: list[dict] = []
    cache: dict = {}
    if q is None:
        q, table = select_q_distributed(shards, default_q_grid(d.n) if grid is None else grid,
                                        order, placement, key, threads, cache)
    specs = distributed_specs(shards, q, order, placement, key, cache)
    scores, wstats, _ = distributed_scores(shards, specs, drop, threads, stats)
    report = distributed_elr([s.eta for s in scores], alpha, tol, step_tol, max_iter)
    return DistributedResult(report, pmap, specs, q, scores, wstats, table)


# -- shard exchange format ----------------------------------------------------------------


def _pack(a: np.ndarray | None):
    if a is None:
        return None
    return {"shape": list(a.shape), "data": [float(v) for v in np.ravel(a, order="C")]}


def _unpack(obj) -> np.ndarray | None:
    if obj is None:
        return None
    return np.array(obj["data"], dtype=float).reshape(obj["shape"])


def stats_to_json(ws: WorkerStats) -> str:
    """JSON envelope; float repr keeps every value bit-exact on reload."""
    return json.dumps({
        "format": SHARD_FORMAT,
        "version": SHARD_VERSION,
        "worker_id": ws.worker_id,
        "n_rows": ws.n_rows,
        "drop": ws.drop,
        "a_full": _pack(ws.a_full),
        "b_full": _pack(ws.b_full),
        "a_drop": _pack(ws.a_drop),
        "b_drop": _pack(ws.b_drop),
    })


def stats_from_json(text: str) -> WorkerStats:
    obj = json.loads(text)
    if obj.get("format") != SHARD_FORMAT:
        raise DataError(f"not a worker statistics envelope: {obj.get('format')!r}")
    if obj.get("version") != SHARD_VERSION:
        raise DataError(f"unsupported worker statistics version {obj.get('version')!r}")
    return WorkerStats(
        int(obj["worker_id"]), int(obj["n_rows"]), obj["drop"],
        _unpack(obj["a_full"]), _unpack(obj["b_full"]), _unpack(obj["a_drop"]), _unpack(obj["b_drop"]),
    )


def write_shards(stats: Iterable[WorkerStats], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for ws in stats:
        path = directory / f"worker-{ws.worker_id:05d}.json"
        path.write_text(stats_to_json(ws), encoding="utf-8")
        paths.append(path)
    return paths


def read_shards(directory) -> list[WorkerStats]:
    paths = sorted(Path(directory).glob("worker-*.json"))
    if not paths:
        raise DataError(f"no worker-*.json files in {directory}")
    return sorted((stats_from_json(p.read_text(encoding="utf-8")) for p in paths), key=lambda s: s.worker_id)
