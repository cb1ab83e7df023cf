"""Monte-Carlo size and power studies on three data-generating processes.

* ``gen_example2``: varying-coefficient vs additive, both misspecifiable via
  ``theta`` (varying-coefficient signal) and ``tau`` (additive signal), with
  heteroscedastic noise ``sin(pi x1) * N(0, 1)``.
* ``gen_example3``: same comparison where the additive model contains the
  varying-coefficient one (``z = x1``), under four error laws.
* ``gen_example4``: the sharded test of whether ``x1`` can be dropped from a
  two-covariate additive model.

Covariates ``(x1, x2)`` are standard normal with correlation 0.5; the
pipeline min-max rescales them to [0, 1] before splining. Replication ``r``
draws from substream ``(seed, REPLICATION, r)`` whatever the parameter point,
so every point of a sweep sees the same underlying draws.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as _rng
from .data_io import Dataset, rescale_unit_interval, to_jsonable
from .distributed import run_distributed_test
from .elr import Decision, decide, elr_statistic, score_diff
from .errors import ElrError
from .loocv import ModelSpec, select_knot_counts

ERROR_KINDS = ("normal", "cond_normal", "cond_t6", "mixed_normal")
FULL_SCALE = {"n": 1000, "n_reps": 600}


def _covariates(gen: np.random.Generator, n: int):
    u = gen.standard_normal((2, n))
    return u[0], 0.5 * u[0] + math.sqrt(0.75) * u[1]


def mean_example2(x1, x2, z, theta=0.0, tau=0.0):
    x1, x2, z = map(np.asarray, (x1, x2, z))
    vc = x1 * np.exp(1.0 + z) + x2 * (z > 0.5) + 1.5 * np.cos(np.pi * z)
    add = np.exp(x1) * np.cos(x1) + 0.5 * np.sin(x2)
    return 0.5 * (x1 + x2) + theta * vc + tau * add


def gen_example2(n: int, theta: float = 0.0, tau: float = 0.0, seed: int = 0, noise: bool = True,
                 generator: np.random.Generator | None = None) -> Dataset:
    gen = generator if generator is not None else _rng.substream(seed, _rng.REPLICATION, 0)
    x1, x2 = _covariates(gen, n)
    z = gen.uniform(size=n)
    eps = gen.standard_normal(n)
    y = mean_example2(x1, x2, z, theta, tau) + (np.sin(np.pi * x1) * eps if noise else 0.0)
    return Dataset(y, np.column_stack([x1, x2]), z, ("x1", "x2"), "z")


def mean_example3(x1, x2, tau=0.0):
    x1, x2 = np.asarray(x1), np.asarray(x2)
    return 0.5 * x1 + 0.25 * x1 * np.cos(x1) + tau * np.exp(x2) * np.cos(x2)


def example3_errors(gen: np.random.Generator, x2: np.ndarray, kind: str) -> np.ndarray:
    n = x2.shape[0]
    # fixed draw layout so every kind consumes the stream identically
    normal = gen.standard_normal(n)
    t6 = gen.standard_t(6, size=n)
    pick = gen.uniform(size=n)
    if kind == "normal":
        return normal
    if kind == "cond_normal":
        return np.sin(x2) * normal
    if kind == "cond_t6":
        return np.sin(x2) * t6
    if kind == "mixed_normal":
        return np.where(pick < 0.05, 3.0 * normal, normal)
    raise ValueError(f"unknown error kind {kind!r}; expected one of {ERROR_KINDS}")


def gen_example3(n: int, tau: float = 0.0, error_kind: str = "normal", seed: int = 0, noise: bool = True,
                 generator: np.random.Generator | None = None) -> Dataset:
    gen = generator if generator is not None else _rng.substream(seed, _rng.REPLICATION, 0)
    x1, x2 = _covariates(gen, n)
    eps = example3_errors(gen, x2, error_kind)
    y = mean_example3(x1, x2, tau) + (eps if noise else 0.0)
    return Dataset(y, np.column_stack([x1, x2]), x1.copy(), ("x1", "x2"), "z")


def mean_example4(x1, x2, tau=0.0):
    x1, x2 = np.asarray(x1), np.asarray(x2)
    return tau * np.exp(x1) * np.cos(x1) + 0.1 * x2 * (1.0 + x2)


def gen_example4(n: int, tau: float = 0.0, seed: int = 0, noise: bool = True,
                 generator: np.random.Generator | None = None) -> Dataset:
    gen = generator if generator is not None else _rng.substream(seed, _rng.REPLICATION, 0)
    x1, x2 = _covariates(gen, n)
    eps = gen.standard_normal(n)
    y = mean_example4(x1, x2, tau) + (np.sin(np.pi * x2) * eps if noise else 0.0)
    return Dataset(y, np.column_stack([x1, x2]), None, ("x1", "x2"))


# -- studies ------------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo study. ``points`` are ``(theta, tau)`` pairs; theta is
    ignored by examples 3 and 4."""

    example: int
    n: int = 500
    points: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    error_kind: str = "normal"
    n_reps: int = 400
    alphas: tuple[float, ...] = (0.05, 0.10)
    seed: int = 20240607
    workers: int = 1
    q_grid: tuple | None = None
    order: int = 4
    placement: str = "quantile"
    threads: int | None = 1

    def __post_init__(self):
        if self.example not in (2, 3, 4):
            raise ValueError(f"example must be 2, 3 or 4, got {self.example}")
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if not all(0.0 < a < 1.0 for a in self.alphas):
            raise ValueError("alpha levels must lie in (0, 1)")
        if self.error_kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.error_kind!r}")
        object.__setattr__(self, "points", tuple((float(t), float(u)) for t, u in self.points))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))


def generate(cfg: SimConfig, theta: float, tau: float, rep: int) -> Dataset:
    gen = _rng.substream(cfg.seed, _rng.REPLICATION, rep)
    if cfg.example == 2:
        return gen_example2(cfg.n, theta, tau, generator=gen)
    if cfg.example == 3:
        return gen_example3(cfg.n, tau, cfg.error_kind, generator=gen)
    return gen_example4(cfg.n, tau, generator=gen)


def run_replication(cfg: SimConfig, point: int, rep: int) -> dict:
    theta, tau = cfg.points[point]
    out = {"point": point, "theta": theta, "tau": tau, "rep": rep}
    try:
        d = rescale_unit_interval(generate(cfg, theta, tau, rep))
        grid = None if cfg.q_grid is None else list(cfg.q_grid)
        if cfg.example == 4:
            res = run_distributed_test(d, 1, cfg.workers, grid=grid, order=cfg.order,
                                       placement=cfg.placement, seed=cfg.seed + rep, threads=1)
            report = res.report
            out.update(q_a=res.q, q_b=res.q)
        else:
            vc = d if cfg.example == 2 else d.select(["x1"])
            a = select_knot_counts(vc, ModelSpec("varycoef", cfg.order, cfg.placement,
                                                     reduce=cfg.example == 3), grid)
            b = select_knot_counts(d, ModelSpec("additive", cfg.order, cfg.placement), grid)
            report = elr_statistic(score_diff(a.loocv, b.loocv, "varycoef", "additive"))
            out.update(q_a=a.q, q_b=b.q)
    except ElrError as exc:
        out.update(status=f"failed: {type(exc).__name__}: {exc}")
        return out
    out.update(status="ok", statistic=report.statistic, dape=report.dape)
    for alpha in cfg.alphas:
        out[f"reject_{alpha:g}"] = decide(report, alpha).decision is not Decision.EQUIVALENT
    return out


def _run_chunk(args) -> list[dict]:
    cfg, jobs = args
    return [run_replication(cfg, p, r) for p, r in jobs]


@dataclass
class RejectionTable:
    config: SimConfig
    rows: list[dict]
    trace: list[dict] = field(repr=False, default_factory=list)
    generator: str = _rng.GENERATOR

    @property
    def valid(self) -> bool:
        return all(r["failed"] <= 0.01 * self.config.n_reps for r in self.rows)

    def rate(self, point: int, alpha: float) -> float:
        return self.rows[point][f"rate_{alpha:g}"]

    def statistics(self, point: int) -> np.ndarray:
        return np.array([t["statistic"] for t in self.trace if t["point"] == point and t["status"] == "ok"])

    def to_json(self) -> str:
        return json.dumps(to_jsonable({
            "config": asdict(self.config),
            "generator": self.generator,
            "valid": self.valid,
            "rows": self.rows,
        }), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(to_jsonable(r))
        return buf.getvalue()

    def trace_csv(self) -> str:
        keys = ["point", "theta", "tau", "rep", "status", "statistic", "dape", "q_a", "q_b"]
        keys += [f"reject_{a:g}" for a in self.config.alphas]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for t in self.trace:
            w.writerow(to_jsonable(t))
        return buf.getvalue()


def summarize(cfg: SimConfig, trace: list[dict]) -> list[dict]:
    rows = []
    for p, (theta, tau) in enumerate(cfg.points):
        reps = [t for t in trace if t["point"] == p]
        ok = [t for t in reps if t["status"] == "ok"]
        row = {"theta": theta, "tau": tau, "n": cfg.n, "reps": len(ok), "failed": len(reps) - len(ok)}
        for alpha in cfg.alphas:
            r = float(np.mean([t[f"reject_{alpha:g}"] for t in ok])) if ok else math.nan
            row[f"rate_{alpha:g}"] = r
            row[f"mc_se_{alpha:g}"] = math.sqrt(r * (1 - r) / len(ok)) if ok else math.nan
        dapes = np.array([t["dape"] for t in ok])
        row["mean_dape"] = float(dapes.mean()) if ok else math.nan
        row["frac_dape_positive"] = float(np.mean(dapes > 0)) if ok else math.nan
        row["sign_dape"] = "+" if row["mean_dape"] > 0 else "-" if row["mean_dape"] < 0 else "0"
        rows.append(row)
    return rows


def run_study(cfg: SimConfig) -> RejectionTable:
    """Run every (point, replication) pair and aggregate rejection rates.

    Results are identical for any ``threads`` value: each replication owns its
    random substream and the trace is assembled in (point, rep) order.
    """
    jobs = [(p, r) for p in range(len(cfg.points)) for r in range(cfg.n_reps)]
    threads = min(_rng.thread_count(cfg.threads), len(jobs))
    if threads <= 1:
        trace = [run_replication(cfg, p, r) for p, r in jobs]
    else:
        chunks = [(cfg, jobs[i::threads]) for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_chunk, chunks))
        trace = sorted((t for part in parts for t in part), key=lambda t: (t["point"], t["rep"]))
    return RejectionTable(cfg, summarize(cfg, trace), trace)
