"""Command-line entry point ``elrsel``.

Subcommands::

    compare    two spline models on one CSV (additive or varying-coefficient)
    test-var   can one additive component be dropped (optionally sharded)
    quantile   sample quantile of one column computed across workers
    simulate   Monte-Carlo size/power tables

The JSON report goes to stdout (or ``--out``); diagnostics go to stderr.
Exit codes: 0 equivalent, 10 prefer model A, 11 prefer model B, 12 rejected
with a zero APE difference, 2 usage error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import simulate as sim
from .data_io import Dataset, dumps, load_csv, rescale_unit_interval
from .distributed import distributed_quantile, read_shards, run_distributed_test, write_shards
from .elr import DEFAULT_MAX_ITER, DEFAULT_STEP_TOL, DEFAULT_TOL, Decision, elr_test, score_diff
from .errors import DataError, DomainError, ElrError, MissingIndexVariable, NumericalError
from .loocv import ModelSpec, select_knot_counts

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
DECISION_EXIT = {
    Decision.EQUIVALENT: 0,
    Decision.PREFER_A: 10,
    Decision.PREFER_B: 11,
    Decision.TIE_BREAK_UNDEFINED: 12,
}

DEFAULTS = {
    "data": None,
    "response": None,
    "index_var": None,
    "model_a": "varycoef",
    "model_b": "additive",
    "vars_a": None,
    "vars_b": None,
    "linear_a": None,
    "linear_b": None,
    "vars": None,
    "alpha": 0.05,
    "knots": "quantile",
    "order": 4,
    "q_grid": None,
    "q": None,
    "seed": 0,
    "out": None,
    "drop_var": None,
    "workers": 1,
    "verify": False,
    "emit_shards": None,
    "from_shards": None,
    "column": None,
    "example": 2,
    "grid": "0,0",
    "n": 500,
    "reps": 400,
    "alpha_list": "0.05,0.10",
    "paper_scale": False,
    "error_kind": "normal",
    "out_dir": None,
    "tol": DEFAULT_TOL,
    "step_tol": DEFAULT_STEP_TOL,
    "max_iter": DEFAULT_MAX_ITER,
}


class UsageError(Exception):
    pass


def _log(msg: str) -> None:
    print(f"elrsel: {msg}", file=sys.stderr)


# -- argument parsing --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    # defaults stay None so config-file values can fill the gaps
    p.add_argument("--config", help="TOML file with default values for any flag")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tol", type=float, help=argparse.SUPPRESS)
    p.add_argument("--step-tol", type=float, help=argparse.SUPPRESS)
    p.add_argument("--max-iter", type=int, help=argparse.SUPPRESS)


def _fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--response", help="response column")
    p.add_argument("--index-var", help="index variable column (varying-coefficient models)")
    p.add_argument("--knots", choices=("quantile", "uniform"))
    p.add_argument("--order", type=int, help="spline order (4 = cubic)")
    p.add_argument("--q-grid", help="interior-knot counts to search, e.g. '1,2,3' or '2:3,3:3' per component")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elrsel", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"elrsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="compare two spline regression models")
    _common(p)
    _fit_flags(p)
    p.add_argument("--model-a", choices=("additive", "varycoef"))
    p.add_argument("--model-b", choices=("additive", "varycoef"))
    p.add_argument("--vars-a", help="comma-separated covariates of model A (default: all)")
    p.add_argument("--vars-b", help="comma-separated covariates of model B (default: all)")
    p.add_argument("--linear-a", help="covariates of additive model A entered linearly")
    p.add_argument("--linear-b", help="covariates of additive model B entered linearly")

    p = sub.add_parser("test-var", help="test whether one additive component can be dropped")
    _common(p)
    _fit_flags(p)
    p.add_argument("--vars", help="comma-separated covariates of the full additive model (default: all)")
    p.add_argument("--drop-var", help="covariate to test, by name or 1-based position")
    p.add_argument("--workers", type=int, help="number of shards (1 = single machine)")
    p.add_argument("--q", help="fixed interior-knot count instead of a grid search")
    p.add_argument("--verify", action="store_true", default=None,
                   help="also run on one worker and report whether the results agree")
    p.add_argument("--emit-shards", help="directory to write per-worker statistics to")
    p.add_argument("--from-shards", help="directory of per-worker statistics to aggregate")

    p = sub.add_parser("quantile", help="sample quantile of a column across workers")
    _common(p)
    p.add_argument("--data")
    p.add_argument("--column")
    p.add_argument("--q", type=float)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("simulate", help="Monte-Carlo rejection-rate tables")
    _common(p)
    p.add_argument("--example", type=int, choices=(2, 3, 4))
    p.add_argument("--grid", help="parameter points 'theta,tau;theta,tau'; a lone number is tau")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--alpha-list", help="comma-separated significance levels")
    p.add_argument("--paper-scale", action="store_true", default=None,
                   help=f"n={sim.FULL_SCALE['n']}, {sim.FULL_SCALE['n_reps']} replications")
    p.add_argument("--error-kind", choices=sim.ERROR_KINDS)
    p.add_argument("--workers", type=int, help="shards for example 4")
    p.add_argument("--q-grid")
    p.add_argument("--knots", choices=("quantile", "uniform"))
    p.add_argument("--order", type=int)
    p.add_argument("--out-dir", help="directory for table.json, table.csv and trace.csv")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional TOML file and explicit flags (in rising priority)."""
    cfg = {k: v for k, v in DEFAULTS.items() if k in vars(args)}
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, "rb") as fh:
                file_cfg = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        section = file_cfg.pop(args.command, {})
        for src in (file_cfg, section if isinstance(section, dict) else {}):
            for key, value in src.items():
                if isinstance(value, dict):
                    continue  # another subcommand's section
                k = key.replace("-", "_")
                if k not in cfg:
                    raise UsageError(f"unknown key {key!r} in {path}")
                cfg[k] = value
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config"):
            cfg[k] = v
    return cfg


def _names(text) -> list[str] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def parse_q_grid(text):
    """``"1,2,3"`` -> [1, 2, 3]; ``"2:3,3:3"`` -> [(2, 3), (3, 3)]."""
    if text is None:
        return None
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    grid = []
    try:
        for item in items:
            if isinstance(item, (list, tuple)):
                grid.append(tuple(int(v) for v in item))
            elif isinstance(item, int):
                grid.append(item)
            elif ":" in item:
                grid.append(tuple(int(v) for v in item.split(":")))
            elif item.strip():
                grid.append(int(item))
    except ValueError:
        raise UsageError(f"bad knot-count grid {text!r}") from None
    if not grid:
        raise UsageError("knot-count grid is empty")
    return grid


def parse_points(text) -> tuple[tuple[float, float], ...]:
    pts = []
    try:
        for part in str(text).replace(" ", "").split(";"):
            if not part:
                continue
            vals = [float(v) for v in part.split(",")]
            if len(vals) == 1:
                pts.append((0.0, vals[0]))
            elif len(vals) == 2:
                pts.append((vals[0], vals[1]))
            else:
                raise ValueError
    except ValueError:
        raise UsageError(f"bad parameter grid {text!r}; expected 'theta,tau;theta,tau'") from None
    if not pts:
        raise UsageError("parameter grid is empty")
    return tuple(pts)


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def _solver(cfg: dict) -> dict:
    return {"tol": float(cfg["tol"]), "step_tol": float(cfg["step_tol"]), "max_iter": int(cfg["max_iter"])}


def _load(cfg: dict, index_var=None) -> tuple[Dataset, float]:
    t0 = time.perf_counter()
    d = rescale_unit_interval(load_csv(cfg["data"], cfg["response"], index_var))
    return d, time.perf_counter() - t0


def _base_report(command: str, cfg: dict, argv) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": dict(cfg),
        "seed": cfg.get("seed"),
    }


def _model_summary(label: str, kind: str, names, linear, sel) -> dict:
    return {
        "label": label,
        "kind": kind,
        "variables": list(names),
        "linear": list(linear),
        "q": list(np.atleast_1d(sel.q).tolist()),
        "knot_counts": [s.interior_knot_count for s in sel.specs],
        "kappa": sel.kappa,
        "K": sel.design.K,
        "ape": sel.loocv.ape,
    }


# -- commands --------------------------------------------------------------------------------


def cmd_compare(cfg: dict, argv) -> tuple[dict, int]:
    _require(cfg, "data", "response")
    alpha = _check_alpha(cfg["alpha"])
    kinds = (cfg["model_a"], cfg["model_b"])
    if "varycoef" in kinds and not cfg.get("index_var"):
        raise UsageError("--index-var is required for a varying-coefficient model")
    t0 = time.perf_counter()
    d, t_load = _load(cfg, cfg.get("index_var"))
    grid = parse_q_grid(cfg.get("q_grid"))

    sides = []
    for side, kind in zip("ab", kinds):
        names = _names(cfg[f"vars_{side}"]) or list(d.x_names)
        linear = _names(cfg[f"linear_{side}"]) or []
        bad = [v for v in linear if v not in names]
        if bad:
            raise UsageError(f"--linear-{side} names {bad} that are not in model {side.upper()}")
        if kind == "varycoef" and linear:
            raise UsageError("linear components apply to additive models only")
        dd = d.select(names)
        spec = ModelSpec(
            kind,
            int(cfg["order"]),
            cfg["knots"],
            tuple(names.index(v) for v in linear),
            reduce=kind == "varycoef" and cfg["index_var"] in names,
        )
        t = time.perf_counter()
        sel = select_knot_counts(dd, spec, grid)
        sides.append((names, linear, sel, time.perf_counter() - t))

    (na, la, sa, ta), (nb, lb, sb, tb) = sides
    label_a, label_b = f"A:{kinds[0]}", f"B:{kinds[1]}"
    t = time.perf_counter()
    rep = elr_test(score_diff(sa.loocv, sb.loocv, label_a, label_b), alpha, **_solver(cfg))
    t_test = time.perf_counter() - t

    report = _base_report("compare", cfg, argv)
    report.update(
        models=[_model_summary(label_a, kinds[0], na, la, sa), _model_summary(label_b, kinds[1], nb, lb, sb)],
        ape_a=sa.loocv.ape,
        ape_b=sb.loocv.ape,
        **rep.as_dict(),
        timings={"load": t_load, "fit_a": ta, "fit_b": tb, "test": t_test, "total": time.perf_counter() - t0},
    )
    return report, DECISION_EXIT[rep.decision]


def _drop_index(drop, names: list[str]) -> int:
    if drop is None:
        raise UsageError("missing required option --drop-var")
    if str(drop) in names:
        return names.index(str(drop)) + 1
    try:
        k = int(drop)
    except ValueError:
        raise UsageError(f"--drop-var {drop!r} is neither a covariate name nor a position") from None
    if not 1 <= k <= len(names):
        raise UsageError(f"--drop-var must lie in 1..{len(names)}, got {k}")
    return k


def cmd_test_var(cfg: dict, argv) -> tuple[dict, int]:
    _require(cfg, "data", "response")
    alpha = _check_alpha(cfg["alpha"])
    N = int(cfg["workers"])
    if N < 1:
        raise UsageError("--workers must be >= 1")
    t0 = time.perf_counter()
    d, t_load = _load(cfg, cfg.get("index_var"))
    names = _names(cfg["vars"]) or list(d.x_names)
    if len(names) < 2:
        raise UsageError("test-var needs a full model with at least two covariates")
    drop = _drop_index(cfg["drop_var"], names)
    dd = d.select(names)
    q = cfg.get("q")
    if q is not None:
        q = parse_q_grid(str(q))[0]
    grid = parse_q_grid(cfg.get("q_grid"))
    stats = read_shards(cfg["from_shards"]) if cfg.get("from_shards") else None
    kw = dict(grid=grid, order=int(cfg["order"]), placement=cfg["knots"], seed=int(cfg["seed"]),
              alpha=alpha, **_solver(cfg))

    t = time.perf_counter()
    res = run_distributed_test(dd, drop, N, q=q, stats=stats, **kw)
    t_test = time.perf_counter() - t
    if cfg.get("emit_shards"):
        paths = write_shards(res.stats, cfg["emit_shards"])
        _log(f"wrote {len(paths)} worker statistics files to {cfg['emit_shards']}")

    err_full = np.concatenate([s.err_full for s in res.scores])
    err_drop = np.concatenate([s.err_drop for s in res.scores])
    rep = res.report
    report = _base_report("test-var", cfg, argv)
    report.update(
        workers=N,
        drop_var=names[drop - 1],
        models=[
            {"label": "A:full", "kind": "additive", "variables": names, "q": list(np.atleast_1d(res.q).tolist()),
             "knot_counts": [s.interior_knot_count for s in res.specs],
             "kappa": sum(s.dimension for s in res.specs), "ape": float(np.mean(err_full**2))},
            {"label": "B:dropped", "kind": "additive", "variables": [v for v in names if v != names[drop - 1]],
             "q": list(np.atleast_1d(res.q).tolist()),
             "knot_counts": [s.interior_knot_count for j, s in enumerate(res.specs) if j + 1 != drop],
             "kappa": sum(s.dimension for j, s in enumerate(res.specs) if j + 1 != drop),
             "ape": float(np.mean(err_drop**2))},
        ],
        ape_a=float(np.mean(err_full**2)),
        ape_b=float(np.mean(err_drop**2)),
        **rep.as_dict(),
    )
    if cfg.get("verify"):
        shadow = run_distributed_test(dd, drop, 1, q=res.q, **kw).report
        a, b = rep.statistic, shadow.statistic
        ok = (a == b) or (math.isfinite(a) and math.isfinite(b) and abs(a - b) <= 1e-8 * (1.0 + abs(b)))
        report["distributed_matches_full"] = bool(ok and rep.decision == shadow.decision)
        report["shadow_statistic"] = b
        _log(f"verify: {N}-worker statistic {a!r} vs single-worker {b!r} -> "
             f"{'match' if report['distributed_matches_full'] else 'MISMATCH'}")
    report["timings"] = {"load": t_load, "test": t_test, "total": time.perf_counter() - t0}
    return report, DECISION_EXIT[rep.decision]


def cmd_quantile(cfg: dict, argv) -> tuple[dict, int]:
    _require(cfg, "data", "column", "q")
    q = float(cfg["q"])
    if not 0.0 <= q <= 1.0:
        raise UsageError(f"--q must lie in [0, 1], got {q}")
    N = int(cfg["workers"])
    if N < 1:
        raise UsageError("--workers must be >= 1")
    t0 = time.perf_counter()
    values = load_csv(cfg["data"], cfg["column"], columns=[]).y
    if N > values.size:
        raise UsageError(f"{N} workers for {values.size} values")
    value = distributed_quantile(np.array_split(values, N), q, int(cfg["seed"]))
    report = _base_report("quantile", cfg, argv)
    report.update(column=cfg["column"], q=q, workers=N, n=int(values.size), value=value,
                  timings={"total": time.perf_counter() - t0})
    return report, EXIT_OK


def cmd_simulate(cfg: dict, argv) -> tuple[dict, int]:
    n, reps = int(cfg["n"]), int(cfg["reps"])
    if cfg.get("paper_scale"):
        n, reps = sim.FULL_SCALE["n"], sim.FULL_SCALE["n_reps"]
    try:
        alphas = tuple(float(a) for a in _names(cfg["alpha_list"]))
        sc = sim.SimConfig(
            example=int(cfg["example"]),
            n=n,
            points=parse_points(cfg["grid"]),
            error_kind=cfg["error_kind"],
            n_reps=reps,
            alphas=alphas,
            seed=int(cfg["seed"]),
            workers=int(cfg["workers"]),
            q_grid=None if cfg.get("q_grid") is None else tuple(parse_q_grid(cfg["q_grid"])),
            order=int(cfg["order"]),
            placement=cfg["knots"],
            threads=None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = sim.run_study(sc)
    if not table.valid:
        _log("more than 1% of replications failed; the table is marked invalid")
    report = _base_report("simulate", cfg, argv)
    # no timings: the output must be byte-identical across reruns
    tab = json.loads(table.to_json())
    report.update(study=tab["config"], generator=tab["generator"], valid=tab["valid"], rows=tab["rows"])
    if cfg.get("out_dir"):
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.json").write_text(dumps(report) + "\n", encoding="utf-8")
        (out / "table.csv").write_text(table.to_csv(), encoding="utf-8")
        (out / "trace.csv").write_text(table.trace_csv(), encoding="utf-8")
        _log(f"wrote table.json, table.csv and trace.csv to {out}")
    return report, EXIT_OK


COMMANDS = {
    "compare": cmd_compare,
    "test-var": cmd_test_var,
    "quantile": cmd_quantile,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    warnings.showwarning = lambda message, *a, **k: _log(f"warning: {message}")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        report, code = COMMANDS[args.command](cfg, argv)
    except (UsageError, MissingIndexVariable, DomainError) as exc:
        _log(f"{args.command}: usage error: {exc}")
        return EXIT_USAGE
    except DataError as exc:
        _log(f"{args.command}: data error: {exc}")
        return EXIT_DATA
    except (NumericalError, ElrError) as exc:
        _log(f"{args.command}: numerical error: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        _log(f"{args.command}: data error: {exc}")
        return EXIT_DATA
    text = dumps(report) + "\n"
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
