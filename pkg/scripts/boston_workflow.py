"""Six model comparisons on the Boston housing data.

Runs each comparison with the package defaults and prints one line per test
with the statistic, the APE difference, the decision and whether that
decision's direction (reject / accept) matches the published one.

    python scripts/boston_workflow.py [path/to/boston.csv]
"""

from __future__ import annotations

import sys
import warnings
from pathlib import Path

from elrsel.data_io import load_csv, rescale_unit_interval
from elrsel.distributed import run_distributed_test
from elrsel.elr import Decision, elr_test, score_diff
from elrsel.loocv import ModelSpec, select_knot_counts

DATA = Path(__file__).resolve().parents[1] / "data" / "boston.csv"
COVARIATES = ["crim", "rm", "log_tax", "nox", "ptratio", "age"]
Z = "log_lstat"

# (name, model A, model B, published direction); a model is (kind, variables, linear)
COMPARISONS = [
    ("varycoef vs additive (all covariates)",
     ("varycoef", COVARIATES, ()), ("additive", [Z] + COVARIATES, ()), "reject"),
    ("semiparametric vs 4-component additive",
     ("additive", [Z, "rm", "log_tax", "ptratio"], (Z, "log_tax", "ptratio")),
     ("additive", [Z, "rm", "log_tax", "ptratio"], ()), "reject"),
    ("4-component vs 7-component additive",
     ("additive", [Z, "rm", "log_tax", "ptratio"], ()), ("additive", [Z] + COVARIATES, ()), "reject"),
]
DROP_TESTS = [("drop crim", "crim", "reject"), ("drop nox", "nox", "reject"), ("drop age", "age", "accept")]


def _fit(d, kind, names, linear):
    dd = d.select(names)
    spec = ModelSpec(kind, linear=tuple(names.index(v) for v in linear), reduce=kind == "varycoef" and Z in names)
    return select_knot_counts(dd, spec)


def run_workflow(path=DATA, alpha: float = 0.05) -> list[dict]:
    d = rescale_unit_interval(load_csv(path, "medv", Z, COVARIATES))
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, a, b, expected in COMPARISONS:
            rep = elr_test(score_diff(_fit(d, *a).loocv, _fit(d, *b).loocv), alpha)
            rows.append(_row(name, rep, expected))
        full = d.select([Z] + COVARIATES)
        for name, var, expected in DROP_TESTS:
            rep = run_distributed_test(full, full.x_names.index(var) + 1, 1, alpha=alpha).report
            rows.append(_row(name, rep, expected))
    return rows


def _row(name, rep, expected) -> dict:
    got = "accept" if rep.decision is Decision.EQUIVALENT else "reject"
    return {"test": name, "statistic": rep.statistic, "dape": rep.dape, "decision": rep.action,
            "direction": got, "expected": expected, "agrees": got == expected}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    rows = run_workflow(argv[0] if argv else DATA)
    for r in rows:
        print(f"{r['test']:<42} R={r['statistic']:9.3f}  dape={r['dape']:9.3f}  "
              f"{r['decision']:<14} {r['direction']:<6} (published: {r['expected']})")
    print(f"{sum(r['agrees'] for r in rows)} of {len(rows)} directions agree")
    return 0


if __name__ == "__main__":
    sys.exit(main())
