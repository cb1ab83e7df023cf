"""Empirical likelihood ratio for a zero-mean constraint on score differences.

For scores ``s_i`` the multiplier ``lam`` solves ``f(lam) = sum s_i / (1 + lam s_i) = 0``
on the interval where every ``1 + lam s_i`` stays positive, and the statistic is
``R = 2 sum log(1 + lam s_i)``. ``f`` is strictly decreasing there, so a Newton
iteration guarded by a shrinking bracket always converges.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import AllZeroScores, DomainError, Infeasible, LengthMismatch, NoConvergence
from .loocv import LoocvResult

DEFAULT_TOL = 1e-10
DEFAULT_STEP_TOL = 1e-10
DEFAULT_MAX_ITER = 100


class Decision(str, enum.Enum):
    EQUIVALENT = "equivalent"
    PREFER_A = "prefer_a"
    PREFER_B = "prefer_b"
    TIE_BREAK_UNDEFINED = "tie_break_undefined"


@dataclass(frozen=True)
class ScoreVector:
    """Per-observation ``err_a**2 - err_b**2`` and the two APEs behind it."""

    scores: np.ndarray
    ape_a: float = math.nan
    ape_b: float = math.nan
    label_a: str = "a"
    label_b: str = "b"

    @property
    def dape(self) -> float:
        return self.ape_a - self.ape_b

    @classmethod
    def from_array(cls, scores, label_a="a", label_b="b") -> "ScoreVector":
        s = np.asarray(scores, dtype=float)
        m = float(np.mean(s))
        # ape_a - ape_b == mean score
        return cls(s, m, 0.0, label_a, label_b)


@dataclass(frozen=True)
class ElrReport:
    statistic: float
    multiplier: float | None
    p_value: float
    feasible: bool
    dape: float
    iterations: int = 0
    stop_reason: str = ""
    n: int = 0
    alpha: float | None = None
    critical_value: float | None = None
    decision: Decision | None = None
    nested: bool = False

    @property
    def action(self) -> str | None:
        """Verdict in words; for a nested variable test, whether to keep the variable."""
        if self.decision is None:
            return None
        if self.nested:
            return "drop_variable" if self.decision is Decision.EQUIVALENT else "keep_variable"
        return self.decision.value

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "multiplier": self.multiplier,
            "p_value": self.p_value,
            "feasible": self.feasible,
            "dape": self.dape,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "n": self.n,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "decision": None if self.decision is None else self.decision.value,
            "action": self.action,
        }


def score_diff(a: LoocvResult, b: LoocvResult, label_a: str = "a", label_b: str = "b") -> ScoreVector:
    ea, eb = np.asarray(a.loocv_errors), np.asarray(b.loocv_errors)
    if ea.shape != eb.shape:
        raise LengthMismatch(f"score lengths differ: {ea.shape[0]} vs {eb.shape[0]}")
    return ScoreVector(ea**2 - eb**2, a.ape, b.ape, label_a, label_b)


def _as_scores(s) -> np.ndarray:
    return np.asarray(s.scores if isinstance(s, ScoreVector) else s, dtype=float)


def multiplier_bracket(smin: float, smax: float) -> tuple[float, float]:
    """Open interval of multipliers keeping every ``1 + lam * s_i`` positive."""
    return -1.0 / smax, -1.0 / smin


def check_feasible(smin: float, smax: float, all_zero: bool) -> None:
    if all_zero:
        raise AllZeroScores("all scores are zero")
    if smin > 0 or smax < 0:
        raise Infeasible(f"scores are one-signed (min {smin:.6g}, max {smax:.6g})")


def newton_multiplier(evaluate: Callable[[float], tuple[float, float]], lo: float, hi: float,
                      scale: float, tol: float = DEFAULT_TOL, step_tol: float = DEFAULT_STEP_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> tuple[float, int, str]:
    """Root of a strictly decreasing ``f`` on the open interval ``(lo, hi)``.

    ``evaluate(lam)`` returns ``(f(lam), -f'(lam))``. Starts at 0; a Newton step
    that would leave the current bracket, or that fails to halve the step
    before last, is replaced by bisection. Stops when ``|f| <= tol * scale``
    ("residual") or a Newton step is shorter than ``step_tol`` ("step").
    Returns ``(lam, iterations, stop_reason)``.
    """
    lam = 0.0
    dx_old = dx = hi - lo
    for it in range(1, max_iter + 1):
        f, g = evaluate(lam)
        if abs(f) <= tol * scale:
            return lam, it - 1, "residual"
        if f > 0:
            lo = lam
        else:
            hi = lam
        newton = lam + f / g
        if lo < newton < hi and abs(newton - lam) <= 0.5 * abs(dx_old):
            dx_old, dx = dx, newton - lam
            lam = newton
            if abs(dx) < step_tol:
                return lam, it, "step"
        else:
            dx_old = dx
            lam_new = 0.5 * (lo + hi)
            dx = lam_new - lam
            lam = lam_new
    f, _ = evaluate(lam)
    if abs(f) <= tol * scale:
        return lam, max_iter, "residual"
    raise NoConvergence(max_iter)


def solve_multiplier(s, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                     step_tol: float = DEFAULT_STEP_TOL) -> float:
    """Lagrange multiplier for the scores; raises Infeasible or AllZeroScores."""
    return _solve(_as_scores(s), tol, max_iter, step_tol)[0]


def _solve(x: np.ndarray, tol, max_iter, step_tol):
    if not np.all(np.isfinite(x)):
        raise DomainError("scores must be finite")
    smin, smax = float(x.min()), float(x.max())
    check_feasible(smin, smax, not np.any(x))
    if smin == 0.0 or smax == 0.0:
        # one-signed apart from exact zeros: the supremum sits on the boundary
        return math.nan, 0, "boundary"
    lo, hi = multiplier_bracket(smin, smax)

    def evaluate(lam):
        w = 1.0 / (1.0 + lam * x)
        t = x * w
        return float(t.sum()), float(np.dot(t, t))

    return newton_multiplier(evaluate, lo, hi, float(np.abs(x).sum()), tol, step_tol, max_iter)


def elr_statistic(s, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  step_tol: float = DEFAULT_STEP_TOL) -> ElrReport:
    x = _as_scores(s)
    dape = s.dape if isinstance(s, ScoreVector) else float(np.mean(x))
    n = x.shape[0]
    try:
        lam, it, why = _solve(x, tol, max_iter, step_tol)
    except Infeasible:
        return ElrReport(math.inf, None, 0.0, False, dape, 0, "infeasible", n)
    except AllZeroScores:
        return ElrReport(0.0, 0.0, 1.0, True, dape, 0, "all_zero", n)
    if math.isnan(lam):
        return ElrReport(math.inf, None, 0.0, True, dape, 0, why, n)
    stat = max(2.0 * float(np.sum(np.log1p(lam * x))), 0.0)
    return ElrReport(stat, lam, chi2_1_sf(stat), True, dape, it, why, n)


# -- chi-squared with one degree of freedom -------------------------------------
# P(chi2_1 <= x) = erf(sqrt(x / 2)); erf/erfc come from the platform libm.


def chi2_1_cdf(x: float) -> float:
    if not x >= 0:
        raise DomainError(f"chi2_1_cdf needs x >= 0, got {x!r}")
    return 1.0 if math.isinf(x) else math.erf(math.sqrt(x / 2.0))


def chi2_1_sf(x: float) -> float:
    if not x >= 0:
        raise DomainError(f"chi2_1_sf needs x >= 0, got {x!r}")
    return 0.0 if math.isinf(x) else math.erfc(math.sqrt(x / 2.0))


def chi2_1_quantile(prob: float) -> float:
    """Inverse of :func:`chi2_1_cdf` by bracketed Newton on ``t = sqrt(x / 2)``."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob!r}")
    upper = prob > 0.5
    target = 1.0 - prob if upper else prob

    def resid(t):
        # increasing in t either way
        return (target - math.erfc(t)) if upper else (math.erf(t) - target)

    lo, hi = 0.0, 1.0
    while resid(hi) < 0:
        lo, hi = hi, 2.0 * hi
    t = 0.5 * (lo + hi)
    for _ in range(200):
        r = resid(t)
        if r == 0:
            break
        if r > 0:
            hi = t
        else:
            lo = t
        dr = 2.0 / math.sqrt(math.pi) * math.exp(-t * t)
        step = t - r / dr if dr > 0 else 0.5 * (lo + hi)
        t_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(t_new - t) <= 4 * np.finfo(float).eps * max(t, 1e-300):
            t = t_new
            break
        t = t_new
    return 2.0 * t * t


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def power_approx(a: float, alpha: float) -> float:
    """Approximate power against a local alternative with noncentrality ``a**2``."""
    if not a >= 0:
        raise DomainError(f"a must be >= 0, got {a!r}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    c = math.sqrt(chi2_1_quantile(1.0 - alpha))
    # 1 - {Phi(a + c) - Phi(a - c)} written as two tails
    return _norm_cdf(-(a + c)) + _norm_cdf(a - c)


def decide(r: ElrReport, alpha: float = 0.05, nested: bool = False) -> ElrReport:
    """Attach the decision at level ``alpha``.

    Below the critical value the models are equivalent; above it the model
    with the smaller APE (sign of ``dape``) is preferred.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    crit = chi2_1_quantile(1.0 - alpha)
    if r.statistic < crit:
        dec = Decision.EQUIVALENT
    elif r.dape < 0:
        dec = Decision.PREFER_A
    elif r.dape > 0:
        dec = Decision.PREFER_B
    else:
        dec = Decision.TIE_BREAK_UNDEFINED
    return replace(r, alpha=alpha, critical_value=crit, decision=dec, nested=nested)


def elr_test(s, alpha: float = 0.05, nested: bool = False, **solver) -> ElrReport:
    return decide(elr_statistic(s, **solver), alpha, nested)
