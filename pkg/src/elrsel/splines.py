"""Polynomial-spline bases and the additive / varying-coefficient designs.

Bases use a clamped knot vector (each boundary knot repeated ``order`` times)
and the Cox-de Boor recursion. Covariates must already lie in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_io import Dataset
from .errors import DataError, DegenerateKnots, MissingIndexVariable, OutOfDomain
from .quantile import sample_quantile

ADDITIVE = "additive"
VARYCOEF = "varycoef"
ADDITIVE_DROPPED = "additive_dropped"


@dataclass(frozen=True)
class BasisSpec:
    """Spline order and knot sequence (including the end knots 0 and 1).

    ``order`` 4 is cubic; ``order`` 2 with no interior knots is a straight line.
    """

    order: int
    knots: tuple[float, ...]

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        if self.order < 1:
            raise DataError(f"spline order must be >= 1, got {self.order}")
        if len(knots) < 2 or knots[0] != 0.0 or knots[-1] != 1.0:
            raise DegenerateKnots(f"knot sequence must start at 0 and end at 1: {knots}")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise DegenerateKnots(f"knots must be strictly increasing: {knots}")
        object.__setattr__(self, "knots", knots)

    @property
    def interior_knot_count(self) -> int:
        return len(self.knots) - 2

    @property
    def dimension(self) -> int:
        return self.interior_knot_count + self.order

    def clamped(self) -> np.ndarray:
        k = self.knots
        return np.array((k[0],) * self.order + k[1:-1] + (k[-1],) * self.order)


def make_knots_uniform(q: int) -> tuple[float, ...]:
    if q < 0:
        raise DataError(f"interior knot count must be >= 0, got {q}")
    return tuple(k / (q + 1) for k in range(q + 2))


def make_knots_quantile(samples, q: int) -> tuple[float, ...]:
    """Knots at the sample quantiles ``k / (q + 1)``, ``k = 1..q``.

    Ties that leave fewer than ``q`` distinct interior knots (or push a knot
    onto an end point) raise :class:`DegenerateKnots`.
    """
    if q < 0:
        raise DataError(f"interior knot count must be >= 0, got {q}")
    xs = np.sort(np.asarray(samples, dtype=float))
    if xs.size < 2:
        raise DataError("need at least two samples to place quantile knots")
    if xs[0] < 0.0 or xs[-1] > 1.0:
        raise OutOfDomain(float(xs[0] if xs[0] < 0 else xs[-1]))
    interior = [sample_quantile(xs, k / (q + 1)) for k in range(1, q + 1)]
    knots = (0.0, *interior, 1.0)
    if any(b <= a for a, b in zip(knots, knots[1:])):
        raise DegenerateKnots(f"{q} quantile knots collapse under ties: {knots}")
    return knots


def make_spec(samples, q: int, order: int = 4, placement: str = "quantile") -> BasisSpec:
    if placement == "quantile":
        return BasisSpec(order, make_knots_quantile(samples, q))
    if placement == "uniform":
        return BasisSpec(order, make_knots_uniform(q))
    raise ValueError(f"unknown knot placement {placement!r}")


def basis_matrix(spec: BasisSpec, x) -> np.ndarray:
    """Evaluate all basis functions at every point of ``x``; shape ``(len(x), dim)``.

    At ``x == 1`` the last basis function is 1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    bad = ~((x >= 0.0) & (x <= 1.0))
    if bad.any():
        raise OutOfDomain(float(x[bad][0]))
    t = spec.clamped()
    order = spec.order
    nb = t.size - 1
    # right-closed last interval
    span = np.searchsorted(t, x, side="right") - 1
    span = np.minimum(span, nb - order)
    B = np.zeros((x.size, nb))
    B[np.arange(x.size), span] = 1.0
    xc = x[:, None]
    for k in range(2, order + 1):
        i = np.arange(nb - k + 1)
        d1 = t[i + k - 1] - t[i]
        d2 = t[i + k] - t[i + 1]
        # 0/0 terms vanish
        w1 = np.divide(xc - t[i], d1, out=np.zeros((x.size, i.size)), where=d1 > 0)
        w2 = np.divide(t[i + k] - xc, d2, out=np.zeros((x.size, i.size)), where=d2 > 0)
        B = w1 * B[:, :-1] + w2 * B[:, 1:]
    return B


def eval_basis(spec: BasisSpec, x: float) -> np.ndarray:
    return basis_matrix(spec, [x])[0]


@dataclass(frozen=True)
class DesignMatrix:
    """Assembled regression design.

    ``column_map[c]`` is the (0-based) model component owning column ``c``;
    for the varying-coefficient kind component 0 is the intercept function.
    ``column_means`` holds the centering constants of additive designs so the
    same design can be rebuilt on any subset of rows.
    """

    rows: np.ndarray
    kind: str
    column_map: tuple[int, ...]
    specs: tuple[BasisSpec, ...]
    dropped: int | None = None
    column_means: np.ndarray | None = field(default=None, repr=False)
    rank_reduced: bool = False

    @property
    def K(self) -> int:
        return self.rows.shape[1]

    @property
    def kappa(self) -> int:
        """Sum of full basis dimensions of the components in the model.

        After a rank reduction the columns no longer map onto whole bases, so
        the retained column count is used instead.
        """
        if self.rank_reduced:
            return self.K
        comps = range(len(self.specs))
        return sum(self.specs[j].dimension for j in comps if j + 1 != self.dropped)


def additive_blocks(X: np.ndarray, specs: Sequence[BasisSpec], drop_component: int | None = None):
    """Uncentered additive columns (first basis function of each component removed)."""
    X = np.asarray(X, dtype=float)
    blocks, cmap = [], []
    for j, spec in enumerate(specs):
        if drop_component is not None and j + 1 == drop_component:
            continue
        B = basis_matrix(spec, X[:, j])[:, 1:]
        blocks.append(B)
        cmap += [j] * B.shape[1]
    rows = np.hstack(blocks) if blocks else np.empty((X.shape[0], 0))
    return rows, tuple(cmap)


def design_additive(d: Dataset, specs: Sequence[BasisSpec], drop_component: int | None = None,
                    column_means: np.ndarray | None = None) -> DesignMatrix:
    """Additive design with one basis function dropped and columns centered per component.

    ``drop_component`` is 1-based and removes that covariate's whole block.
    ``column_means`` (for the full, undropped column set) overrides the
    sample means, which is how shards reuse full-sample centering.
    """
    if len(specs) != d.p:
        raise DataError(f"{len(specs)} basis specs for {d.p} covariates")
    if drop_component is not None:
        if d.p < 2 or not 1 <= drop_component <= d.p:
            raise DataError(f"cannot drop component {drop_component} of a {d.p}-covariate model")
    full, full_map = additive_blocks(d.X, specs)
    means = full.mean(axis=0) if column_means is None else np.asarray(column_means, dtype=float)
    if means.shape != (full.shape[1],):
        raise DataError("column_means do not match the design width")
    rows = full - means
    cmap = full_map
    kind = ADDITIVE
    if drop_component is not None:
        keep = np.array([c != drop_component - 1 for c in full_map])
        rows = rows[:, keep]
        cmap = tuple(c for c in full_map if c != drop_component - 1)
        kind = ADDITIVE_DROPPED
    return DesignMatrix(rows, kind, cmap, tuple(specs), drop_component, means)


def design_varycoef(d: Dataset, specs: Sequence[BasisSpec]) -> DesignMatrix:
    """Rows ``(G0(z), x_1 G1(z), ..., x_p Gp(z))``; no columns are dropped."""
    if d.z is None:
        raise MissingIndexVariable()
    if len(specs) != d.p + 1:
        raise DataError(f"varying-coefficient model needs {d.p + 1} specs, got {len(specs)}")
    blocks, cmap = [], []
    for j, spec in enumerate(specs):
        G = basis_matrix(spec, d.z)
        if j > 0:
            G = d.X[:, j - 1 : j] * G
        blocks.append(G)
        cmap += [j] * G.shape[1]
    return DesignMatrix(np.hstack(blocks), VARYCOEF, tuple(cmap), tuple(specs))


def _per_component(q, count: int) -> list[int]:
    if np.ndim(q) == 0:
        return [int(q)] * count
    q = [int(v) for v in q]
    if len(q) != count:
        raise DataError(f"{len(q)} knot counts for {count} components")
    return q


def additive_specs(d: Dataset, q, order: int = 4, placement: str = "quantile",
                   linear: Sequence[int] = ()) -> tuple[BasisSpec, ...]:
    """Specs for every covariate; indices in ``linear`` (0-based) get a straight line."""
    qs = _per_component(q, d.p)
    return tuple(
        BasisSpec(2, (0.0, 1.0)) if j in linear else make_spec(d.X[:, j], qs[j], order, placement)
        for j in range(d.p)
    )


def varycoef_specs(d: Dataset, q, order: int = 4, placement: str = "quantile") -> tuple[BasisSpec, ...]:
    """Specs for the intercept function and each coefficient function, all on z."""
    if d.z is None:
        raise MissingIndexVariable()
    qs = _per_component(q, d.p + 1)
    return tuple(make_spec(d.z, qs[j], order, placement) for j in range(d.p + 1))
