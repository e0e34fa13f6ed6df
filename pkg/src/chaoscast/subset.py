"""Best-subset least squares by branch and bound under the Cp criterion.

For each delay map a small all-subsets regression problem is solved
exactly: the residual sum of squares is monotone under adding columns,
so a leaps-style search prunes whole branches against per-size
incumbents without losing optimality. The per-size winners are then
compared on Mallows' Cp, breaking ties toward fewer columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_TOL = 1e-10  # relative pivot threshold for dropping dependent columns
_RSS_SLACK = 1e-9  # pruning slack against float noise in nested-RSS bounds


@dataclass
class SubsetModel:
    """A fitted least-squares model on a column subset of one delay map."""

    columns: tuple[int, ...]  # indices into the original design matrix
    coefficients: np.ndarray  # one per selected column
    intercept: float
    rss: float
    cp: float
    n_rows: int
    dropped: tuple[int, ...] = ()  # dependent/constant columns excluded up front

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if len(self.columns) < 1:
            raise ValueError("a subset model needs at least one column")
        if self.rss < -1e-9 or not np.isfinite(self.rss):
            raise ValueError("rss must be finite and non-negative")
        if not np.all(np.isfinite(self.coefficients)) or not np.isfinite(self.intercept):
            raise ValueError("coefficients must be finite")
        if not np.isfinite(self.cp):
            raise ValueError("cp must be finite")
        self.rss = max(self.rss, 0.0)

    @property
    def size(self) -> int:
        return len(self.columns)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.intercept + X[:, list(self.columns)] @ self.coefficients


@dataclass
class OLSFit:
    coefficients: np.ndarray  # full-width, zeros at dropped columns
    intercept: float
    rss: float
    dropped: tuple[int, ...] = ()


def _validate_xy(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X and y row counts differ")
    if y.size == 0:
        raise ValueError("zero rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    return X, y


def _independent_columns(Xc: np.ndarray) -> tuple[list[int], list[int]]:
    """Split centered columns into (independent, dropped).

    Sequential orthogonalization in column order: the first occurrence
    of a direction is kept, later dependents are dropped, so reports are
    deterministic and reference the earliest coordinate.
    """
    n, p = Xc.shape
    if p == 0:
        return [], []
    scale = float(np.max(np.linalg.norm(Xc, axis=0), initial=0.0))
    if scale == 0.0:
        return [], list(range(p))
    keep: list[int] = []
    dropped: list[int] = []
    basis = np.empty((n, 0))
    for j in range(p):
        col = Xc[:, j]
        resid = col - basis @ (basis.T @ col)
        norm = float(np.linalg.norm(resid))
        if norm > RANK_TOL * scale:
            keep.append(j)
            basis = np.column_stack([basis, resid / norm])
        else:
            dropped.append(j)
    return keep, dropped


def ols_fit(X, y) -> OLSFit:
    """Least squares with an always-included intercept.

    Solved through orthogonal decompositions (pivoted QR for rank
    detection, SVD for the solve); dependent columns are dropped and
    reported with zero coefficients.
    """
    X, y = _validate_xy(X, y)
    n, p = X.shape
    if n < p + 1:
        raise ValueError(f"need at least {p + 1} rows for {p} columns, got {n}")
    xm = X.mean(axis=0)
    ym = float(y.mean())
    Xc = X - xm
    yc = y - ym
    keep, dropped = _independent_columns(Xc)
    coef = np.zeros(p)
    if keep:
        beta, *_ = np.linalg.lstsq(Xc[:, keep], yc, rcond=None)
        coef[keep] = beta
    resid = yc - Xc @ coef
    intercept = ym - float(xm @ coef)
    return OLSFit(coefficients=coef, intercept=intercept,
                  rss=float(resid @ resid), dropped=tuple(dropped))


def mallows_cp(rss_p: float, sigma2_full: float, n: int, p: int) -> float:
    """Cp = RSS_p / sigma2_full - n + 2p, with p counting the intercept."""
    if sigma2_full <= 0.0:
        raise ValueError("sigma2_full must be positive")
    return rss_p / sigma2_full - n + 2.0 * p


class _GramSearch:
    """Exact per-size best subsets on the centered Gram system."""

    def __init__(self, Xc, yc, cols):
        self.G = Xc.T @ Xc
        self.b = Xc.T @ yc
        self.tss = float(yc @ yc)
        self.cols = cols  # original column index per Gram position

    def rss(self, S: tuple[int, ...]) -> float:
        idx = list(S)
        sol = np.linalg.solve(self.G[np.ix_(idx, idx)], self.b[idx])
        return max(self.tss - float(self.b[idx] @ sol), 0.0)

    def coefficients(self, S: tuple[int, ...]) -> np.ndarray:
        idx = list(S)
        return np.linalg.solve(self.G[np.ix_(idx, idx)], self.b[idx])


def _greedy_seed(search: _GramSearch, order, max_size):
    """Forward selection, used only to initialize pruning incumbents."""
    best = {}
    chosen: list[int] = []
    remaining = list(order)
    for k in range(1, max_size + 1):
        scored = [(search.rss(tuple(chosen + [j])), j) for j in remaining]
        rss, j = min(scored)
        chosen.append(j)
        remaining.remove(j)
        best[k] = (rss, tuple(sorted(chosen)))
    return best


def best_subsets(X, y, max_size: int | None = None) -> dict[int, SubsetModel]:
    """Exact minimum-RSS subset per size 1..max_size via branch and bound.

    The bound is the monotone-RSS property: every completion of a branch
    fits at best as well as the branch plus all its remaining columns.
    Practical for up to ~30 columns; exact, not heuristic.
    """
    X, y = _validate_xy(X, y)
    n, p = X.shape
    if p > 30:
        raise ValueError("branch-and-bound subset search is bounded at 30 columns")
    if n <= p:
        raise ValueError("need more rows than columns")
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    keep, dropped = _independent_columns(Xc)
    if not keep:
        raise ValueError("no independent columns to search")
    if max_size is None:
        max_size = len(keep)
    max_size = min(max_size, len(keep))
    if max_size < 1:
        raise ValueError("max_size must be >= 1")

    search = _GramSearch(Xc[:, keep], yc, keep)
    m = len(keep)
    # search positions ordered by decreasing univariate explained SS
    diag = np.diag(search.G)
    uni = np.where(diag > 0, search.b**2 / np.maximum(diag, 1e-300), -np.inf)
    order = list(np.argsort(-uni, kind="stable"))

    best = _greedy_seed(search, order, max_size)

    def visit(chosen: tuple[int, ...], start: int):
        rest = order[start:]
        if not rest:
            return
        lower = search.rss(chosen + tuple(rest))
        reachable = range(len(chosen) + 1, min(len(chosen) + len(rest), max_size) + 1)
        if all(lower >= best[k][0] - _RSS_SLACK * (1.0 + best[k][0]) for k in reachable):
            return
        for i, j in enumerate(rest):
            cand = chosen + (j,)
            size = len(cand)
            rss = search.rss(cand)
            if rss < best[size][0]:
                best[size] = (rss, tuple(sorted(cand)))
            if size < max_size:
                visit(cand, start + i + 1)

    visit((), 0)

    sigma2_full, p_full = _full_variance(search, n, m)
    out = {}
    for k in range(1, max_size + 1):
        rss, subset = best[k]
        coef_local = search.coefficients(subset)
        xm = X.mean(axis=0)
        cols = tuple(search.cols[i] for i in subset)
        intercept = float(y.mean() - xm[list(cols)] @ coef_local)
        cp = mallows_cp(rss, sigma2_full, n, k + 1)
        out[k] = SubsetModel(columns=cols, coefficients=coef_local,
                             intercept=intercept, rss=rss, cp=cp,
                             n_rows=n, dropped=tuple(dropped))
    return out


def _full_variance(search: _GramSearch, n: int, m: int) -> tuple[float, int]:
    """Residual variance of the full independent-column model."""
    p_full = m + 1
    if n <= p_full:
        raise ValueError("cannot estimate residual variance: n <= p_full")
    rss_full = search.rss(tuple(range(m)))
    sigma2 = rss_full / (n - p_full)
    if sigma2 <= 0.0:
        # exact fit: fall back to a tiny positive variance so Cp stays finite
        sigma2 = max(rss_full, 1e-30)
    return sigma2, p_full


def select_model(X, y, max_size: int | None = None) -> SubsetModel:
    """Minimum-Cp subset among per-size winners.

    Ties go to fewer columns, then the lexicographically smallest column
    set, so selection is deterministic.
    """
    per_size = best_subsets(X, y, max_size=max_size)
    ranked = sorted(per_size.values(),
                    key=lambda mod: (mod.cp, mod.size, mod.columns))
    return ranked[0]
