"""Validation statistics: correlations, internal consistency, bootstrap.

Pearson p-values use the two-sided t transform with n-2 degrees of
freedom. Missing indicator cells are handled by pairwise-complete
deletion with n reported per cell. The bootstrap for correlation
differences is the percentile variant, resampling units with
replacement on counter-derived RNG substreams so results are
reproducible and schedule-independent.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats as sps

from .errors import InputError, NumericError
from .scoring import ScoreTable


@dataclass
class CorrelationResult:
    r: float
    p: float
    n: int

    @property
    def significant(self) -> bool:
        return self.p < 0.05


def _pairwise_complete(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InputError(f"series length mismatch: {x.shape} vs {y.shape}")
    mask = np.isfinite(x) & np.isfinite(y)
    return x[mask], y[mask]


def pearson_r(x, y) -> float:
    """Sample Pearson correlation; nan on degenerate input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        return float("nan")
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))


def pearson(x, y) -> CorrelationResult:
    """Pearson r with a two-sided p from the t transform (df = n-2).

    Pairs with a missing value in either series are dropped first;
    at least 3 complete pairs and nonzero variance in both series are
    required. r = +/-1 maps to p = 0.
    """
    x, y = _pairwise_complete(x, y)
    n = x.size
    if n < 3:
        raise InputError(f"need >= 3 complete pairs, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise NumericError("zero variance in correlation input")
    r = pearson_r(x, y)
    if abs(r) >= 1.0:
        return CorrelationResult(r=float(np.sign(r)), p=0.0, n=n)
    t = r * np.sqrt(n - 2) / np.sqrt(1.0 - r * r)
    p = float(np.clip(2.0 * sps.t.sf(abs(t), n - 2), 0.0, 1.0))
    return CorrelationResult(r=r, p=p, n=n)


def load_indicators(path) -> pd.DataFrame:
    """Indicator CSV ``state,<ind1>,<ind2>,...`` -> DataFrame indexed by state.

    Empty cells become NaN. State codes are validated (2 uppercase
    letters or 5-digit FIPS, matching score tables).
    """
    if not os.path.exists(path):
        raise InputError(f"indicator file not found: {path}")
    frame = pd.read_csv(path, dtype={0: str})
    if frame.shape[1] < 2:
        raise InputError(f"{path}: expected a state column plus indicators")
    frame = frame.rename(columns={frame.columns[0]: "state"})
    if frame["state"].duplicated().any():
        dup = frame["state"][frame["state"].duplicated()].iloc[0]
        raise InputError(f"{path}: duplicate state row {dup!r}")
    frame = frame.set_index("state")
    return frame.astype(np.float64)


@dataclass
class ValidationResult:
    construct: str
    cells: dict[str, CorrelationResult]
    average_validity: float
    validity_columns: list[str]


def validate_scores(
    scores: ScoreTable,
    indicators: pd.DataFrame,
    validity_columns: list[str] | None = None,
) -> ValidationResult:
    """Correlate one score table against every indicator column.

    average validity is the arithmetic mean of r over
    ``validity_columns`` (default: all indicator columns).
    """
    common = [r for r in scores.regions if r in indicators.index]
    if not common:
        raise InputError("no overlapping units between scores and indicators")
    svals = pd.Series(scores.as_dict()).loc[common]
    cells: dict[str, CorrelationResult] = {}
    for col in indicators.columns:
        cells[col] = pearson(svals.to_numpy(), indicators.loc[common, col].to_numpy())
    cols = list(validity_columns) if validity_columns else list(indicators.columns)
    missing = [c for c in cols if c not in cells]
    if missing:
        raise InputError(f"validity columns not in indicator table: {missing}")
    avg = float(np.mean([cells[c].r for c in cols]))
    return ValidationResult(
        construct=scores.construct,
        cells=cells,
        average_validity=avg,
        validity_columns=cols,
    )


def cronbach_alpha(items) -> float:
    """Cronbach's alpha over a units x items matrix.

    alpha = k/(k-1) * (1 - sum of item variances / variance of totals),
    with sample (ddof=1) variances. Requires >= 2 items, >= 3 units,
    no missing cells, and nonzero total variance.
    """
    a = np.asarray(items, dtype=np.float64)
    if a.ndim != 2:
        raise InputError("items must be a 2-D units x items matrix")
    n_units, k = a.shape
    if k < 2:
        raise InputError(f"need >= 2 items, got {k}")
    if n_units < 3:
        raise InputError(f"need >= 3 units, got {n_units}")
    if not np.all(np.isfinite(a)):
        raise InputError("missing cells in alpha input")
    total_var = a.sum(axis=1).var(ddof=1)
    if total_var == 0.0:
        raise NumericError("zero total-score variance")
    item_var = a.var(axis=0, ddof=1).sum()
    return float(k / (k - 1) * (1.0 - item_var / total_var))


@dataclass
class SubsetCandidate:
    columns: tuple[str, ...]
    alpha: float | None
    n_units: int
    note: str = ""


@dataclass
class BestSubsetResult:
    columns: tuple[str, ...]
    alpha: float
    candidates: list[SubsetCandidate]


def best_subset(indicators: pd.DataFrame, min_size: int = 3) -> BestSubsetResult:
    """Exhaustive alpha-maximizing search over indicator column subsets.

    Every subset of size >= min_size is scored (rows with missing cells
    dropped per subset); ties prefer the smaller subset, then
    lexicographic column names. Degenerate subsets are skipped but kept
    in the candidate log.
    """
    cols = sorted(indicators.columns)
    if len(cols) < min_size:
        raise InputError(
            f"need >= {min_size} indicator columns, got {len(cols)}"
        )
    candidates: list[SubsetCandidate] = []
    best: tuple | None = None
    for size in range(min_size, len(cols) + 1):
        for subset in itertools.combinations(cols, size):
            block = indicators.loc[:, list(subset)].dropna()
            if len(block) < 3:
                candidates.append(
                    SubsetCandidate(subset, None, len(block), "too few complete units")
                )
                continue
            try:
                alpha = cronbach_alpha(block.to_numpy())
            except NumericError as exc:
                candidates.append(SubsetCandidate(subset, None, len(block), str(exc)))
                continue
            candidates.append(SubsetCandidate(subset, alpha, len(block)))
            key = (-alpha, len(subset), subset)
            if best is None or key < best[0]:
                best = (key, subset, alpha)
    if best is None:
        raise NumericError("no admissible indicator subset")
    return BestSubsetResult(columns=best[1], alpha=best[2], candidates=candidates)


@dataclass
class BootstrapDiff:
    delta_r: float
    ci_low: float
    ci_high: float
    significant: bool
    n_units: int
    n_boot: int
    seed: int
    redraws: int


def bootstrap_corr_diff(
    scores_a: ScoreTable,
    scores_b: ScoreTable,
    indicator: pd.Series,
    n_boot: int = 10_000,
    seed: int = 0,
) -> BootstrapDiff:
    """Percentile bootstrap for r(a, ind) - r(b, ind) over common units.

    Replicate i draws from ``default_rng((seed, i))``, so any execution
    order gives identical output. Replicates that resample a
    zero-variance series are redrawn from the same substream; the whole
    run aborts after 100 * n_boot redraws.
    """
    a_map, b_map = scores_a.as_dict(), scores_b.as_dict()
    units = sorted(
        set(a_map) & set(b_map) & set(indicator.dropna().index.astype(str))
    )
    n = len(units)
    if n < 3:
        raise InputError(f"need >= 3 common units, got {n}")
    a = np.array([a_map[u] for u in units])
    b = np.array([b_map[u] for u in units])
    y = indicator.loc[units].to_numpy(dtype=np.float64)
    for name, series in (("scores_a", a), ("scores_b", b), ("indicator", y)):
        if np.all(series == series[0]):
            raise NumericError(f"zero variance in {name}")

    delta = pearson_r(a, y) - pearson_r(b, y)
    deltas = np.empty(n_boot)
    redraws = 0
    budget = 100 * n_boot
    for i in range(n_boot):
        rng = np.random.default_rng((seed, i))
        while True:
            idx = rng.integers(0, n, n)
            ra, rb = a[idx], b[idx]
            ry = y[idx]
            if (
                np.all(ra == ra[0])
                or np.all(rb == rb[0])
                or np.all(ry == ry[0])
            ):
                redraws += 1
                if redraws > budget:
                    raise NumericError(
                        f"bootstrap exceeded {budget} degenerate redraws"
                    )
                continue
            deltas[i] = pearson_r(ra, ry) - pearson_r(rb, ry)
            break
    ci_low, ci_high = np.percentile(deltas, [2.5, 97.5])
    return BootstrapDiff(
        delta_r=float(delta),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        significant=bool(ci_low > 0.0 or ci_high < 0.0),
        n_units=n,
        n_boot=n_boot,
        seed=seed,
        redraws=redraws,
    )
