"""Gaussian-process (kriging) interpolation of county scores.

Counties are embedded in a 13-dimensional space (centroid latitude,
longitude, and 11 socio-demographic variables); a GP with an
automatic-relevance-determination squared-exponential kernel is fit by
maximizing the log marginal likelihood with plain gradient ascent
(learning rate 0.1, 500 iterations by default) on log hyperparameters,
with step halving on any likelihood decrease so the ascent is monotone.
Features are standardized and targets centered before fitting; the
noise variance is parameterized as jitter + exp(.) so it can never fall
below the jitter floor.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .corpus import require_region_id
from .errors import InputError, NumericError
from .scoring import ScoreTable

LAT_LON = ["lat", "lon"]
SOCIO_COLUMNS = [
    "median_household_income",
    "pct_bachelors",
    "unemployment_rate",
    "hs_graduation_rate",
    "population_density",
    "median_age",
    "pct_rural",
    "pct_hispanic",
    "pct_female",
    "pct_married",
    "pct_african_american",
]
FEATURE_COLUMNS = LAT_LON + SOCIO_COLUMNS
_PERCENT_COLUMNS = [
    c for c in SOCIO_COLUMNS if c.startswith("pct_") or c.endswith("_rate")
]

MAX_EXTRA_JITTER = 1e-2


@dataclass
class GPConfig:
    lr: float = 0.1
    iters: int = 500
    jitter: float = 1e-6
    seed: int = 0


@dataclass
class FeatureTable:
    """County feature rows; NaN marks a missing cell."""

    fips: list[str]
    values: np.ndarray            # (n, len(names))
    names: list[str]

    def complete_mask(self) -> np.ndarray:
        return np.all(np.isfinite(self.values), axis=1)

    def row_index(self) -> dict[str, int]:
        return {f: i for i, f in enumerate(self.fips)}


def load_features(path) -> FeatureTable:
    """Load the ``fips,lat,lon,<11 socio columns>`` feature CSV."""
    if not os.path.exists(path):
        raise InputError(f"feature file not found: {path}")
    frame = pd.read_csv(path, dtype={"fips": str})
    missing = [c for c in ["fips", *FEATURE_COLUMNS] if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing columns: {', '.join(missing)}")
    fips = [require_region_id(f) for f in frame["fips"]]
    if len(set(fips)) != len(fips):
        raise InputError(f"{path}: duplicate fips rows")
    values = frame[FEATURE_COLUMNS].to_numpy(dtype=np.float64)
    _validate_ranges(values, fips, path)
    return FeatureTable(fips=fips, values=values, names=list(FEATURE_COLUMNS))


def _validate_ranges(values, fips, path) -> None:
    def check(col, lo, hi):
        j = FEATURE_COLUMNS.index(col)
        column = values[:, j]
        bad = np.flatnonzero(np.isfinite(column) & ((column < lo) | (column > hi)))
        if bad.size:
            raise InputError(
                f"{path}: {col} out of [{lo}, {hi}] for fips {fips[bad[0]]}: "
                f"{column[bad[0]]}"
            )

    check("lat", -90.0, 90.0)
    check("lon", -180.0, 180.0)
    for col in _PERCENT_COLUMNS:
        check(col, 0.0, 100.0)


@dataclass
class GPModel:
    """Fitted GP: standardization constants, kernel, cached factorization."""

    feature_names: list[str]
    kept: np.ndarray              # mask of features with nonzero training sd
    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float
    log_signal: float
    log_noise_excess: float       # noise = jitter + exp(log_noise_excess)
    log_length: np.ndarray        # per kept feature
    jitter: float
    extra_jitter: float
    x_train: np.ndarray           # standardized, kept columns only
    y_centered: np.ndarray
    chol: np.ndarray              # lower Cholesky of K + extra jitter
    alpha: np.ndarray
    trace: list[float] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)
    config: GPConfig = field(default_factory=GPConfig)

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal))

    @property
    def noise_variance(self) -> float:
        return float(self.jitter + np.exp(self.log_noise_excess))

    @property
    def length_scales(self) -> np.ndarray:
        return np.exp(self.log_length)

    def hyperparameters(self) -> dict:
        return {
            "kernel": "ard-squared-exponential",
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "length_scales": {
                name: float(ls)
                for name, ls in zip(
                    [n for n, k in zip(self.feature_names, self.kept) if k],
                    self.length_scales,
                )
            },
            "dropped_features": list(self.dropped),
            "extra_jitter": self.extra_jitter,
        }


def _sq_dists(xa: np.ndarray, xb: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    # sum_d ((a_d - b_d) / l_d)^2, pairwise
    if xa.shape[1] == 0:
        return np.zeros((xa.shape[0], xb.shape[0]))
    a = xa / lengths
    b = xb / lengths
    d2 = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d2, 0.0)


def _kernel(x, lengths, signal_var):
    return signal_var * np.exp(-0.5 * _sq_dists(x, x, lengths))


def _factorize(k_noisy: np.ndarray, base_jitter: float):
    """Lower Cholesky with escalating extra jitter up to the 1e-2 cap."""
    extra = 0.0
    try:
        return cholesky(k_noisy, lower=True), extra
    except LinAlgError:
        pass
    extra = base_jitter
    eye = np.eye(k_noisy.shape[0])
    while extra <= MAX_EXTRA_JITTER:
        try:
            return cholesky(k_noisy + extra * eye, lower=True), extra
        except LinAlgError:
            extra *= 2.0
    raise NumericError(
        f"kernel factorization failed even with jitter {MAX_EXTRA_JITTER}"
    )


def _log_marginal(x, y, log_length, log_signal, log_noise_excess, jitter):
    n = x.shape[0]
    k = _kernel(x, np.exp(log_length), np.exp(log_signal))
    k_noisy = k + (jitter + np.exp(log_noise_excess)) * np.eye(n)
    chol, extra = _factorize(k_noisy, jitter)
    alpha = cho_solve((chol, True), y)
    ll = (
        -0.5 * float(y @ alpha)
        - float(np.log(np.diag(chol)).sum())
        - 0.5 * n * np.log(2.0 * np.pi)
    )
    return ll, chol, alpha, extra


def fit_gp(
    x: np.ndarray,
    y: np.ndarray,
    config: GPConfig | None = None,
    feature_names: list[str] | None = None,
) -> GPModel:
    """Fit the GP by monotone gradient ascent on the marginal likelihood.

    The seed perturbs the scale-aware initialization (unit length
    scales, signal variance = target variance, noise = 10% of it) by
    +/-10%, and fully determines the fit. Zero-variance features are
    dropped and recorded; with fewer than 2 rows or constant targets
    the optimizer is skipped and the model reduces to the target mean.
    """
    config = config or GPConfig()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = x.shape
    if n == 0:
        raise InputError("no training rows")
    if y.size != n:
        raise InputError(f"{n} rows but {y.size} targets")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("training rows must have no missing components")
    names = feature_names or [f"x{j}" for j in range(d)]

    x_mean = x.mean(axis=0)
    x_sd = x.std(axis=0)
    kept = x_sd > 0.0
    dropped = [names[j] for j in range(d) if not kept[j]]
    xs = (x[:, kept] - x_mean[kept]) / x_sd[kept]
    y_mean = float(y.mean())
    yc = y - y_mean

    y_var = float(yc.var())
    rng = np.random.default_rng(config.seed)
    perturb = 1.0 + 0.1 * rng.uniform(-1.0, 1.0, size=int(kept.sum()) + 2)
    signal0 = (y_var if y_var > 0 else 1.0) * perturb[0]
    noise0 = max(0.1 * signal0 * perturb[1], config.jitter)
    log_length = np.log(np.full(int(kept.sum()), 1.0) * perturb[2:])
    log_signal = float(np.log(signal0))
    log_noise_excess = float(np.log(noise0))

    trace: list[float] = []
    ll, chol, alpha, extra = _log_marginal(
        xs, yc, log_length, log_signal, log_noise_excess, config.jitter
    )
    trace.append(ll)

    optimize = n >= 2 and y_var > 0.0
    for it in range(config.iters if optimize else 0):
        grad_len, grad_sig, grad_noise = _gradients(
            xs, log_length, log_signal, log_noise_excess, config.jitter,
            chol, alpha,
        )
        step = config.lr
        accepted = False
        for _ in range(40):
            cand_len = log_length + step * grad_len
            cand_sig = log_signal + step * grad_sig
            cand_noise = log_noise_excess + step * grad_noise
            try:
                cand_ll, cand_chol, cand_alpha, cand_extra = _log_marginal(
                    xs, yc, cand_len, cand_sig, cand_noise, config.jitter
                )
            except NumericError:
                step *= 0.5
                continue
            if not np.isfinite(cand_ll):
                raise NumericError(
                    f"non-finite marginal likelihood at iteration {it + 1}"
                )
            if cand_ll >= ll:
                log_length, log_signal, log_noise_excess = (
                    cand_len, cand_sig, cand_noise,
                )
                ll, chol, alpha, extra = cand_ll, cand_chol, cand_alpha, cand_extra
                accepted = True
                break
            step *= 0.5
        trace.append(ll)
        if not accepted:
            # gradient no longer yields an uphill step at any scale
            trace.extend([ll] * (config.iters - it - 1))
            break

    return GPModel(
        feature_names=names,
        kept=kept,
        x_mean=x_mean,
        x_sd=x_sd,
        y_mean=y_mean,
        log_signal=log_signal,
        log_noise_excess=log_noise_excess,
        log_length=log_length,
        jitter=config.jitter,
        extra_jitter=extra,
        x_train=xs,
        y_centered=yc,
        chol=chol,
        alpha=alpha,
        trace=trace,
        dropped=dropped,
        config=config,
    )


def _gradients(xs, log_length, log_signal, log_noise_excess, jitter, chol, alpha):
    """d(log marginal likelihood)/d(log hyperparameters)."""
    n = xs.shape[0]
    lengths = np.exp(log_length)
    signal = np.exp(log_signal)
    k = _kernel(xs, lengths, signal)
    k_inv = cho_solve((chol, True), np.eye(n))
    a = np.outer(alpha, alpha) - k_inv

    grad_sig = 0.5 * float((a * k).sum())
    grad_noise = 0.5 * float(np.trace(a)) * np.exp(log_noise_excess)
    grad_len = np.empty(lengths.size)
    for dfeat in range(lengths.size):
        diff = xs[:, dfeat][:, None] - xs[:, dfeat][None, :]
        dk = k * (diff * diff) / (lengths[dfeat] ** 2)
        grad_len[dfeat] = 0.5 * float((a * dk).sum())
    return grad_len, grad_sig, grad_noise


def predict_gp(model: GPModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (latent) variance at query rows.

    Dropped features are ignored symmetrically. Variances are clamped
    at zero; a value below -1e-8 before clamping triggers a warning.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != len(model.feature_names):
        raise InputError(
            f"query has {x.shape[1]} features, model expects "
            f"{len(model.feature_names)}"
        )
    if not np.all(np.isfinite(x)):
        raise InputError("query rows must have no missing components")
    kept = model.kept
    xq = (x[:, kept] - model.x_mean[kept]) / model.x_sd[kept]
    cross = model.signal_variance * np.exp(
        -0.5 * _sq_dists(xq, model.x_train, model.length_scales)
    )
    mean = cross @ model.alpha + model.y_mean
    v = solve_triangular(model.chol, cross.T, lower=True)
    var = model.signal_variance - (v * v).sum(axis=0)
    if np.any(var < -1e-8):
        warnings.warn(
            f"posterior variance fell to {var.min():.3e}; clamping to 0",
            RuntimeWarning,
            stacklevel=2,
        )
    return mean, np.maximum(var, 0.0)


@dataclass
class GapRow:
    fips: str
    reason: str


@dataclass
class InterpolationResult:
    regions: list[str]
    scores: np.ndarray
    variances: np.ndarray
    sources: list[str]            # "observed" | "interpolated"
    gaps: list[GapRow]
    model: GPModel

    def n_observed(self) -> int:
        return sum(1 for s in self.sources if s == "observed")

    def n_interpolated(self) -> int:
        return sum(1 for s in self.sources if s == "interpolated")


def interpolate_missing(
    scores: ScoreTable,
    features: FeatureTable,
    config: GPConfig | None = None,
) -> InterpolationResult:
    """Fit on scored counties, predict for feature rows without scores.

    Every observed county must have a complete feature row. Unobserved
    counties with incomplete features cannot be predicted and land in
    the gap report instead of being silently dropped.
    """
    index = features.row_index()
    complete = features.complete_mask()
    missing_rows = [r for r in scores.regions if r not in index]
    if missing_rows:
        raise InputError(
            f"{len(missing_rows)} observed counties lack feature rows "
            f"(first: {missing_rows[0]})"
        )
    incomplete_obs = [
        r for r in scores.regions if not complete[index[r]]
    ]
    if incomplete_obs:
        raise InputError(
            f"{len(incomplete_obs)} observed counties have incomplete "
            f"features (first: {incomplete_obs[0]})"
        )
    x_train = features.values[[index[r] for r in scores.regions]]
    model = fit_gp(x_train, scores.scores, config, features.names)

    observed = set(scores.regions)
    predict_fips, gap_rows = [], []
    for i, fips in enumerate(features.fips):
        if fips in observed:
            continue
        if complete[i]:
            predict_fips.append(fips)
        else:
            bad = [
                features.names[j]
                for j in np.flatnonzero(~np.isfinite(features.values[i]))
            ]
            gap_rows.append(GapRow(fips, f"missing features: {', '.join(bad)}"))

    rows = [(r, float(s), 0.0, "observed") for r, s in zip(scores.regions, scores.scores)]
    if predict_fips:
        xq = features.values[[index[r] for r in predict_fips]]
        mean, var = predict_gp(model, xq)
        rows.extend(
            (r, float(m), float(v), "interpolated")
            for r, m, v in zip(predict_fips, mean, var)
        )
    rows.sort(key=lambda row: row[0])
    return InterpolationResult(
        regions=[r[0] for r in rows],
        scores=np.array([r[1] for r in rows]),
        variances=np.array([r[2] for r in rows]),
        sources=[r[3] for r in rows],
        gaps=gap_rows,
        model=model,
    )
