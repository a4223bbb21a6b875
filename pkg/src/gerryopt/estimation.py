"""Aggregate-uncertainty estimation from precinct-level election returns.

Pipeline: ingest and filter returns, probit-transform vote shares, and
estimate gamma from the between-election variance of the vote-weighted state
means, with an exact chi-squared confidence interval.  A seeded simulator
generates synthetic returns for validating the estimator.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .model import GerryOptError


@dataclass(frozen=True)
class PrecinctRecord:
    state: str
    year: int
    precinct_id: str
    district_id: str
    total_votes: int
    rep_share: float
    contested: bool


@dataclass(frozen=True)
class FilterReport:
    n_input: int
    n_kept: int
    dropped_uncontested: int
    dropped_small: int
    dropped_degenerate: int
    bad_rows: list  # (line_number, message)


CSV_FIELDS = ["state", "year", "precinct_id", "district_id", "total_votes", "rep_share", "contested"]


def _parse_row(row: dict, line: int) -> PrecinctRecord:
    try:
        rec = PrecinctRecord(
            state=row["state"].strip(),
            year=int(row["year"]),
            precinct_id=row["precinct_id"].strip(),
            district_id=row["district_id"].strip(),
            total_votes=int(row["total_votes"]),
            rep_share=float(row["rep_share"]),
            contested=row["contested"].strip() in ("1", "true", "True"),
        )
    except (KeyError, ValueError, AttributeError, TypeError) as exc:
        raise GerryOptError(f"line {line}: malformed row ({exc})") from exc
    if rec.total_votes < 1:
        raise GerryOptError(f"line {line}: total_votes must be >= 1")
    if not 0.0 <= rec.rep_share <= 1.0:
        raise GerryOptError(f"line {line}: rep_share outside [0, 1]")
    return rec


def ingest(path: str, strict: bool = False) -> tuple[list, FilterReport]:
    """Read the returns CSV and apply the three filters in order:

    1. a district uncontested in any year is dropped across all years;
    2. precincts with fewer than 50 total votes;
    3. precincts with a vote share of exactly 0 or 1.

    Malformed rows are fatal under ``strict``, otherwise skipped and reported
    with their line numbers.
    """
    records: list[PrecinctRecord] = []
    bad: list = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_FIELDS if c not in (reader.fieldnames or [])]
        if missing:
            raise GerryOptError(f"input CSV missing columns: {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                records.append(_parse_row(row, line))
            except GerryOptError as exc:
                if strict:
                    raise
                bad.append((line, str(exc)))

    n_input = len(records)
    uncontested = {
        (r.state, r.district_id) for r in records if not r.contested
    }
    stage1 = [r for r in records if (r.state, r.district_id) not in uncontested]
    stage2 = [r for r in stage1 if r.total_votes >= 50]
    stage3 = [r for r in stage2 if 0.0 < r.rep_share < 1.0]
    report = FilterReport(
        n_input=n_input,
        n_kept=len(stage3),
        dropped_uncontested=n_input - len(stage1),
        dropped_small=len(stage1) - len(stage2),
        dropped_degenerate=len(stage2) - len(stage3),
        bad_rows=bad,
    )
    return stage3, report


# Rational approximation to the standard normal inverse CDF (Acklam's
# coefficients, |relative error| < 1.15e-9), refined by one Halley step so the
# round trip through the CDF is exact to ~1e-15.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_PLOW, _PHIGH = 0.02425, 1.0 - 0.02425


def _norm_ppf_scalar(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise GerryOptError(f"probit transform requires share in (0, 1); got {p}")
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    if p < _PLOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= _PHIGH:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # one Halley refinement against the exact CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def norm_ppf(p):
    return np.vectorize(_norm_ppf_scalar, otypes=[float])(p)


def norm_cdf(x):
    from scipy.special import ndtr

    return ndtr(x)


def probit_transform(records: list) -> np.ndarray:
    """w_nt = Q^{-1}(v_nt) per record."""
    return np.array([_norm_ppf_scalar(r.rep_share) for r in records])


@dataclass(frozen=True)
class GammaEstimate:
    gamma_hat: float
    ci_low: float
    ci_high: float
    alpha: float
    election_means: dict   # year -> vote-weighted mean of w
    grand_mean: float
    T: int
    n_precincts: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "gamma_hat": self.gamma_hat,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
                "alpha": self.alpha,
                "election_means": {str(k): v for k, v in sorted(self.election_means.items())},
                "grand_mean": self.grand_mean,
                "T": self.T,
                "n_precincts": self.n_precincts,
            }
        )


def _election_means(records: list, w: np.ndarray) -> dict:
    means: dict = {}
    for year in sorted({r.year for r in records}):
        idx = [i for i, r in enumerate(records) if r.year == year]
        k = np.array([records[i].total_votes for i in idx], dtype=float)
        means[year] = float(k @ w[idx] / k.sum())
    return means


def estimate_gamma(records: list, alpha: float = 0.1) -> GammaEstimate:
    """gamma_hat = 1 / sd(w_t), sd over the T vote-weighted election means.

    (T-1) gamma^2 / gamma_hat^2 is chi-squared with T-1 degrees of freedom,
    giving the exact interval
        sqrt(chi2_{T-1}(alpha/2) / (T-1)) * gamma_hat
            <= gamma <=
        sqrt(chi2_{T-1}(1 - alpha/2) / (T-1)) * gamma_hat.
    """
    if not records:
        raise GerryOptError("no records to estimate from")
    w = probit_transform(records)
    means = _election_means(records, w)
    T = len(means)
    if T < 2:
        raise GerryOptError(f"need at least 2 elections, got {T}")
    w_t = np.array(list(means.values()))
    var = float(np.sum((w_t - w_t.mean()) ** 2) / (T - 1))
    if var <= 0.0:
        raise GerryOptError("zero between-election variance: gamma is unidentified (infinite)")
    gamma_hat = 1.0 / math.sqrt(var)
    lo = math.sqrt(chi2.ppf(alpha / 2.0, T - 1) / (T - 1)) * gamma_hat
    hi = math.sqrt(chi2.ppf(1.0 - alpha / 2.0, T - 1) / (T - 1)) * gamma_hat
    k_all = np.array([r.total_votes for r in records], dtype=float)
    return GammaEstimate(
        gamma_hat=gamma_hat,
        ci_low=lo,
        ci_high=hi,
        alpha=alpha,
        election_means=means,
        grand_mean=float(k_all @ w / k_all.sum()),
        T=T,
        n_precincts=len(records),
    )


def estimate_F_moments(records: list) -> tuple[float, float]:
    """Vote-weighted mean of w and the within-election standard deviation
    sqrt(sum k (w - w_t)^2 / sum k)."""
    if not records:
        raise GerryOptError("no records")
    w = probit_transform(records)
    means = _election_means(records, w)
    k = np.array([r.total_votes for r in records], dtype=float)
    centered = w - np.array([means[r.year] for r in records])
    mean = float(k @ w / k.sum())
    sd = math.sqrt(float(k @ centered**2 / k.sum()))
    return mean, sd


def simulate_returns(
    path: str,
    gamma: float,
    T: int = 3,
    n_precincts: int = 1000,
    votes_per_precinct: int = 1000,
    seed: int = 0,
    state: str = "SY",
    f_low: float = -1.0,
    f_high: float = 1.0,
    start_year: int = 2016,
) -> None:
    """Write synthetic returns: s_n ~ uniform[f_low, f_high], r_t ~ N(0, 1/gamma^2),
    v_nt = Q(s_n - r_t) exactly (large-precinct limit).  Deterministic per seed."""
    if gamma <= 0 or T < 1 or n_precincts < 1 or votes_per_precinct < 1:
        raise GerryOptError("simulator parameters must be positive")
    rng = np.random.default_rng(seed)
    s = rng.uniform(f_low, f_high, size=n_precincts)
    r = rng.normal(0.0, 1.0 / gamma, size=T)
    from scipy.special import ndtr

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for t in range(T):
            year = start_year + 2 * t
            v = ndtr(s - r[t])
            for n in range(n_precincts):
                writer.writerow(
                    [
                        state,
                        year,
                        f"p{n:05d}",
                        f"d{n % 10:02d}",
                        votes_per_precinct,
                        f"{v[n]:.12f}",
                        1,
                    ]
                )


SHARE_BINS = np.round(np.arange(0.0, 1.0 + 1e-12, 0.05), 10)
SWING_BINS = np.round(np.arange(-0.25, 0.25 + 1e-12, 0.025), 10)


@dataclass(frozen=True)
class DescriptiveSummaries:
    share_bin_edges: np.ndarray
    share_hist: np.ndarray          # vote-weighted density over share bins
    swing_bin_edges: np.ndarray
    swing_hist: np.ndarray          # district-year swing deviations
    swing_within_025: float         # fraction of deviations inside +/-0.025
    qq_grid: np.ndarray
    qq_curves: dict                 # year -> J_t^{-1}(J_base(v)) on qq_grid
    base_year: int


def descriptive_summaries(records: list, base_year: int | None = None) -> DescriptiveSummaries:
    """Vote-share histogram, district swing-deviation histogram, and
    cross-election quantile-matching curves against the base year."""
    if not records:
        raise GerryOptError("no records")
    years = sorted({r.year for r in records})
    base = years[0] if base_year is None else base_year
    v = np.array([r.rep_share for r in records])
    k = np.array([r.total_votes for r in records], dtype=float)
    share_hist, _ = np.histogram(v, bins=SHARE_BINS, weights=k / k.sum())

    # district-year mean shares, then deviations from the district's own
    # across-year mean minus the year effect
    dist_year: dict = {}
    for r, kk in zip(records, k):
        key = (r.state, r.district_id, r.year)
        tot, wt = dist_year.get(key, (0.0, 0.0))
        dist_year[key] = (tot + kk * r.rep_share, wt + kk)
    dy_mean = {key: tot / wt for key, (tot, wt) in dist_year.items()}
    by_district: dict = {}
    for (state, dist, year), m in dy_mean.items():
        by_district.setdefault((state, dist), {})[year] = m
    year_mean: dict = {}
    for year in years:
        vals = [m for (s, d, y), m in dy_mean.items() if y == year]
        year_mean[year] = float(np.mean(vals))
    deviations = []
    for (state, dist), per_year in by_district.items():
        if len(per_year) < 2:
            continue
        centered = {y: m - year_mean[y] for y, m in per_year.items()}
        avg = float(np.mean(list(centered.values())))
        deviations.extend(val - avg for val in centered.values())
    deviations = np.array(deviations) if deviations else np.zeros(0)
    swing_hist, _ = np.histogram(deviations, bins=SWING_BINS)
    within = float(np.mean(np.abs(deviations) <= 0.025)) if deviations.size else 1.0

    qq_grid = np.linspace(0.05, 0.95, 19)
    base_v = np.sort(v[[i for i, r in enumerate(records) if r.year == base]])
    curves: dict = {}
    for year in years:
        yv = np.sort(v[[i for i, r in enumerate(records) if r.year == year]])
        if base_v.size == 0 or yv.size == 0:
            continue
        # J_t^{-1}(J_base(x)): x's quantile in the base year, read off in year t
        u = np.searchsorted(base_v, qq_grid, side="right") / base_v.size
        curves[year] = np.quantile(yv, np.clip(u, 0.0, 1.0))
    return DescriptiveSummaries(
        share_bin_edges=SHARE_BINS,
        share_hist=share_hist,
        swing_bin_edges=SWING_BINS,
        swing_hist=swing_hist,
        swing_within_025=within,
        qq_grid=qq_grid,
        qq_curves=curves,
        base_year=base,
    )


def estimates_csv(path: str, estimates: list) -> None:
    """Write per-state estimates: state,gamma_hat,ci_low,ci_high,T,n_precincts."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "gamma_hat", "ci_low", "ci_high", "T", "n_precincts"])
        for state, est in estimates:
            writer.writerow(
                [state, f"{est.gamma_hat:.6f}", f"{est.ci_low:.6f}", f"{est.ci_high:.6f}", est.T, est.n_precincts]
            )
