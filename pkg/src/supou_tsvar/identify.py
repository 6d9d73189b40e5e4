"""Two-stage identification of a supOU model from an hourly record.

1. ``(alpha, beta)`` by least squares between the empirical autocorrelation
   and ``(1 + beta tau)**-(alpha - 1)`` over the lags where the empirical
   autocorrelation stays positive;
2. ``(A, B, C, shift)`` by least squares on the relative errors of the mean,
   variance, skewness and excess kurtosis.

Both stages use a Nelder-Mead simplex on unconstrained transforms of the
parameters, started from fixed points and restarted once, so fits are
deterministic.
"""

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy.optimize import minimize

from .errors import (
    BoundaryError,
    ConvergenceError,
    DegenerateError,
    DomainError,
    GridError,
    InfeasibleError,
    ParseError,
)
from .reversion import GammaReversionMeasure, acf_theoretical, inverse_moment
from .supou import SupOUModel, TemperedStableLevy, stationary_stats

__all__ = [
    "TimeSeries",
    "EmpiricalMoments",
    "FitReport",
    "load_series",
    "empirical_acf",
    "positive_lag_cutoff",
    "fit_reversion",
    "empirical_moments",
    "fit_levy",
    "identify",
    "STAT_NAMES",
]

HOUR = np.timedelta64(3600, "s")
MAX_GAP_FRACTION = 0.05
STAT_NAMES = ("mean", "variance", "skewness", "kurtosis")

_NM_OPTIONS = {"xatol": 1e-10, "fatol": np.inf, "maxiter": 40000, "maxfev": 80000}
_ALPHA_FLOOR = 1e-8  # alpha - 1 below this counts as pinned to the boundary
_LOG_CAP = 50.0  # bound on the log-transformed reversion parameters


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Hourly record; ``gaps`` lists ``(index, missing_hours)`` before each late sample."""

    timestamps: np.ndarray
    values: np.ndarray
    gaps: tuple = ()

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.asarray(self.values, dtype=float)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise DomainError("timestamps and values must be 1-d and of equal length")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise DomainError("discharge values must be finite and non-negative")
        gaps = ()
        if ts.size > 1:
            steps = np.diff(ts)
            if np.any(steps <= np.timedelta64(0, "s")):
                raise GridError("timestamps must be strictly increasing")
            if np.any(steps % HOUR != np.timedelta64(0, "s")):
                raise GridError("timestamps are not on an hourly grid")
            hours = (steps // HOUR).astype(np.int64)
            where = np.nonzero(hours > 1)[0]
            gaps = tuple((int(i) + 1, int(hours[i]) - 1) for i in where)
            missing = sum(g for _, g in gaps)
            if missing > MAX_GAP_FRACTION * (missing + ts.size):
                raise GridError(
                    f"{missing} missing hours exceed {MAX_GAP_FRACTION:.0%} of the record"
                )
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "gaps", gaps)

    def __len__(self):
        return self.values.size

    @property
    def has_gaps(self):
        return bool(self.gaps)

    @property
    def span(self):
        """``(first, last)`` timestamps as ISO-8601 strings."""
        if not self.values.size:
            return ("", "")
        return (str(self.timestamps[0]), str(self.timestamps[-1]))

    def grid(self):
        """Values on the full hourly grid with a mask of observed hours."""
        if self.values.size == 0:
            return self.values.copy(), np.zeros(0, dtype=bool)
        index = ((self.timestamps - self.timestamps[0]) // HOUR).astype(np.int64)
        x = np.zeros(index[-1] + 1)
        mask = np.zeros(index[-1] + 1, dtype=bool)
        x[index] = self.values
        mask[index] = True
        return x, mask

    @classmethod
    def hourly(cls, values, start="2000-01-01T00:00:00"):
        """Gap-free series starting at ``start``."""
        values = np.asarray(values, dtype=float)
        ts = np.datetime64(start, "s") + np.arange(values.size) * HOUR
        return cls(ts, values)


def _parse_time(text):
    stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(stamp, "s")


def load_series(path):
    """Read a ``timestamp,discharge`` CSV with a header row.

    Raises
    ------
    ParseError
        On an empty file, a bad header, a malformed row or a negative value;
        the message names the offending line.
    GridError
        On non-hourly spacing or gaps above 5% of the record.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        if [h.strip().lower() for h in header] != ["timestamp", "discharge"]:
            raise ParseError(f"{path}: header must be 'timestamp,discharge', got {header!r}")
        stamps, values = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            try:
                stamp = _parse_time(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{line}: {exc}") from None
            if not math.isfinite(value) or value < 0:
                raise ParseError(f"{path}:{line}: discharge must be finite and non-negative, got {row[1]!r}")
            stamps.append(stamp)
            values.append(value)
    if not values:
        raise ParseError(f"{path}: no data rows")
    return TimeSeries(np.array(stamps, dtype="datetime64[s]"), np.array(values))


def empirical_acf(ts, max_lag=None):
    """Biased sample autocorrelation at lags ``0..max_lag`` hours.

    Pairs of hours that straddle a gap are dropped; the normalization is the
    sum of squared deviations over all observed hours, so a gap-free series
    gives the standard estimator
    ``sum (x_t - m)(x_{t+k} - m) / sum (x_t - m)**2``.

    Raises
    ------
    DegenerateError
        If the series has zero variance.
    """
    if isinstance(ts, TimeSeries):
        x, mask = ts.grid()
    else:
        x = np.asarray(ts, dtype=float)
        mask = np.ones(x.size, dtype=bool)
    n = x.size
    if max_lag is None:
        max_lag = n - 1
    max_lag = int(max_lag)
    if not 0 <= max_lag < n:
        raise DomainError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    mean = x[mask].mean()
    y = np.where(mask, x - mean, 0.0)
    denom = float(np.dot(y, y))
    if not denom > 0:
        raise DegenerateError("autocorrelation undefined for a constant series")
    size = 1 << (2 * n - 1).bit_length()
    freq = np.fft.rfft(y, size)
    acov = np.fft.irfft(freq * np.conj(freq), size)[: max_lag + 1]
    acf = acov / acov[0]
    acf[0] = 1.0
    return acf


def positive_lag_cutoff(acf):
    """Largest lag before the autocorrelation first becomes non-positive."""
    acf = np.asarray(acf, dtype=float)
    bad = np.nonzero(acf <= 0)[0]
    if bad.size:
        return int(bad[0]) - 1
    return int(acf.size) - 1


def _minimize(fun, x0):
    # one run plus one restart from a fresh simplex around the first optimum
    res = minimize(fun, x0, method="Nelder-Mead", options=_NM_OPTIONS)
    res2 = minimize(fun, res.x, method="Nelder-Mead", options=_NM_OPTIONS)
    return res2 if res2.fun <= res.fun else res


def fit_reversion(acf, cutoff):
    """Least-squares fit of ``(1 + beta tau)**-(alpha - 1)`` to lags ``1..cutoff``.

    Raises
    ------
    ConvergenceError
        If ``cutoff < 2`` (two parameters need at least two residuals) or the
        simplex fails.
    BoundaryError
        If ``alpha`` is pinned to its lower limit 1.
    """
    acf = np.asarray(acf, dtype=float)
    cutoff = int(cutoff)
    if cutoff < 2:
        raise ConvergenceError(f"autocorrelation fit is underdetermined with cutoff {cutoff}")
    if cutoff >= acf.size:
        raise DomainError("cutoff exceeds the available lags")
    tau = np.arange(1, cutoff + 1, dtype=float)
    target = acf[1 : cutoff + 1]
    below = np.nonzero(target < 0.5)[0]
    tau_half = tau[below[0]] if below.size else float(cutoff)
    # (1 + beta tau)**-0.5 = 0.5 at the half-life for the initial alpha = 1.5
    x0 = np.array([math.log(0.5), math.log(3.0 / tau_half)])

    def loss(x):
        u, v = x
        if u > _LOG_CAP or v > _LOG_CAP:
            return np.inf
        with np.errstate(over="ignore", under="ignore"):
            model = (1.0 + math.exp(v) * tau) ** (-math.exp(u))
        return float(np.sum((target - model) ** 2))

    res = _minimize(loss, x0)
    if not np.isfinite(res.fun):
        raise ConvergenceError("autocorrelation fit diverged")
    u, v = res.x
    if math.exp(u) < _ALPHA_FLOOR:
        raise BoundaryError("alpha pinned to its lower limit 1")
    if v > _LOG_CAP - 1.0:
        # alpha -> 1 and beta -> inf with (alpha - 1) ln(beta) fixed: the same boundary
        raise BoundaryError("alpha driven to its lower limit 1 while beta diverges")
    return GammaReversionMeasure(1.0 + math.exp(u), math.exp(v))


@dataclass(frozen=True)
class EmpiricalMoments:
    """Population moments of a record: mean, variance, skewness, excess kurtosis, minimum."""

    mean: float
    variance: float
    skew_normalized: float
    kurt_normalized: float
    min_value: float

    def as_tuple(self):
        return (self.mean, self.variance, self.skew_normalized, self.kurt_normalized)


def empirical_moments(ts):
    """Population (``1/n``) moment estimators.

    Raises
    ------
    DegenerateError
        If the series has zero variance.
    """
    x = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)
    if x.size < 3:
        raise DomainError("need at least 3 samples")
    mean = float(np.mean(x))
    dev = x - mean
    m2 = float(np.mean(dev ** 2))
    if not m2 > 0:
        raise DegenerateError("moments undefined for a constant series")
    m3 = float(np.mean(dev ** 3))
    m4 = float(np.mean(dev ** 4))
    return EmpiricalMoments(mean, m2, m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0, float(np.min(x)))


def _relative_errors(stats, emp):
    model = np.array(stats.as_tuple())
    target = np.array(emp.as_tuple())
    return (model - target) / np.abs(target)


def _closed_form_start(emp, R):
    """Exact inversion of the moment equations, or None if it leaves the family.

    From ``M_{k+1} / M_k = (k - C) / B`` the ratio
    ``(M4/M3) / (M3/M2) = (3 - C)/(2 - C)`` fixes ``C``, then ``B`` and ``A``.
    """
    m2 = 2.0 * emp.variance / R
    m3 = 3.0 * emp.skew_normalized * emp.variance ** 1.5 / R
    m4 = 4.0 * emp.kurt_normalized * emp.variance ** 2 / R
    if not (m3 > 0 and m4 > 0):
        return None
    rho = (m4 / m3) / (m3 / m2)
    if not 1.0 < rho < 2.0:
        return None
    C = (3.0 - 2.0 * rho) / (1.0 - rho)
    B = (2.0 - C) * m2 / m3
    logA = math.log(m2) - (C - 2.0) * math.log(B) - math.lgamma(2.0 - C)
    m1 = math.exp(logA + (C - 1.0) * math.log(B) + math.lgamma(1.0 - C))
    shift = max(0.0, emp.mean - m1 * R)
    return np.array([logA, math.log(B), math.log(1.0 - C), shift])


def _default_start(emp, R):
    # C0 = 0.5, B0 = 1/mean, A0 from the mean equation with the observed minimum as shift
    C, B = 0.5, 1.0 / emp.mean
    shift = emp.min_value
    target = max(emp.mean - shift, 1e-3 * emp.mean)
    logA = math.log(target / R) - (C - 1.0) * math.log(B) - math.lgamma(1.0 - C)
    return np.array([logA, math.log(B), math.log(1.0 - C), shift])


def _decode(x):
    w, s, t, raw = x
    return math.exp(w), math.exp(s), 1.0 - math.exp(t), max(0.0, float(raw))


def fit_levy(emp, m):
    """Fit ``(A, B, C, shift)`` to the four empirical statistics.

    Minimizes the sum of squared relative errors of mean, variance, skewness
    and excess kurtosis. Two deterministic starts are tried -- the fixed
    default and the exact inversion of the moment equations when it exists --
    and the better optimum is returned.

    Returns
    -------
    (TemperedStableLevy, float)

    Raises
    ------
    InfeasibleError
        If no candidate beats the zero-Levy-measure value 3.
    """
    if not emp.variance > 0:
        raise DegenerateError("zero empirical variance")
    if any(v == 0 for v in emp.as_tuple()):
        raise DomainError("relative errors undefined for a zero target statistic")
    R = inverse_moment(m)

    def loss(x):
        try:
            with np.errstate(all="ignore"):
                A, B, C, shift = _decode(x)
                model = SupOUModel(m, TemperedStableLevy(A, B, C), shift)
                err = _relative_errors(stationary_stats(model), emp)
        except (DomainError, OverflowError, ValueError):
            return np.inf
        val = float(np.sum(err ** 2))
        return val if math.isfinite(val) else np.inf

    starts = [_default_start(emp, R)]
    closed = _closed_form_start(emp, R)
    if closed is not None:
        starts.append(closed)
    best = None
    for x0 in starts:
        res = _minimize(loss, x0)
        if best is None or res.fun < best.fun:
            best = res
    if not (np.isfinite(best.fun) and best.fun < 3.0):
        raise InfeasibleError("no Levy measure improves on the zero-jump fit")
    A, B, C, shift = _decode(best.x)
    return TemperedStableLevy(A, B, C), shift


@dataclass(frozen=True)
class FitReport:
    """Fitted model with per-statistic relative errors and their sum of squares."""

    model: SupOUModel
    acf_lag_cutoff: int
    residuals: dict
    objective_value: float
    observed: EmpiricalMoments = None
    metadata: dict = field(default_factory=dict)


def identify(ts, max_lag=None):
    """Full pipeline: autocorrelation, cutoff, reversion fit, moments, Levy fit."""
    acf = empirical_acf(ts, max_lag)
    cutoff = positive_lag_cutoff(acf)
    reversion = fit_reversion(acf, cutoff)
    emp = empirical_moments(ts)
    levy, shift = fit_levy(emp, reversion)
    model = SupOUModel(reversion, levy, shift)
    err = _relative_errors(stationary_stats(model), emp)
    residuals = dict(zip(STAT_NAMES, (float(e) for e in err)))
    meta = {}
    if isinstance(ts, TimeSeries):
        meta = {"span": list(ts.span), "samples": len(ts), "gaps": len(ts.gaps)}
    return FitReport(model, cutoff, residuals, float(np.sum(err ** 2)), emp, meta)


def synthetic_acf(m, max_lag):
    """Noise-free autocorrelation of a reversion measure at lags ``0..max_lag``."""
    return acf_theoretical(m, np.arange(max_lag + 1, dtype=float))
