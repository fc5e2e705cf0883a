"""Price/sentiment ingestion, preprocessing, windowing and a synthetic
non-stationary series generator.

Files are UTF-8 CSV with a header: ``date,close`` for prices and
``date,sentiment`` for sentiment, ISO-8601 dates.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .numeric import make_rng

# S&P 500 study ranges; the gap 2020-01-01..2020-05-03 drops the COVID crash
SP500_SPLITS = {
    "train": ("2015-01-05", "2019-12-31"),
    "val": ("2020-05-04", "2020-12-28"),
    "test": ("2020-12-29", "2021-06-08"),
}


class DataError(ValueError):
    pass


def _date(s) -> dt.date:
    if isinstance(s, dt.date):
        return s
    return dt.date.fromisoformat(str(s).strip())


@dataclass(frozen=True)
class RawSeries:
    dates: tuple
    close: np.ndarray
    sentiment: Optional[np.ndarray] = None

    def __post_init__(self):
        close = np.asarray(self.close, dtype=np.float64)
        object.__setattr__(self, "close", close)
        if len(self.dates) != close.size:
            raise DataError("dates and prices differ in length")
        if np.any(~np.isfinite(close)) or np.any(close <= 0):
            bad = int(np.argmax(~np.isfinite(close) | (close <= 0)))
            raise DataError(f"non-positive close at row {bad} ({self.dates[bad]})")
        for i in range(1, len(self.dates)):
            if not self.dates[i] > self.dates[i - 1]:
                raise DataError(f"dates not strictly increasing at row {i} ({self.dates[i]})")
        if self.sentiment is not None:
            s = np.asarray(self.sentiment, dtype=np.float64)
            if s.size != close.size:
                raise DataError("sentiment and prices differ in length")
            object.__setattr__(self, "sentiment", s)

    def __len__(self):
        return len(self.dates)

    @property
    def bivariate(self) -> bool:
        return self.sentiment is not None

    def univariate(self) -> "RawSeries":
        return RawSeries(self.dates, self.close, None)

    def subset(self, idx) -> "RawSeries":
        idx = np.asarray(idx, dtype=int)
        return RawSeries(
            tuple(self.dates[i] for i in idx),
            self.close[idx],
            None if self.sentiment is None else self.sentiment[idx],
        )


def _read_csv(path, column: str) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if header[:2] != ["date", column]:
            raise DataError(f"{path}: expected header 'date,{column}', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                d = _date(row[0])
                v = float(row[1])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: cannot parse row {row!r} ({exc})") from None
            if not np.isfinite(v):
                raise DataError(f"{path}:{lineno}: non-finite {column}")
            if column == "close" and v <= 0:
                raise DataError(f"{path}:{lineno}: non-positive close {v}")
            if d in out:
                raise DataError(f"{path}:{lineno}: duplicate date {d}")
            out[d] = v
    return out


def ingest(price_file, sentiment_file=None) -> RawSeries:
    """Read prices (and optionally sentiment), inner-joined on date."""
    prices = _read_csv(price_file, "close")
    if not prices:
        raise DataError(f"{price_file}: no rows")
    if sentiment_file is None:
        dates = sorted(prices)
        return RawSeries(tuple(dates), np.array([prices[d] for d in dates]))
    sent = _read_csv(sentiment_file, "sentiment")
    dates = sorted(set(prices) & set(sent))
    if not dates:
        raise DataError("price and sentiment files share no dates")
    return RawSeries(
        tuple(dates), np.array([prices[d] for d in dates]), np.array([sent[d] for d in dates])
    )


def write_series(series: RawSeries, price_file, sentiment_file=None) -> None:
    with open(price_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "close"])
        for d, c in zip(series.dates, series.close):
            w.writerow([d.isoformat(), repr(float(c))])
    if sentiment_file is not None and series.sentiment is not None:
        with open(sentiment_file, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "sentiment"])
            for d, s in zip(series.dates, series.sentiment):
                w.writerow([d.isoformat(), repr(float(s))])


def triangular_kernel(width: int = 7) -> np.ndarray:
    """Causal triangular weights, heaviest on the current observation."""
    if width < 1:
        raise ValueError("kernel width must be positive")
    k = np.arange(width, 0, -1, dtype=np.float64)
    return k / k.sum()


def kernel_smooth(values, kernel) -> np.ndarray:
    """Trailing convolution ``y_t = sum_j kernel[j] * x[t - j]``.

    For the first ``len(kernel) - 1`` points the kernel is truncated to the
    available history and renormalised.
    """
    x = np.asarray(values, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 1 or k.size < 1:
        raise ValueError("kernel must be a non-empty vector")
    if np.any(k < 0):
        raise ValueError("kernel weights must be non-negative")
    if k.sum() <= 0:
        raise ValueError("kernel weights sum to zero")
    k = k / k.sum()
    y = np.empty_like(x)
    for t in range(x.size):
        m = min(k.size, t + 1)
        w = k[:m]
        y[t] = np.dot(w, x[t::-1][:m]) / w.sum()
    return y


@dataclass(frozen=True)
class SplitSpec:
    train: tuple
    val: tuple
    test: tuple
    exclude: tuple = ()

    def __post_init__(self):
        conv = lambda r: (_date(r[0]), _date(r[1]))
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, conv(getattr(self, name)))
        object.__setattr__(self, "exclude", tuple(conv(r) for r in self.exclude))
        rs = [self.train, self.val, self.test]
        for a, b in rs:
            if a > b:
                raise ValueError(f"empty range {a}..{b}")
        if not (self.train[1] < self.val[0] and self.val[1] < self.test[0]):
            raise ValueError("ranges must be ordered train < val < test and must not overlap")

    @classmethod
    def sp500_default(cls) -> "SplitSpec":
        return cls(SP500_SPLITS["train"], SP500_SPLITS["val"], SP500_SPLITS["test"])

    @classmethod
    def by_fraction(cls, dates: Sequence, train: float = 0.7, val: float = 0.15) -> "SplitSpec":
        n = len(dates)
        a = int(round(n * train))
        b = int(round(n * (train + val)))
        if not 0 < a < b < n:
            raise ValueError("fractions leave an empty split")
        return cls((dates[0], dates[a - 1]), (dates[a], dates[b - 1]), (dates[b], dates[-1]))

    def indices(self, dates, name: str) -> np.ndarray:
        lo, hi = getattr(self, name)
        keep = [
            i for i, d in enumerate(dates)
            if lo <= d <= hi and not any(a <= d <= b for a, b in self.exclude)
        ]
        return np.array(keep, dtype=int)

    def to_dict(self) -> dict:
        f = lambda r: [r[0].isoformat(), r[1].isoformat()]
        return {"train": f(self.train), "val": f(self.val), "test": f(self.test),
                "exclude": [f(r) for r in self.exclude]}


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.std) > 0)):
            raise DataError("training standard deviation is zero")

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}


def log_then_standardize(series, split: SplitSpec, dates=None):
    """Log-transform prices and z-score them with training-range statistics.

    ``series`` is a ``RawSeries`` (dates taken from it) or a positive price
    array with ``dates`` given. Returns ``(z, NormStats)`` over the full series.
    """
    if isinstance(series, RawSeries):
        dates, close = series.dates, series.close
    else:
        close = np.asarray(series, dtype=np.float64)
    if np.any(close <= 0):
        raise DataError("log transform needs strictly positive prices")
    logp = np.log(close)
    tr = split.indices(dates, "train")
    if tr.size == 0:
        raise DataError("training range selects no observations")
    mu, sd = logp[tr].mean(), logp[tr].std()
    if not sd > 0:
        raise DataError("training standard deviation is zero")
    stats = NormStats(np.array([mu]), np.array([sd]))
    return (logp - mu) / sd, stats


def rescale(z, stats: NormStats, feature: int = 0):
    """Invert standardisation and the log transform back to prices."""
    return np.exp(np.asarray(z, dtype=np.float64) * stats.std[feature] + stats.mean[feature])


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # (N, lookback, features)
    targets: np.ndarray  # (N, horizon)
    input_dates: list = field(default_factory=list)
    target_dates: list = field(default_factory=list)
    norm_stats: Optional[NormStats] = None

    def __len__(self):
        return self.inputs.shape[0]

    def take(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=int)
        return WindowedDataset(
            self.inputs[idx], self.targets[idx],
            [self.input_dates[i] for i in idx] if self.input_dates else [],
            [self.target_dates[i] for i in idx] if self.target_dates else [],
            self.norm_stats,
        )

    def feature(self, f: int) -> "WindowedDataset":
        """Keep a subset of input channels (e.g. price only)."""
        return WindowedDataset(self.inputs[..., f], self.targets, self.input_dates,
                               self.target_dates, self.norm_stats)


def make_windows(series, lookback: int, horizon: int = 5, dates=None, norm_stats=None) -> WindowedDataset:
    """Stride-1 windows of ``lookback`` rows; targets are the next ``horizon``
    values of column 0 (standardised log price).

    ``series`` is ``(T,)`` or ``(T, features)``.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    T = s.shape[0]
    if T < lookback + horizon:
        raise DataError(f"series of length {T} is too short for lookback {lookback} + horizon {horizon}")
    n = T - lookback - horizon + 1
    idx = np.arange(n)[:, None] + np.arange(lookback)[None]
    tidx = np.arange(n)[:, None] + lookback + np.arange(horizon)[None]
    in_dates, t_dates = [], []
    if dates is not None:
        in_dates = [tuple(dates[j] for j in row) for row in idx]
        t_dates = [tuple(dates[j] for j in row) for row in tidx]
    return WindowedDataset(s[idx], s[tidx, 0], in_dates, t_dates, norm_stats)


@dataclass
class PreparedData:
    """Train/validation/test windows sharing one set of training statistics."""

    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    norm_stats: NormStats
    n_features: int
    lookback: int
    horizon: int

    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}

    def univariate(self) -> "PreparedData":
        if self.n_features == 1:
            return self
        u = lambda d: d.feature([0])
        return PreparedData(u(self.train), u(self.val), u(self.test), self.norm_stats, 1,
                            self.lookback, self.horizon)


def prepare(
    raw: RawSeries, split: SplitSpec, lookback: int = 10, horizon: int = 5,
    bivariate: bool = True, kernel=None,
) -> PreparedData:
    """Full preprocessing: smooth sentiment, log+standardise prices, z-score
    sentiment, then window each split separately."""
    if bivariate and not raw.bivariate:
        raise DataError("bivariate mode needs a sentiment series")
    z_price, pstats = log_then_standardize(raw, split)
    cols = [z_price]
    mean, std = list(pstats.mean), list(pstats.std)
    if bivariate:
        k = triangular_kernel(7) if kernel is None else kernel
        sm = kernel_smooth(raw.sentiment, k)
        tr = split.indices(raw.dates, "train")
        mu, sd = sm[tr].mean(), sm[tr].std()
        if not sd > 0:
            raise DataError("sentiment training standard deviation is zero")
        cols.append((sm - mu) / sd)
        mean.append(mu)
        std.append(sd)
    stats = NormStats(np.array(mean), np.array(std))
    feats = np.stack(cols, axis=1)
    out = {}
    for name in ("train", "val", "test"):
        idx = split.indices(raw.dates, name)
        if idx.size < lookback + horizon:
            raise DataError(f"{name} split has {idx.size} rows, need at least {lookback + horizon}")
        out[name] = make_windows(feats[idx], lookback, horizon, [raw.dates[i] for i in idx], stats)
    return PreparedData(out["train"], out["val"], out["test"], stats, feats.shape[1], lookback, horizon)


@dataclass(frozen=True)
class SynthSpec:
    length: int = 1600
    start: str = "2015-01-05"
    level: float = 4.0
    trend_slope: float = 5e-5
    seasonal_amplitude: float = 0.03
    seasonal_period: float = 63.0
    regime_shift_at: Optional[int] = 900
    regime_shift_size: float = -0.08
    noise_sigma: float = 0.012
    ar_coef: float = 0.97
    sentiment_lead: int = 5
    sentiment_strength: float = 1.0
    sentiment_noise: float = 0.5
    seed: int = 7


def business_days(start, n: int) -> tuple:
    d = _date(start)
    out = []
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return tuple(out)


def generate_synthetic(spec: SynthSpec = SynthSpec()) -> RawSeries:
    """Non-stationary log-price with trend, seasonality, a level shift and
    AR(1) noise, plus a sentiment score that leads the price.

    Sentiment at ``t`` is the standardised log return from ``t`` to
    ``t + lead`` scaled by ``sentiment_strength`` plus independent Gaussian
    noise, so it carries real information about the coming moves.
    """
    if spec.length < 100:
        raise ValueError("synthetic series needs at least 100 points")
    rng = make_rng(spec.seed)
    n = spec.length + spec.sentiment_lead
    t = np.arange(n, dtype=np.float64)
    logp = spec.level + spec.trend_slope * t
    logp = logp + spec.seasonal_amplitude * np.sin(2 * np.pi * t / spec.seasonal_period)
    if spec.regime_shift_at is not None:
        logp = logp + np.where(t >= spec.regime_shift_at, spec.regime_shift_size, 0.0)
    shocks = rng.standard_normal(n)
    noise = np.zeros(n)
    if spec.noise_sigma > 0:
        for i in range(n):
            noise[i] = (spec.ar_coef * noise[i - 1] if i else 0.0) + spec.noise_sigma * shocks[i]
    logp = logp + noise
    lead = spec.sentiment_lead
    fwd = logp[lead:] - logp[:-lead] if lead > 0 else np.zeros(spec.length)
    fwd = fwd[: spec.length]
    sd = fwd.std()
    signal = (fwd - fwd.mean()) / sd if sd > 0 else np.zeros_like(fwd)
    sent_noise = rng.standard_normal(spec.length)
    sentiment = spec.sentiment_strength * signal + spec.sentiment_noise * sent_noise
    dates = business_days(spec.start, spec.length)
    return RawSeries(dates, np.exp(logp[: spec.length]), sentiment)
