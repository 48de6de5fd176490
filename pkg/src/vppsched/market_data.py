"""Market series ingestion and the forecast inputs built from them."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

COLUMNS = [
    "timestamp", "da_price", "imb_up_price", "imb_dw_price", "srr_price",
    "sre_up_price", "sre_dw_price", "mu_up", "mu_dw", "rho", "wind_mwh",
]
PRICE_COLUMNS = COLUMNS[1:7]
FRACTION_COLUMNS = ["mu_up", "mu_dw", "rho"]
STRATEGIES = ("C1", "C2", "C3")


class DataError(ValueError):
    """Input data is malformed or incomplete."""


@dataclass(frozen=True)
class Violation:
    file: str
    row: int  # 1-based line number in the file (header is line 1)
    column: str
    message: str

    def __str__(self):
        return f"{self.file}:{self.row}: {self.column}: {self.message}"


@dataclass(frozen=True)
class HourlyPriceSeries:
    values: np.ndarray
    start: pd.Timestamp | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or len(v) < 1:
            raise ValueError("price series needs at least one hourly value")
        if not np.all(np.isfinite(v)):
            raise ValueError("price series values must be finite")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ReserveActivationSeries:
    mu_up: np.ndarray
    mu_dw: np.ndarray
    rho: np.ndarray | None = None

    def __post_init__(self):
        for name in ("mu_up", "mu_dw", "rho"):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=float)
            object.__setattr__(self, name, a)
            if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        n = len(self.mu_up)
        if len(self.mu_dw) != n or (self.rho is not None and len(self.rho) != n):
            raise ValueError("mu_up, mu_dw and rho must have the same length")

    def __len__(self):
        return len(self.mu_up)

    def with_mu(self, mu_up, mu_dw) -> "ReserveActivationSeries":
        return ReserveActivationSeries(mu_up, mu_dw, self.rho)

    def head(self, n: int) -> "ReserveActivationSeries":
        return ReserveActivationSeries(self.mu_up[:n], self.mu_dw[:n],
                                       None if self.rho is None else self.rho[:n])


@dataclass(frozen=True)
class PriceBundle:
    """All hourly price kinds over one horizon, EUR/MWh."""

    da: np.ndarray
    imb_up: np.ndarray
    imb_dw: np.ndarray
    srr: np.ndarray
    sre_up: np.ndarray
    sre_dw: np.ndarray

    def __post_init__(self):
        n = None
        for name in ("da", "imb_up", "imb_dw", "srr", "sre_up", "sre_dw"):
            a = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, a)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} prices must be finite")
            if n is None:
                n = len(a)
            elif len(a) != n:
                raise ValueError("all price series in a bundle must have the same length")

    def __len__(self):
        return len(self.da)

    def head(self, n: int) -> "PriceBundle":
        return PriceBundle(*(getattr(self, k)[:n] for k in self.kinds()))

    @staticmethod
    def kinds():
        return ("da", "imb_up", "imb_dw", "srr", "sre_up", "sre_dw")

    def replace_head(self, other: "PriceBundle") -> "PriceBundle":
        """Copy with the first ``len(other)`` hours taken from ``other``."""
        n = len(other)
        out = []
        for k in self.kinds():
            a = getattr(self, k).copy()
            a[:n] = getattr(other, k)
            out.append(a)
        return PriceBundle(*out)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "PriceBundle":
        return cls(df["da_price"].to_numpy(float), df["imb_up_price"].to_numpy(float),
                   df["imb_dw_price"].to_numpy(float), df["srr_price"].to_numpy(float),
                   df["sre_up_price"].to_numpy(float), df["sre_dw_price"].to_numpy(float))

    @classmethod
    def constant(cls, n: int, **values) -> "PriceBundle":
        return cls(*(np.full(n, float(values.get(k, 0.0))) for k in cls.kinds()))


@dataclass
class MarketDay:
    """Inputs for scheduling one day and settling it afterwards.

    ``forecast`` and ``activation`` span the whole planning period; the
    realized series cover the 24 delivery hours.
    """

    date: pd.Timestamp
    forecast: PriceBundle
    activation: ReserveActivationSeries
    realized: PriceBundle
    realized_activation: ReserveActivationSeries
    wind_realized: np.ndarray
    wind_candidates: np.ndarray | None = None
    mu_forecasts: dict = field(default_factory=dict)
    scenarios: object | None = None  # optional fixed ScenarioSet

    def __post_init__(self):
        self.wind_realized = np.asarray(self.wind_realized, dtype=float)
        T = len(self.forecast)
        if len(self.activation) != T:
            raise ValueError("forecast activation must span the planning period")
        if self.activation.rho is None:
            raise ValueError("forecast activation needs rho")
        if len(self.realized) != 24 or len(self.realized_activation) != 24 or len(self.wind_realized) != 24:
            raise ValueError("realized series must cover exactly 24 hours")
        if np.any(self.wind_realized < 0):
            raise ValueError("realized wind must be non-negative")

    @property
    def horizon(self) -> int:
        return len(self.forecast)

    def check_wind_capacity(self, capacity: float) -> None:
        if np.any(self.wind_realized > capacity + 1e-9):
            raise ValueError("realized wind exceeds the wind farm capacity")

    def activation_for(self, strategy: str) -> ReserveActivationSeries:
        if strategy not in self.mu_forecasts:
            if strategy == "C3":
                raise DataError("no C3 activation forecast available for this day")
            mu = forecast_mu(strategy, None, self.horizon)
            return self.activation.with_mu(mu.mu_up, mu.mu_dw)
        mu = self.mu_forecasts[strategy]
        return self.activation.with_mu(mu.mu_up, mu.mu_dw)

    def truncated(self, horizon: int) -> "MarketDay":
        if horizon > self.horizon:
            raise DataError(f"day only has {self.horizon} forecast hours, {horizon} requested")
        return MarketDay(
            self.date, self.forecast.head(horizon), self.activation.head(horizon), self.realized,
            self.realized_activation, self.wind_realized,
            None if self.wind_candidates is None else self.wind_candidates[:, :horizon],
            {k: v.head(horizon) for k, v in self.mu_forecasts.items()},
            None if self.scenarios is None else self.scenarios.head(horizon),
        )


# CSV ---------------------------------------------------------------------------

def read_market_csv(path) -> pd.DataFrame:
    """Parse an hourly market CSV into a frame indexed by timestamp.

    Raises :class:`DataError` naming the file and line of the first problem.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}:1: header is missing columns {missing}")
    df = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    ts = pd.to_datetime(df["timestamp"], errors="coerce")
    bad = np.flatnonzero(ts.isna().to_numpy())
    if len(bad):
        raise DataError(f"{path}:{bad[0] + 2}: timestamp: unparseable value {df['timestamp'].iloc[bad[0]]!r}")
    for col in COLUMNS[1:]:
        vals = pd.to_numeric(df[col], errors="coerce")
        bad = np.flatnonzero(vals.isna().to_numpy())
        if len(bad):
            raise DataError(f"{path}:{bad[0] + 2}: {col}: not a number ({df[col].iloc[bad[0]]!r})")
        df[col] = vals.astype(float)
    df["timestamp"] = ts
    return df.set_index("timestamp")[COLUMNS[1:]]


def write_market_csv(df: pd.DataFrame, path) -> None:
    out = df.reset_index()
    out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%d %H:%M:%S")
    out[COLUMNS].to_csv(path, index=False)


def validate_frame(df: pd.DataFrame, wind_capacity: float, file: str = "<frame>") -> list[Violation]:
    """Range checks on a parsed market frame; returns every violation found."""
    out: list[Violation] = []
    line = lambda i: int(i) + 2
    for col in PRICE_COLUMNS:
        for i in np.flatnonzero(~np.isfinite(df[col].to_numpy())):
            out.append(Violation(file, line(i), col, "price is not finite"))
    for col in FRACTION_COLUMNS:
        v = df[col].to_numpy()
        for i in np.flatnonzero((v < 0) | (v > 1)):
            out.append(Violation(file, line(i), col, f"value {v[i]} outside [0, 1]"))
    w = df["wind_mwh"].to_numpy()
    for i in np.flatnonzero((w < 0) | (w > wind_capacity)):
        out.append(Violation(file, line(i), "wind_mwh", f"value {w[i]} outside [0, {wind_capacity}]"))
    idx = df.index
    if idx.has_duplicates:
        for i in np.flatnonzero(idx.duplicated()):
            out.append(Violation(file, line(i), "timestamp", f"duplicate hour {idx[i]}"))
    gap = _first_gap(idx)
    if gap is not None:
        out.append(Violation(file, 0, "timestamp", f"missing hour {gap}"))
    return out


def _first_gap(idx: pd.DatetimeIndex):
    if len(idx) == 0:
        return None
    full = pd.date_range(idx.min().floor("D"), idx.max().floor("D") + pd.Timedelta(hours=23), freq="h")
    missing = full.difference(idx)
    return missing[0] if len(missing) else None


def _as_frame(history) -> pd.DataFrame:
    if isinstance(history, pd.DataFrame):
        df = history
    else:
        lengths = {k: len(v) for k, v in history.items()}
        if len(set(lengths.values())) > 1:
            raise DataError(f"mismatched series lengths {lengths}")
        df = pd.DataFrame(dict(history))
        if "timestamp" in df:
            df = df.set_index(pd.to_datetime(df.pop("timestamp")))
    if not isinstance(df.index, pd.DatetimeIndex):
        raise DataError("history needs an hourly timestamp index")
    return df


def _hour_profile(history, columns, min_days: int = 1) -> pd.DataFrame:
    """Mean of each column per hour of day, after checking the hours are complete."""
    df = _as_frame(history)
    for col in columns:
        if col not in df:
            raise DataError(f"history lacks column {col!r}")
    gap = _first_gap(df.index)
    if gap is not None:
        raise DataError(f"missing hour {gap} in history")
    sub = df[columns]
    if sub.isna().to_numpy().any():
        i = int(np.flatnonzero(sub.isna().to_numpy().any(axis=1))[0])
        raise DataError(f"missing hour {df.index[i]} in history (empty value)")
    days = df.index.floor("D").nunique()
    if days < min_days:
        raise DataError(f"history covers {days} days, at least {min_days} required")
    return sub.groupby(df.index.hour).mean().reindex(range(24))


def derive_secondary_energy_prices(history, horizon: int = 24, start_hour: int = 0,
                                   min_days: int = 1) -> tuple[HourlyPriceSeries, HourlyPriceSeries]:
    """Same-hour historical mean of the up/down secondary energy prices."""
    prof = _hour_profile(history, ["sre_up_price", "sre_dw_price"], min_days)
    hours = (start_hour + np.arange(horizon)) % 24
    return (HourlyPriceSeries(prof["sre_up_price"].to_numpy()[hours]),
            HourlyPriceSeries(prof["sre_dw_price"].to_numpy()[hours]))


def derive_imbalance_prices(history, da_forecast, start_hour: int = 0,
                            min_days: int = 1) -> tuple[HourlyPriceSeries, HourlyPriceSeries]:
    """Day-ahead forecast plus the same-hour mean historical imbalance spread."""
    df = _as_frame(history)
    for col in ("imb_up_price", "imb_dw_price", "da_price"):
        if col not in df:
            raise DataError(f"history lacks column {col!r}")
    spread = pd.DataFrame({"up": df["imb_up_price"] - df["da_price"],
                           "dw": df["imb_dw_price"] - df["da_price"]}, index=df.index)
    prof = _hour_profile(spread, ["up", "dw"], min_days)
    da = np.asarray(getattr(da_forecast, "values", da_forecast), dtype=float)
    hours = (start_hour + np.arange(len(da))) % 24
    start = getattr(da_forecast, "start", None)
    return (HourlyPriceSeries(da + prof["up"].to_numpy()[hours], start),
            HourlyPriceSeries(da + prof["dw"].to_numpy()[hours], start))


def forecast_mu(strategy: str, history=None, horizon: int = 24, start_hour: int = 0) -> ReserveActivationSeries:
    """Forecast of the share of committed reserve activated in real time.

    C1: all upward, none downward. C2: half each way. C3: last year's mean
    activation at the same hour of day.
    """
    if strategy == "C1":
        return ReserveActivationSeries(np.ones(horizon), np.zeros(horizon))
    if strategy == "C2":
        return ReserveActivationSeries(np.full(horizon, 0.5), np.full(horizon, 0.5))
    if strategy == "C3":
        if history is None or len(_as_frame(history)) == 0:
            raise DataError("strategy C3 needs a year of realized activation history")
        prof = _hour_profile(history, ["mu_up", "mu_dw"])
        hours = (start_hour + np.arange(horizon)) % 24
        return ReserveActivationSeries(prof["mu_up"].to_numpy()[hours], prof["mu_dw"].to_numpy()[hours])
    raise ValueError(f"unknown activation strategy {strategy!r}")


# representative cases -----------------------------------------------------------

def daily_statistics(history) -> pd.DataFrame:
    df = _as_frame(history)
    g = df.groupby(df.index.floor("D"))
    counts = g.size()
    stats = pd.DataFrame({
        "wind_mean": g["wind_mwh"].mean(),
        "wind_std": g["wind_mwh"].std(ddof=0),
        "price_mean": g["da_price"].mean(),
        "price_std": g["da_price"].std(ddof=0),
    })
    return stats[counts == 24].dropna()


def tercile_labels(x: np.ndarray, bins: int = 3) -> np.ndarray:
    """Label by empirical quantiles: lower-closed bins, last one closed."""
    edges = np.quantile(x, np.arange(1, bins) / bins)
    return np.searchsorted(edges, x, side="right")


def select_representative_cases(history, bins: int = 3) -> list[pd.Timestamp]:
    """One day per occupied combination of wind/price level and variability bins."""
    stats = daily_statistics(history)
    if len(stats) < bins:
        raise DataError(f"need at least {bins} complete days, got {len(stats)}")
    X = stats.to_numpy(float)
    labels = np.column_stack([tercile_labels(X[:, k], bins) for k in range(X.shape[1])])
    sd = X.std(axis=0)
    Z = np.where(sd > 0, (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0), 0.0)
    chosen = []
    for combo in np.unique(labels, axis=0):
        members = np.flatnonzero((labels == combo).all(axis=1))
        centre = Z[members].mean(axis=0)
        dist = np.linalg.norm(Z[members] - centre, axis=1)
        # stable argmin over date-sorted members: earliest date wins ties
        best = members[int(np.argmin(np.round(dist, 12)))]
        chosen.append(stats.index[best])
    return sorted(chosen)[: bins ** 4]


# case library ----------------------------------------------------------------------

@dataclass
class CaseLibrary:
    """Realized history (and optionally a forecast file) for building MarketDays."""

    history: pd.DataFrame
    forecast: pd.DataFrame | None = None
    history_days: int = 365
    candidate_days: int = 60

    def __post_init__(self):
        gap = _first_gap(self.history.index)
        if gap is not None:
            raise DataError(f"missing hour {gap} in history")

    @classmethod
    def from_csv(cls, history_csv, forecast_csv=None, **kw) -> "CaseLibrary":
        fc = read_market_csv(forecast_csv) if forecast_csv else None
        return cls(read_market_csv(history_csv), fc, **kw)

    def _window(self, df: pd.DataFrame, start: pd.Timestamp, hours: int, what: str) -> pd.DataFrame:
        idx = pd.date_range(start, periods=hours, freq="h")
        missing = idx.difference(df.index)
        if len(missing):
            raise DataError(f"{what}: missing hour {missing[0]}")
        return df.loc[idx]

    def previous_year(self, date: pd.Timestamp) -> pd.DataFrame:
        start = date - pd.Timedelta(days=self.history_days)
        if self.history.index.min() > start:
            raise DataError(f"history must cover {self.history_days} days before {date.date()}")
        return self.history.loc[start: date - pd.Timedelta(hours=1)]

    def eligible_dates(self, horizon: int) -> list[pd.Timestamp]:
        first = self.history.index.min().floor("D") + pd.Timedelta(days=self.history_days)
        src = self.forecast if self.forecast is not None else self.history
        last = min(self.history.index.max(), src.index.max()) - pd.Timedelta(hours=horizon - 1)
        return list(pd.date_range(first, last.floor("D"), freq="D"))

    def market_day(self, date, horizon: int = 72) -> MarketDay:
        date = pd.Timestamp(date).floor("D")
        past = self.previous_year(date)
        realized = self._window(self.history, date, 24, "realized data")
        ahead_src = self.forecast if self.forecast is not None else None
        if ahead_src is not None:
            ahead = self._window(ahead_src, date, horizon, "forecast data")
            da = ahead["da_price"].to_numpy(float)
            srr = ahead["srr_price"].to_numpy(float)
        else:
            # no forecast file: same hour one week earlier
            lag = self._window(self.history, date - pd.Timedelta(days=7), horizon, "persistence forecast")
            da = lag["da_price"].to_numpy(float)
            srr = lag["srr_price"].to_numpy(float)
        rho = self._window(self.history, date, horizon, "reserve ratio")["rho"].to_numpy(float)
        sre_up, sre_dw = derive_secondary_energy_prices(past, horizon)
        imb_up, imb_dw = derive_imbalance_prices(past, HourlyPriceSeries(da, date))
        forecast = PriceBundle(da, imb_up.values, imb_dw.values, srr, sre_up.values, sre_dw.values)
        mu = {s: forecast_mu(s, past, horizon) for s in STRATEGIES}
        activation = ReserveActivationSeries(mu["C3"].mu_up, mu["C3"].mu_dw, rho)
        real_act = ReserveActivationSeries(realized["mu_up"].to_numpy(float), realized["mu_dw"].to_numpy(float),
                                           realized["rho"].to_numpy(float))
        return MarketDay(date, forecast, activation, PriceBundle.from_frame(realized), real_act,
                         realized["wind_mwh"].to_numpy(float), self.wind_candidates(date, horizon), mu)

    def wind_candidates(self, date: pd.Timestamp, horizon: int) -> np.ndarray:
        """Horizon-long wind trajectories starting at midnight on recent past days."""
        rows = []
        wind = self.history["wind_mwh"]
        for k in range(1, self.candidate_days + 1):
            start = date - pd.Timedelta(days=k)
            idx = pd.date_range(start, periods=horizon, freq="h")
            if idx[-1] >= date or idx[0] < wind.index.min():
                continue
            rows.append(wind.reindex(idx).to_numpy(float))
        if not rows:
            raise DataError(f"no complete {horizon}-hour wind windows before {date.date()}")
        arr = np.vstack(rows)
        return arr[~np.isnan(arr).any(axis=1)]
