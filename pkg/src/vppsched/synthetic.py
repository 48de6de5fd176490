"""Synthetic market and wind records for tests and demos.

The series are shaped loosely like a wind farm in a day-ahead market with a
reserve market on top: daily price cycles, persistent wind regimes and
activation shares that vary hour to hour. They carry no real market data.
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from .market_data import COLUMNS, CaseLibrary, MarketDay, PriceBundle, ReserveActivationSeries
from .scenarios import ScenarioSet


def make_history(start: str = "2015-01-01", days: int = 430, seed: int = 0,
                 wind_capacity: float = 33.0) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    n = days * 24
    idx = pd.date_range(start, periods=n, freq="h")
    hour = idx.hour.to_numpy()
    doy = idx.dayofyear.to_numpy()

    daily = 12 * np.sin(2 * np.pi * (hour - 8) / 24) + 6 * np.sin(2 * np.pi * (hour - 17) / 12)
    seasonal = 8 * np.cos(2 * np.pi * doy / 365)
    level = np.repeat(rng.normal(0, 6, days), 24)
    noise = np.zeros(n)
    eps = rng.normal(0, 3, n)
    for k in range(1, n):
        noise[k] = 0.8 * noise[k - 1] + eps[k]

    # wind: slow latent process through a logistic power curve
    z = np.zeros(n)
    shocks = rng.normal(0, 0.25, n)
    regime = np.repeat(rng.normal(0, 1.0, days), 24)
    for k in range(1, n):
        z[k] = 0.95 * z[k - 1] + 0.05 * regime[k] + shocks[k]
    wind = wind_capacity / (1 + np.exp(-1.8 * z))
    wind = np.clip(wind + rng.normal(0, 0.5, n), 0, wind_capacity)

    da = 50 + daily + seasonal + level + noise - 0.35 * (wind - wind_capacity / 2)
    df = pd.DataFrame({
        "da_price": da,
        "imb_up_price": da * rng.uniform(0.7, 0.95, n),
        "imb_dw_price": da * rng.uniform(1.05, 1.3, n) + 2,
        "srr_price": np.clip(18 + 0.15 * daily + rng.normal(0, 4, n), 1, None),
        "sre_up_price": da * 1.1 + rng.normal(0, 4, n),
        "sre_dw_price": np.clip(da * 0.6 + rng.normal(0, 4, n), 0, None),
        "mu_up": rng.beta(2, 5, n),
        "mu_dw": rng.beta(2, 7, n),
        "rho": np.clip(0.57 + rng.normal(0, 0.03, n), 0, 1),
        "wind_mwh": wind,
    }, index=pd.DatetimeIndex(idx, name="timestamp"))
    return df[COLUMNS[1:]]


def make_forecast(history: pd.DataFrame, seed: int = 1, price_noise: float = 5.0) -> pd.DataFrame:
    """Noisy copy of the realized day-ahead and reserve prices."""
    rng = np.random.default_rng(seed)
    fc = history.copy()
    n = len(fc)
    fc["da_price"] = history["da_price"] + rng.normal(0, price_noise, n)
    fc["srr_price"] = np.clip(history["srr_price"] + rng.normal(0, price_noise / 3, n), 0, None)
    return fc


def synthetic_library(days: int = 430, seed: int = 0, **kw) -> CaseLibrary:
    hist = make_history(days=days, seed=seed)
    return CaseLibrary(hist, make_forecast(hist, seed + 1), **kw)


def constructed_day(da, wind, realized_wind=None, *, imb_up=None, imb_dw=None, srr=0.0, sre_up=0.0,
                    sre_dw=0.0, mu_up=0.5, mu_dw=0.5, rho=0.5, realized_mu=None,
                    date: str = "2016-01-01") -> MarketDay:
    """Market day built from explicit hourly arrays (scalars broadcast).

    ``da`` and ``wind`` span the planning period; the realized series default
    to the first 24 forecast hours, which gives a perfectly forecast day.
    """
    da = np.asarray(da, dtype=float)
    T = len(da)
    full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (T,)).copy()
    fc = PriceBundle(da, full(0.0 if imb_up is None else imb_up), full(2 * np.abs(da) + 10 if imb_dw is None else imb_dw),
                     full(srr), full(sre_up), full(sre_dw))
    wind = full(wind)
    act = ReserveActivationSeries(full(mu_up), full(mu_dw), full(rho))
    real_act = act.head(24) if realized_mu is None else ReserveActivationSeries(
        np.broadcast_to(realized_mu[0], (24,)).copy(), np.broadcast_to(realized_mu[1], (24,)).copy(), act.rho[:24])
    rw = wind[:24] if realized_wind is None else np.broadcast_to(np.asarray(realized_wind, float), (24,)).copy()
    return MarketDay(pd.Timestamp(date), fc, act, fc.head(24), real_act, rw,
                     wind_candidates=None, mu_forecasts={"C3": ReserveActivationSeries(act.mu_up, act.mu_dw)},
                     scenarios=ScenarioSet.single(wind))
