"""Synthetic intraday PV forecasts with a lead-time dependent error factor.

The forecast of a step is the smoothed measurement times ``1 + e`` with
``e ~ Normal(mu, sigma)`` clipped so the forecast stays inside the
over/under-estimation envelope. The mean ``mu`` ramps linearly from zero at
the issue time to the intraday maximum at midnight; steps already past
only carry a small measurement noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .assets import STEPS_PER_DAY

SMOOTH_WINDOW_MIN = 30


@dataclass(frozen=True)
class ForecastConfig:
    max_intraday_mean: float = 0.20
    max_over: float = 0.40
    max_under: float = 0.30
    noise_std: float = 0.02
    seed: int = 0
    mean_mode: str = "bias"          # bias: signed mean error; mae: zero-mean, mean |error| ramps

    def __post_init__(self):
        if not 0 <= self.max_intraday_mean <= self.max_over:
            raise ValueError("need 0 <= max_intraday_mean <= max_over")
        if self.max_under < 0 or self.noise_std < 0:
            raise ValueError("max_under and noise_std must be non-negative")
        if self.max_intraday_mean > self.max_under and self.mean_mode == "bias":
            raise ValueError("an under-forecast bias beyond max_under cannot be represented")
        if self.mean_mode not in ("bias", "mae"):
            raise ValueError(f"unknown mean_mode {self.mean_mode!r}")

    @property
    def lo(self):
        return 1.0 - self.max_under

    @property
    def hi(self):
        return 1.0 + self.max_over


@dataclass
class ForecastTrace:
    issue_step: int
    actual: np.ndarray               # (N,) smoothed measurement per step
    forecast: np.ndarray             # (N,) kW
    factors: np.ndarray              # (N,) forecast / actual multipliers
    sign: int

    @property
    def issue_hour(self):
        return self.issue_step * 24 / self.actual.shape[0]

    def horizon(self):
        """Forecast from the issue step to midnight."""
        return self.forecast[self.issue_step:]


def smooth(minutes, window=SMOOTH_WINDOW_MIN, n_steps=STEPS_PER_DAY):
    """Centred moving average over ``window`` minutes, averaged to steps.

    Near the day edges the window shrinks to the available minutes. Works
    on the last axis, so ``(plants, minutes)`` input is smoothed per row.
    """
    x = np.asarray(minutes, dtype=float)
    T = x.shape[-1]
    half = window // 2
    c = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    idx = np.arange(T)
    lo = np.clip(idx - half, 0, T)
    hi = np.clip(idx - half + window, 0, T)
    ma = (c[..., hi] - c[..., lo]) / (hi - lo)
    return ma.reshape(x.shape[:-1] + (n_steps, T // n_steps)).mean(axis=-1)


def mean_ramp(n_steps, issue_step, peak):
    """Mean error per step: 0 up to the issue, then linear to ``peak`` at the last step."""
    mu = np.zeros(n_steps)
    lead = np.arange(n_steps) - issue_step + 1
    ahead = lead > 0
    mu[ahead] = peak * lead[ahead] / (n_steps - issue_step)
    return mu


def error_std(config, mu):
    """Spread that keeps the 3-sigma band inside the clamp envelope."""
    room = np.minimum(config.max_over - mu, config.max_under + mu)
    return np.clip(room, 0.0, None) / 3.0


def trace_sign(seed):
    """Direction of the day's forecast bias, shared by every issue of the day."""
    return 1 if np.random.default_rng([seed, 1]).random() < 0.5 else -1


def make_forecast(actual, issue_step, config=ForecastConfig(), smoothed=True):
    """Forecast issued at ``issue_step`` for the whole day.

    Parameters
    ----------
    actual : ndarray
        Minute series (1440,) or, with ``smoothed=False``, step values (N,)
        already smoothed.
    issue_step : int
        First step not yet observed; hourly issues use multiples of 6.
    config : ForecastConfig

    Returns
    -------
    ForecastTrace
    """
    base = smooth(actual) if smoothed else np.asarray(actual, dtype=float)
    N = base.shape[0]
    if not 0 <= issue_step < N:
        raise ValueError(f"issue step {issue_step} outside the day")
    rng = np.random.default_rng([config.seed, 2, issue_step])
    sign = trace_sign(config.seed)
    z = rng.standard_normal(N)
    future = np.arange(N) >= issue_step
    if config.mean_mode == "bias":
        mu = sign * mean_ramp(N, issue_step, config.max_intraday_mean)
        e = mu + error_std(config, mu) * z
    else:
        # zero mean with E|e| equal to the ramp: sigma = m * sqrt(pi / 2)
        m = mean_ramp(N, issue_step, config.max_intraday_mean)
        e = m * np.sqrt(np.pi / 2) * z
    past = config.noise_std * np.clip(z, -3.0, 3.0)
    factors = np.clip(np.where(future, 1.0 + e, 1.0 + past), config.lo, config.hi)
    return ForecastTrace(issue_step, base, base * factors, factors, sign)


def hourly_traces(actual, config=ForecastConfig(), steps_per_hour=STEPS_PER_DAY // 24):
    """One trace per hour of the day, issued at ``0, 1, ..., 23`` h."""
    base = smooth(actual)
    return [make_forecast(base, h * steps_per_hour, config, smoothed=False)
            for h in range(base.shape[0] // steps_per_hour)]


def dump_csv(traces, path):
    """Write ``issue_hour,step,actual_kw,forecast_kw`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["issue_hour", "step", "actual_kw", "forecast_kw"])
        for tr in traces:
            for k in range(tr.actual.shape[0]):
                w.writerow([f"{tr.issue_hour:g}", k, f"{tr.actual[k]:.6f}", f"{tr.forecast[k]:.6f}"])
