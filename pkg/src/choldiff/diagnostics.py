"""Chain diagnostics: autocorrelations, integrated autocorrelation time, summaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelation function up to ``max_lag`` (FFT-based).

    Standard normalisation by the lag-0 autocovariance; ACF(0) is exactly
    1.  A constant series is flagged by returning 1 at lag 0 and 0
    elsewhere.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise ValueError("autocorrelation needs at least 2 samples")
    n = x.size
    max_lag = min(max_lag, n - 1)
    acf = np.zeros(max_lag + 1)
    acf[0] = 1.0
    if np.all(x == x[0]):
        return acf  # constant series
    x = x - x.mean()
    var = float(x @ x)
    if var <= 0.0:
        return acf
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[: max_lag + 1]
    acf = acov / acov[0]
    acf[0] = 1.0
    return acf


def integrated_autocorr_time(series: np.ndarray, max_lag: int = None) -> float:
    """IACT via the initial-positive-sequence truncation.

    ``tau = 1 + 2 sum_k rho_k``, summing lags until the first
    non-positive autocorrelation.
    """
    x = np.asarray(series, dtype=float)
    if max_lag is None:
        max_lag = min(x.size - 1, 10_000)
    acf = autocorrelation(x, max_lag)
    tau = 1.0
    for k in range(1, acf.size):
        if acf[k] <= 0.0:
            break
        tau += 2.0 * acf[k]
    return tau


def summary_stats(samples: np.ndarray) -> dict:
    """Posterior mean, SD and median of a 1-d sample vector."""
    x = np.asarray(samples, dtype=float)
    return {
        "mean": float(np.mean(x)),
        "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
        "median": float(np.median(x)),
    }


@dataclass
class Diagnostics:
    """Collected chain diagnostics.

    ``acceptance`` maps update-type name to (accepted, attempted) counts
    (with domain auto-rejects tracked separately by the sampler);
    ``acf`` and ``iact`` are keyed by parameter name.
    """

    acceptance: dict = field(default_factory=dict)
    acceptance_domain_rejects: dict = field(default_factory=dict)
    acf: dict = field(default_factory=dict)
    iact: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    loglik_trace: np.ndarray = None

    def acceptance_rates(self) -> dict:
        return {
            name: (acc / att if att else 0.0)
            for name, (acc, att) in self.acceptance.items()
        }


def compute_diagnostics(samples: np.ndarray, names: list[str],
                        max_lag: int = 100,
                        loglik_trace: np.ndarray = None) -> Diagnostics:
    """Diagnostics for a (n_samples, n_parameters) sample matrix."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need a (n_samples >= 2, n_parameters) matrix")
    if samples.shape[1] != len(names):
        raise ValueError("parameter names do not match the sample matrix")
    diag = Diagnostics(loglik_trace=loglik_trace)
    for j, name in enumerate(names):
        col = samples[:, j]
        diag.acf[name] = autocorrelation(col, max_lag)
        diag.iact[name] = integrated_autocorr_time(col, max_lag=min(samples.shape[0] - 1, 10 * max_lag))
        diag.summaries[name] = summary_stats(col)
    return diag
