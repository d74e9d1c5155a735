"""Augmented log-likelihoods.

Evaluates the Girsanov functional on lattices (Ito left-endpoint sums),
the reparametrised likelihood over centered bridges, the Euler reference
likelihood, and the conditional bivariate Gaussian price likelihood of
the stochastic volatility model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cholesky import CholeskyFactor, solve_lower
from .models import DiffusionSpec, NumericalError, ObservationSet, PathLattice
from .transform import TransformContext, TransformRangeError, drift_U, jacobian_logdet, transform_H

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GirsanovTerms:
    """Stochastic and time integrals of the Girsanov log-density."""

    stochastic_integral: float
    time_integral: float

    @property
    def log_g(self) -> float:
        return self.stochastic_integral - self.time_integral


def girsanov_log(drift_fn, path: np.ndarray, times: np.ndarray) -> GirsanovTerms:
    """Girsanov log-terms of a unit-diffusion lattice path.

    Left-endpoint (Ito) Riemann sums:

        sum_j M(U_j)' (U_{j+1} - U_j)  -  0.5 sum_j |M(U_j)|^2 dt_j

    ``path`` is (p, d); scalar paths may be passed as (p,).
    """
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    if path.shape[0] < 2:
        raise ValueError("girsanov_log needs at least 2 lattice rows")
    times = np.asarray(times, dtype=float)
    mu = np.asarray(drift_fn(path[:-1]), dtype=float)
    if mu.ndim == 1:
        mu = mu[:, None]
    if not np.all(np.isfinite(mu)):
        idx = int(np.argwhere(~np.isfinite(mu))[0][0])
        raise NumericalError(f"drift is not finite at lattice index {idx}")
    du = np.diff(path, axis=0)
    dt = np.diff(times)
    stoch = float(np.sum(mu * du))
    time_int = 0.5 * float(np.sum(np.sum(np.square(mu), axis=1) * dt))
    return GirsanovTerms(stoch, time_int)


@dataclass(frozen=True)
class AugmentedPath:
    """Centered latent bridges between consecutive observations.

    ``z`` has shape (n_intervals, m + 2, d) in transformed coordinates;
    each bridge is exactly zero at both endpoints.
    """

    obs_times: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        obs_times = np.asarray(self.obs_times, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 3 or z.shape[0] != obs_times.shape[0] - 1:
            raise ValueError("z must be (n_intervals, m + 2, d)")
        if np.any(z[:, 0, :] != 0.0) or np.any(z[:, -1, :] != 0.0):
            raise ValueError("bridges must be exactly zero at both endpoints")
        object.__setattr__(self, "obs_times", obs_times)
        object.__setattr__(self, "z", z)

    @property
    def n_intervals(self) -> int:
        return self.z.shape[0]

    @property
    def m(self) -> int:
        return self.z.shape[1] - 2

    @property
    def dim(self) -> int:
        return self.z.shape[2]

    def lattice_dts(self) -> np.ndarray:
        """Lattice step of each interval."""
        return np.diff(self.obs_times) / (self.z.shape[1] - 1)

    @staticmethod
    def flat(obs_times, m: int, dim: int) -> "AugmentedPath":
        """All-zero bridges (straight lines in transformed space)."""
        obs_times = np.asarray(obs_times, dtype=float)
        return AugmentedPath(obs_times, np.zeros((obs_times.shape[0] - 1, m + 2, dim)))


def uncenter_lattice(z: np.ndarray, yh: np.ndarray) -> np.ndarray:
    """U lattices from centered bridges and transformed endpoints.

    ``z`` is (n, p, d), ``yh`` is (n + 1, d); returns ``z`` plus the
    linear interpolant of consecutive endpoint pairs.
    """
    n, p, _ = z.shape
    w = np.linspace(0.0, 1.0, p)[None, :, None]
    start = yh[:-1, None, :]
    span = (yh[1:] - yh[:-1])[:, None, :]
    return z + start + w * span


@dataclass(frozen=True)
class LogLikBreakdown:
    """Per-interval log-likelihood terms and their sum."""

    girsanov: np.ndarray
    endpoint: np.ndarray
    jacobian: np.ndarray
    price: np.ndarray = None

    @property
    def per_interval(self) -> np.ndarray:
        total = self.girsanov + self.endpoint + self.jacobian
        if self.price is not None:
            total = total + self.price
        return total

    @property
    def total(self) -> float:
        return float(np.sum(self.per_interval))


def girsanov_intervals(ctx: TransformContext, U: np.ndarray, dts: np.ndarray):
    """Girsanov log-term per interval for a (n, p, d) transformed lattice.

    Dispatches to the sqrt-model kernel when the model admits it; the
    generic route evaluates :func:`drift_U` pointwise.  Returns
    ``(log_g, ok)`` with ``-inf`` on domain-invalid intervals.
    """
    dts = np.asarray(dts, dtype=float)
    if ctx.spec.sqrt_linear_params is not None:
        kappa, level = ctx.spec.sqrt_linear_params(ctx.theta)
        return kernels.girsanov_sqrt_model(
            U, dts, ctx.C.entries, ctx.C_inverse, kappa, level, ctx.v_diag()
        )
    return _girsanov_intervals_generic(ctx, U, dts)


def _girsanov_intervals_generic(ctx, U, dts):
    n, p, d = U.shape
    log_g = np.empty(n)
    ok = np.ones(n, dtype=bool)
    for k in range(n):
        try:
            mu = drift_U(ctx, U[k, :-1, :])
        except TransformRangeError:
            log_g[k] = -np.inf
            ok[k] = False
            continue
        # the final lattice point must also be in range
        try:
            drift_U(ctx, U[k, -1, :])
        except TransformRangeError:
            log_g[k] = -np.inf
            ok[k] = False
            continue
        du = np.diff(U[k], axis=0)
        log_g[k] = float(np.sum(mu * du) - 0.5 * np.sum(np.square(mu)) * dts[k])
    return log_g, ok


def endpoint_gaussian_terms(yh: np.ndarray, obs_dt: np.ndarray) -> np.ndarray:
    """log N(YH_k - YH_{k-1}; 0, dt_k I) per interval."""
    d = yh.shape[1]
    dy = np.diff(yh, axis=0)
    return -0.5 * (d * (LOG_2PI + np.log(obs_dt)) + np.sum(np.square(dy), axis=1) / obs_dt)


def loglik_reparam(ctx: TransformContext, obs: ObservationSet,
                   aug: AugmentedPath) -> LogLikBreakdown:
    """Reparametrised augmented log-likelihood for a directly observed diffusion.

    Per interval: Girsanov log-term of the uncentered transformed bridge,
    plus the endpoint Gaussian density of the transformed observation
    increment, plus the Jacobian of the transform at the right endpoint.
    The parameter-free marginal factor of the dominating-measure
    factorisation cancels in every Metropolis ratio and is not evaluated.
    """
    if obs.n_intervals != aug.n_intervals:
        raise ValueError("augmented path does not match the observation set")
    if not np.allclose(obs.times, aug.obs_times):
        raise ValueError("augmented path times do not match the observations")
    yh = transform_H(ctx, obs.values)
    U = uncenter_lattice(aug.z, yh)
    log_g, ok = girsanov_intervals(ctx, U, aug.lattice_dts())
    if not np.all(ok):
        raise ValueError(
            f"augmented path leaves the model domain in interval {int(np.argmin(ok))}"
        )
    obs_dt = np.diff(obs.times)
    endpoint = endpoint_gaussian_terms(yh, obs_dt)
    jac = np.asarray(jacobian_logdet(ctx, obs.values[1:]), dtype=float)
    return LogLikBreakdown(log_g, endpoint, jac)


def euler_loglik(spec: DiffusionSpec, C: CholeskyFactor, theta,
                 path: PathLattice) -> float:
    """Euler transition log-density of a lattice path.

    ``sum_i log N(X_i; X_{i-1} + dt M, dt A)`` with the diffusion matrix
    evaluated at the left endpoint.
    """
    theta = spec.param_layout.validate(theta)
    x = path.states
    dt = np.diff(path.times)
    mu = np.asarray(spec.drift(x[:-1], theta), dtype=float)
    f = spec.f_diag(x[:-1], theta)
    d = spec.dim
    if np.any(f <= 0.0) or not np.all(np.isfinite(f)):
        idx = np.argwhere(~(f > 0.0) | ~np.isfinite(f))
        raise NumericalError(
            f"diffusion matrix is singular at step {int(idx[0][0])}"
        )
    L = C.entries
    # Sigma = F L at the left point, so Sigma^{-1} r = L^{-1} (r / f):
    # one triangular solve whitens all steps at once
    resid = x[1:] - x[:-1] - dt[:, None] * mu
    r = solve_lower(L, (resid / f).T).T / np.sqrt(dt)[:, None]
    log_det = (2.0 * np.sum(np.log(np.diag(L)))
               + 2.0 * np.sum(np.log(f), axis=1) + d * np.log(dt))
    return float(np.sum(-0.5 * (d * LOG_2PI + log_det + np.sum(np.square(r), axis=1))))


# ---------------------------------------------------------------------------
# stochastic volatility (bivariate Heston) likelihood


def vol_brownian_increments(vol: np.ndarray, dts: np.ndarray, D: np.ndarray,
                            kappa: np.ndarray, mu_v: np.ndarray) -> np.ndarray:
    """Brownian increments driving the volatility block, recovered from its path.

    From ``dv = kappa (mu_v - v) dt + diag(sqrt(v)) D db``:

        db_j = D^{-1} diag(1/sqrt(v_j)) (v_{j+1} - v_j - kappa (mu_v - v_j) dt)

    ``vol`` is (n, p, 2) in natural coordinates; returns (n, p - 1, 2).
    """
    dv = np.diff(vol, axis=1)
    left = vol[:, :-1, :]
    resid = dv - kappa * (mu_v - left) * dts[:, None, None]
    scaled = resid / np.sqrt(left)
    Dinv = np.linalg.inv(D)
    return scaled @ Dinv.T


def heston_price_terms(theta, C: CholeskyFactor, price_obs: np.ndarray,
                       vol: np.ndarray, dts: np.ndarray,
                       db: np.ndarray = None) -> np.ndarray:
    """Conditional bivariate Gaussian log-density of the price observations.

    Conditional on the volatility paths (and hence on their driving
    Brownian components), each price increment is Gaussian; the mean
    collects the drift time-integral and the ``C_31, C_32, C_41, C_42``
    Ito integrals against the volatility Brownian increments, and the
    covariance the ``C_33, C_43, C_44`` weighted time-integrals.  All
    integrals use left-endpoint sums on the volatility lattice.

    ``price_obs`` is (n + 1, 2), ``vol`` is (n, p, 2); returns (n,).
    """
    theta = np.asarray(theta, dtype=float)
    kappa, mu_v, mu_x = theta[:2], theta[2:4], theta[4:6]
    if np.any(vol <= 0.0):
        raise ValueError("volatility lattice must be strictly positive")
    L = C.entries
    if db is None:
        db = vol_brownian_increments(vol, dts, L[:2, :2], kappa, mu_v)

    v_left = vol[:, :-1, :]  # (n, p-1, 2)
    rel = np.sqrt(v_left / mu_v)  # sqrt(v / mu_v), left endpoints

    drift_int = np.sum(mu_x - 0.5 * np.square(v_left), axis=1) * dts[:, None]
    ito_1 = np.sum(rel[:, :, 0:1] * db, axis=1)  # integrals of sqrt(v1/mu1) db
    ito_2 = np.sum(rel[:, :, 1:2] * db, axis=1)
    mean = np.empty((vol.shape[0], 2))
    mean[:, 0] = price_obs[:-1, 0] + drift_int[:, 0] + L[2, 0] * ito_1[:, 0] + L[2, 1] * ito_1[:, 1]
    mean[:, 1] = price_obs[:-1, 1] + drift_int[:, 1] + L[3, 0] * ito_2[:, 0] + L[3, 1] * ito_2[:, 1]

    w1 = np.sum(v_left[:, :, 0] / mu_v[0], axis=1) * dts
    w2 = np.sum(v_left[:, :, 1] / mu_v[1], axis=1) * dts
    w12 = np.sum(np.sqrt(v_left[:, :, 0] * v_left[:, :, 1] / (mu_v[0] * mu_v[1])), axis=1) * dts
    s11 = L[2, 2] ** 2 * w1
    s12 = L[2, 2] * L[3, 2] * w12
    s22 = (L[3, 2] ** 2 + L[3, 3] ** 2) * w2

    resid = price_obs[1:] - mean
    det = s11 * s22 - np.square(s12)
    if np.any(det <= 0.0):
        raise NumericalError("price covariance is numerically singular")
    quad = (s22 * np.square(resid[:, 0]) - 2.0 * s12 * resid[:, 0] * resid[:, 1]
            + s11 * np.square(resid[:, 1])) / det
    return -0.5 * (2.0 * LOG_2PI + np.log(det) + quad)


def heston_price_loglik(theta, C: CholeskyFactor, price_obs, vol, dts, db=None) -> float:
    """Sum of :func:`heston_price_terms` over intervals."""
    return float(np.sum(heston_price_terms(theta, C, price_obs, vol, dts, db)))


@dataclass(frozen=True)
class SVAugmentedPath:
    """Latent volatility paths of the stochastic volatility sampler.

    ``z`` holds the centered interior bridges (n, p, 2); ``knots_u`` the
    transformed volatility values at observation times.  In the
    exact-observation regime the knots are determined by the data and
    ``knots_u`` is None.
    """

    obs_times: np.ndarray
    z: np.ndarray
    knots_u: np.ndarray = None

    def __post_init__(self):
        obs_times = np.asarray(self.obs_times, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 3 or z.shape[0] != obs_times.shape[0] - 1 or z.shape[2] != 2:
            raise ValueError("z must be (n_intervals, m + 2, 2)")
        if np.any(z[:, 0, :] != 0.0) or np.any(z[:, -1, :] != 0.0):
            raise ValueError("bridges must be exactly zero at both endpoints")
        object.__setattr__(self, "obs_times", obs_times)
        object.__setattr__(self, "z", z)
        if self.knots_u is not None:
            knots = np.asarray(self.knots_u, dtype=float)
            if knots.shape != (obs_times.shape[0], 2):
                raise ValueError("knots_u must be (n_obs, 2)")
            object.__setattr__(self, "knots_u", knots)

    @property
    def n_intervals(self) -> int:
        return self.z.shape[0]

    def lattice_dts(self) -> np.ndarray:
        return np.diff(self.obs_times) / (self.z.shape[1] - 1)


def loglik_sv(theta, C: CholeskyFactor, obs: ObservationSet,
              paths: SVAugmentedPath, regime: str) -> LogLikBreakdown:
    """Augmented log-likelihood of the bivariate Heston model.

    ``regime`` is ``"exact-vol"`` (observations are (v1, v2, x1, x2) with
    the volatilities observed exactly) or ``"latent-vol"`` (observations
    are the log-prices (x1, x2) and the volatility path is fully latent).
    In the latent regime the transformed volatility knots are latent
    coordinates: the Wiener dominating measure contributes the Gaussian
    increment density of consecutive knots (flat improper prior on the
    initial knot), and there is no Jacobian term.
    """
    from .models import heston_vol_block

    theta = np.asarray(theta, dtype=float)
    if regime not in ("exact-vol", "latent-vol"):
        raise ValueError(f"unknown stochastic volatility regime {regime!r}")
    vol_spec, vol_theta = heston_vol_block(theta)
    D = CholeskyFactor(C.entries[:2, :2])
    ctx = TransformContext(vol_spec, D, vol_theta)
    dts = paths.lattice_dts()
    n = paths.n_intervals

    if regime == "exact-vol":
        if obs.d_obs != 4:
            raise ValueError("exact-vol regime needs 4 observed components")
        vol_obs = obs.values[:, :2]
        price_obs = obs.values[:, 2:]
        yh = transform_H(ctx, vol_obs)
        endpoint = endpoint_gaussian_terms(yh, np.diff(obs.times))
        jac = np.asarray(jacobian_logdet(ctx, vol_obs[1:]), dtype=float)
    else:
        if obs.d_obs != 2:
            raise ValueError("latent-vol regime needs 2 observed components")
        if paths.knots_u is None:
            raise ValueError("latent-vol regime needs volatility knots")
        price_obs = obs.values
        yh = paths.knots_u
        endpoint = endpoint_gaussian_terms(yh, np.diff(obs.times))
        jac = np.zeros(n)

    U = uncenter_lattice(paths.z, yh)
    log_g, ok = girsanov_intervals(ctx, U, dts)
    if not np.all(ok):
        raise ValueError(
            f"volatility path leaves the domain in interval {int(np.argmin(ok))}"
        )
    vol = np.square(U @ D.entries.T / 2.0)  # natural volatility lattice
    price = heston_price_terms(theta, C, price_obs, vol, dts)
    return LogLikBreakdown(log_g, endpoint, jac, price)
