"""Diffusion model abstraction and concrete model builders.

A :class:`DiffusionSpec` describes a d-dimensional SDE whose dispersion
matrix factorises as ``Sigma(x) = F(x) C`` with ``F`` diagonal and ``C``
a lower-triangular Cholesky factor.  Component volatility factors
``f_i``, their antiderivative reciprocals ``g_i`` (``dg/dx = 1/f``) and
the inverses of the ``g_i`` are supplied analytically by the builders.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cholesky import CholeskyFactor


class DomainError(ValueError):
    """State outside the model domain."""


class NumericalError(ArithmeticError):
    """Non-finite value produced where a finite one is required."""


@dataclass(frozen=True)
class ParamLayout:
    """Flat ordering of model parameters with positivity flags."""

    names: tuple[str, ...]
    positive: tuple[bool, ...]

    def __post_init__(self):
        if len(self.names) != len(self.positive):
            raise ValueError("names and positivity flags must align")

    @property
    def count(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def validate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.count,):
            raise ValueError(
                f"parameter vector has shape {theta.shape}, expected ({self.count},)"
            )
        for k, (name, pos) in enumerate(zip(self.names, self.positive)):
            if pos and theta[k] <= 0.0:
                raise ValueError(f"parameter {name!r} must be positive, got {theta[k]}")
        return theta


@dataclass(frozen=True)
class DiffusionSpec:
    """A d-dimensional diffusion with Cholesky-factorised dispersion."""

    name: str
    dim: int
    drift: Callable  # (state (..., d), theta) -> (..., d)
    factor_f: Callable  # (i, x, theta) -> positive, elementwise on arrays
    factor_df: Callable  # (i, x, theta) -> d f_i / dx
    antideriv_g: Callable  # (i, x, theta) -> g_i with dg/dx = 1/f
    antideriv_g_inv: Callable  # (i, u, theta) -> x
    domain_lower: np.ndarray
    param_layout: ParamLayout
    default_theta: np.ndarray = None
    # components carrying the unit-volatility transform; for stochastic
    # volatility models this is the volatility block only
    transform_dims: tuple[int, ...] = None
    # components that may be treated as latent (unobserved)
    latent_capable: tuple[bool, ...] = None
    # (theta) -> (kappa, level) when every transformed component has
    # f = sqrt(x) and linear mean-reverting drift; enables the compiled
    # likelihood kernel
    sqrt_linear_params: Optional[Callable] = None
    # full-state diagonal of F(x); defaults to factor_f applied per
    # component, overridden when f_i depends on another component
    factor_diag: Optional[Callable] = None

    def __post_init__(self):
        lower = np.asarray(self.domain_lower, dtype=float)
        if lower.shape != (self.dim,):
            raise ValueError("domain_lower must be a d-vector")
        object.__setattr__(self, "domain_lower", lower)
        if self.transform_dims is None:
            object.__setattr__(self, "transform_dims", tuple(range(self.dim)))
        if self.latent_capable is None:
            object.__setattr__(self, "latent_capable", (False,) * self.dim)

    def in_domain(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        bound = np.isfinite(self.domain_lower)
        return bool(np.all(x[..., bound] > self.domain_lower[bound]))

    def check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"state has dimension {x.shape[-1]}, expected {self.dim}")
        bad = ~(x > self.domain_lower)
        finite_bound = np.isfinite(self.domain_lower)
        if np.any(bad & finite_bound):
            idx = np.argwhere(bad & finite_bound)[0]
            raise DomainError(
                f"state component {int(idx[-1])} outside domain "
                f"(value {float(np.asarray(x)[tuple(idx)])}, "
                f"lower bound {self.domain_lower[int(idx[-1])]})"
            )
        return x

    def f_diag(self, x, theta) -> np.ndarray:
        """Diagonal of F(x, theta) for full states of shape (..., d)."""
        if self.factor_diag is not None:
            return self.factor_diag(x, theta)
        x = np.asarray(x, dtype=float)
        cols = [self.factor_f(i, x[..., i], theta) for i in range(self.dim)]
        return np.stack([np.broadcast_to(c, x[..., 0].shape) for c in cols], axis=-1)


@dataclass(frozen=True)
class StateVector:
    """State of the diffusion in model units."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("state must be a 1-d vector")


def as_state_array(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.values
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PathLattice:
    """Time lattice of states, with observation rows marked."""

    times: np.ndarray
    states: np.ndarray
    obs_index: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        obs_index = np.asarray(self.obs_index, dtype=int)
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("lattice times must be strictly increasing")
        if states.shape[0] != times.shape[0]:
            raise ValueError("states and times must have matching length")
        if obs_index.size:
            if obs_index[0] != 0 or obs_index[-1] != times.shape[0] - 1:
                raise ValueError("obs_index must contain first and last rows")
            if np.any(np.diff(obs_index) <= 0):
                raise ValueError("obs_index must be increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "obs_index", obs_index)

    @property
    def n_points(self) -> int:
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class ObservationSet:
    """Observed values at strictly increasing times."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(times)):
            raise ValueError("observation times must be finite")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("observation times must be strictly increasing")
        if values.ndim != 2 or values.shape[0] != times.shape[0]:
            raise ValueError("values must be (n_times, d_obs)")
        if not np.all(np.isfinite(values)):
            raise ValueError("observations must be finite (no missing rows)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_intervals(self) -> int:
        return self.times.shape[0] - 1

    @property
    def d_obs(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# evaluation of the SDE coefficient functions


def drift_eval(spec: DiffusionSpec, x, theta) -> np.ndarray:
    """Drift vector M(x, theta)."""
    x = spec.check_domain(as_state_array(x))
    theta = spec.param_layout.validate(theta)
    out = np.asarray(spec.drift(x, theta), dtype=float)
    if not np.all(np.isfinite(out)):
        idx = int(np.argwhere(~np.isfinite(out))[0][-1])
        raise NumericalError(f"drift produced a non-finite value in component {idx}")
    return out


def dispersion_eval(spec: DiffusionSpec, C: CholeskyFactor, x, theta) -> np.ndarray:
    """Dispersion matrix ``Sigma = F(x) C`` (lower triangular)."""
    x = spec.check_domain(as_state_array(x))
    theta = spec.param_layout.validate(theta)
    return spec.f_diag(x, theta)[:, None] * C.entries


def diffusion_matrix(spec: DiffusionSpec, C: CholeskyFactor, x, theta) -> np.ndarray:
    """Instantaneous covariance ``A = Sigma Sigma'``."""
    sigma = dispersion_eval(spec, C, x, theta)
    return sigma @ sigma.T


def quadratic_variation(path: PathLattice) -> np.ndarray:
    """Summed outer products of increments over consecutive lattice rows."""
    if path.n_points < 2:
        raise ValueError("quadratic variation needs at least 2 lattice rows")
    dx = np.diff(path.states, axis=0)
    return dx.T @ dx


# ---------------------------------------------------------------------------
# model builders


def build_mv_cir(d: int, kappa=None, mu=None) -> DiffusionSpec:
    """Multivariate CIR model: drift kappa_i (mu_i - x_i), volatility factor sqrt(x_i).

    ``kappa`` and ``mu``, when given, become the default parameter vector
    (and must be positive); the coefficient functions always read the
    theta passed at evaluation time.
    """
    names = tuple(f"kappa{i + 1}" for i in range(d)) + tuple(f"mu{i + 1}" for i in range(d))
    layout = ParamLayout(names, (True,) * (2 * d))
    default_theta = None
    if kappa is not None or mu is not None:
        kappa = np.asarray(kappa, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if kappa.shape != (d,) or mu.shape != (d,):
            raise ValueError("kappa and mu must be d-vectors")
        if np.any(kappa <= 0.0) or np.any(mu <= 0.0):
            raise ValueError("kappa and mu must be strictly positive")
        default_theta = np.concatenate([kappa, mu])

    def drift(x, theta):
        theta = np.asarray(theta, dtype=float)
        k, m = theta[:d], theta[d:]
        return k * (m - x)

    return DiffusionSpec(
        name="mv_cir",
        dim=d,
        drift=drift,
        factor_f=lambda i, x, theta: np.sqrt(x),
        factor_df=lambda i, x, theta: 0.5 / np.sqrt(x),
        antideriv_g=lambda i, x, theta: 2.0 * np.sqrt(x),
        antideriv_g_inv=lambda i, u, theta: np.square(np.asarray(u) / 2.0),
        domain_lower=np.zeros(d),
        param_layout=layout,
        default_theta=default_theta,
        sqrt_linear_params=lambda theta: (
            np.asarray(theta[:d], dtype=float),
            np.asarray(theta[d:2 * d], dtype=float),
        ),
    )


def build_bm_drift(d: int = 1) -> DiffusionSpec:
    """Brownian motion with constant drift; unit volatility factor.

    Toy model used for conjugate-posterior checks of the sampler.
    """
    names = tuple(f"drift{i + 1}" for i in range(d))
    layout = ParamLayout(names, (False,) * d)

    def drift(x, theta):
        theta = np.asarray(theta, dtype=float)
        return np.broadcast_to(theta, x.shape).copy()

    one = lambda i, x, theta: np.ones_like(np.asarray(x, dtype=float))
    return DiffusionSpec(
        name="bm_drift",
        dim=d,
        drift=drift,
        factor_f=one,
        factor_df=lambda i, x, theta: np.zeros_like(np.asarray(x, dtype=float)),
        antideriv_g=lambda i, x, theta: np.asarray(x, dtype=float),
        antideriv_g_inv=lambda i, u, theta: np.asarray(u, dtype=float),
        domain_lower=np.full(d, -np.inf),
        param_layout=layout,
    )


def build_bivariate_heston(kappa=None, mu_v=None, mu_x=None) -> DiffusionSpec:
    """Bivariate Heston model as a 4-dimensional diffusion (v1, v2, x1, x2).

    The log-price volatilities are rescaled by ``c_i = sqrt(mu_v_i)`` so
    that the price volatility factors are ``sqrt(v_i / mu_v_i)``; the
    volatility block (components 0, 1) is CIR-type and carries the
    unit-volatility transform.
    """
    names = ("kappa1", "kappa2", "mu1", "mu2", "mu3", "mu4")
    layout = ParamLayout(names, (True, True, True, True, False, False))
    default_theta = None
    if kappa is not None or mu_v is not None or mu_x is not None:
        kappa = np.asarray(kappa, dtype=float)
        mu_v = np.asarray(mu_v, dtype=float)
        mu_x = np.asarray(mu_x, dtype=float)
        if kappa.shape != (2,) or mu_v.shape != (2,) or mu_x.shape != (2,):
            raise ValueError("kappa, mu_v, mu_x must be 2-vectors")
        if np.any(kappa <= 0.0) or np.any(mu_v <= 0.0):
            raise ValueError("kappa and mu_v must be strictly positive")
        default_theta = np.concatenate([kappa, mu_v, mu_x])

    def drift(x, theta):
        theta = np.asarray(theta, dtype=float)
        k = theta[:2]
        mv = theta[2:4]
        mx = theta[4:6]
        v = x[..., :2]
        out = np.empty_like(x)
        out[..., :2] = k * (mv - v)
        out[..., 2:] = mx - 0.5 * np.square(v)
        return out

    def factor_f(i, x, theta):
        # for the price components (i = 2, 3) the scalar argument is the
        # driving volatility v_{i-2}
        x = np.asarray(x, dtype=float)
        if i < 2:
            return np.sqrt(x)
        return np.sqrt(x / theta[2 + (i - 2)])

    def factor_df(i, x, theta):
        x = np.asarray(x, dtype=float)
        if i < 2:
            return 0.5 / np.sqrt(x)
        return 0.5 / np.sqrt(x * theta[2 + (i - 2)])

    def antideriv_g(i, x, theta):
        if i >= 2:
            raise ValueError("price components carry no unit-volatility transform")
        return 2.0 * np.sqrt(x)

    def antideriv_g_inv(i, u, theta):
        if i >= 2:
            raise ValueError("price components carry no unit-volatility transform")
        return np.square(np.asarray(u) / 2.0)

    def factor_diag(x, theta):
        x = np.asarray(x, dtype=float)
        v = x[..., :2]
        out = np.empty_like(x)
        out[..., :2] = np.sqrt(v)
        out[..., 2:] = np.sqrt(v / theta[2:4])
        return out

    return DiffusionSpec(
        name="bivariate_heston",
        dim=4,
        drift=drift,
        factor_f=factor_f,
        factor_df=factor_df,
        antideriv_g=antideriv_g,
        antideriv_g_inv=antideriv_g_inv,
        domain_lower=np.array([0.0, 0.0, -np.inf, -np.inf]),
        param_layout=layout,
        default_theta=default_theta,
        transform_dims=(0, 1),
        latent_capable=(True, True, False, False),
        factor_diag=factor_diag,
    )


def heston_vol_block(theta) -> tuple[DiffusionSpec, np.ndarray]:
    """The 2-dimensional CIR sub-diffusion of the Heston volatilities.

    Returns the reduced spec together with its parameter vector
    (kappa1, kappa2, mu1, mu2) extracted from the full Heston theta.
    """
    theta = np.asarray(theta, dtype=float)
    sub = build_mv_cir(2)
    return sub, theta[:4].copy()


MODEL_REGISTRY: dict[str, Callable] = {
    "mv_cir": build_mv_cir,
    "bivariate_heston": build_bivariate_heston,
    "bm_drift": build_bm_drift,
}
