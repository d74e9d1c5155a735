"""Unit-volatility transform and bridge centering.

Two-stage reparametrisation of the latent paths: the transform
``H(x) = C^{-1} G(x)`` (componentwise antiderivatives ``g_i`` of
``1/f_i``) maps the diffusion to unit volatility, and the linear bridge
centering maps each inter-observation segment to one that starts and
finishes at zero, so the dominating measure is parameter free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cholesky import CholeskyFactor
from .models import DiffusionSpec, DomainError, as_state_array


class TransformRangeError(DomainError):
    """A transformed point maps outside the image of H.

    During path proposals this is a Metropolis auto-reject, not an error.
    """


@dataclass(frozen=True)
class TransformContext:
    """Frozen (spec, C, theta) triple with cached inverse factor."""

    spec: DiffusionSpec
    C: CholeskyFactor
    theta: np.ndarray
    C_inverse: np.ndarray = None
    g_lower: np.ndarray = None  # infimum of each g_i over the domain

    def __post_init__(self):
        if self.C.dim != self.spec.dim:
            raise ValueError("Cholesky factor dimension does not match the model")
        theta = self.spec.param_layout.validate(self.theta)
        object.__setattr__(self, "theta", theta)
        if self.C_inverse is None:
            object.__setattr__(self, "C_inverse", self.C.inverse())
        if self.g_lower is None:
            lower = np.empty(self.spec.dim)
            for i in range(self.spec.dim):
                b = self.spec.domain_lower[i]
                lower[i] = (self.spec.antideriv_g(i, b, theta)
                            if np.isfinite(b) else -np.inf)
            object.__setattr__(self, "g_lower", lower)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def v_diag(self) -> np.ndarray:
        """Diagonal of V = C C' (row norms squared of C)."""
        return np.sum(np.square(self.C.entries), axis=1)


def transform_H(ctx: TransformContext, x) -> np.ndarray:
    """U = C^{-1} G(x), componentwise g applied before mixing."""
    x = ctx.spec.check_domain(as_state_array(x))
    g = np.stack(
        [np.asarray(ctx.spec.antideriv_g(i, x[..., i], ctx.theta), dtype=float)
         for i in range(ctx.dim)],
        axis=-1,
    )
    return g @ ctx.C_inverse.T


def inverse_H(ctx: TransformContext, u) -> np.ndarray:
    """x with x_i = g_i^{-1}([C u]_i); raises on out-of-range arguments."""
    u = np.asarray(u, dtype=float)
    w = u @ ctx.C.entries.T
    bad = w <= ctx.g_lower
    if np.any(bad):
        idx = int(np.argwhere(bad)[0][-1])
        raise TransformRangeError(
            f"[C u] component {idx} = {float(np.min(w[..., idx])):.6g} is outside "
            f"the image of g (infimum {ctx.g_lower[idx]:.6g})"
        )
    return np.stack(
        [np.asarray(ctx.spec.antideriv_g_inv(i, w[..., i], ctx.theta), dtype=float)
         for i in range(ctx.dim)],
        axis=-1,
    )


def drift_U(ctx: TransformContext, u) -> np.ndarray:
    """Drift of the unit-volatility diffusion U = H(X).

    With h_r(x) = sum_i [C^{-1}]_{ri} g_i(x_i), Ito's lemma gives

        mu_U = C^{-1} psi(x),
        psi_i = mu_i(x) / f_i(x_i) - 0.5 * V_ii * f_i'(x_i),

    using A_ii = f_i(x_i)^2 V_ii and d^2 g/dx^2 = -f'/f^2.  The half
    factor is the standard Ito correction; it is validated empirically by
    the unit-volatility quadratic-covariation property tests.
    """
    x = inverse_H(ctx, u)
    mu = np.asarray(ctx.spec.drift(x, ctx.theta), dtype=float)
    f = ctx.spec.f_diag(x, ctx.theta)
    df = np.stack(
        [np.asarray(ctx.spec.factor_df(i, x[..., i], ctx.theta), dtype=float)
         for i in range(ctx.dim)],
        axis=-1,
    )
    psi = mu / f - 0.5 * ctx.v_diag() * df
    return psi @ ctx.C_inverse.T


def jacobian_logdet(ctx: TransformContext, y) -> float:
    """log |det grad H(y)| = -log det C - sum_i log f_i(y_i)."""
    y = ctx.spec.check_domain(as_state_array(y))
    f = ctx.spec.f_diag(y, ctx.theta)
    out = -ctx.C.log_det() - np.sum(np.log(f), axis=-1)
    if not np.all(np.isfinite(out)):
        raise DomainError("Jacobian log-determinant is not finite")
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class BridgeFrame:
    """One inter-observation interval in transformed coordinates."""

    index: int
    t_start: float
    t_end: float
    u_start: np.ndarray
    u_end: np.ndarray

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("interval endpoints must satisfy t_start < t_end")
        u0 = np.asarray(self.u_start, dtype=float)
        u1 = np.asarray(self.u_end, dtype=float)
        if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(u1))):
            raise ValueError("transformed endpoints must be finite")
        object.__setattr__(self, "u_start", u0)
        object.__setattr__(self, "u_end", u1)

    def lattice_times(self, n_points: int) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, n_points)

    def interpolant(self, times: np.ndarray) -> np.ndarray:
        """Linear interpolation of the endpoints at the given times."""
        w = (times - self.t_start) / (self.t_end - self.t_start)
        return self.u_start + np.outer(w, self.u_end - self.u_start)


def center_bridge(frame: BridgeFrame, u_path: np.ndarray,
                  times: np.ndarray = None) -> np.ndarray:
    """Subtract the endpoint interpolant; the result is exactly 0 at both ends."""
    u_path = np.asarray(u_path, dtype=float)
    if times is None:
        times = frame.lattice_times(u_path.shape[0])
    if not (np.allclose(u_path[0], frame.u_start) and np.allclose(u_path[-1], frame.u_end)):
        raise ValueError("path endpoints do not match the bridge frame")
    z = u_path - frame.interpolant(times)
    # endpoint zeros must be exact, not round-off residue
    z[0] = 0.0
    z[-1] = 0.0
    return z


def uncenter_bridge(frame: BridgeFrame, z_path: np.ndarray,
                    times: np.ndarray = None) -> np.ndarray:
    """Exact inverse of :func:`center_bridge`."""
    z_path = np.asarray(z_path, dtype=float)
    if times is None:
        times = frame.lattice_times(z_path.shape[0])
    return z_path + frame.interpolant(times)
