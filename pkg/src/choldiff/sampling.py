"""Data-augmentation MCMC sampler.

One sweep updates, in order: the latent bridges (interval-batched
independence sampler, per dimension), the free Cholesky entries
(componentwise random walk, log scale on the diagonal), and the drift
parameters (random walk, log scale where positive).  Bridge updates for
disjoint intervals are conditionally independent given the parameters
and are therefore batched into vectorised accept/reject steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cholesky import CholeskyFactor, PositiveDefiniteError, SparsityMask, chol_to_corr
from .diagnostics import Diagnostics, compute_diagnostics
from .likelihood import (
    AugmentedPath,
    endpoint_gaussian_terms,
    girsanov_intervals,
    heston_price_terms,
    uncenter_lattice,
)
from .models import (
    DiffusionSpec,
    ObservationSet,
    build_bivariate_heston,
    heston_vol_block,
)
from .transform import TransformContext, jacobian_logdet, transform_H


class InitializationError(RuntimeError):
    """Chain could not be initialised at a finite log-likelihood."""


@dataclass(frozen=True)
class PriorSpec:
    """Per-parameter prior tags: 'reciprocal' (density 1/theta on positives) or 'flat'."""

    tags: dict

    def __post_init__(self):
        for name, tag in self.tags.items():
            if tag not in ("reciprocal", "flat"):
                raise ValueError(f"unknown prior tag {tag!r} for parameter {name!r}")

    def tag(self, name: str) -> str:
        return self.tags.get(name, "flat")

    def log_density(self, name: str, value: float) -> float:
        if self.tag(name) == "reciprocal":
            if value <= 0.0:
                return -np.inf
            return -np.log(value)
        return 0.0


def default_priors(spec: DiffusionSpec, mask: SparsityMask) -> PriorSpec:
    """Reciprocal priors on positive drift parameters and C diagonals, flat otherwise."""
    tags = {}
    for name, pos in zip(spec.param_layout.names, spec.param_layout.positive):
        tags[name] = "reciprocal" if pos else "flat"
    for i, j in mask.free_entries():
        tags[c_entry_name(i, j)] = "reciprocal" if i == j else "flat"
    return PriorSpec(tags)


def c_entry_name(i: int, j: int) -> str:
    return f"C{i + 1}{j + 1}"


@dataclass
class ProposalConfig:
    """Proposal settings for all update types."""

    scales: dict = field(default_factory=dict)
    default_scale: float = 0.1
    bridge_method: str = "A"  # 'A' (Brownian bridge) or 'B' (drifted bridge)
    method_b_drift: str = "linear"  # 'zero' or 'linear'
    block_size: int = None  # sub-bridge block size; None updates whole bridges
    adapt: bool = True
    adapt_target: float = 0.25
    adapt_rate: float = 1.0

    def __post_init__(self):
        if self.bridge_method not in ("A", "B"):
            raise ValueError("bridge_method must be 'A' or 'B'")
        if self.method_b_drift not in ("zero", "linear"):
            raise ValueError("method_b_drift must be 'zero' or 'linear'")
        if self.block_size is not None and self.block_size < 2:
            raise ValueError("block size must be at least 2")

    def scale(self, name: str) -> float:
        return self.scales.get(name, self.default_scale)


def brownian_bridges(rng, n: int, p: int, dt: np.ndarray) -> np.ndarray:
    """n standard Brownian bridges on p-point lattices with step dt per row.

    Returns (n, p) arrays that are exactly zero in the first and last
    columns.
    """
    steps = np.sqrt(dt)[:, None] * rng.standard_normal((n, p - 1))
    w = np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
    frac = np.linspace(0.0, 1.0, p)[None, :]
    b = w - frac * w[:, -1][:, None]
    b[:, 0] = 0.0
    b[:, -1] = 0.0
    return b


class _AcceptCounter:
    def __init__(self):
        self.accepted = 0
        self.attempted = 0
        self.domain_rejected = 0

    def rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else 0.0


class ReducibleSampler:
    """Sampler for fully observed diffusions in the reducible class.

    Holds the chain state: drift parameters ``theta``, Cholesky factor
    ``C``, centered bridges ``z`` (n_intervals, m + 2, d), and cached
    per-interval likelihood terms.  The cache is refreshed and verified
    against a fresh evaluation every ``check_interval`` sweeps.
    """

    def __init__(self, spec: DiffusionSpec, obs: ObservationSet, m: int,
                 theta0, C0: CholeskyFactor, priors: PriorSpec = None,
                 proposals: ProposalConfig = None, mask: SparsityMask = None,
                 fix_C: bool = False, seed=None, check_interval: int = 1000):
        if obs.d_obs != spec.dim:
            raise ValueError("observation dimension does not match the model")
        self.spec = spec
        self.obs = obs
        self.m = int(m)
        self.mask = mask if mask is not None else SparsityMask.dense(spec.dim)
        self.priors = priors if priors is not None else default_priors(spec, self.mask)
        self.proposals = proposals if proposals is not None else ProposalConfig()
        self.fix_C = fix_C
        self.rng = np.random.default_rng(seed)
        self.check_interval = check_interval

        self.n = obs.n_intervals
        self.p = self.m + 2
        self.d = spec.dim
        self.obs_dt = np.diff(obs.times)
        self.dts = self.obs_dt / (self.m + 1)

        self.theta = spec.param_layout.validate(theta0)
        self.C = C0
        self.z = np.zeros((self.n, self.p, self.d))
        self.iteration = 0
        self._log_scales = {}
        self.counters = {}

        self._refresh_cache()
        if not np.all(np.isfinite(self.girs)):
            raise InitializationError(
                "initial log-likelihood is not finite; check that the initial "
                "parameters are in range and the data lie in the model domain"
            )

    # -- cached state ------------------------------------------------------

    def _context(self, theta=None, C=None) -> TransformContext:
        return TransformContext(
            self.spec,
            self.C if C is None else C,
            self.theta if theta is None else theta,
        )

    def _terms(self, theta, C):
        """Per-interval likelihood terms for the current bridges under (theta, C)."""
        ctx = self._context(theta, C)
        yh = transform_H(ctx, self.obs.values)
        U = uncenter_lattice(self.z, yh)
        girs, ok = girsanov_intervals(ctx, U, self.dts)
        endpoint = endpoint_gaussian_terms(yh, self.obs_dt)
        jac = np.asarray(jacobian_logdet(ctx, self.obs.values[1:]), dtype=float)
        return ctx, yh, U, girs, endpoint, jac, bool(np.all(ok))

    def _refresh_cache(self):
        (self.ctx, self.yh, self.U, self.girs,
         self.endpoint, self.jac, _) = self._terms(self.theta, self.C)

    def total_loglik(self) -> float:
        return float(np.sum(self.girs + self.endpoint + self.jac))

    def verify_cache(self, tol: float = 1e-9):
        """Assert the incrementally updated cache matches a fresh evaluation."""
        _, _, _, girs, endpoint, jac, ok = self._terms(self.theta, self.C)
        if not ok:
            raise RuntimeError("cached state is outside the model domain")
        fresh = float(np.sum(girs + endpoint + jac))
        cached = self.total_loglik()
        if abs(fresh - cached) > tol * max(1.0, abs(fresh)):
            raise RuntimeError(
                f"likelihood cache drifted: cached {cached!r}, fresh {fresh!r}"
            )

    def log_prior(self, theta=None, C=None) -> float:
        theta = self.theta if theta is None else theta
        C = self.C if C is None else C
        total = 0.0
        for name, value in zip(self.spec.param_layout.names, theta):
            total += self.priors.log_density(name, value)
        if not self.fix_C:
            for i, j in self.mask.free_entries():
                total += self.priors.log_density(c_entry_name(i, j), C.entries[i, j])
        return total

    def augmented_path(self) -> AugmentedPath:
        return AugmentedPath(self.obs.times, self.z.copy())

    # -- bridge updates ----------------------------------------------------

    def _counter(self, name: str) -> _AcceptCounter:
        if name not in self.counters:
            self.counters[name] = _AcceptCounter()
        return self.counters[name]

    def _method_b_drift_endpoints(self, i: int):
        """Per-interval endpoint drifts (a_k, b_k) of the proposal law for dim i."""
        if self.proposals.method_b_drift == "zero":
            zeros = np.zeros(self.n)
            return zeros, zeros
        from .transform import drift_U

        mu_start = drift_U(self.ctx, self.U[:, 0, :])
        mu_end = drift_U(self.ctx, self.U[:, -1, :])
        return mu_start[:, i], mu_end[:, i]

    @staticmethod
    def _linear_drift_hump(a, b, frac, span):
        """Deterministic shift of a bridge under linearly interpolated drift.

        For drift l(s) = a + (b - a) s / T conditioned to hit both
        endpoints, the mean correction is -(b - a) s (T - s) / (2 T).
        """
        s = frac * span[:, None]
        return -(b - a)[:, None] * s * (span[:, None] - s) / (2.0 * span[:, None])

    @staticmethod
    def _girsanov_linear_drift(a, b, u_dim, frac, span, dts):
        """G log-term of dimension-i paths under deterministic linear drift."""
        ell = (1.0 - frac) * a[:, None] + frac * b[:, None]  # (n, p)
        du = np.diff(u_dim, axis=1)
        stoch = np.sum(ell[:, :-1] * du, axis=1)
        time_int = 0.5 * np.sum(np.square(ell[:, :-1]), axis=1) * dts
        return stoch - time_int

    def update_bridge_a(self, i: int, intervals=None):
        """Method A: Brownian-bridge independence sampler for dimension i."""
        self._update_bridges(i, method="A", intervals=intervals)

    def update_bridge_b(self, i: int, intervals=None):
        """Method B: drifted-bridge proposal with the four-term acceptance ratio."""
        self._update_bridges(i, method="B", intervals=intervals)

    def _update_bridges(self, i: int, method: str, intervals=None):
        if self.proposals.block_size is not None:
            if method == "B":
                raise ValueError("sub-bridge blocking is only supported with method A")
            self._update_bridge_blocks(i, intervals)
            return
        sel = np.arange(self.n) if intervals is None else np.asarray(intervals, dtype=int)
        n_sel = sel.size
        counter = self._counter(f"bridge_dim{i + 1}")
        pooled = self._counter("bridge")

        proposal = brownian_bridges(self.rng, n_sel, self.p, self.dts[sel])
        frac = np.linspace(0.0, 1.0, self.p)[None, :]
        if method == "B":
            a, b = self._method_b_drift_endpoints(i)
            a, b = a[sel], b[sel]
            proposal = proposal + self._linear_drift_hump(a, b, frac, self.obs_dt[sel])
            proposal[:, 0] = 0.0
            proposal[:, -1] = 0.0

        U_prop = self.U[sel].copy()
        U_prop[:, :, i] += proposal - self.z[sel, :, i]
        girs_prop, ok = girsanov_intervals(self.ctx, U_prop, self.dts[sel])

        log_ratio = girs_prop - self.girs[sel]
        if method == "B":
            log_ratio = log_ratio + self._girsanov_linear_drift(
                a, b, self.U[sel, :, i], frac, self.obs_dt[sel], self.dts[sel]
            ) - self._girsanov_linear_drift(
                a, b, U_prop[:, :, i], frac, self.obs_dt[sel], self.dts[sel]
            )

        log_u = np.log(self.rng.uniform(size=n_sel))
        accept = ok & (log_u < log_ratio)

        self.z[sel[accept], :, i] = proposal[accept]
        self.U[sel[accept], :, i] = U_prop[accept, :, i]
        self.girs[sel[accept]] = girs_prop[accept]
        for c in (counter, pooled):
            c.attempted += n_sel
            c.accepted += int(np.sum(accept))
            c.domain_rejected += int(np.sum(~ok))

    def _update_bridge_blocks(self, i: int, intervals=None):
        """Method A on fixed non-overlapping sub-bridge blocks."""
        sel = np.arange(self.n) if intervals is None else np.asarray(intervals, dtype=int)
        n_sel = sel.size
        counter = self._counter(f"bridge_dim{i + 1}")
        pooled = self._counter("bridge")
        size = self.proposals.block_size
        frac_full = np.linspace(0.0, 1.0, self.p)
        start = 0
        while start < self.p - 1:
            end = min(start + size, self.p - 1)
            width = end - start
            if width < 2 and start > 0:
                break
            # bridge pinned at the current values of columns start and end
            inner = brownian_bridges(self.rng, n_sel, width + 1, self.dts[sel])
            z_prop = self.z[sel, :, i].copy()
            w = np.linspace(0.0, 1.0, width + 1)[None, :]
            anchor = (1.0 - w) * z_prop[:, start][:, None] + w * z_prop[:, end][:, None]
            z_prop[:, start:end + 1] = anchor + inner
            U_prop = self.U[sel].copy()
            U_prop[:, :, i] += z_prop - self.z[sel, :, i]
            girs_prop, ok = girsanov_intervals(self.ctx, U_prop, self.dts[sel])
            log_u = np.log(self.rng.uniform(size=n_sel))
            accept = ok & (log_u < girs_prop - self.girs[sel])
            self.z[sel[accept], :, i] = z_prop[accept]
            self.U[sel[accept], :, i] = U_prop[accept, :, i]
            self.girs[sel[accept]] = girs_prop[accept]
            for c in (counter, pooled):
                c.attempted += n_sel
                c.accepted += int(np.sum(accept))
                c.domain_rejected += int(np.sum(~ok))
            start = end

    # -- parameter updates -------------------------------------------------

    def _adapt(self, name: str, accept_prob: float):
        if not self.proposals.adapt:
            return
        gamma = self.proposals.adapt_rate / (1.0 + self.iteration) ** 0.6
        cur = self._log_scales.setdefault(name, np.log(self.proposals.scale(name)))
        self._log_scales[name] = cur + gamma * (accept_prob - self.proposals.adapt_target)

    def _current_scale(self, name: str) -> float:
        if name in self._log_scales:
            return float(np.exp(self._log_scales[name]))
        return self.proposals.scale(name)

    def freeze_adaptation(self):
        self.proposals.adapt = False

    def _metropolis_param(self, name: str, theta_prop, C_prop, log_jac: float) -> bool:
        counter = self._counter(name)
        counter.attempted += 1
        try:
            _, yh, U, girs, endpoint, jac, ok = self._terms(theta_prop, C_prop)
        except (ValueError, FloatingPointError):
            ok = False
        if not ok:
            counter.domain_rejected += 1
            self._adapt(name, 0.0)
            return False
        delta = (float(np.sum(girs + endpoint + jac)) - self.total_loglik()
                 + self.log_prior(theta_prop, C_prop) - self.log_prior()
                 + log_jac)
        accept_prob = float(min(1.0, np.exp(min(delta, 0.0)) if delta < 0 else 1.0))
        if np.log(self.rng.uniform()) < delta:
            self.theta = theta_prop
            self.C = C_prop
            self.yh, self.U = yh, U
            self.girs, self.endpoint, self.jac = girs, endpoint, jac
            self.ctx = self._context()
            counter.accepted += 1
            self._adapt(name, accept_prob)
            return True
        self._adapt(name, accept_prob)
        return False

    def update_chol_entry(self, i: int, j: int) -> bool:
        """Random-walk Metropolis on C[i, j]; log scale on the diagonal."""
        if not self.mask.is_free(i, j):
            raise ValueError(f"C entry ({i}, {j}) is fixed by the sparsity mask")
        name = c_entry_name(i, j)
        scale = self._current_scale(name)
        step = scale * self.rng.standard_normal()
        cur = self.C.entries[i, j]
        entries = self.C.entries.copy()
        if i == j:
            entries[i, j] = cur * np.exp(step)
            log_jac = np.log(entries[i, j]) - np.log(cur)
        else:
            entries[i, j] = cur + step
            log_jac = 0.0
        return self._metropolis_param(name, self.theta, CholeskyFactor(entries), log_jac)

    def update_drift_param(self, k: int) -> bool:
        """Random-walk Metropolis on drift parameter k; log scale if positive."""
        name = self.spec.param_layout.names[k]
        scale = self._current_scale(name)
        step = scale * self.rng.standard_normal()
        theta_prop = self.theta.copy()
        if self.spec.param_layout.positive[k]:
            theta_prop[k] = self.theta[k] * np.exp(step)
            log_jac = np.log(theta_prop[k]) - np.log(self.theta[k])
        else:
            theta_prop[k] = self.theta[k] + step
            log_jac = 0.0
        return self._metropolis_param(name, theta_prop, self.C, log_jac)

    def update_drift_params(self):
        for k in range(self.spec.param_layout.count):
            self.update_drift_param(k)

    # -- chain driver ------------------------------------------------------

    def sweep(self):
        """One full sweep: bridges, then C entries, then drift parameters."""
        method = self.proposals.bridge_method
        for i in range(self.d):
            if method == "A":
                self.update_bridge_a(i)
            else:
                self.update_bridge_b(i)
        if not self.fix_C:
            for i, j in self.mask.free_entries():
                self.update_chol_entry(i, j)
        self.update_drift_params()
        self.iteration += 1
        if self.check_interval and self.iteration % self.check_interval == 0:
            self.verify_cache()

    def parameter_names(self) -> list[str]:
        names = list(self.spec.param_layout.names)
        if not self.fix_C:
            names += [c_entry_name(i, j) for i, j in self.mask.free_entries()]
        return names

    def current_record(self) -> dict:
        """Sampled values plus the derived (sigma, rho) image of C."""
        rec = {"iteration": self.iteration, "loglik": self.total_loglik()}
        for name, value in zip(self.spec.param_layout.names, self.theta):
            rec[name] = float(value)
        corr = chol_to_corr(self.C)
        for i, j in self.mask.free_entries():
            rec[c_entry_name(i, j)] = float(self.C.entries[i, j])
        for i in range(self.d):
            rec[f"sigma{i + 1}"] = float(corr.scales[i])
        for i in range(self.d):
            for j in range(i):
                rec[f"rho{i + 1}{j + 1}"] = float(corr.correlations[i, j])
        return rec


# ---------------------------------------------------------------------------
# stochastic volatility sampler


def heston_sparsity_mask() -> SparsityMask:
    """4-dim price/volatility pattern: rows 3-4 load only on the volatility shocks.

    Free entries are C11, C21, C22 and C43; C31, C32, C41, C42 are
    structural zeros and the diagonals C33, C44 are redundant (determined
    by the volatility means and C43 through the row-norm constraints).
    """
    zero = np.zeros((4, 4), dtype=bool)
    zero[2, 0] = zero[2, 1] = True
    zero[3, 0] = zero[3, 1] = True
    redundant = np.array([False, False, True, True])
    return SparsityMask(zero, redundant)


def heston_build_C(c11: float, c21: float, c22: float, c43: float,
                   mu1: float, mu2: float) -> CholeskyFactor:
    """Assemble the masked 4-dim factor with constrained diagonals.

    Row norms of the price rows equal sqrt(mu_v) so that the price
    dispersion is sqrt(v); with the structural zeros this forces
    C33 = sqrt(mu1) and C44 = sqrt(mu2 - C43^2).
    """
    if mu2 <= c43 * c43:
        raise PositiveDefiniteError("row-norm constraint needs mu2 > C43^2")
    entries = np.zeros((4, 4))
    entries[0, 0] = c11
    entries[1, 0] = c21
    entries[1, 1] = c22
    entries[2, 2] = np.sqrt(mu1)
    entries[3, 2] = c43
    entries[3, 3] = np.sqrt(mu2 - c43 * c43)
    return CholeskyFactor(entries)


class SVSampler:
    """Sampler for the bivariate stochastic volatility model.

    ``regime`` is ``"exact-vol"`` (volatilities observed with the prices)
    or ``"latent-vol"`` (only log-prices observed; the transformed
    volatility knots at observation times are latent and updated by
    batched odd/even random walks).  Free parameters: the six drift
    parameters and the free Cholesky entries C11, C21, C22, C43; the
    diagonals C33, C44 track the volatility means via the row-norm
    constraint.
    """

    FREE_C = ((0, 0), (1, 0), (1, 1), (3, 2))

    def __init__(self, obs: ObservationSet, m: int, theta0, c_free,
                 regime: str = "exact-vol", priors: PriorSpec = None,
                 proposals: ProposalConfig = None, seed=None,
                 check_interval: int = 500):
        if regime not in ("exact-vol", "latent-vol"):
            raise ValueError(f"unknown stochastic volatility regime {regime!r}")
        expected = 4 if regime == "exact-vol" else 2
        if obs.d_obs != expected:
            raise ValueError(
                f"{regime} regime needs {expected} observed components, got {obs.d_obs}"
            )
        self.spec = build_bivariate_heston()
        self.obs = obs
        self.regime = regime
        self.m = int(m)
        self.mask = heston_sparsity_mask()
        self.proposals = proposals if proposals is not None else ProposalConfig()
        self.rng = np.random.default_rng(seed)
        self.check_interval = check_interval

        self.n = obs.n_intervals
        self.p = self.m + 2
        self.obs_dt = np.diff(obs.times)
        self.dts = self.obs_dt / (self.m + 1)

        self.theta = self.spec.param_layout.validate(theta0)
        c_free = np.asarray(c_free, dtype=float)
        if c_free.shape != (4,):
            raise ValueError("c_free must hold (C11, C21, C22, C43)")
        self.c_free = c_free
        self.C = heston_build_C(*c_free, self.theta[2], self.theta[3])
        if priors is None:
            tags = {}
            for name, pos in zip(self.spec.param_layout.names,
                                 self.spec.param_layout.positive):
                tags[name] = "reciprocal" if pos else "flat"
            tags.update({"C11": "reciprocal", "C21": "flat", "C22": "reciprocal",
                         "C43": "flat"})
            priors = PriorSpec(tags)
        self.priors = priors

        self.z = np.zeros((self.n, self.p, 2))
        if regime == "latent-vol":
            # volatility paths initialised at the constant mu_v level
            mu_v = self.theta[2:4]
            D = self.C.entries[:2, :2]
            u0 = np.linalg.solve(D, 2.0 * np.sqrt(mu_v))
            self.knots = np.tile(u0, (self.n + 1, 1))
        else:
            self.knots = None
        self.iteration = 0
        self._log_scales = {}
        self.counters = {}

        self._refresh_cache()
        if not np.all(np.isfinite(self.per_interval)):
            raise InitializationError(
                "initial log-likelihood is not finite; check that the initial "
                "parameters are in range and the data lie in the model domain"
            )

    # -- likelihood --------------------------------------------------------

    def _interval_terms(self, theta, C, z, knots):
        """Per-interval totals (-inf on invalid intervals) and split caches."""
        vol_spec, vol_theta = heston_vol_block(theta)
        D = CholeskyFactor(C.entries[:2, :2])
        ctx = TransformContext(vol_spec, D, vol_theta)
        if self.regime == "exact-vol":
            vol_obs = self.obs.values[:, :2]
            price_obs = self.obs.values[:, 2:]
            yh = transform_H(ctx, vol_obs)
            jac = np.asarray(jacobian_logdet(ctx, vol_obs[1:]), dtype=float)
        else:
            price_obs = self.obs.values
            yh = knots
            jac = np.zeros(self.n)
        endpoint = endpoint_gaussian_terms(yh, self.obs_dt)
        U = uncenter_lattice(z, yh)
        girs, ok = girsanov_intervals(ctx, U, self.dts)
        price = np.full(self.n, -np.inf)
        if np.all(ok):
            vol = np.square(U @ D.entries.T / 2.0)
            price = heston_price_terms(theta, C, price_obs, vol, self.dts)
        elif np.any(ok):
            vol = np.square(U[ok] @ D.entries.T / 2.0)
            price[ok] = self._price_subset(theta, C, price_obs, vol, ok)
        total = np.where(ok, girs + endpoint + jac + price, -np.inf)
        return total, ok, (ctx, yh, U, girs, endpoint, jac, price)

    def _price_subset(self, theta, C, price_obs, vol, ok):
        """Price terms for the valid-interval subset only.

        The price term of interval k depends on its own lattice and price
        endpoints, so each valid interval is evaluated as a one-interval
        series.
        """
        pairs = np.stack([price_obs[:-1][ok], price_obs[1:][ok]], axis=1)
        dts = self.dts[ok]
        out = np.empty(pairs.shape[0])
        for r in range(pairs.shape[0]):
            out[r] = heston_price_terms(
                theta, C, pairs[r], vol[r][None, :, :], dts[r:r + 1]
            )[0]
        return out

    def _refresh_cache(self):
        (self.per_interval, self.ok,
         (self.ctx, self.yh, self.U, self.girs, self.endpoint,
          self.jac, self.price)) = self._interval_terms(
            self.theta, self.C, self.z, self.knots)

    def total_loglik(self) -> float:
        return float(np.sum(self.per_interval))

    def verify_cache(self, tol: float = 1e-9):
        total, ok, _ = self._interval_terms(self.theta, self.C, self.z, self.knots)
        if not np.all(ok):
            raise RuntimeError("cached state is outside the model domain")
        fresh = float(np.sum(total))
        cached = self.total_loglik()
        if abs(fresh - cached) > tol * max(1.0, abs(fresh)):
            raise RuntimeError(
                f"likelihood cache drifted: cached {cached!r}, fresh {fresh!r}"
            )

    def log_prior(self, theta=None, c_free=None) -> float:
        theta = self.theta if theta is None else theta
        c_free = self.c_free if c_free is None else c_free
        total = 0.0
        for name, value in zip(self.spec.param_layout.names, theta):
            total += self.priors.log_density(name, value)
        for (i, j), value in zip(self.FREE_C, c_free):
            total += self.priors.log_density(c_entry_name(i, j), value)
        return total

    # -- updates -----------------------------------------------------------

    def _counter(self, name: str) -> _AcceptCounter:
        if name not in self.counters:
            self.counters[name] = _AcceptCounter()
        return self.counters[name]

    def update_bridge(self, i: int):
        """Method A Brownian-bridge update of volatility dimension i, all intervals."""
        counter = self._counter(f"bridge_dim{i + 1}")
        pooled = self._counter("bridge")
        proposal = brownian_bridges(self.rng, self.n, self.p, self.dts)
        z_prop = self.z.copy()
        z_prop[:, :, i] = proposal
        total, ok, aux = self._interval_terms(self.theta, self.C, z_prop, self.knots)
        log_u = np.log(self.rng.uniform(size=self.n))
        accept = ok & (log_u < total - self.per_interval)
        self.z[accept, :, i] = proposal[accept]
        self._absorb(accept, total, aux)
        for c in (counter, pooled):
            c.attempted += self.n
            c.accepted += int(np.sum(accept))
            c.domain_rejected += int(np.sum(~ok))

    def _absorb(self, accept, total, aux):
        _, _, U, girs, _, _, price = aux
        self.per_interval[accept] = total[accept]
        self.U[accept] = U[accept]
        self.girs[accept] = girs[accept]
        self.price[accept] = price[accept]

    def update_knots(self, parity: int):
        """Random-walk update of the latent volatility knots with index ≡ parity (mod 2).

        Knots of equal parity touch disjoint interval pairs, so they are
        proposed and accepted jointly in one batched evaluation.
        """
        if self.regime != "latent-vol":
            raise ValueError("knot updates only apply to the latent-vol regime")
        counter = self._counter("knot")
        idx = np.arange(parity, self.n + 1, 2)
        scale = self._current_scale("knot")
        knots_prop = self.knots.copy()
        knots_prop[idx] += scale * self.rng.standard_normal((idx.size, 2))
        total, ok, aux = self._interval_terms(self.theta, self.C, self.z, knots_prop)
        log_u = np.log(self.rng.uniform(size=idx.size))
        accepted = 0
        accept_intervals = np.zeros(self.n, dtype=bool)
        accept_prob_sum = 0.0
        for r, k in enumerate(idx):
            touches = [j for j in (k - 1, k) if 0 <= j < self.n]
            delta = float(np.sum(total[touches]) - np.sum(self.per_interval[touches]))
            prob = 1.0 if delta >= 0 else float(np.exp(max(delta, -700.0)))
            accept_prob_sum += prob
            if np.all(ok[touches]) and log_u[r] < delta:
                self.knots[k] = knots_prop[k]
                accept_intervals[touches] = True
                accepted += 1
            counter.attempted += 1
            if not np.all(ok[touches]):
                counter.domain_rejected += 1
        counter.accepted += accepted
        if np.any(accept_intervals):
            # recompute touched intervals from the updated knots
            total2, ok2, aux2 = self._interval_terms(
                self.theta, self.C, self.z, self.knots)
            if not np.all(ok2[accept_intervals]):
                raise RuntimeError("accepted knot move left the domain")
            self.per_interval[accept_intervals] = total2[accept_intervals]
            _, yh2, U2, girs2, endpoint2, _, price2 = aux2
            self.yh = yh2
            self.U[accept_intervals] = U2[accept_intervals]
            self.girs[accept_intervals] = girs2[accept_intervals]
            self.endpoint = endpoint2
            self.price[accept_intervals] = price2[accept_intervals]
        self._adapt("knot", accept_prob_sum / max(idx.size, 1))

    def _adapt(self, name: str, accept_prob: float):
        if not self.proposals.adapt:
            return
        gamma = self.proposals.adapt_rate / (1.0 + self.iteration) ** 0.6
        cur = self._log_scales.setdefault(name, np.log(self.proposals.scale(name)))
        self._log_scales[name] = cur + gamma * (accept_prob - self.proposals.adapt_target)

    def _current_scale(self, name: str) -> float:
        if name in self._log_scales:
            return float(np.exp(self._log_scales[name]))
        return self.proposals.scale(name)

    def freeze_adaptation(self):
        self.proposals.adapt = False

    def _metropolis(self, name, theta_prop, c_free_prop, log_jac) -> bool:
        counter = self._counter(name)
        counter.attempted += 1
        try:
            C_prop = heston_build_C(*c_free_prop, theta_prop[2], theta_prop[3])
            total, ok, aux = self._interval_terms(
                theta_prop, C_prop, self.z, self.knots)
        except (PositiveDefiniteError, ValueError, FloatingPointError):
            counter.domain_rejected += 1
            self._adapt(name, 0.0)
            return False
        if not np.all(ok):
            counter.domain_rejected += 1
            self._adapt(name, 0.0)
            return False
        delta = (float(np.sum(total)) - self.total_loglik()
                 + self.log_prior(theta_prop, c_free_prop) - self.log_prior()
                 + log_jac)
        accept_prob = 1.0 if delta >= 0 else float(np.exp(max(delta, -700.0)))
        if np.log(self.rng.uniform()) < delta:
            self.theta = theta_prop
            self.c_free = np.asarray(c_free_prop, dtype=float)
            self.C = C_prop
            (self.per_interval, self.ok,
             (self.ctx, self.yh, self.U, self.girs, self.endpoint,
              self.jac, self.price)) = (total, ok, aux)
            counter.accepted += 1
            self._adapt(name, accept_prob)
            return True
        self._adapt(name, accept_prob)
        return False

    def update_chol_entry(self, slot: int) -> bool:
        """Update free Cholesky entry ``slot`` (order C11, C21, C22, C43)."""
        i, j = self.FREE_C[slot]
        name = c_entry_name(i, j)
        scale = self._current_scale(name)
        step = scale * self.rng.standard_normal()
        c_free_prop = self.c_free.copy()
        if i == j:
            c_free_prop[slot] = self.c_free[slot] * np.exp(step)
            log_jac = np.log(c_free_prop[slot]) - np.log(self.c_free[slot])
        else:
            c_free_prop[slot] = self.c_free[slot] + step
            log_jac = 0.0
        return self._metropolis(name, self.theta, c_free_prop, log_jac)

    def update_drift_param(self, k: int) -> bool:
        name = self.spec.param_layout.names[k]
        scale = self._current_scale(name)
        step = scale * self.rng.standard_normal()
        theta_prop = self.theta.copy()
        if self.spec.param_layout.positive[k]:
            theta_prop[k] = self.theta[k] * np.exp(step)
            log_jac = np.log(theta_prop[k]) - np.log(self.theta[k])
        else:
            theta_prop[k] = self.theta[k] + step
            log_jac = 0.0
        return self._metropolis(name, theta_prop, self.c_free, log_jac)

    def sweep(self):
        for i in range(2):
            self.update_bridge(i)
        if self.regime == "latent-vol":
            self.update_knots(self.iteration % 2)
            self.update_knots(1 - self.iteration % 2)
        for slot in range(len(self.FREE_C)):
            self.update_chol_entry(slot)
        for k in range(self.spec.param_layout.count):
            self.update_drift_param(k)
        self.iteration += 1
        if self.check_interval and self.iteration % self.check_interval == 0:
            self.verify_cache()

    def parameter_names(self) -> list[str]:
        return (list(self.spec.param_layout.names)
                + [c_entry_name(i, j) for i, j in self.FREE_C])

    def current_record(self) -> dict:
        rec = {"iteration": self.iteration, "loglik": self.total_loglik()}
        for name, value in zip(self.spec.param_layout.names, self.theta):
            rec[name] = float(value)
        for (i, j), value in zip(self.FREE_C, self.c_free):
            rec[c_entry_name(i, j)] = float(value)
        corr = chol_to_corr(CholeskyFactor(self.C.entries[:2, :2]))
        rec["sigma1"] = float(corr.scales[0])
        rec["sigma2"] = float(corr.scales[1])
        rec["rho21"] = float(corr.correlations[1, 0])
        return rec


def run_sampler(sampler, sweeps: int, warmup: int, thin: int = 1,
                progress=None, on_record=None,
                max_lag: int = 100) -> tuple[list[dict], Diagnostics]:
    """Drive a sampler; returns thinned post-warmup records and diagnostics.

    Adaptation runs during warm-up only and is frozen afterwards to
    preserve the Markov property.  Counters are reset after warm-up so
    reported acceptance rates cover the sampling phase.  ``on_record`` is
    called with each kept record as it is produced (incremental output).
    """
    if not sweeps >= warmup >= 0:
        raise ValueError("need sweeps >= warmup >= 0")
    records = []
    for it in range(sweeps):
        if it == warmup:
            sampler.freeze_adaptation()
            sampler.counters = {}
        sampler.sweep()
        if it >= warmup and (it - warmup) % thin == 0:
            rec = sampler.current_record()
            records.append(rec)
            if on_record is not None:
                on_record(rec)
        if progress is not None:
            progress(it, sweeps)
    names = sampler.parameter_names()
    samples = np.array([[r[name] for name in names] for r in records])
    loglik = np.array([r["loglik"] for r in records])
    if samples.shape[0] >= 2:
        diag = compute_diagnostics(samples, names, max_lag=max_lag,
                                   loglik_trace=loglik)
    else:
        diag = Diagnostics(loglik_trace=loglik)
    diag.acceptance = {
        name: (c.accepted, c.attempted) for name, c in sampler.counters.items()
    }
    diag.acceptance_domain_rejects = {
        name: c.domain_rejected for name, c in sampler.counters.items()
    }
    return records, diag
