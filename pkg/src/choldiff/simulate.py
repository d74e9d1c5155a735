"""Euler-Maruyama forward simulation."""
from __future__ import annotations

import numpy as np

from .cholesky import CholeskyFactor
from .models import DiffusionSpec, PathLattice, as_state_array


class SimulationDomainError(RuntimeError):
    """A simulated step left the model domain and redraws were exhausted."""


def simulate_euler(spec: DiffusionSpec, C: CholeskyFactor, theta, x0,
                   t_end: float, delta: float, seed=None, rng=None,
                   gaussian_source=None, max_redraws: int = 100) -> PathLattice:
    """Simulate the SDE on a regular lattice of step ``delta``.

    Iterates ``x += delta * M(x) + sqrt(delta) * Sigma(x) xi`` with
    standard normal ``xi``; deterministic for a fixed seed.

    Domain exits (e.g. a CIR component at or below zero) are handled by
    redrawing the Gaussian increment, up to ``max_redraws`` times, after
    which :class:`SimulationDomainError` is raised with the failing step.

    ``gaussian_source(rng, size)`` may be injected to replace the normal
    draws in tests.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    theta = spec.param_layout.validate(theta)
    x0 = spec.check_domain(as_state_array(x0))
    if rng is None:
        rng = np.random.default_rng(seed)
    if gaussian_source is None:
        gaussian_source = lambda r, size: r.standard_normal(size)

    n_steps = int(round(t_end / delta))
    if n_steps < 1:
        raise ValueError("t_end must allow at least one step")
    d = spec.dim
    states = np.empty((n_steps + 1, d))
    states[0] = x0
    sqrt_delta = np.sqrt(delta)
    lower = spec.domain_lower
    bounded = np.isfinite(lower)
    Ct = C.entries.T

    x = x0.copy()
    for i in range(1, n_steps + 1):
        mean = x + delta * spec.drift(x, theta)
        scale = sqrt_delta * spec.f_diag(x, theta)
        for attempt in range(max_redraws + 1):
            xi = gaussian_source(rng, d)
            x_new = mean + scale * (xi @ Ct)
            if not np.any(x_new[bounded] <= lower[bounded]):
                break
        else:
            raise SimulationDomainError(
                f"state left the domain at step {i} (t = {i * delta:.6g}) "
                f"after {max_redraws} redraws; seed = {seed!r}"
            )
        x = x_new
        states[i] = x

    times = np.arange(n_steps + 1) * delta
    return PathLattice(times, states, np.array([0, n_steps]))
