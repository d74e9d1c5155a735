"""Batch command-line interface: simulate | fit | acf | summarize.

Exit codes: 0 success, 1 configuration/validation error, 2
runtime/numerical error.  Set ``CHOLDIFF_LOG`` (DEBUG/INFO/WARNING) to
control log verbosity.
"""
from __future__ import annotations

import logging
import os
import sys

import click
import numpy as np

from .cholesky import CholeskyFactor, CorrScaleSpec, corr_to_chol
from .config import ConfigError, RunConfig, load_config, strict_lower_from_flat
from .diagnostics import autocorrelation, summary_stats
from .io_files import (
    DataFormatError,
    SampleWriter,
    load_observations,
    load_samples,
    write_acf_table,
    write_diagnostics,
    write_observations,
)
from .models import MODEL_REGISTRY, NumericalError, ObservationSet
from .sampling import (
    InitializationError,
    ProposalConfig,
    PriorSpec,
    ReducibleSampler,
    SVSampler,
    default_priors,
    run_sampler,
)
from .simulate import SimulationDomainError, simulate_euler

log = logging.getLogger("choldiff")


def _setup_logging():
    level = os.environ.get("CHOLDIFF_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_spec(cfg: RunConfig):
    builder = MODEL_REGISTRY[cfg.model]
    if cfg.model == "bivariate_heston":
        return builder()
    return builder(cfg.dim)


def chol_from_flat(flat, d: int) -> CholeskyFactor:
    """Lower-triangular entries, row-major (C11, C21, C22, ...), to a factor."""
    flat = np.asarray(flat, dtype=float)
    expected = d * (d + 1) // 2
    if flat.shape != (expected,):
        raise ConfigError(
            f"expected {expected} lower-triangular entries for dimension {d}, "
            f"got {flat.shape[0]}"
        )
    entries = np.zeros((d, d))
    pos = 0
    for i in range(d):
        for j in range(i + 1):
            entries[i, j] = flat[pos]
            pos += 1
    return CholeskyFactor(entries)


def _chol_from_config(sigma, rho, c_entries, d: int) -> CholeskyFactor:
    if c_entries is not None:
        return chol_from_flat(c_entries, d)
    if sigma is None or rho is None:
        raise ConfigError("need either (sigma, rho) or c_entries")
    spec = CorrScaleSpec(np.asarray(sigma, dtype=float),
                         strict_lower_from_flat(rho, d))
    return corr_to_chol(spec)


def _default_x0(cfg: RunConfig, theta: np.ndarray) -> np.ndarray:
    if cfg.model == "mv_cir":
        return theta[cfg.dim:2 * cfg.dim].copy()
    if cfg.model == "bivariate_heston":
        return np.concatenate([theta[2:4], [0.0, 0.0]])
    return np.zeros(cfg.dim)


def cmd_simulate(cfg: RunConfig) -> str:
    """Generate synthetic observations; returns the output CSV path."""
    sim = cfg.simulate
    spec = build_spec(cfg)
    if sim.theta is None:
        raise ConfigError("simulate.theta: required")
    theta = spec.param_layout.validate(np.asarray(sim.theta, dtype=float))
    C = _chol_from_config(sim.sigma, sim.rho, sim.c_entries, spec.dim)
    x0 = (np.asarray(sim.x0, dtype=float) if sim.x0 is not None
          else _default_x0(cfg, theta))
    stride = sim.obs_spacing / sim.fine_delta
    if abs(stride - round(stride)) > 1e-9:
        raise ConfigError(
            "simulate.fine_delta: must divide simulate.obs_spacing evenly"
        )
    stride = int(round(stride))
    t_end = sim.n_obs * sim.obs_spacing
    path = simulate_euler(spec, C, theta, x0, t_end, sim.fine_delta, seed=sim.seed)
    obs = ObservationSet(path.times[::stride], path.states[::stride])

    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "observations.csv")
    header = None
    if cfg.model == "bivariate_heston":
        header = ["v1", "v2", "x1", "x2"]
    write_observations(out, obs, include_time=True, header=header)
    if sim.write_fine_path:
        fine = ObservationSet(path.times, path.states)
        write_observations(os.path.join(cfg.output_dir, "fine_path.csv"), fine,
                           include_time=True, header=header)
    log.info("wrote %d observations to %s", obs.n_intervals + 1, out)
    return out


def build_sampler(cfg: RunConfig, obs: ObservationSet):
    """Construct the sampler described by a RunConfig."""
    spec = build_spec(cfg)
    proposals = ProposalConfig(
        scales=dict(cfg.scales), default_scale=cfg.default_scale,
        bridge_method=cfg.method, method_b_drift=cfg.method_b_drift,
        block_size=cfg.block_size, adapt=cfg.adapt,
        adapt_target=cfg.adapt_target,
    )
    theta0 = (np.asarray(cfg.theta0, dtype=float) if cfg.theta0 is not None
              else spec.default_theta)
    if theta0 is None:
        raise ConfigError("theta0: required (the model has no default)")
    if cfg.model == "bivariate_heston":
        c0_free = cfg.c0_free
        if c0_free is None:
            raise ConfigError("c0_free: required for bivariate_heston "
                              "(C11, C21, C22, C43)")
        priors = _priors_from_tags(cfg.priors) if cfg.priors else None
        return SVSampler(obs, cfg.m, theta0, c0_free, regime=cfg.sv_regime,
                         priors=priors, proposals=proposals, seed=cfg.seed,
                         check_interval=cfg.check_interval)
    C0 = _chol_from_config(cfg.sigma0, cfg.rho0, cfg.c0_free, spec.dim)
    priors = None
    if cfg.priors:
        from .cholesky import SparsityMask

        base = default_priors(spec, SparsityMask.dense(spec.dim))
        tags = dict(base.tags)
        tags.update(cfg.priors)
        priors = PriorSpec(tags)
    return ReducibleSampler(spec, obs, cfg.m, theta0, C0, priors=priors,
                            proposals=proposals, fix_C=cfg.fix_C,
                            seed=cfg.seed, check_interval=cfg.check_interval)


def _priors_from_tags(tags: dict) -> PriorSpec:
    return PriorSpec(dict(tags))


def cmd_fit(cfg: RunConfig) -> tuple[str, str]:
    """Run the sampler; returns (samples CSV path, diagnostics JSON path)."""
    if cfg.input is None:
        raise ConfigError("input: required for fit")
    expected = 2 if cfg.sv_regime == "latent-vol" else build_spec(cfg).dim
    obs = load_observations(cfg.input, expected_d=expected)
    log.warning(
        "improper priors in use (reciprocal/flat); posterior propriety is "
        "not verified by the software"
    )
    sampler = build_sampler(cfg, obs)

    os.makedirs(cfg.output_dir, exist_ok=True)
    samples_path = os.path.join(cfg.output_dir, "samples.csv")
    diag_path = os.path.join(cfg.output_dir, "diagnostics.json")
    fieldnames = list(sampler.current_record().keys())

    def progress(it, total):
        if cfg.progress_every and (it + 1) % cfg.progress_every == 0:
            print(f"sweep {it + 1}/{total}", file=sys.stderr, flush=True)

    with SampleWriter(samples_path, fieldnames) as writer:
        _, diag = run_sampler(
            sampler, cfg.sweeps, cfg.warmup, thin=cfg.thin,
            progress=progress, on_record=writer.write,
            max_lag=cfg.acf_max_lag,
        )
    write_diagnostics(diag_path, diag, cfg.as_dict())
    return samples_path, diag_path


def _run(fn, *args):
    _setup_logging()
    try:
        return fn(*args)
    except (ConfigError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1) from exc
    except (NumericalError, SimulationDomainError, InitializationError,
            ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2) from exc


@click.group()
def main():
    """Bayesian inference for discretely observed correlated diffusions."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="YAML run configuration.")
def simulate(config_path):
    """Generate a synthetic observation CSV from true parameters."""
    def body():
        cfg = load_config(config_path)
        out = cmd_simulate(cfg)
        click.echo(out)
    _run(body)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="YAML run configuration.")
@click.option("--input", "input_override", default=None,
              type=click.Path(exists=True),
              help="Observation CSV (overrides the config key).")
@click.option("--output-dir", "output_override", default=None,
              help="Output directory (overrides the config key).")
@click.option("--seed", "seed_override", default=None, type=int,
              help="Chain seed (overrides the config key).")
def fit(config_path, input_override, output_override, seed_override):
    """Run the MCMC sampler; writes samples.csv and diagnostics.json."""
    def body():
        cfg = load_config(config_path)
        if input_override is not None:
            cfg.input = input_override
        if output_override is not None:
            cfg.output_dir = output_override
        if seed_override is not None:
            cfg.seed = seed_override
        samples_path, diag_path = cmd_fit(cfg)
        click.echo(samples_path)
        click.echo(diag_path)
    _run(body)


@main.command()
@click.argument("samples_path", type=click.Path(exists=True))
@click.option("--lags", default=100, type=int, help="Maximum lag.")
@click.option("--output", "-o", default=None, help="Output CSV path.")
@click.option("--label", default=None,
              help="Constant label column (e.g. the augmentation level m).")
def acf(samples_path, lags, output, label):
    """Export per-parameter autocorrelations as a long-format CSV."""
    def body():
        names, data = load_samples(samples_path)
        if data.shape[0] < 2:
            raise DataFormatError(
                f"{samples_path}: need at least 2 sample rows for the ACF"
            )
        skip = {"iteration"}
        acfs = {name: autocorrelation(data[:, j], lags)
                for j, name in enumerate(names) if name not in skip}
        out = output or os.path.splitext(samples_path)[0] + "_acf.csv"
        extra = {"label": label} if label is not None else None
        write_acf_table(out, acfs, extra_columns=extra)
        click.echo(out)
    _run(body)


@main.command()
@click.argument("samples_path", type=click.Path(exists=True))
def summarize(samples_path):
    """Print posterior mean, SD and median per parameter."""
    def body():
        names, data = load_samples(samples_path)
        if data.shape[0] < 2:
            raise DataFormatError(
                f"{samples_path}: need at least 2 sample rows to summarize"
            )
        skip = {"iteration"}
        click.echo(f"{'parameter':<12}{'mean':>12}{'sd':>12}{'median':>12}")
        for j, name in enumerate(names):
            if name in skip:
                continue
            s = summary_stats(data[:, j])
            click.echo(f"{name:<12}{s['mean']:>12.4f}{s['sd']:>12.4f}"
                       f"{s['median']:>12.4f}")
    _run(body)


if __name__ == "__main__":
    main()
