"""End-to-end acceptance suite for the benchmark study.

Each test prints a single PASS/FAIL line on the live terminal.  The four
MCMC fits of the 3-dim CIR benchmark (m = 20, 40, 60, 80) are shared
session fixtures; the m = 20 fit uses the full chain length of the
benchmark study and takes several minutes.
"""
import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from choldiff.cholesky import CholeskyFactor, chol_to_corr, corr_to_chol
from choldiff.config import strict_lower_from_flat
from choldiff.diagnostics import autocorrelation, integrated_autocorr_time
from choldiff.likelihood import (
    AugmentedPath,
    euler_loglik,
    heston_price_terms,
    loglik_reparam,
)
from choldiff.models import (
    ObservationSet,
    PathLattice,
    build_bivariate_heston,
    build_bm_drift,
    build_mv_cir,
    quadratic_variation,
)
from choldiff.sampling import (
    ReducibleSampler,
    SVSampler,
    heston_build_C,
    heston_sparsity_mask,
    run_sampler,
)
from choldiff.simulate import simulate_euler
from choldiff.transform import TransformContext, transform_H

from conftest import (
    TRUE_KAPPA,
    TRUE_MU,
    TRUE_RHO,
    TRUE_SIGMA,
    random_corr_scale,
)

# reported-scale posterior SDs of the benchmark study, ordered
# (kappa1..3, mu1..3, sigma1..3, rho21, rho31, rho32)
REPORTED_SD = {
    "kappa1": 0.025, "kappa2": 0.031, "kappa3": 0.030,
    "mu1": 0.167, "mu2": 0.366, "mu3": 0.094,
    "sigma1": 0.016, "sigma2": 0.012, "sigma3": 0.014,
    "rho21": 0.034, "rho31": 0.041, "rho32": 0.033,
}
TRUE_VALUES = {
    "kappa1": 0.2, "kappa2": 0.15, "kappa3": 0.22,
    "mu1": 2.5, "mu2": 3.0, "mu3": 2.0,
    "sigma1": 0.45, "sigma2": 0.35, "sigma3": 0.40,
    "rho21": 0.45, "rho31": 0.35, "rho32": 0.55,
}
FREE_C_NAMES = ["C11", "C21", "C22", "C31", "C32", "C33"]

BENCH_SEED = 20230817


@pytest.fixture(scope="session")
def report(request):
    """Print a live PASS/FAIL line per criterion (bypasses pytest capture)."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def _report(number: int, title: str, passed: bool, detail: str = ""):
        line = f"[criterion {number}] {title}: {'PASS' if passed else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print(line, flush=True)
        else:
            print(line, flush=True)

    return _report


@pytest.fixture(scope="session")
def bench_obs(cir_spec, cir_theta, cir_C):
    """The benchmark dataset: n = 500 unit-spaced observations."""
    path = simulate_euler(cir_spec, cir_C, cir_theta, TRUE_MU, 500.0, 0.01,
                          seed=BENCH_SEED)
    return ObservationSet(path.times[::100], path.states[::100])


def _fit(spec, obs, theta0, C0, m, sweeps, warmup, seed):
    sampler = ReducibleSampler(spec, obs, m=m, theta0=theta0, C0=C0, seed=seed)
    records, diag = run_sampler(sampler, sweeps, warmup, thin=1)
    names = ["kappa1", "kappa2", "kappa3", "mu1", "mu2", "mu3",
             "sigma1", "sigma2", "sigma3", "rho21", "rho31", "rho32"]
    columns = {name: np.array([r[name] for r in records])
               for name in names + FREE_C_NAMES}
    return columns, diag


@pytest.fixture(scope="session")
def fit_m20(cir_spec, cir_theta, cir_C, bench_obs):
    """Full-length benchmark fit: warm-up 10^4 plus 5*10^4 kept sweeps."""
    return _fit(cir_spec, bench_obs, cir_theta, cir_C, m=20,
                sweeps=60_000, warmup=10_000, seed=101)


@pytest.fixture(scope="session")
def fits_by_m(cir_spec, cir_theta, cir_C, bench_obs, fit_m20):
    """Shorter chains at the higher augmentation levels (config-scale runs)."""
    fits = {20: fit_m20}
    for m, seed in ((40, 140), (60, 160), (80, 180)):
        fits[m] = _fit(cir_spec, bench_obs, cir_theta, cir_C, m=m,
                       sweeps=10_000, warmup=2_000, seed=seed)
    return fits


class TestCriterion1:
    def test_posterior_means_recover_truth(self, fit_m20, report):
        columns, _ = fit_m20
        failures = []
        for name, true in TRUE_VALUES.items():
            mean = float(np.mean(columns[name]))
            if abs(mean - true) > 3.0 * REPORTED_SD[name]:
                failures.append(f"{name}: mean {mean:.4f} vs true {true}")
        passed = not failures
        report(1, "benchmark posterior recovery (12 parameters, 3 SDs)",
               passed, "; ".join(failures) if failures else "all within band")
        assert passed, failures


class TestCriterion2:
    def test_pooled_bridge_acceptance(self, fit_m20, report):
        _, diag = fit_m20
        rate = diag.acceptance_rates()["bridge"]
        passed = rate > 0.90
        report(2, "pooled path-sampler acceptance > 90%", passed,
               f"rate {rate:.4f}")
        assert passed, rate


class TestCriterion3:
    def test_lag50_acf_non_degenerate(self, fits_by_m, report):
        levels = [20, 40, 60, 80]
        acf50 = {
            name: {m: float(autocorrelation(fits_by_m[m][0][name], 50)[50])
                   for m in levels}
            for name in FREE_C_NAMES
        }
        failures = []
        # lag-50 ACF at the heaviest augmentation stays below 0.5
        for name in FREE_C_NAMES:
            if not acf50[name][80] < 0.5:
                failures.append(f"{name}: acf50(m=80) = {acf50[name][80]:.3f}")
        # and does not increase monotonically across m; an increase smaller
        # than the Monte Carlo standard error of the ACF estimate does not
        # count, and one noisy entry is tolerated
        monotone = []
        for name in FREE_C_NAMES:
            rising = 0
            for lo, hi in zip(levels[:-1], levels[1:]):
                n_eff = min(fits_by_m[lo][0][name].size,
                            fits_by_m[hi][0][name].size)
                eps = 2.0 / np.sqrt(n_eff)
                if acf50[name][hi] > acf50[name][lo] + eps:
                    rising += 1
            if rising == 3:
                monotone.append(name)
        if len(monotone) > 1:
            failures.append(f"monotone increase in {monotone}")
        passed = not failures
        detail = ", ".join(
            f"{name} m80={acf50[name][80]:.3f}" for name in FREE_C_NAMES)
        report(3, "lag-50 ACF of C entries non-degenerate across m", passed,
               detail if passed else "; ".join(failures))
        assert passed, failures


class TestCriterion4:
    def test_wasserstein_convergence_in_m(self, fits_by_m, report):
        sig = {m: fits_by_m[m][0]["sigma2"] for m in (20, 60, 80)}
        w_60_80 = wasserstein_distance(sig[60], sig[80])
        w_20_80 = wasserstein_distance(sig[20], sig[80])
        passed = w_60_80 < w_20_80
        report(4, "W1(sigma2 | m=60, m=80) < W1(sigma2 | m=20, m=80)", passed,
               f"{w_60_80:.5f} vs {w_20_80:.5f}")
        assert passed, (w_60_80, w_20_80)


class TestCriterion5:
    def test_reparam_euler_difference_identity(self, cir_spec, cir_theta,
                                               cir_C, report):
        path = simulate_euler(cir_spec, cir_C, cir_theta, TRUE_MU, 20.0, 2e-4,
                              seed=909)
        obs = ObservationSet(path.times, path.states)
        aug = AugmentedPath.flat(obs.times, 0, 3)
        lattice = PathLattice(path.times, path.states, [0, path.n_points - 1])
        rng = np.random.default_rng(515)
        worst = 0.0
        checked = 0
        while checked < 10:
            th1 = cir_theta * np.exp(rng.normal(0.0, 0.2, 6))
            th2 = cir_theta * np.exp(rng.normal(0.0, 0.2, 6))
            de = (euler_loglik(cir_spec, cir_C, th1, lattice)
                  - euler_loglik(cir_spec, cir_C, th2, lattice))
            if abs(de) < 0.5:  # keep the relative comparison well-posed
                continue
            dr = (loglik_reparam(TransformContext(cir_spec, cir_C, th1),
                                 obs, aug).total
                  - loglik_reparam(TransformContext(cir_spec, cir_C, th2),
                                   obs, aug).total)
            worst = max(worst, abs(dr - de) / abs(de))
            checked += 1
        passed = worst < 0.01
        report(5, "reparametrised vs Euler log-likelihood differences < 1%",
               passed, f"worst relative error {worst:.2e}")
        assert passed, worst


class TestCriterion6:
    def test_unit_volatility_quadratic_covariation(self, cir_spec, cir_theta,
                                                   cir_C, report):
        t_end = 10.0
        path = simulate_euler(cir_spec, cir_C, cir_theta, TRUE_MU, t_end,
                              1e-4, seed=606)
        ctx = TransformContext(cir_spec, cir_C, cir_theta)
        u = transform_H(ctx, path.states)
        qv = quadratic_variation(PathLattice(path.times, u, path.obs_index))
        target = t_end * np.eye(3)
        rel = (np.linalg.norm(qv - target, "fro")
               / np.linalg.norm(target, "fro"))
        passed = rel < 0.05
        report(6, "transformed-path quadratic covariation ~ t * identity",
               passed, f"Frobenius error {rel:.4f}")
        assert passed, rel


class TestCriterion7:
    def test_conjugate_brownian_drift_posterior(self, report):
        spec = build_bm_drift(1)
        C = CholeskyFactor(np.eye(1))
        true_drift = np.array([0.4])
        path = simulate_euler(spec, C, true_drift, [0.0], 100.0, 0.1, seed=707)
        obs = ObservationSet(path.times[::10], path.states[::10])
        t_total = obs.times[-1] - obs.times[0]
        post_mean = float(obs.values[-1, 0] - obs.values[0, 0]) / t_total
        post_var = 1.0 / t_total

        sampler = ReducibleSampler(spec, obs, m=5, theta0=true_drift, C0=C,
                                   fix_C=True, seed=717)
        records, _ = run_sampler(sampler, 6_000, 1_000, thin=1)
        draws = np.array([r["drift1"] for r in records])
        tau = integrated_autocorr_time(draws)
        n_eff = draws.size / tau
        mean_mcse = np.sqrt(post_var / n_eff)
        var_mcse = post_var * np.sqrt(2.0 / n_eff)
        mean_err = abs(draws.mean() - post_mean)
        var_err = abs(draws.var(ddof=1) - post_var)
        passed = mean_err < 3 * mean_mcse and var_err < 3 * var_mcse
        report(7, "Brownian-drift chain matches conjugate posterior", passed,
               f"mean err {mean_err:.4f} (3*MCSE {3 * mean_mcse:.4f}), "
               f"var err {var_err:.5f} (3*MCSE {3 * var_mcse:.5f})")
        assert passed, (mean_err, mean_mcse, var_err, var_mcse)


class TestCriterion8:
    def test_bijection_thousand_roundtrips(self, report):
        rng = np.random.default_rng(808)
        heston_mask = heston_sparsity_mask()
        worst = 0.0
        for trial in range(1000):
            if trial % 4 == 0:
                mask = heston_mask
                spec = random_corr_scale(rng, 4, mask=mask)
            else:
                mask = None
                spec = random_corr_scale(rng, int(rng.integers(2, 7)))
            back = chol_to_corr(corr_to_chol(spec, mask))
            worst = max(
                worst,
                float(np.max(np.abs(back.scales - spec.scales))),
                float(np.max(np.abs(back.correlations - spec.correlations))),
            )
        passed = worst < 1e-12
        report(8, "scale/correlation bijection round trips (1000 specs)",
               passed, f"worst error {worst:.2e}")
        assert passed, worst


class TestCriterion9:
    theta = np.array([0.3, 0.25, 0.04, 0.05, 0.02, 0.015])
    c_free = [0.12, 0.05, 0.10, 0.08]

    def test_heston_structure_and_latent_chain(self, report):
        # (a) constant-volatility closed form
        C = heston_build_C(*self.c_free, self.theta[2], self.theta[3])
        mu_v, mu_x = self.theta[2:4], self.theta[4:6]
        n, p = 6, 11
        dts = np.full(n, 1.0 / (p - 1))
        vol = np.tile(mu_v, (n, p, 1))
        rng = np.random.default_rng(901)
        price = np.cumsum(0.03 * rng.standard_normal((n + 1, 2)), axis=0)
        out = heston_price_terms(self.theta, C, price, vol, dts)
        L = C.entries
        cov = np.array([
            [L[2, 2] ** 2, L[2, 2] * L[3, 2]],
            [L[2, 2] * L[3, 2], L[3, 2] ** 2 + L[3, 3] ** 2],
        ])
        cov_inv = np.linalg.inv(cov)
        closed_form_err = 0.0
        for k in range(n):
            resid = price[k + 1] - price[k] - (mu_x - 0.5 * mu_v**2)
            expected = -0.5 * (2 * np.log(2 * np.pi)
                               + np.log(np.linalg.det(cov))
                               + resid @ cov_inv @ resid)
            closed_form_err = max(closed_form_err, abs(out[k] - expected))

        # (b) latent-volatility chain end to end on synthetic data
        spec = build_bivariate_heston()
        path = simulate_euler(spec, C, self.theta, [0.04, 0.05, 0.0, 0.0],
                              200.0, 0.01, seed=902)
        obs4 = ObservationSet(path.times[::100], path.states[::100])
        obs2 = ObservationSet(obs4.times, obs4.values[:, 2:])
        sampler = SVSampler(obs2, m=10, theta0=self.theta, c_free=self.c_free,
                            regime="latent-vol", seed=903)
        records, diag = run_sampler(sampler, 300, 50, thin=1)
        sampler.verify_cache()

        positive = True
        for rec in records:
            for name in ("kappa1", "kappa2", "mu1", "mu2", "C11", "C22"):
                positive &= rec[name] > 0.0
            positive &= rec["mu2"] > rec["C43"] ** 2
        D = sampler.C.entries[:2, :2]
        vol_final = np.square(sampler.U @ D.T / 2.0)
        positive &= bool(np.all(vol_final > 0.0))

        passed = closed_form_err < 1e-8 and positive and len(records) == 250
        report(9, "stochastic volatility structure and latent chain", passed,
               f"closed-form error {closed_form_err:.2e}, "
               f"positivity {'held' if positive else 'VIOLATED'}, "
               f"{len(records)} kept sweeps")
        assert passed, (closed_form_err, positive, len(records))
