"""Pure-numpy kernel backend.

Same contract as the compiled backend in ``_compiled.pyx``; selected at
import time when the extension is unavailable (or forced via the
``CHOLDIFF_KERNEL`` environment variable).
"""
import numpy as np

NAME = "python"


def girsanov_sqrt_model(U, dts, C, Cinv, kappa, level, vdiag):
    """Per-interval Girsanov log-terms for sqrt-volatility models.

    The model class: every transformed component has volatility factor
    ``sqrt(x)`` (so ``g = 2 sqrt(x)``, ``g_inv(w) = (w/2)^2``) and linear
    mean-reverting drift ``kappa_i (level_i - x_i)``.  This covers the
    multivariate CIR model and the Heston volatility block.

    Parameters
    ----------
    U : (n, p, d) array
        Transformed lattice per interval, endpoints included.
    dts : (n,) array
        Lattice step of each interval.
    C, Cinv : (d, d) arrays
        Cholesky factor and its inverse.
    kappa, level, vdiag : (d,) arrays
        Drift parameters and row norms squared of C.

    Returns
    -------
    log_g : (n,) array
        Ito-sum Girsanov log-term per interval (left endpoints);
        ``-inf`` where the interval is invalid.
    ok : (n,) bool array
        False where some lattice point maps outside the state domain.
    """
    U = np.asarray(U, dtype=float)
    n, p, d = U.shape
    w = U @ C.T  # (n, p, d), w_i = [C u]_i = 2 sqrt(x_i)
    ok = np.all(w > 0.0, axis=(1, 2))

    sq = 0.5 * w  # sqrt(x), only meaningful where ok
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.square(sq)
        psi = (kappa * (level - x) - 0.25 * vdiag) / sq
    mu_u = psi @ Cinv.T  # (n, p, d)
    du = U[:, 1:, :] - U[:, :-1, :]
    mu_left = mu_u[:, :-1, :]
    stoch = np.einsum("npd,npd->n", mu_left, du)
    time_int = 0.5 * np.einsum("npd,npd->n", mu_left, mu_left) * dts
    log_g = np.where(ok, stoch - time_int, -np.inf)
    return log_g, ok
