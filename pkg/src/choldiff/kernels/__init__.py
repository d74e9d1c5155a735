"""Likelihood kernel backends.

The hot inner loop of the sampler -- per-interval Girsanov log-terms over
the transformed lattice -- is available both as a compiled Cython
extension and as a pure-numpy fallback.  The compiled backend is used
when importable; set ``CHOLDIFF_KERNEL=python`` or ``compiled`` to force
a choice (forcing ``compiled`` raises if the extension was not built).
"""
import os

from . import _numpy_impl

_BACKENDS = {"python": _numpy_impl}
try:
    from . import _compiled

    _BACKENDS["compiled"] = _compiled
except ImportError:
    _compiled = None

_forced = os.environ.get("CHOLDIFF_KERNEL")
if _forced:
    if _forced not in _BACKENDS:
        raise ImportError(
            f"CHOLDIFF_KERNEL={_forced!r} is not available; "
            f"choices: {sorted(_BACKENDS)}"
        )
    _active = _BACKENDS[_forced]
else:
    _active = _BACKENDS.get("compiled", _numpy_impl)


def backend_name() -> str:
    """Name of the backend in use ('compiled' or 'python')."""
    return _active.NAME


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str):
    """Backend module by name, for tests and benchmarks."""
    return _BACKENDS[name]


def girsanov_sqrt_model(U, dts, C, Cinv, kappa, level, vdiag):
    return _active.girsanov_sqrt_model(U, dts, C, Cinv, kappa, level, vdiag)


girsanov_sqrt_model.__doc__ = _numpy_impl.girsanov_sqrt_model.__doc__
