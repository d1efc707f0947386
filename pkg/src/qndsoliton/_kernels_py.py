"""Pure-numpy versions of the split-step kernels in ``_kernels.pyx``."""

import numpy as np


def kerr_step(u, h):
    """In place: ``u *= exp(i h |u|^2)``."""
    phi = u.real * u.real
    phi += u.imag * u.imag
    phi *= h
    rot = np.cos(phi) + 1j * np.sin(phi)
    u *= rot


def spectral_multiply(spec, factor):
    """In place: ``spec[r, k] *= factor[k]``."""
    if factor.shape[-1] != spec.shape[-1]:
        raise ValueError("factor length does not match spectrum width")
    spec *= factor


def max_abs2(u):
    p = u.real * u.real + u.imag * u.imag
    bad = not np.all(np.isfinite(p))
    best = float(np.max(p[np.isfinite(p)], initial=0.0))
    return best, bad
