# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled split-step kernels. Semantics match ``_kernels_py`` exactly."""

cdef extern from "math.h" nogil:
    void sincos(double x, double *s, double *c)


def kerr_step(double complex[:, ::1] u, double h):
    """In place: ``u *= exp(i h |u|^2)``."""
    cdef Py_ssize_t r, k
    cdef Py_ssize_t nr = u.shape[0], nk = u.shape[1]
    cdef double re, im, phi, s, c
    with nogil:
        for r in range(nr):
            for k in range(nk):
                re = u[r, k].real
                im = u[r, k].imag
                phi = h * (re * re + im * im)
                sincos(phi, &s, &c)
                u[r, k] = (re * c - im * s) + 1j * (re * s + im * c)


def spectral_multiply(double complex[:, ::1] spec, const double complex[::1] factor):
    """In place: ``spec[r, k] *= factor[k]``."""
    cdef Py_ssize_t r, k
    cdef Py_ssize_t nr = spec.shape[0], nk = spec.shape[1]
    cdef double a, b, fr, fi
    if factor.shape[0] != nk:
        raise ValueError("factor length does not match spectrum width")
    with nogil:
        for r in range(nr):
            for k in range(nk):
                a = spec[r, k].real
                b = spec[r, k].imag
                fr = factor[k].real
                fi = factor[k].imag
                spec[r, k] = (a * fr - b * fi) + 1j * (a * fi + b * fr)


def max_abs2(const double complex[:, ::1] u):
    """Largest ``|u|^2`` and whether any sample is non-finite."""
    cdef Py_ssize_t r, k
    cdef Py_ssize_t nr = u.shape[0], nk = u.shape[1]
    cdef double p, best = 0.0
    cdef bint bad = False
    with nogil:
        for r in range(nr):
            for k in range(nk):
                p = u[r, k].real * u[r, k].real + u[r, k].imag * u[r, k].imag
                if p != p or p > 1.7e308:
                    bad = True
                elif p > best:
                    best = p
    return best, bad
