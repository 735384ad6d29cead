"""Utilities for real scalar fields on the 2- and 3-torus.

Fields are plain float64 arrays on uniform collocation grids; integrals
are grid means (the tori have unit volume).
"""

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .spectral import diff_matrix


def mean(f):
    return float(np.mean(f))


def lp_norm(f, p):
    if p == np.inf:
        return float(np.max(np.abs(f)))
    return float(np.mean(np.abs(f) ** p) ** (1.0 / p))


def grad(f):
    """Tuple of spectral partial derivatives along every axis of f."""
    out = []
    for a in range(f.ndim):
        D = diff_matrix(f.shape[a])
        g = np.tensordot(D, f, axes=([1], [a]))
        out.append(np.ascontiguousarray(np.moveaxis(g, 0, a)))
    return tuple(out)


@lru_cache(maxsize=32)
def _ksq_rfft(shape):
    ks = [np.fft.fftfreq(n, d=1.0 / n) for n in shape[:-1]]
    ks.append(np.fft.rfftfreq(shape[-1], d=1.0 / shape[-1]))
    mesh = np.meshgrid(*ks, indexing="ij")
    ksq = sum((2.0 * np.pi * k) ** 2 for k in mesh)
    ksq.setflags(write=False)
    return ksq

def laplacian(f):
    ksq = _ksq_rfft(f.shape)
    return sfft.irfftn(-ksq * sfft.rfftn(f), s=f.shape)


def helmholtz_inverse(f, delta_sq, shift=1.0):
    """(delta^2 (-Lap) + shift)^{-1} f, used as an elliptic preconditioner."""
    ksq = _ksq_rfft(f.shape)
    return sfft.irfftn(sfft.rfftn(f) / (delta_sq * ksq + shift), s=f.shape)


def h1_norm(f):
    g = grad(f)
    return float(np.sqrt(np.mean(f * f) + sum(np.mean(gi * gi) for gi in g)))


def w2p_norm(f, p):
    """Sobolev W^{2,p} norm from spectral derivatives up to second order."""
    parts = [lp_norm(f, p) ** p]
    g = grad(f)
    parts += [lp_norm(gi, p) ** p for gi in g]
    for gi in g:
        parts += [lp_norm(gij, p) ** p for gij in grad(gi)]
    return float(sum(parts) ** (1.0 / p))


def logmeanexp(f, axis):
    """log of the mean of e^f along an axis, max-subtracted for safety."""
    m = np.max(f, axis=axis, keepdims=True)
    out = np.log(np.mean(np.exp(f - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


def normalize_phi(phi, sigma):
    """Shift phi by a constant so that the Gibbs weight e^{-sigma phi}
    has unit mean over the torus."""
    phi = np.asarray(phi, dtype=np.float64)
    z = logmeanexp(-sigma * phi.ravel(), axis=0)
    return phi + sigma * z


def cosine_profile(shape, terms):
    """Sum of axis-aligned cosines: terms are (axis, amplitude, wavenumber)."""
    f = np.zeros(shape)
    for axis, amp, k in terms:
        x = np.arange(shape[axis]) / shape[axis]
        prof = amp * np.cos(2.0 * np.pi * k * x)
        sh = [1] * len(shape)
        sh[axis] = shape[axis]
        f = f + prof.reshape(sh)
    return f


def low_mode_l2(a, b, kmax=2):
    """L2 distance restricted to Fourier modes |k_i| <= kmax per axis.

    The weak metric for comparing oscillatory kinetic output against
    the averaged model: high modes oscillate and must not be penalized.
    """
    d = np.asarray(a) - np.asarray(b)
    dk = np.fft.fftn(d) / d.size
    keep = np.zeros(d.shape, dtype=bool)
    mesh = np.meshgrid(
        *[np.abs(np.fft.fftfreq(n, d=1.0 / n)) for n in d.shape], indexing="ij"
    )
    keep = np.all([m <= kmax for m in mesh], axis=0)
    return float(np.sqrt(np.sum(np.abs(dk[keep]) ** 2)))
