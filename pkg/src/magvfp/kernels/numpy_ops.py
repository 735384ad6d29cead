"""Pure-numpy implementations of the Hermite-ladder hot kernels.

All kernels operate on coefficient tensors viewed as ``(X, n1, n2, n3)``
where ``X`` collapses the spatial collocation axes and ``(n1, n2, n3)``
are the Hermite truncation sizes per velocity axis.  The compiled
extension in ``_accel.pyx`` implements the same contracts; each backend
is deterministic on its own and the two agree to near machine precision
(enforced by the parity tests).
"""

import numpy as np

BACKEND_NAME = "numpy"


def _weights_lower(n):
    # sqrt(m+1) for m = 0..n-1, last entry unused (top mode has no source)
    return np.sqrt(np.arange(1.0, n + 1.0))


def lower(c, axis, out=None):
    """Apply d/dv along one velocity axis: out[m] = sqrt(m+1) * c[m+1].

    ``axis`` is 1, 2 or 3 (velocity axes of the collapsed 4D view).
    """
    if out is None:
        out = np.zeros_like(c)
    else:
        out[...] = 0.0
    n = c.shape[axis]
    w = _weights_lower(n - 1)
    shape = [1, 1, 1, 1]
    shape[axis] = n - 1
    w = w.reshape(shape)
    src = [slice(None)] * 4
    dst = [slice(None)] * 4
    src[axis] = slice(1, n)
    dst[axis] = slice(0, n - 1)
    out[tuple(dst)] = c[tuple(src)]
    out[tuple(dst)] *= w
    return out


def raise_(c, axis, out=None):
    """Apply (v - d/dv) along one velocity axis: out[m] = sqrt(m) * c[m-1].

    Raising out of the truncation drops the contribution (zero-padding
    closure), so the top source mode never appears in the output.
    """
    if out is None:
        out = np.zeros_like(c)
    else:
        out[...] = 0.0
    n = c.shape[axis]
    w = np.sqrt(np.arange(1.0, n))
    shape = [1, 1, 1, 1]
    shape[axis] = n - 1
    w = w.reshape(shape)
    src = [slice(None)] * 4
    dst = [slice(None)] * 4
    src[axis] = slice(0, n - 1)
    dst[axis] = slice(1, n)
    out[tuple(dst)] = c[tuple(src)]
    out[tuple(dst)] *= w
    return out


def vmul(c, axis, out=None):
    """Multiplication by v along one axis: raise + lower combined."""
    if out is None:
        out = np.zeros_like(c)
    else:
        out[...] = 0.0
    n = c.shape[axis]
    w = np.sqrt(np.arange(1.0, n))
    shape = [1, 1, 1, 1]
    shape[axis] = n - 1
    w = w.reshape(shape)
    lo = [slice(None)] * 4
    hi = [slice(None)] * 4
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    lo, hi = tuple(lo), tuple(hi)
    out[lo] = c[hi] * w
    out[hi] += c[lo] * w
    return out


def transport_apply(g, dx1, dx2, dx3, f1, f2, f3, scale, out=None):
    """Fused transport generator on the half-weighted unknown
    g = e^{-sigma phi / 2} h:

        scale * sum_i [ v_i (dx_i g)  +  f_i ((raise_i - lower_i)/2) g ]

    ``dx1..dx3`` are the spectral x-derivatives of ``g`` (same 4D view),
    ``f1..f3`` the force components on the collapsed spatial axis,
    shape ``(X,)``.  Both parts are exactly skew-adjoint in the plain
    inner product, which is what makes the time integration
    non-expansive by construction.
    """
    if out is None:
        out = np.zeros_like(g)
    else:
        out[...] = 0.0
    tmp = np.empty_like(g)
    for axis, dx in ((1, dx1), (2, dx2), (3, dx3)):
        out += vmul(dx, axis, out=tmp)
    half = np.empty_like(g)
    for axis, f in ((1, f1), (2, f2), (3, f3)):
        if f is None:
            continue
        raise_(g, axis, out=tmp)
        lower(g, axis, out=half)
        tmp -= half
        tmp *= (0.5 * f)[:, None, None, None]
        out += tmp
    if scale != 1.0:
        out *= scale
    return out


def scale_by_mode(c, factors, out=None):
    """Multiply each Hermite mode by a per-mode factor (broadcast over x)."""
    if out is None:
        return c * factors[None, :, :, :]
    np.multiply(c, factors[None, :, :, :], out=out)
    return out


def shell_rotate(c, plan, out=None):
    """Rotate perpendicular Hermite shells m1 + m2 = s by dense blocks.

    ``plan`` is a list of ``(i1, i2, R)`` with integer index arrays of
    equal length L selecting the in-rectangle part of one shell and the
    L x L orthogonal block to apply.  Mixing is over (m1, m2) only and
    is batched over the spatial axis and m3.
    """
    if out is None:
        out = c.copy()
    else:
        out[...] = c
    for i1, i2, R in plan:
        if len(i1) == 1:
            continue
        sub = c[:, i1, i2, :]
        out[:, i1, i2, :] = np.einsum("ab,xbk->xak", R, sub)
    return out
