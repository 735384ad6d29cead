"""Phase-space discretization: collocation in x on the torus, Hermite in v.

Conventions used throughout the package:

* space is the unit 3-torus, uniform collocation grids, axes ``x1, x2``
  perpendicular to the magnetic field and ``x3`` parallel to it;
* scalar fields on T^3 / T^2 are plain float64 arrays of shape
  ``(nx1, nx2, nx3)`` / ``(nx1, nx2)``;
* a kinetic state stores the coefficients of h = f / (Gibbs weight x
  Maxwellian) in the probabilists' orthonormal Hermite basis, so that
  h(x, v) = sum_m coeffs[x, m] He_m(v) with He_m orthonormal under the
  standard Gaussian.  Mode (0,0,0) carries the velocity average, mode
  e_i the first moment in v_i;
* integrals over the torus use the uniform (trapezoid) rule, which is
  spectrally accurate for periodic data.
"""

from dataclasses import dataclass, fields as dataclass_fields
from functools import lru_cache
import struct

import numpy as np

from .kernels import ops

_AXIS_X = {"x1": 0, "x2": 1, "x3": 2, 0: 0, 1: 1, 2: 2}
_AXIS_V = {"v1": 0, "v2": 1, "v3": 2, 0: 0, 1: 1, 2: 2}


@dataclass(frozen=True)
class Grid:
    """Collocation sizes in x and Hermite truncation sizes in v."""

    nx: tuple
    nv: tuple

    def __post_init__(self):
        object.__setattr__(self, "nx", tuple(int(n) for n in self.nx))
        object.__setattr__(self, "nv", tuple(int(n) for n in self.nv))
        if len(self.nx) != 3 or len(self.nv) != 3:
            raise ValueError("nx and nv must be integer triples")
        if any(n < 2 for n in self.nx + self.nv):
            raise ValueError("all grid sizes must be >= 2")
        if any(n % 2 for n in self.nx):
            raise ValueError("nx components must be even for real spectral differentiation")

    @property
    def shape(self):
        return self.nx + self.nv

    @property
    def npoints_x(self):
        return self.nx[0] * self.nx[1] * self.nx[2]

    @property
    def x_weight(self):
        return 1.0 / self.npoints_x

    def x_axis(self, axis):
        a = _AXIS_X[axis]
        n = self.nx[a]
        return np.arange(n) / n


@dataclass(frozen=True)
class KineticState:
    """Hermite-in-velocity, collocation-in-space coefficients of h."""

    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )
        if self.coeffs.dtype != np.float64:
            object.__setattr__(self, "coeffs", self.coeffs.astype(np.float64))

    def flat_v(self):
        """Collapsed (X, nv1, nv2, nv3) view for the kernels."""
        return self.coeffs.reshape(-1, *self.grid.nv)

    def check_finite(self):
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("kinetic state contains non-finite coefficients")
        return self


def state_like(state, coeffs):
    return KineticState(coeffs=coeffs, grid=state.grid)


def zero_state(grid):
    return KineticState(coeffs=np.zeros(grid.shape), grid=grid)


@lru_cache(maxsize=32)
def diff_matrix(n):
    """Real spectral differentiation matrix on n uniform points of T.

    Classical cotangent form, equivalent to FFT differentiation with
    the Nyquist mode zeroed for even n; exactly skew-symmetric by
    construction, exact on band-limited data.
    """
    D = np.zeros((n, n))
    for d in range(1, n):
        if n % 2 == 0:
            val = np.pi * (-1.0) ** d / np.tan(np.pi * d / n)
        else:
            val = np.pi * (-1.0) ** d / np.sin(np.pi * d / n)
        for j in range(n - d):
            D[j + d, j] = val
            D[j, j + d] = -val
    D.setflags(write=False)
    return D


def _deriv_array(arr, axis):
    D = diff_matrix(arr.shape[axis])
    out = np.tensordot(D, arr, axes=([1], [axis]))
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


def x_derivative(obj, axis):
    """Spectral derivative along a spatial axis of a field or state."""
    a = _AXIS_X[axis]
    if isinstance(obj, KineticState):
        return state_like(obj, _deriv_array(obj.coeffs, a))
    return _deriv_array(np.asarray(obj, dtype=np.float64), a)


def apply_ladder(state, axis, direction):
    """Hermite ladder action along one velocity axis.

    ``lower`` realizes d/dv_i (mode m -> m - e_i, weight sqrt(m_i));
    ``raise`` realizes v_i - d/dv_i (mode m -> m + e_i, weight
    sqrt(m_i + 1), dropped at the truncation boundary).
    """
    a = _AXIS_V[axis] + 1
    flat = state.flat_v()
    if direction == "lower":
        out = ops.lower(flat, a)
    elif direction == "raise":
        out = ops.raise_(flat, a)
    else:
        raise ValueError(f"direction must be 'raise' or 'lower', got {direction!r}")
    return state_like(state, out.reshape(state.grid.shape))


def gibbs_weight(phi, sigma):
    """Pointwise e^{-sigma phi} on the spatial grid."""
    if phi is None:
        raise ValueError("phi is required; pass a zero field for the unbiased case")
    return np.exp(-sigma * np.asarray(phi, dtype=np.float64))


def weighted_inner(a, b, phi, sigma):
    """Inner product of two states in L^2 of the Gibbs-Maxwell measure."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch between states")
    w = gibbs_weight(phi, sigma) * a.grid.x_weight
    s = np.einsum("xyzabc,xyzabc->xyz", a.coeffs, b.coeffs)
    return float(np.sum(w * s))


def weighted_norm(a, phi, sigma):
    return np.sqrt(max(weighted_inner(a, a, phi, sigma), 0.0))


@dataclass
class NormSet:
    """All weighted norms and cross products entering the time-weighted
    anisotropic norm and its dissipation.

    First-order entries are always present; the second-order entries
    (prefixed ``grad_v``) are None unless requested, since they double
    the ladder work.
    """

    n0: float
    dv_par: float
    dx_par: float
    dv_perp: float
    dx_perp: float
    cross_par: float
    cross_perp: float
    grad_v: float = None
    grad_v_dv_par: float = None
    grad_v_dx_par: float = None
    grad_v_dv_perp: float = None
    grad_v_dx_perp: float = None

    def validate(self):
        norms = [self.n0, self.dv_par, self.dx_par, self.dv_perp, self.dx_perp]
        if any(n < 0 for n in norms):
            raise ValueError("norm entries must be nonnegative")
        slack = 1e-12 * (1.0 + self.dv_par * self.dx_par)
        if abs(self.cross_par) > self.dv_par * self.dx_par + slack:
            raise ValueError("cross_par violates the Cauchy-Schwarz bound")
        slack = 1e-12 * (1.0 + self.dv_perp * self.dx_perp)
        if abs(self.cross_perp) > self.dv_perp * self.dx_perp + slack:
            raise ValueError("cross_perp violates the Cauchy-Schwarz bound")
        return self

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}


def partial_norms(state, phi, sigma, second_order=True):
    """Compute every NormSet entry of a state.

    Velocity derivatives use the ladder lowering action, space
    derivatives the spectral differentiation; all norms are taken in
    the e^{-sigma phi} weighted sense.
    """
    grid = state.grid
    w = (gibbs_weight(phi, sigma) * grid.x_weight).reshape(grid.nx)

    def wip(u, v):
        s = np.einsum("xyzabc,xyzabc->xyz", u, v)
        return float(np.sum(w * s))

    def wnorm_sq(u):
        return wip(u, u)

    c = state.coeffs
    flat = state.flat_v()
    shape = grid.shape
    dv = [ops.lower(flat, i + 1).reshape(shape) for i in range(3)]
    dx = [_deriv_array(c, i) for i in range(3)]

    n0 = np.sqrt(wnorm_sq(c))
    dv_sq = [wnorm_sq(g) for g in dv]
    dx_sq = [wnorm_sq(g) for g in dx]
    ns = NormSet(
        n0=n0,
        dv_par=np.sqrt(dv_sq[2]),
        dx_par=np.sqrt(dx_sq[2]),
        dv_perp=np.sqrt(dv_sq[0] + dv_sq[1]),
        dx_perp=np.sqrt(dx_sq[0] + dx_sq[1]),
        cross_par=wip(dv[2], dx[2]),
        cross_perp=wip(dv[0], dx[0]) + wip(dv[1], dx[1]),
    )
    if second_order:
        def grad_v_norm_sq(arr):
            g = arr.reshape(-1, *grid.nv)
            return sum(wnorm_sq(ops.lower(g, i + 1).reshape(shape)) for i in range(3))

        ns.grad_v = np.sqrt(sum(dv_sq))
        ns.grad_v_dv_par = np.sqrt(grad_v_norm_sq(dv[2]))
        ns.grad_v_dx_par = np.sqrt(grad_v_norm_sq(dx[2]))
        ns.grad_v_dv_perp = np.sqrt(grad_v_norm_sq(dv[0]) + grad_v_norm_sq(dv[1]))
        ns.grad_v_dx_perp = np.sqrt(grad_v_norm_sq(dx[0]) + grad_v_norm_sq(dx[1]))
    return ns.validate()


_HEADER = struct.Struct("<6I")


def serialize_state(state):
    """Flat checkpoint layout: six little-endian uint32 (nx then nv),
    then the coefficients as IEEE-754 doubles, little-endian, in
    row-major (x1, x2, x3, m1, m2, m3) order."""
    head = _HEADER.pack(*state.grid.nx, *state.grid.nv)
    body = np.ascontiguousarray(state.coeffs, dtype="<f8").tobytes()
    return head + body


def deserialize_state(buf):
    nums = _HEADER.unpack_from(buf, 0)
    grid = Grid(nx=nums[:3], nv=nums[3:])
    expect = _HEADER.size + 8 * int(np.prod(grid.shape))
    if len(buf) != expect:
        raise ValueError(f"checkpoint has {len(buf)} bytes, expected {expect}")
    coeffs = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    return KineticState(coeffs=coeffs.astype(np.float64), grid=grid)


def save_state(state, path):
    with open(path, "wb") as fh:
        fh.write(serialize_state(state))


def load_state(path):
    with open(path, "rb") as fh:
        return deserialize_state(fh.read())
