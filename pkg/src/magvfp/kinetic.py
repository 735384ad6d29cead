"""Time integration of the scaled magnetized kinetic equation.

The weighted unknown h = f / (e^{-sigma phi} M) evolves by

    dh/dt = -(1/eps) B h + (sigma sigma0 / eps^2) (v_perp . grad_v) h
            - (1/eps^(1+alpha)) (v - grad_v) . grad_v h

with B = v . grad_x - sigma grad_x(phi) . grad_v and static phi.  One
step is a Strang composition: exact diagonal exponential for the
collision part, exact rotation of the perpendicular Hermite shells for
the magnetic part, explicit RK4 for transport.  Only the transport
substep is stability-limited, which removes both stiff scales from the
time-step constraint.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .fields import grad
from .kernels import ops
from .spectral import (
    NormSet,
    _deriv_array,
    gibbs_weight,
    partial_norms,
    state_like,
    weighted_inner,
)

C_CFL = 0.5


@dataclass
class MomentSet:
    """Velocity moments of f: density, its parallel integral, currents."""

    n: np.ndarray
    N_perp: np.ndarray
    J_perp: np.ndarray
    J_full: np.ndarray

    def validate(self):
        m3 = float(np.mean(self.n))
        m2 = float(np.mean(self.N_perp))
        if abs(m3 - m2) > 1e-12 * max(1.0, abs(m3)):
            raise ValueError("inconsistent moments: mean of n differs from mean of N_perp")
        return self


@dataclass
class KineticDiagnostics:
    time: float
    mass: float
    l2mu_sq: float
    free_energy: float
    d_maxwell: float
    d_gibbs: float
    norm_set: NormSet = None


def mode_degree(nv):
    m = np.zeros(nv)
    for a in range(3):
        sh = [1, 1, 1]
        sh[a] = nv[a]
        m = m + np.arange(nv[a]).reshape(sh)
    return m


def apply_collision(state):
    """Velocity Fokker-Planck operator, diagonal in the Hermite basis:
    mode m is multiplied by |m| = m1 + m2 + m3.  Sign convention: this
    is +(v - grad_v) . grad_v h, subtracted with weight eps^-(1+alpha)
    in the evolution."""
    factors = mode_degree(state.grid.nv)
    out = ops.scale_by_mode(state.flat_v(), factors)
    return state_like(state, out.reshape(state.grid.shape))


def apply_magnetic(state):
    """Perpendicular rotation generator (v_perp . grad_v) h
    = v1 d/dv2 h - v2 d/dv1 h; preserves every shell m1 + m2 = const."""
    c = state.coeffs
    n1, n2 = state.grid.nv[0], state.grid.nv[1]
    out = np.zeros_like(c)
    w_up = np.sqrt(
        np.arange(1, n1)[:, None] * np.arange(1, n2)[None, :]
    )  # target (m1+1, m2-1), source (m1, m2): sqrt((m1+1) m2)
    out[..., 1:, : n2 - 1, :] += w_up[:, :, None] * c[..., : n1 - 1, 1:, :]
    w_dn = np.sqrt(
        np.arange(1, n1)[:, None] * np.arange(1, n2)[None, :]
    )  # target (m1-1, m2+1), source (m1, m2): sqrt(m1 (m2+1))
    out[..., : n1 - 1, 1:, :] -= w_dn[:, :, None] * c[..., 1:, : n2 - 1, :]
    return state_like(state, out)


@lru_cache(maxsize=None)
def _shell_indices(n1, n2):
    shells = []
    for s in range(n1 + n2 - 1):
        m1 = np.arange(max(0, s - n2 + 1), min(s, n1 - 1) + 1, dtype=np.int64)
        m2 = s - m1
        shells.append((m1, m2))
    return shells


def _shell_generator(m1, m2):
    L = len(m1)
    pos = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(m1, m2))}
    G = np.zeros((L, L))
    for i, (a, b) in enumerate(zip(m1, m2)):
        up = (int(a) + 1, int(b) - 1)
        if up in pos:
            G[pos[up], i] += np.sqrt((a + 1.0) * b)
        dn = (int(a) - 1, int(b) + 1)
        if dn in pos:
            G[pos[dn], i] -= np.sqrt(a * (b + 1.0))
    return G


def rotation_plan(nv, theta):
    """Dense orthogonal blocks exp(theta G_s) per perpendicular shell."""
    plan = []
    for m1, m2 in _shell_indices(nv[0], nv[1]):
        if len(m1) == 1:
            continue
        G = _shell_generator(m1, m2)
        R = scipy.linalg.expm(theta * G)
        plan.append((m1, m2, R))
    return plan


def discrete_force(phi, sigma):
    """Force components as the discrete logarithmic gradient of the
    square-root Gibbs weight, F_i = -2 (D_i sqrt(E)) / sqrt(E) with
    E = e^{-sigma phi}.

    Agrees with sigma d_i phi up to spectral aliasing; this exact
    discrete choice makes the transport generator on the half-weighted
    unknown exactly skew with the equilibrium in its kernel, so the
    integrator conserves mass and cannot increase the weighted norm.
    """
    sqrtE = np.exp(-0.5 * sigma * np.asarray(phi, dtype=np.float64))
    force = []
    for g in grad(sqrtE):
        f = (-2.0 * g / sqrtE).ravel()
        force.append(None if float(np.abs(f).max()) < 1e-13 else np.ascontiguousarray(f))
    return sqrtE, force


class TransportOperator:
    """B = v . grad_x - sigma grad_x(phi) . grad_v, realized on the
    half-weighted unknown g = sqrt(E) h where it is exactly
    skew-adjoint in the plain inner product:

        B_g = sum_i [ v_i D_i + (F_i / 2)(raise_i - lower_i) ].
    """

    def __init__(self, grid, phi, sigma):
        self.grid = grid
        self.sigma = sigma
        self.sqrtE, self.force = discrete_force(phi, sigma)
        self._w = self.sqrtE[..., None, None, None]

    def to_half_weighted(self, c):
        return c * self._w

    def from_half_weighted(self, g):
        return g / self._w

    def apply_coeffs(self, g, scale=1.0, out=None):
        """Generator on half-weighted coefficients g (6D array)."""
        nv = self.grid.nv
        dx = [_deriv_array(g, a).reshape(-1, *nv) for a in range(3)]
        return ops.transport_apply(
            g.reshape(-1, *nv), dx[0], dx[1], dx[2],
            self.force[0], self.force[1], self.force[2], scale, out=out,
        )


def apply_transport(state, phi, sigma):
    """B h as a new state (static phi only)."""
    op = TransportOperator(state.grid, phi, sigma)
    g = op.to_half_weighted(state.coeffs)
    out = op.apply_coeffs(g, scale=1.0).reshape(state.grid.shape)
    return state_like(state, op.from_half_weighted(out))


RK4_IMAG_LIMIT = 2.0 * np.sqrt(2.0)


def transport_spectral_radius(grid, force_max=(0.0, 0.0, 0.0)):
    """Upper bound on the spectral radius of eps * transport.

    The streaming symbol is sum_i k_i v_i; its extreme combines the
    largest retained wavenumber pi (nx_i - 2) (Nyquist zeroed) with the
    largest Hermite-truncation velocity eigenvalue (= extreme root of
    the degree-nv_i polynomial) on every axis simultaneously.  The
    force part contributes at most |F_i| sqrt(nv_i - 1) per axis.
    """
    rho = 0.0
    for a in range(3):
        kmax = np.pi * (grid.nx[a] - 2)
        vmax = float(np.abs(np.polynomial.hermite_e.hermegauss(grid.nv[a])[0]).max())
        rho += kmax * vmax + force_max[a] * np.sqrt(grid.nv[a] - 1.0)
    return rho


def cfl_timestep(grid, eps, force_max=(0.0, 0.0, 0.0), safety=0.9):
    """Largest transport step for which RK4 is linearly stable.

    dt <= safety * 2 sqrt(2) * eps / rho, with rho the streaming
    spectral radius above.  This is sharper than the naive
    dx / v_max-style rule, which ignores the three-axis sum of the
    symbol and is unstable at production grids.
    """
    return safety * RK4_IMAG_LIMIT * eps / transport_spectral_radius(grid, force_max)


class KineticStepper:
    """Strang-split integrator bound to one (grid, params, phi) triple.

    Substeps can be toggled for relaxation studies; disabled substeps
    are skipped exactly.
    """

    def __init__(self, grid, p, phi, dt, enable_transport=True,
                 enable_magnetic=True, enable_collision=True):
        self.grid = grid
        self.p = p
        self.phi = np.asarray(phi, dtype=np.float64)
        self.dt = float(dt)
        self.enable_transport = enable_transport
        self.enable_magnetic = enable_magnetic and p.sigma0 != 0
        self.enable_collision = enable_collision
        if enable_transport:
            self.transport = TransportOperator(grid, self.phi, p.sigma)
            fmax = tuple(
                0.0 if f is None else float(np.abs(f).max()) for f in self.transport.force
            )
            limit = cfl_timestep(grid, p.eps, force_max=fmax, safety=1.0)
            if self.dt > limit * (1.0 + 1e-12):
                raise ValueError(
                    f"dt = {dt:g} violates the transport stability bound; "
                    f"admissible dt <= {limit:g}"
                )
        decay = np.exp(-mode_degree(grid.nv) * (0.5 * self.dt / p.eps ** (1.0 + p.alpha)))
        self._decay_half = np.ascontiguousarray(decay)
        self._rotation = None
        if self.enable_magnetic:
            self._rotation = self._build_rotation()

    def _build_rotation(self):
        p = self.p
        base = p.sigma * (0.5 * self.dt / p.eps ** 2)
        if p.b_field is None:
            return [(None, rotation_plan(self.grid.nv, base))]
        b = np.asarray(p.b_field, dtype=np.float64)
        if b.shape != self.grid.nx[:2]:
            raise ValueError("b_field shape must match the perpendicular grid")
        groups = []
        vals, inverse = np.unique(b.ravel(), return_inverse=True)
        nx3 = self.grid.nx[2]
        for i, val in enumerate(vals):
            perp_rows = np.nonzero(inverse == i)[0]
            rows = (perp_rows[:, None] * nx3 + np.arange(nx3)[None, :]).ravel()
            groups.append((rows, rotation_plan(self.grid.nv, base * val)))
        return groups

    def _rotate(self, flat):
        if self._rotation[0][0] is None:
            return ops.shell_rotate(flat, self._rotation[0][1])
        out = flat.copy()
        for rows, plan in self._rotation:
            sub = np.ascontiguousarray(flat[rows])
            out[rows] = ops.shell_rotate(sub, plan)
        return out

    def _transport_rk4(self, c):
        op = self.transport
        dt = self.dt
        scale = -1.0 / self.p.eps
        shape = c.shape
        k1 = op.apply_coeffs(c, scale).reshape(shape)
        k2 = op.apply_coeffs(c + (0.5 * dt) * k1, scale).reshape(shape)
        k3 = op.apply_coeffs(c + (0.5 * dt) * k2, scale).reshape(shape)
        k4 = op.apply_coeffs(c + dt * k3, scale).reshape(shape)
        return c + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)

    def step(self, state):
        # all substeps act on the half-weighted unknown; the velocity
        # substeps commute with the pointwise weight, so converting at
        # the boundaries is exact
        nv = self.grid.nv
        if self.enable_transport:
            c = self.transport.to_half_weighted(state.coeffs)
        else:
            c = state.coeffs
        if self.enable_collision:
            c = ops.scale_by_mode(c.reshape(-1, *nv), self._decay_half).reshape(c.shape)
        if self.enable_magnetic:
            c = self._rotate(np.ascontiguousarray(c.reshape(-1, *nv))).reshape(c.shape)
        if self.enable_transport:
            c = self._transport_rk4(c)
        if self.enable_magnetic:
            c = self._rotate(np.ascontiguousarray(c.reshape(-1, *nv))).reshape(c.shape)
        if self.enable_collision:
            c = ops.scale_by_mode(c.reshape(-1, *nv), self._decay_half).reshape(c.shape)
        c = c.reshape(state.grid.shape)
        if self.enable_transport:
            c = self.transport.from_half_weighted(c)
        return state_like(state, c)


def step(state, dt, p, phi, **toggles):
    """Advance one Strang step; builds a stepper per call.  Loops should
    construct a KineticStepper once and reuse it."""
    return KineticStepper(state.grid, p, phi, dt, **toggles).step(state)


@lru_cache(maxsize=8)
def _hermite_nodes(q):
    nodes, weights = np.polynomial.hermite_e.hermegauss(q)
    weights = weights / np.sqrt(2.0 * np.pi)
    return nodes, weights


@lru_cache(maxsize=32)
def _hermite_vandermonde(q, n):
    nodes, _ = _hermite_nodes(q)
    V = np.zeros((q, n))
    V[:, 0] = 1.0
    if n > 1:
        V[:, 1] = nodes
    for k in range(1, n - 1):
        V[:, k + 1] = (nodes * V[:, k] - np.sqrt(k) * V[:, k - 1]) / np.sqrt(k + 1.0)
    return V


class NegativeDistributionError(ValueError):
    pass


def free_energy(state, phi, sigma, quad_points=None, strict=False):
    """Relative entropy of f against the Gibbs-Maxwell equilibrium,
    evaluated as the integral of h ln h in the weighted measure.

    h is reconstructed on a Gauss-Hermite velocity grid.  Truncation
    produces tiny negative point values in the far tails; those are
    clipped (the integrand tends to zero there).  Negativity beyond
    1e-8 of max f is reported: a warning by default, or
    NegativeDistributionError when ``strict`` is set.
    """
    grid = state.grid
    q = quad_points or max(grid.nv) + 4
    h = state.coeffs
    for a in range(3):
        V = _hermite_vandermonde(q, grid.nv[a])
        h = np.tensordot(h, V, axes=([3], [1]))
    # h now has shape (nx1, nx2, nx3, q, q, q)
    nodes, wq = _hermite_nodes(q)
    E = gibbs_weight(phi, sigma)
    gauss = np.exp(-0.5 * nodes ** 2) / np.sqrt(2.0 * np.pi)
    m3 = gauss[:, None, None] * gauss[None, :, None] * gauss[None, None, :]
    f_vals = h * E[..., None, None, None] * m3
    fmax = float(f_vals.max())
    fmin = float(f_vals.min())
    if fmin < -1e-8 * max(fmax, 1e-300):
        msg = (
            f"distribution substantially negative on the quadrature set "
            f"(min f = {fmin:.3e}, max f = {fmax:.3e})"
        )
        if strict:
            raise NegativeDistributionError(msg)
        warnings.warn(msg + "; clipping for the entropy integrand")
    hc = np.clip(h, 1e-300, None)
    integrand = hc * np.log(hc)
    w3 = wq[:, None, None] * wq[None, :, None] * wq[None, None, :]
    per_x = np.tensordot(integrand, w3, axes=([3, 4, 5], [0, 1, 2]))
    return float(np.mean(E * per_x) * grid.npoints_x * grid.x_weight)


def mass(state, phi, sigma):
    E = gibbs_weight(phi, sigma)
    return float(np.mean(E * state.coeffs[..., 0, 0, 0]))


def moments(state, phi, sigma, eps):
    """Density n, its parallel integral N, and the rescaled currents."""
    E = gibbs_weight(phi, sigma)
    c = state.coeffs
    n = E * c[..., 0, 0, 0]
    N_perp = n.mean(axis=2)
    J_full = np.stack(
        [
            E * c[..., 1, 0, 0] / eps,
            E * c[..., 0, 1, 0] / eps,
            E * c[..., 0, 0, 1] / eps,
        ]
    )
    J_perp = J_full[:2].mean(axis=3)
    return MomentSet(n=n, N_perp=N_perp, J_perp=J_perp, J_full=J_full).validate()


def maxwellian_distance(state, phi, sigma):
    """(d_maxwell, d_gibbs): distance of f from its own local Maxwellian
    in L2(M^-1 dx dv), and of n from its own parallel Gibbs profile in
    L2(T^3)."""
    grid = state.grid
    E = gibbs_weight(phi, sigma)
    c = state.coeffs
    total = np.einsum("xyzabc,xyzabc->xyz", c, c)
    c0 = c[..., 0, 0, 0]
    nonmax = np.clip(total - c0 ** 2, 0.0, None)
    d_maxwell = float(np.sqrt(np.mean(E ** 2 * nonmax)))
    n = E * c0
    Zpar = E.mean(axis=2)
    N = n.mean(axis=2)
    gibbs = (N / Zpar)[:, :, None] * E
    d_gibbs = float(np.sqrt(np.mean((n - gibbs) ** 2)))
    return d_maxwell, d_gibbs


def diagnostics(state, phi, sigma, t=0.0, with_norms=False, second_order=True,
                with_free_energy=True):
    d_max, d_gib = maxwellian_distance(state, phi, sigma)
    fe = free_energy(state, phi, sigma) if with_free_energy else np.nan
    ns = partial_norms(state, phi, sigma, second_order=second_order) if with_norms else None
    return KineticDiagnostics(
        time=t,
        mass=mass(state, phi, sigma),
        l2mu_sq=weighted_inner(state, state, phi, sigma),
        free_energy=fe,
        d_maxwell=d_max,
        d_gibbs=d_gib,
        norm_set=ns,
    )
