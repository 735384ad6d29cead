"""Reduced perpendicular transport slaved to the elliptic couplings.

The averaged field phit on T^2 advects the perpendicular profile N by
the divergence-free drift (grad phit)^perp:

    dN/dt + div( N U ) = 0,
    U = (grad phit)^perp                      (uniform field amplitude)
    U = (1/b) (grad phit)^perp - (sigma/b^2) (grad b)^perp   (variable b)

Advection is pseudo-spectral in conservative form with the 2/3
dealiasing rule and RK4 in time; the zero mode of a spectral divergence
vanishes, so the mass of N is conserved exactly.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from .elliptic import (
    EllipticProblemLight,
    parallel_average,
    solve_pb_heavy,
    solve_pb_light,
)
from .fields import grad

GC_CFL = 0.5


@dataclass(frozen=True)
class ReducedState:
    """Perpendicular profile with its coupling data."""

    N: np.ndarray
    time: float
    species: str
    delta: float
    ubar: np.ndarray = None

    def validate(self):
        n = self.N
        if float(n.min()) < -1e-10 * max(float(n.max()), 1e-30):
            raise ValueError(
                f"N developed negative values beyond the spectral-undershoot "
                f"tolerance (min {n.min():.3e}) at t = {self.time:g}"
            )
        if abs(float(n.mean()) - 1.0) > 1e-12 * max(1.0, abs(float(n.mean()))):
            raise ValueError(f"N mass {n.mean()!r} drifted from one at t = {self.time:g}")
        return self


def perp(g1, g2):
    """(g1, g2)^perp = (-g2, g1)."""
    return -g2, g1


def drift_field(phit, b=None, sigma=None):
    """Drift velocity from the averaged field, optionally with a
    perpendicular magnetic amplitude profile b(x_perp) > 0."""
    g1, g2 = grad(np.asarray(phit, dtype=np.float64))
    u1, u2 = perp(g1, g2)
    if b is None:
        return np.stack([u1, u2])
    b = np.asarray(b, dtype=np.float64)
    if float(b.min()) <= 0.0:
        raise ValueError("b must be strictly positive")
    if sigma is None:
        raise ValueError("sigma is required for the variable-amplitude drift")
    db1, db2 = grad(b)
    w1, w2 = perp(db1, db2)
    return np.stack([u1 / b - sigma * w1 / b ** 2, u2 / b - sigma * w2 / b ** 2])


def slaved_density(N, phi, sigma):
    """Anisotropic Boltzmann-Gibbs reconstruction
    n(x) = N(x_perp) e^{-sigma phi} / int_T e^{-sigma phi} dy_par."""
    if float(np.min(N)) < 0:
        raise ValueError("N must be nonnegative")
    s = -sigma * np.asarray(phi, dtype=np.float64)
    m = s.max(axis=2, keepdims=True)
    e = np.exp(s - m)
    return np.asarray(N)[:, :, None] * e / e.mean(axis=2, keepdims=True)


def _dealias_mask(shape):
    n1, n2 = shape
    k1 = np.abs(np.fft.fftfreq(n1, d=1.0 / n1))[:, None]
    k2 = np.abs(np.fft.rfftfreq(n2, d=1.0 / n2))[None, :]
    return (k1 <= n1 / 3.0) & (k2 <= n2 / 3.0)


def _dealias(f):
    mask = _dealias_mask(f.shape)
    return sfft.irfft2(sfft.rfft2(f) * mask, s=f.shape)


def _masked_div(f1, f2):
    shape = f1.shape
    mask = _dealias_mask(shape)
    k1 = 2j * np.pi * np.fft.fftfreq(shape[0], d=1.0 / shape[0])[:, None]
    k2 = 2j * np.pi * np.fft.rfftfreq(shape[1], d=1.0 / shape[1])[None, :]
    out = sfft.irfft2((sfft.rfft2(f1) * k1 + sfft.rfft2(f2) * k2) * mask, s=shape)
    return out


def gc_cfl_timestep(shape, U, c_cfl=GC_CFL):
    umax = float(np.abs(U).max())
    dx = 1.0 / max(shape)
    if umax == 0.0:
        return np.inf
    return c_cfl * dx / umax


def gc_step(state, U, dt):
    """One RK4 conservative pseudo-spectral step of dN/dt = -div(N U)."""
    limit = gc_cfl_timestep(state.N.shape, U)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(f"dt = {dt:g} violates the advection CFL; admissible dt <= {limit:g}")
    u1 = _dealias(U[0])
    u2 = _dealias(U[1])

    def rhs(n):
        nd = _dealias(n)
        return -_masked_div(nd * u1, nd * u2)

    n = state.N
    k1 = rhs(n)
    k2 = rhs(n + 0.5 * dt * k1)
    k3 = rhs(n + 0.5 * dt * k2)
    k4 = rhs(n + dt * k3)
    n_new = n + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return replace(state, N=n_new, time=state.time + dt)


def _coupled_drift(state, p, warm_start):
    """Solve the species' elliptic problem for the current N and return
    (U, phi_tilde, new warm start, 3D field or None)."""
    if state.species == "heavy":
        sol = solve_pb_heavy(state.N, state.delta, x0=warm_start)
        phit = sol.phi  # x_par-independent field: the average is itself
        phi3 = None
    else:
        prob = EllipticProblemLight(N=state.N, ubar=state.ubar, delta=state.delta)
        sol = solve_pb_light(prob, x0=warm_start)
        phit = parallel_average(sol.phi, sigma=-1)
        phi3 = sol.phi
    U = drift_field(phit, b=p.b_field, sigma=p.sigma)
    return U, phit, sol.phi, phi3


@dataclass
class ReducedSample:
    time: float
    N: np.ndarray
    mass: float
    l2: float
    u_max: float
    phit: np.ndarray = None


def _advect(state, drift_source, T, dt, save_every, p, grad_bound):
    """March the transport equation with per-step drift from
    drift_source(state, step_index); collect samples."""
    samples = []
    nsteps = int(round(T / dt))
    warm = None
    for k in range(nsteps + 1):
        U, phit, warm = drift_source(state, k, warm)
        gmax = float(np.abs(grad(phit)[0]).max() + np.abs(grad(phit)[1]).max())
        if gmax > grad_bound:
            raise RuntimeError(
                f"drift gradient {gmax:.3e} exceeded the blow-up guard "
                f"{grad_bound:g} at t = {state.time:g}"
            )
        if k % save_every == 0 or k == nsteps:
            samples.append(
                ReducedSample(
                    time=state.time,
                    N=state.N.copy(),
                    mass=float(state.N.mean()),
                    l2=float(np.sqrt(np.mean(state.N ** 2))),
                    u_max=float(np.abs(U).max()),
                    phit=phit.copy(),
                )
            )
        if k == nsteps:
            break
        state = gc_step(state, U, dt).validate()
    return state, samples


def solve_reduced(N_in, p, T, mode="coupled", ubar=None, dt=None,
                  save_every=1, grad_bound=200.0, picard_iterations=4):
    """Integrate the reduced model over [0, T].

    mode "coupled": the elliptic problem is re-solved from the current
    N every step (warm-started Newton).  mode "picard": frozen-field
    iteration; iterate n+1 is advected by the field history of iterate
    n, starting from a zero field, and all iterates are returned for
    convergence studies.
    """
    species = "heavy" if p.sigma == 1 else "light"
    if species == "light" and ubar is None:
        raise ValueError("light-species reduced runs need the background density ubar")
    N_in = np.asarray(N_in, dtype=np.float64)
    if float(N_in.min()) < 0 or abs(float(N_in.mean()) - 1.0) > 1e-12:
        raise ValueError("N_in must be nonnegative with unit mean")
    state0 = ReducedState(N=N_in, time=0.0, species=species, delta=p.delta, ubar=ubar)

    if dt is None:
        U0, _, _, _ = _coupled_drift(state0, p, None)
        umax = max(float(np.abs(U0).max()), 1e-3)
        dt = 0.5 * GC_CFL / (max(N_in.shape) * umax)

    if mode == "coupled":
        def source(state, k, warm):
            U, phit, warm_new, _ = _coupled_drift(state, p, warm)
            return U, phit, warm_new

        _, samples = _advect(state0, source, T, dt, save_every, p, grad_bound)
        return [samples]

    if mode != "picard":
        raise ValueError(f"mode must be 'coupled' or 'picard', got {mode!r}")

    nsteps = int(round(T / dt))
    iterates = []
    prev_fields = None  # field history of the previous iterate, one per step
    for _ in range(picard_iterations):
        state = state0
        samples = []
        own_fields = []
        warm = None
        for k in range(nsteps + 1):
            # this iterate's own field, kept for the next iterate
            _, phit_own, warm, _ = _coupled_drift(state, p, warm)
            own_fields.append(phit_own)
            if prev_fields is None:
                U = np.zeros((2,) + state.N.shape)
                phit = np.zeros_like(state.N)
            else:
                phit = prev_fields[min(k, len(prev_fields) - 1)]
                U = drift_field(phit, b=p.b_field, sigma=p.sigma)
            samples.append(
                ReducedSample(
                    time=state.time,
                    N=state.N.copy(),
                    mass=float(state.N.mean()),
                    l2=float(np.sqrt(np.mean(state.N ** 2))),
                    u_max=float(np.abs(U).max()),
                    phit=phit_own.copy(),
                )
            )
            if k == nsteps:
                break
            state = gc_step(state, U, dt).validate()
        iterates.append(samples)
        prev_fields = own_fields
    return iterates
