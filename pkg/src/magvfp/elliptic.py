"""Nonlinear elliptic solvers for the Poisson-Boltzmann couplings.

Light species on T^3: the field minimizes

    J[psi] = (delta^2/2) int |grad psi|^2
             + int_{T^2} N ln( int_T e^psi dx_par )  -  int ubar psi

whose Euler-Lagrange equation is the anisotropic equation
-delta^2 Lap psi = ubar - N e^psi / int_T e^psi.  Heavy species reduce
to a classical Poisson-Boltzmann problem on T^2.  Both functionals are
strictly convex on the mean-zero space, so a damped Newton iteration
with Armijo backtracking is globally convergent and the energy
decreases on every accepted step.
"""

from dataclasses import dataclass, field

import numpy as np

from .fields import grad, h1_norm, helmholtz_inverse, laplacian, logmeanexp, lp_norm, w2p_norm

DEFAULT_TOL = 1e-10
MAX_NEWTON = 200


class EllipticNonConvergence(RuntimeError):
    def __init__(self, message, residual_norm):
        super().__init__(message)
        self.residual_norm = residual_norm


@dataclass
class EllipticProblemLight:
    """Data of the light-species (3D anisotropic) problem."""

    N: np.ndarray
    ubar: np.ndarray
    delta: float

    def __post_init__(self):
        self.N = np.asarray(self.N, dtype=np.float64)
        self.ubar = np.asarray(self.ubar, dtype=np.float64)
        if self.N.ndim != 2 or self.ubar.ndim != 3:
            raise ValueError("invalid problem: N must be 2D, ubar 3D")
        if self.N.min() < 0 or self.ubar.min() < 0:
            raise ValueError("invalid problem: N and ubar must be nonnegative")
        for name, f in (("N", self.N), ("ubar", self.ubar)):
            if abs(float(np.mean(f)) - 1.0) > 1e-12:
                raise ValueError(f"invalid problem: {name} must have unit mean")
        if not self.delta > 0:
            raise ValueError("invalid problem: delta must be positive")


@dataclass
class EllipticSolution:
    phi: np.ndarray
    residual_norm: float
    iterations: int
    energy: float
    energy_history: list = field(default_factory=list)


def _demean(f):
    return f - np.mean(f)


def _par_softmax(psi):
    """e^psi / int_T e^psi dx_par, columnwise along the parallel axis."""
    m = psi.max(axis=2, keepdims=True)
    e = np.exp(psi - m)
    return e / e.mean(axis=2, keepdims=True)


def _dirichlet(psi, delta):
    # -(delta^2/2) <psi, Lap psi>: conjugate to the residual's Laplacian
    # on every mode, Nyquist included
    return -0.5 * delta ** 2 * float(np.mean(psi * laplacian(psi)))


def energy_light(psi, prob):
    """Convex energy whose critical point is the light-species field."""
    quad = _dirichlet(psi, prob.delta)
    entropy = float(np.mean(prob.N * logmeanexp(psi, axis=2)))
    source = float(np.mean(prob.ubar * psi))
    return quad + entropy - source


def residual_light(psi, prob):
    """L2-gradient of energy_light, projected onto mean zero."""
    r = -prob.delta ** 2 * laplacian(psi) - prob.ubar + prob.N[:, :, None] * _par_softmax(psi)
    return _demean(r)


def _hessian_light(psi, prob):
    p = _par_softmax(psi)
    Np = prob.N[:, :, None] * p

    def apply(chi):
        colmean = np.mean(p * chi, axis=2, keepdims=True)
        return _demean(-prob.delta ** 2 * laplacian(chi) + Np * (chi - colmean))

    return apply


def energy_heavy(psi, N, delta):
    m = psi.max()
    log_part = float(np.log(np.mean(np.exp(psi - m))) + m)
    return _dirichlet(psi, delta) - float(np.mean(N * psi)) + log_part


def residual_heavy(psi, N, delta):
    m = psi.max()
    e = np.exp(psi - m)
    q = e / e.mean()
    return _demean(-delta ** 2 * laplacian(psi) - N + q)


def _hessian_heavy(psi, delta):
    m = psi.max()
    e = np.exp(psi - m)
    q = e / e.mean()

    def apply(chi):
        return _demean(-delta ** 2 * laplacian(chi) + q * chi - q * np.mean(q * chi))

    return apply


def _pcg(apply_h, rhs, delta_sq, tol, max_iter=400):
    """Preconditioned CG on the mean-zero subspace; preconditioner is
    (delta^2 (-Lap) + 1)^{-1} applied in Fourier space."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = helmholtz_inverse(r, delta_sq)
    p = z.copy()
    rz = float(np.mean(r * z))
    rhs_norm = np.sqrt(float(np.mean(rhs * rhs)))
    if rhs_norm == 0.0:
        return x
    for _ in range(max_iter):
        hp = apply_h(p)
        alpha = rz / float(np.mean(p * hp))
        x += alpha * p
        r -= alpha * hp
        if np.sqrt(float(np.mean(r * r))) <= tol * rhs_norm:
            break
        z = helmholtz_inverse(r, delta_sq)
        rz_new = float(np.mean(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return _demean(x)


def _newton(x0, energy, residual, hessian, delta, tol, max_iter):
    psi = _demean(np.array(x0, dtype=np.float64))
    e = energy(psi)
    history = [e]
    for it in range(max_iter):
        r = residual(psi)
        rnorm = np.sqrt(float(np.mean(r * r)))
        if rnorm <= tol:
            return psi, rnorm, it, history
        forcing = min(0.1, np.sqrt(rnorm))
        step = _pcg(hessian(psi), -r, delta ** 2, forcing)
        slope = float(np.mean(r * step))
        if slope >= 0.0:
            step = -r
            slope = -rnorm ** 2
        if rnorm <= 1e-6 * (1.0 + abs(e)):
            # local quadratic phase: energy decrements fall below float
            # noise, accept on residual contraction instead
            cand = _demean(psi + step)
            rc = residual(cand)
            if np.sqrt(float(np.mean(rc * rc))) <= 0.5 * rnorm:
                psi, e = cand, energy(cand)
                history.append(e)
                continue
        t = 1.0
        for _ in range(60):
            cand = _demean(psi + t * step)
            e_cand = energy(cand)
            if e_cand <= e + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            raise EllipticNonConvergence(
                f"line search stalled at residual {rnorm:.3e}", rnorm
            )
        psi, e = cand, e_cand
        history.append(e)
    r = residual(psi)
    rnorm = np.sqrt(float(np.mean(r * r)))
    if rnorm <= tol:
        return psi, rnorm, max_iter, history
    raise EllipticNonConvergence(
        f"Newton did not reach tol={tol:g} in {max_iter} iterations; "
        f"last residual {rnorm:.3e}", rnorm
    )


def solve_pb_light(prob, tol=DEFAULT_TOL, max_iter=MAX_NEWTON, x0=None):
    """Minimize the light-species energy by damped Newton with
    spectrally preconditioned CG inner solves."""
    x0 = np.zeros(prob.ubar.shape) if x0 is None else x0
    psi, rnorm, its, hist = _newton(
        x0,
        lambda f: energy_light(f, prob),
        lambda f: residual_light(f, prob),
        lambda f: _hessian_light(f, prob),
        prob.delta, tol, max_iter,
    )
    return EllipticSolution(phi=psi, residual_norm=rnorm, iterations=its,
                            energy=hist[-1], energy_history=hist)


def solve_pb_heavy(N, delta, tol=DEFAULT_TOL, max_iter=MAX_NEWTON, x0=None):
    """Classical Poisson-Boltzmann on T^2:
    -delta^2 Lap phi = N - e^phi / int e^phi, mean-zero phi."""
    N = np.asarray(N, dtype=np.float64)
    if N.ndim != 2:
        raise ValueError("invalid problem: N must be a 2D field")
    if N.min() < 0:
        raise ValueError("invalid problem: N must be nonnegative")
    if abs(float(np.mean(N)) - 1.0) > 1e-12:
        raise ValueError("invalid problem: N must have unit mean")
    if not delta > 0:
        raise ValueError("invalid problem: delta must be positive")
    x0 = np.zeros_like(N) if x0 is None else x0
    psi, rnorm, its, hist = _newton(
        x0,
        lambda f: energy_heavy(f, N, delta),
        lambda f: residual_heavy(f, N, delta),
        lambda f: _hessian_heavy(f, delta),
        delta, tol, max_iter,
    )
    return EllipticSolution(phi=psi, residual_norm=rnorm, iterations=its,
                            energy=hist[-1], energy_history=hist)


def parallel_average(phi, sigma):
    """Nonlinear reduction along the field direction:
    -sigma ln( int_T e^{-sigma phi} dx_par ), overflow-guarded."""
    return -sigma * logmeanexp(-sigma * np.asarray(phi, dtype=np.float64), axis=2)


def mixed_residual_heavy(phi, N, delta):
    """Residual of the 3D heavy-species mixed equation at a 3D field:
    -delta^2 Lap phi - N e^{-phi}/int_T e^{-phi} + e^phi/int_{T^3} e^phi."""
    m = (-phi).max(axis=2, keepdims=True)
    e = np.exp(-phi - m)
    slaved = N[:, :, None] * e / e.mean(axis=2, keepdims=True)
    m3 = phi.max()
    e3 = np.exp(phi - m3)
    gibbs = e3 / e3.mean()
    return -delta ** 2 * laplacian(phi) - slaved + gibbs


def lipschitz_probe(prob, prob_perturbed, tol=DEFAULT_TOL, p=2.0):
    """Empirical stability ratios between two solved light problems.

    Returns the H^1-over-L^{4/3} quotient from the basic well-posedness
    estimate and the W^{2,p}-over-L^p analogue.  The constants are not
    asserted anywhere; this exists to track them across perturbation
    families.
    """
    dN = prob_perturbed.N - prob.N
    denom = lp_norm(dN, 4.0 / 3.0)
    if denom == 0.0:
        raise ValueError("undefined ratio: perturbed problem has identical N")
    a = solve_pb_light(prob, tol=tol)
    b = solve_pb_light(prob_perturbed, tol=tol)
    dphi = b.phi - a.phi
    return {
        "h1_over_l43": h1_norm(dphi) / denom,
        "w2p_over_lp": w2p_norm(dphi, p) / lp_norm(dN, p),
        "p": p,
    }
