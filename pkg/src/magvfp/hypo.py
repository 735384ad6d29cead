"""Time-weighted anisotropic Lyapunov functionals and decay certificates.

The functional couples the plain weighted L2 norm with eps- and
time-weighted first derivatives and mixed cross terms, separately in
the directions parallel and perpendicular to the magnetic field:

    |||h|||^2 = ||h||^2
      + g1 eps^b1 w  ||dv h||^2 + g2 eps^b2 w^3 ||dx h||^2
      + 2 g3 eps^b3 w^2 <dv h, dx h>          (per direction)

with w = min(1, t / eps^(1+alpha)), and the partial dissipation

    D = eps^-(1+a) ||grad_v h||^2
      + eps^(b1-1-a) w   ||grad_v dv h||^2
      + eps^(b2-1-a) w^3 ||grad_v dx h||^2
      + eps^(b3-1)   w^2 ||dx h||^2           (per direction, a = alpha).

The free exponents must satisfy an admissibility box (lower bounds from
the magnetic term and time regularization, upper bounds from the
Fokker-Planck balance); minimizing the cross exponents under those
constraints gives the optimal table implemented here.  The weights are
powers of a single small eta; eta <= 1/16 makes the quadratic form
uniformly equivalent to its diagonal part.
"""

from dataclasses import dataclass

import numpy as np

ETA_DEFAULT = 1.0 / 16.0
C_EXPONENTS = (1.0, 2.0, 7.0 / 4.0)


@dataclass(frozen=True)
class HypoExponents:
    beta_par: tuple
    beta_perp: tuple


@dataclass(frozen=True)
class HypoWeights:
    eta: float
    gamma_par: tuple
    gamma_perp: tuple


def exponent_table(alpha):
    """Optimal exponent sextuple for |alpha| < 1.

    The cross exponents sit at their admissible minimum, beta_par3 =
    |alpha| and beta_perp3 = 2 - alpha; this forces (0, 2 alpha) or
    (-alpha, -alpha) for the parallel pair depending on the sign of
    alpha, and (1 - alpha, 2) perpendicular.
    """
    if not abs(alpha) < 1.0:
        raise ValueError(f"alpha must satisfy |alpha| < 1, got {alpha}")
    if alpha >= 0:
        beta_par = (0.0, 2.0 * alpha, alpha)
    else:
        beta_par = (-alpha, -alpha, -alpha)
    return HypoExponents(
        beta_par=beta_par, beta_perp=(1.0 - alpha, 2.0, 2.0 - alpha)
    )


def validate_condbeta(alpha, exps):
    """Check the eight admissibility inequalities; returns (ok, report)
    with one signed margin per inequality (nonnegative = satisfied)."""
    bp = exps.beta_par
    bq = exps.beta_perp
    report = {
        "par_lower": bp[2] - max(abs(alpha), 0.5 * (bp[0] + bp[1])),
        "par_upper_fp1": alpha + 2.0 * bp[0] - bp[2],
        "par_upper_fp2": alpha + 2.0 * bp[1] - bp[2],
        "par_upper_time": bp[1] - alpha - bp[2],
        "perp_lower": bq[2] - max(2.0 - alpha, 0.5 * (bq[0] + bq[1])),
        "perp_upper_fp1": alpha + 2.0 * bq[0] - bq[2],
        "perp_upper_fp2": alpha + 2.0 * bq[1] - bq[2],
        "perp_upper_time": bq[1] - alpha - bq[2],
    }
    ok = all(v >= -1e-12 for v in report.values())
    return ok, report


def gamma_weights(eta):
    """Weights eta^c with c = (1, 2, 7/4) in both directions."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    g = tuple(eta ** c for c in C_EXPONENTS)
    return HypoWeights(eta=eta, gamma_par=g, gamma_perp=g)


def time_weight(t, eps, alpha):
    return min(1.0, t / eps ** (1.0 + alpha))


class IndefiniteFormError(ValueError):
    pass


def hypo_norm(ns, t, eps, alpha, exps=None, w=None):
    """Evaluate the seven-term time-weighted quadratic form and return
    its square root.

    At t = 0 every weighted term vanishes and the value is ns.n0.  An
    inadmissible eta can make the form negative through a cross term;
    that raises IndefiniteFormError naming the offending direction.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    exps = exps or exponent_table(alpha)
    w = w or gamma_weights(ETA_DEFAULT)
    wt = time_weight(t, eps, alpha)
    par = (
        w.gamma_par[0] * eps ** exps.beta_par[0] * wt * ns.dv_par ** 2
        + w.gamma_par[1] * eps ** exps.beta_par[1] * wt ** 3 * ns.dx_par ** 2
        + 2.0 * w.gamma_par[2] * eps ** exps.beta_par[2] * wt ** 2 * ns.cross_par
    )
    perp = (
        w.gamma_perp[0] * eps ** exps.beta_perp[0] * wt * ns.dv_perp ** 2
        + w.gamma_perp[1] * eps ** exps.beta_perp[1] * wt ** 3 * ns.dx_perp ** 2
        + 2.0 * w.gamma_perp[2] * eps ** exps.beta_perp[2] * wt ** 2 * ns.cross_perp
    )
    form = ns.n0 ** 2 + par + perp
    if form < 0.0:
        side = "parallel" if par < perp else "perpendicular"
        raise IndefiniteFormError(
            f"indefinite form (value {form:.3e}): the {side} cross term dominates; "
            "eta is too large for norm equivalence"
        )
    return float(np.sqrt(form))


def hypo_dissipation(ns, t, eps, alpha, exps=None):
    """Seven-term partial dissipation with the printed eps and time
    weights; needs the second-order NormSet entries."""
    if ns.grad_v is None:
        raise ValueError("NormSet lacks second-order entries; recompute with second_order=True")
    exps = exps or exponent_table(alpha)
    wt = time_weight(t, eps, alpha)
    a1 = 1.0 + alpha
    bp = exps.beta_par
    bq = exps.beta_perp
    return float(
        eps ** (-a1) * ns.grad_v ** 2
        + eps ** (bp[0] - a1) * wt * ns.grad_v_dv_par ** 2
        + eps ** (bp[1] - a1) * wt ** 3 * ns.grad_v_dx_par ** 2
        + eps ** (bp[2] - 1.0) * wt ** 2 * ns.dx_par ** 2
        + eps ** (bq[0] - a1) * wt * ns.grad_v_dv_perp ** 2
        + eps ** (bq[1] - a1) * wt ** 3 * ns.grad_v_dx_perp ** 2
        + eps ** (bq[2] - 1.0) * wt ** 2 * ns.dx_perp ** 2
    )


@dataclass
class DecayCertificate:
    passed: bool
    K_hat: float
    h0_norm: float
    monotone: bool
    equilibrium: bool
    violation_time: float = None
    worst_ratio: float = None
    dissipation_integral: float = None


def certify_decay(times, norms, dissipations, h0_norm=None, slack=1e-8):
    """Largest K >= 0 with norm(t)^2 + K int_0^t D <= ||h0||^2 (1+slack)
    at every sample, plus a monotonicity report of the norm.

    ``times`` must start at 0 where the functional equals the plain
    norm of the initial state; sampling must be dense enough that the
    trapezoid quadrature of D is trustworthy (about 1%).
    """
    t = np.asarray(times, dtype=np.float64)
    n = np.asarray(norms, dtype=np.float64)
    d = np.asarray(dissipations, dtype=np.float64)
    if t[0] != 0.0:
        raise ValueError("the diagnostics stream must start at t = 0")
    h0 = float(n[0]) if h0_norm is None else float(h0_norm)
    scale = max(h0, 1e-300)
    if h0 < 1e-14 and float(np.max(n)) < 1e-14 and float(np.max(d)) < 1e-14:
        return DecayCertificate(
            passed=True, K_hat=np.inf, h0_norm=h0, monotone=True, equilibrium=True
        )
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))])
    budget = h0 ** 2 * (1.0 + slack)
    worst = float(np.max(n) / scale)
    if float(np.max(n)) > h0 * (1.0 + slack):
        i = int(np.argmax(n > h0 * (1.0 + slack)))
        return DecayCertificate(
            passed=False, K_hat=0.0, h0_norm=h0,
            monotone=bool(np.all(np.diff(n) <= 1e-12 * scale)),
            equilibrium=False, violation_time=float(t[i]), worst_ratio=worst,
            dissipation_integral=float(cum[-1]),
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = (budget - n ** 2) / cum
    ratios = ratios[cum > 0]
    k_hat = float(np.min(ratios)) if ratios.size else np.inf
    return DecayCertificate(
        passed=k_hat > 0.0, K_hat=k_hat, h0_norm=h0,
        monotone=bool(np.all(np.diff(n) <= 1e-12 * scale)),
        equilibrium=False, worst_ratio=worst,
        dissipation_integral=float(cum[-1]),
    )
