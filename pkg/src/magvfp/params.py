"""Physical parameters and their reduction to the dimensionless model.

The scaled kinetic model is controlled by (eps, alpha, sigma, delta)
plus the magnetic toggle sigma0 and an optional perpendicular magnetic
amplitude profile b(x_perp).  ``nondimensionalize`` maps laboratory
quantities to these numbers using ionic reference scales; thermal
velocities satisfy m_s V_s^2 = k_B theta (hot plasma, common bath
temperature) and the reference potential is k_B theta / q.
"""

from dataclasses import dataclass, replace
import math
import warnings

import numpy as np


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory-frame inputs in SI units."""

    electron_mass: float
    ion_mass: float
    elementary_charge: float
    atomic_number: int
    temperature: float
    magnetic_amplitude: float
    reference_density: float
    system_length: float
    collision_freq_ion: float
    collision_freq_electron: float
    vacuum_permittivity: float
    boltzmann_constant: float

    def __post_init__(self):
        for name in (
            "electron_mass", "ion_mass", "elementary_charge", "temperature",
            "magnetic_amplitude", "reference_density", "system_length",
            "collision_freq_ion", "collision_freq_electron",
            "vacuum_permittivity", "boltzmann_constant",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"invalid parameter: {name} must be strictly positive")
        if int(self.atomic_number) < 1:
            raise ValueError("invalid parameter: atomic_number must be >= 1")


@dataclass(frozen=True)
class ScaledParams:
    """Dimensionless control parameters of the scaled kinetic model."""

    eps: float
    alpha: float
    sigma: int
    delta: float
    sigma0: int = 1
    tau_obs: float = 1.0
    b_field: np.ndarray = None

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class DerivedScales:
    """Reference scales implied by a PhysicalParams set.

    Per-species entries are keyed "electron" / "ion".  The stored
    gamma_mfp_ratio is the modeling closure lambda**(alpha/2) for the
    alpha actually in use; the mean free paths record what the supplied
    collision frequencies give, and implied_alpha reports the exponent
    they would correspond to.
    """

    debye_length: float
    plasma_time: dict
    cyclotron_time: dict
    larmor_radius: dict
    mean_free_path: dict
    lambda_mass_ratio: float
    mu_larmor_ratio: float
    gamma_mfp_ratio: float
    implied_alpha: float = None
    regime_warning: str = None


def nondimensionalize(phys, species, alpha):
    """Reduce physical inputs to scaled parameters for one species.

    species "light": the electron equation in the small mass-ratio
    regime, eps = sqrt(m_e/m_i), sigma = -1, observation time 1.
    species "heavy": the ion equation in the small Larmor-radius
    regime, eps = r_L(ion)/L, alpha = 0, sigma = +1, observation
    time 1/eps.
    """
    if species not in ("light", "heavy"):
        raise ValueError(f"species must be 'light' or 'heavy', got {species!r}")
    kb_theta = phys.boltzmann_constant * phys.temperature
    v_th = {
        "electron": math.sqrt(kb_theta / phys.electron_mass),
        "ion": math.sqrt(kb_theta / phys.ion_mass),
    }
    debye = math.sqrt(
        phys.vacuum_permittivity * kb_theta
        / (phys.elementary_charge ** 2 * phys.reference_density)
    )
    cyc = {
        s: m / (phys.elementary_charge * phys.magnetic_amplitude)
        for s, m in (("electron", phys.electron_mass), ("ion", phys.ion_mass))
    }
    larmor = {s: v_th[s] * cyc[s] for s in v_th}
    mfp = {
        "electron": v_th["electron"] / phys.collision_freq_electron,
        "ion": v_th["ion"] / phys.collision_freq_ion,
    }
    lam = phys.electron_mass / phys.ion_mass
    L = phys.system_length
    mu = larmor["ion"] / L
    delta = debye / L

    if species == "heavy":
        alpha = 0.0
        eps, sigma, tau_obs = mu, 1, 1.0 / mu
    else:
        eps, sigma, tau_obs = math.sqrt(lam), -1, 1.0

    warning = None
    if species == "light" and lam >= 1.0:
        warning = (
            f"regime violation: mass ratio lambda = {lam:g} >= 1, the light-species "
            "scaling assumes electrons much lighter than ions"
        )
        warnings.warn(warning)

    implied = None
    if lam != 1.0:
        implied = 2.0 * math.log(mfp["electron"] / mfp["ion"]) / math.log(lam)

    scaled = ScaledParams(
        eps=eps, alpha=float(alpha), sigma=sigma, delta=delta, sigma0=1, tau_obs=tau_obs
    )
    scales = DerivedScales(
        debye_length=debye,
        plasma_time={s: debye / v_th[s] for s in v_th},
        cyclotron_time=cyc,
        larmor_radius=larmor,
        mean_free_path=mfp,
        lambda_mass_ratio=lam,
        mu_larmor_ratio=mu,
        gamma_mfp_ratio=lam ** (float(alpha) / 2.0),
        implied_alpha=implied,
        regime_warning=warning,
    )
    return validate_scaled(scaled), scales


def validate_scaled(p, context="asymptotic"):
    """Check every ScaledParams invariant; report violations by name.

    ``context="probe"`` relaxes the alpha range to alpha > -1, which the
    regime-probe experiments need (they deliberately visit alpha >= 1).
    """
    problems = []
    if not p.eps > 0:
        problems.append("eps must be positive")
    if not p.delta > 0:
        problems.append("delta must be positive")
    if p.sigma not in (-1, 1):
        problems.append("sigma must be -1 or +1")
    if p.sigma0 not in (0, 1):
        problems.append("sigma0 must be 0 or 1")
    if not p.tau_obs > 0:
        problems.append("tau_obs must be positive")
    if context == "asymptotic":
        if not (-1.0 < p.alpha < 1.0):
            problems.append("alpha must lie in (-1, 1) outside regime probes")
    elif not p.alpha > -1.0:
        problems.append("alpha must exceed -1")
    if p.b_field is not None:
        b = np.asarray(p.b_field, dtype=np.float64)
        if b.ndim != 2:
            problems.append("b_field must be a 2D perpendicular profile")
        elif not np.all(np.isfinite(b)) or float(b.min()) <= 0.0:
            problems.append("b not bounded away from zero")
    if problems:
        raise ValueError("invalid scaled parameters: " + "; ".join(problems))
    return p
