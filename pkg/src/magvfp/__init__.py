"""magvfp: a numerical laboratory for strongly magnetized kinetic plasmas.

Hermite-spectral integration of the scaled Vlasov-Fokker-Planck
equation with a strong uniform (or unidirectional variable-amplitude)
magnetic field, the anisotropic Poisson-Boltzmann elliptic solvers, the
reduced guiding-center transport model slaved to them, and the
time-weighted anisotropic Lyapunov functionals used to certify decay.
"""

from .kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
