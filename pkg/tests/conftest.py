import numpy as np
import pytest

from magvfp.spectral import Grid, KineticState


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def small_grid():
    return Grid(nx=(8, 8, 8), nv=(4, 4, 4))


@pytest.fixture
def tiny_grid():
    return Grid(nx=(4, 4, 4), nv=(3, 3, 3))


def random_state(grid, rng, scale=1.0, pad_top_shell=False, x_band=None):
    """Random kinetic state; optionally zero the top Hermite shell
    (truncation padding) and/or restrict to low spatial Fourier modes."""
    c = rng.standard_normal(grid.shape) * scale
    if x_band is not None:
        for axis, n in enumerate(grid.nx):
            F = np.fft.fft(c, axis=axis)
            k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
            mask = (k <= x_band).astype(float)
            sh = [1] * 6
            sh[axis] = n
            F *= mask.reshape(sh)
            c = np.real(np.fft.ifft(F, axis=axis))
    if pad_top_shell:
        for a in range(3):
            idx = [slice(None)] * 6
            idx[3 + a] = grid.nv[a] - 1
            c[tuple(idx)] = 0.0
    return KineticState(coeffs=np.ascontiguousarray(c), grid=grid)
