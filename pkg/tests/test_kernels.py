"""Parity between the compiled and numpy kernel backends."""

import numpy as np
import pytest

from magvfp.kernels import get_backend
from magvfp.kinetic import rotation_plan

npk = get_backend("numpy")
try:
    cyk = get_backend("cython")
    HAVE_CY = True
except ImportError:
    HAVE_CY = False

needs_cython = pytest.mark.skipif(not HAVE_CY, reason="compiled backend not built")


@pytest.fixture
def data(rng):
    h = np.ascontiguousarray(rng.standard_normal((60, 5, 4, 6)))
    d = [np.ascontiguousarray(rng.standard_normal(h.shape)) for _ in range(3)]
    f = [np.ascontiguousarray(rng.standard_normal(60)) for _ in range(3)]
    return h, d, f


@needs_cython
@pytest.mark.parametrize("axis", [1, 2, 3])
@pytest.mark.parametrize("op", ["lower", "raise_", "vmul"])
def test_ladder_parity(data, axis, op):
    h, _, _ = data
    a = getattr(npk, op)(h, axis)
    b = getattr(cyk, op)(h, axis)
    np.testing.assert_array_equal(a, b)


@needs_cython
@pytest.mark.parametrize("absent", [(), (1,), (0, 2), (0, 1, 2)])
def test_transport_parity(data, absent):
    h, d, f = data
    fa = [None if i in absent else f[i] for i in range(3)]
    a = npk.transport_apply(h, d[0], d[1], d[2], fa[0], fa[1], fa[2], -3.7)
    b = cyk.transport_apply(h, d[0], d[1], d[2], fa[0], fa[1], fa[2], -3.7)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13 * np.abs(a).max())


@needs_cython
def test_scale_by_mode_parity(data, rng):
    h, _, _ = data
    factors = np.ascontiguousarray(rng.standard_normal(h.shape[1:]))
    a = npk.scale_by_mode(h, factors)
    b = cyk.scale_by_mode(h, factors)
    np.testing.assert_array_equal(a, b)


@needs_cython
def test_shell_rotate_parity(data):
    h, _, _ = data
    plan = rotation_plan(h.shape[1:], 0.83)
    a = npk.shell_rotate(h, plan)
    b = cyk.shell_rotate(h, plan)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13 * np.abs(h).max())


def test_shell_rotate_is_orthogonal(data):
    h, _, _ = data
    plan = rotation_plan(h.shape[1:], 1.31)
    out = npk.shell_rotate(h, plan)
    assert np.sum(out * out) == pytest.approx(np.sum(h * h), rel=1e-12)


def test_rotation_plan_blocks_orthogonal():
    for theta in (0.1, 2.0, -0.7):
        for m1, m2, R in rotation_plan((6, 5, 4), theta):
            np.testing.assert_allclose(R @ R.T, np.eye(len(m1)), atol=1e-12)


@needs_cython
def test_repeatability(data):
    h, d, f = data
    runs = [cyk.transport_apply(h, d[0], d[1], d[2], f[0], f[1], f[2], 1.0) for _ in range(2)]
    np.testing.assert_array_equal(runs[0], runs[1])


def test_lower_zero_pads_top(data):
    h, _, _ = data
    out = npk.lower(h, 3)
    assert np.all(out[:, :, :, -1] == 0.0)
