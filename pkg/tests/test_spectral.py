import numpy as np
import pytest

from magvfp.fields import cosine_profile, normalize_phi
from magvfp.spectral import (
    Grid,
    KineticState,
    apply_ladder,
    deserialize_state,
    partial_norms,
    serialize_state,
    weighted_inner,
    x_derivative,
    zero_state,
)

from conftest import random_state
from oracles import quad_inner, fd_derivative


def mode_state(grid, m, value=1.0):
    c = np.zeros(grid.shape)
    c[(Ellipsis,) + tuple(m)] = value
    return KineticState(coeffs=c, grid=grid)


class TestGrid:
    def test_valid(self):
        g = Grid(nx=(8, 4, 6), nv=(2, 3, 4))
        assert g.shape == (8, 4, 6, 2, 3, 4)

    @pytest.mark.parametrize("nx,nv", [((7, 8, 8), (4, 4, 4)), ((8, 8, 8), (1, 4, 4)),
                                       ((0, 8, 8), (4, 4, 4))])
    def test_invalid(self, nx, nv):
        with pytest.raises(ValueError):
            Grid(nx=nx, nv=nv)


class TestLadder:
    def test_lower_ground_mode_vanishes(self, small_grid):
        s = mode_state(small_grid, (0, 0, 0))
        out = apply_ladder(s, "v1", "lower")
        assert np.all(out.coeffs == 0.0)

    def test_lower_second_mode(self, small_grid):
        # d/dv of the second Hermite function: sqrt(2) times the first
        s = mode_state(small_grid, (2, 0, 0))
        out = apply_ladder(s, "v1", "lower")
        expect = mode_state(small_grid, (1, 0, 0), np.sqrt(2.0)).coeffs
        np.testing.assert_allclose(out.coeffs, expect, atol=1e-15)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_raise_then_lower_is_number_plus_one(self, small_grid, k):
        s = mode_state(small_grid, (k, 0, 0))
        out = apply_ladder(apply_ladder(s, "v1", "raise"), "v1", "lower")
        np.testing.assert_allclose(out.coeffs, (k + 1.0) * s.coeffs, atol=1e-14)

    def test_raise_out_of_truncation_drops(self, small_grid):
        top = small_grid.nv[0] - 1
        s = mode_state(small_grid, (top, 0, 0))
        out = apply_ladder(s, "v1", "raise")
        assert np.all(out.coeffs == 0.0)

    def test_lower_matches_quadrature_oracle(self, small_grid, rng):
        # <d/dv1 a, b> by ladder/orthonormality vs dense quadrature of
        # the same integrand
        a = random_state(small_grid, rng)
        b = random_state(small_grid, rng)
        phi = np.zeros(small_grid.nx)
        la = apply_ladder(a, "v1", "lower")
        got = weighted_inner(la, b, phi, -1)
        # oracle: differentiate the Hermite series analytically on nodes
        # via d/dv He_k = sqrt(k) He_{k-1} is what we are testing, so
        # instead quadrature the product of value grids with a finite
        # difference in v
        q = 2 * max(small_grid.nv) + 5
        from oracles import state_on_nodes, hermite_values
        nodes, w = np.polynomial.hermite_e.hermegauss(q)
        w = w / np.sqrt(2 * np.pi)
        hstep = 1e-5
        A_plus = _shifted_values(a.coeffs, nodes + hstep, small_grid.nv)
        A_minus = _shifted_values(a.coeffs, nodes - hstep, small_grid.nv)
        dA = (A_plus - A_minus) / (2 * hstep)
        B = state_on_nodes(b.coeffs, q)
        w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
        oracle = float(np.mean(np.einsum("xyzabc,xyzabc,abc->xyz", dA, B, w3)))
        assert abs(got - oracle) < 2e-7 * (1 + abs(got))

    def test_adjointness_on_padded_states(self, small_grid, rng):
        phi = normalize_phi(cosine_profile(small_grid.nx, [(0, 0.3, 1)]), -1)
        for _ in range(5):
            a = random_state(small_grid, rng, pad_top_shell=True)
            b = random_state(small_grid, rng, pad_top_shell=True)
            for axis in ("v1", "v2", "v3"):
                lhs = weighted_inner(apply_ladder(a, axis, "lower"), b, phi, -1)
                rhs = weighted_inner(a, apply_ladder(b, axis, "raise"), phi, -1)
                assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


def _shifted_values(coeffs, nodes, nv):
    from oracles import hermite_values

    out = coeffs
    V1 = hermite_values(nodes, nv[0])
    out = np.tensordot(out, V1, axes=([3], [1]))
    from oracles import hermite_values as hv
    base, _ = np.polynomial.hermite_e.hermegauss(len(nodes))
    V2 = hv(base, nv[1])
    V3 = hv(base, nv[2])
    out = np.tensordot(out, V2, axes=([3], [1]))
    out = np.tensordot(out, V3, axes=([3], [1]))
    # axes come out as (x, y, z, q1, q2, q3)
    return out


class TestCollisionFactorization:
    def test_ata_norm_identity(self, small_grid, rng):
        # ||(v - grad_v) . grad_v h||^2 = ||grad_v h||^2 + ||grad_v x grad_v h||^2
        phi = np.zeros(small_grid.nx)
        for _ in range(3):
            h = random_state(small_grid, rng, pad_top_shell=True)
            # A* . A h via ladders
            acc = zero_state(small_grid).coeffs.copy()
            for ax in ("v1", "v2", "v3"):
                acc += apply_ladder(apply_ladder(h, ax, "lower"), ax, "raise").coeffs
            from magvfp.spectral import state_like
            lhs = weighted_inner(state_like(h, acc), state_like(h, acc), phi, -1)
            first = sum(
                weighted_inner(apply_ladder(h, ax, "lower"), apply_ladder(h, ax, "lower"), phi, -1)
                for ax in ("v1", "v2", "v3")
            )
            second = 0.0
            for ax1 in ("v1", "v2", "v3"):
                g = apply_ladder(h, ax1, "lower")
                for ax2 in ("v1", "v2", "v3"):
                    gg = apply_ladder(g, ax2, "lower")
                    second += weighted_inner(gg, gg, phi, -1)
            assert abs(lhs - (first + second)) < 1e-8 * (1 + abs(lhs))


class TestXDerivative:
    def test_constant(self, small_grid):
        f = np.ones(small_grid.nx)
        assert np.abs(x_derivative(f, "x1")).max() < 1e-13

    def test_cosine(self):
        n = (16, 16, 16)
        x = np.arange(16) / 16
        f = np.cos(2 * np.pi * x)[:, None, None] * np.ones(n)
        df = x_derivative(f, "x1")
        expect = -2 * np.pi * np.sin(2 * np.pi * x)[:, None, None] * np.ones(n)
        np.testing.assert_allclose(df, expect, atol=1e-12)

    def test_fd_consistency_order(self, rng):
        # against centered finite differences under grid refinement
        errs = []
        for n in (16, 32, 64):
            x = np.arange(n) / n
            f = (np.cos(2 * np.pi * x) + 0.3 * np.sin(4 * np.pi * x))[:, None, None] * np.ones((n, 4, 4))
            spectral = x_derivative(f, "x1")
            fd = fd_derivative(f, 0, order=2)
            errs.append(np.abs(spectral - fd).max())
        assert errs[1] / errs[0] == pytest.approx(0.25, rel=0.2)
        assert errs[2] / errs[1] == pytest.approx(0.25, rel=0.2)

    def test_commutes_with_ladder(self, small_grid, rng):
        # disjoint index sets: equality up to one rounding of the
        # scalar weight against the summed derivative
        s = random_state(small_grid, rng)
        a = apply_ladder(x_derivative(s, "x2"), "v1", "lower")
        b = x_derivative(apply_ladder(s, "v1", "lower"), "x2")
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-13, rtol=0)


class TestWeightedInner:
    def test_unit_mass(self, small_grid):
        phi = normalize_phi(cosine_profile(small_grid.nx, [(0, 0.4, 1), (2, 0.2, 1)]), -1)
        one = mode_state(small_grid, (0, 0, 0))
        assert weighted_inner(one, one, phi, -1) == pytest.approx(1.0, abs=1e-14)

    def test_orthogonal_modes(self, small_grid):
        phi = np.zeros(small_grid.nx)
        a = mode_state(small_grid, (1, 0, 0))
        b = mode_state(small_grid, (0, 1, 0))
        assert weighted_inner(a, b, phi, -1) == 0.0

    def test_matches_dense_quadrature(self, small_grid, rng):
        phi = normalize_phi(cosine_profile(small_grid.nx, [(0, 0.5, 1)]), 1)
        a = random_state(small_grid, rng)
        b = random_state(small_grid, rng)
        got = weighted_inner(a, b, phi, 1)
        oracle = quad_inner(a.coeffs, b.coeffs, phi, 1)
        assert abs(got - oracle) < 1e-8 * (1 + abs(oracle))

    def test_grid_mismatch(self, small_grid, tiny_grid, rng):
        a = random_state(small_grid, rng)
        b = random_state(tiny_grid, rng)
        with pytest.raises(ValueError):
            weighted_inner(a, b, np.zeros(small_grid.nx), -1)


class TestPartialNorms:
    def test_constant_state(self, small_grid):
        phi = normalize_phi(cosine_profile(small_grid.nx, [(0, 0.3, 1)]), -1)
        s = mode_state(small_grid, (0, 0, 0), 2.5)
        ns = partial_norms(s, phi, -1)
        assert ns.n0 == pytest.approx(2.5, rel=1e-13)
        for v in (ns.dv_par, ns.dx_par, ns.dv_perp, ns.dx_perp, ns.grad_v):
            assert v == pytest.approx(0.0, abs=1e-13)

    def test_single_perp_mode(self, small_grid):
        phi = np.zeros(small_grid.nx)
        s = mode_state(small_grid, (1, 0, 0))
        ns = partial_norms(s, phi, -1)
        assert ns.dv_perp == pytest.approx(1.0, rel=1e-12)
        assert ns.dv_par == pytest.approx(0.0, abs=1e-13)
        assert ns.dx_par == pytest.approx(0.0, abs=1e-13)
        assert ns.dx_perp == pytest.approx(0.0, abs=1e-13)

    def test_cauchy_schwarz_on_random_states(self, small_grid, rng):
        phi = normalize_phi(cosine_profile(small_grid.nx, [(1, 0.3, 1)]), -1)
        for _ in range(100):
            s = random_state(small_grid, rng)
            ns = partial_norms(s, phi, -1, second_order=False)
            ns.validate()
            assert abs(ns.cross_par) <= ns.dv_par * ns.dx_par * (1 + 1e-12)
            assert abs(ns.cross_perp) <= ns.dv_perp * ns.dx_perp * (1 + 1e-12)


class TestSerialization:
    def test_roundtrip(self, small_grid, rng):
        s = random_state(small_grid, rng)
        s2 = deserialize_state(serialize_state(s))
        assert s2.grid == s.grid
        np.testing.assert_array_equal(s2.coeffs, s.coeffs)

    def test_layout(self, tiny_grid, rng):
        s = random_state(tiny_grid, rng)
        buf = serialize_state(s)
        head = np.frombuffer(buf[:24], dtype="<u4")
        assert tuple(head[:3]) == tiny_grid.nx and tuple(head[3:]) == tiny_grid.nv
        body = np.frombuffer(buf[24:], dtype="<f8")
        np.testing.assert_array_equal(body, s.coeffs.ravel(order="C"))

    def test_truncated_buffer_rejected(self, tiny_grid, rng):
        buf = serialize_state(random_state(tiny_grid, rng))
        with pytest.raises(ValueError):
            deserialize_state(buf[:-8])
