from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcflab.mesh import (
    ClampedInitialContinuation,
    FrozenInitialSlope,
    Grid1D,
    GridError,
    LinearExtrapolate,
    QuadraticExtrapolate,
    RadialGrid,
    ScalarField,
    TensorGrid2D,
    diff_ops,
    extend_ghost,
    interior_mask,
    make_grid,
    policy_from_name,
    sample,
)


def field_1d(values, h=1.0):
    values = np.asarray(values, dtype=float)
    g = Grid1D(0.0, h * (len(values) - 1), len(values))
    return ScalarField(g, values, 0.0)


class TestGrids:
    def test_1d_spacing(self):
        assert make_grid("1d", x_min=-1.0, x_max=1.0, n_nodes=5).h == 0.5

    def test_radial_nodes(self):
        g = make_grid("radial", r_max=2.0, n_nodes=5, ambient_dim=3)
        np.testing.assert_array_equal(g.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert g.dim == 3

    def test_reversed_bounds_rejected(self):
        with pytest.raises(GridError):
            make_grid("1d", x_min=1.0, x_max=-1.0, n_nodes=5)

    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_bad_counts_rejected(self, n):
        with pytest.raises(GridError):
            Grid1D(-1.0, 1.0, n)

    def test_tensor_grid(self):
        g = TensorGrid2D.square(1.0, 0.25)
        assert g.shape == (9, 9) and g.hx == g.hy == 0.25

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_grid("3d")


class TestSample:
    g = Grid1D(-1.0, 1.0, 5)

    def test_zero(self):
        f = sample(lambda x: 0.0 * x, self.g)
        assert np.all(f.values == 0) and f.time == 0.0

    def test_abs(self):
        np.testing.assert_array_equal(sample(np.abs, self.g).values, [1, 0.5, 0, 0.5, 1])

    def test_paraboloid(self):
        np.testing.assert_array_equal(sample(lambda x: x * x / 2, self.g).values, [0.5, 0.125, 0, 0.125, 0.5])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_names_node(self):
        with pytest.raises(ValueError, match="node"):
            sample(lambda x: 1.0 / x, self.g)

    def test_field_is_read_only(self):
        f = sample(np.abs, self.g)
        with pytest.raises(ValueError):
            f.values[0] = 3.0


class TestGhosts:
    def test_linear(self):
        gh = extend_ghost(field_1d([0, 1, 2, 3, 4]), LinearExtrapolate(), 1)
        assert gh[(0, "hi")][0] == 5.0
        assert gh[(0, "lo")][0] == -1.0

    def test_quadratic_fits_parabola(self):
        x = np.arange(5.0)
        gh = extend_ghost(field_1d(x ** 2), QuadraticExtrapolate(), 3)
        np.testing.assert_allclose(gh[(0, "hi")], [25.0, 36.0, 49.0])
        np.testing.assert_allclose(gh[(0, "lo")], [1.0, 4.0, 9.0])

    def test_radial_even_reflection(self):
        g = RadialGrid(4.0, 5, 2)
        f = ScalarField(g, np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 0.0)
        for pol in (LinearExtrapolate(), QuadraticExtrapolate()):
            assert extend_ghost(f, pol, 1)[(0, "lo")][0] == 2.0

    def test_frozen_slope_uses_initial(self):
        f0 = field_1d([4, 1, 0, 1, 4])
        pol = FrozenInitialSlope().bind(f0)
        later = field_1d([5, 2, 1, 2, 9])
        gh = extend_ghost(later, pol, 2)
        np.testing.assert_allclose(gh[(0, "hi")], [9 + 3, 9 + 6])
        np.testing.assert_allclose(gh[(0, "lo")], [5 + 3, 5 + 6])

    def test_clamped_continuation_matches_boundary(self):
        x = np.arange(5.0)
        g = Grid1D(0.0, 4.0, 5)
        f0 = ScalarField(g, x ** 2, 0.0)
        pol = ClampedInitialContinuation().bind(f0, datum=lambda s: np.asarray(s) ** 2)
        later = ScalarField(g, x ** 2 + 1.0, 0.5)
        gh = extend_ghost(later, pol, 2)
        np.testing.assert_allclose(gh[(0, "hi")], [26.0, 37.0])

    def test_unbound_policies_refuse(self):
        with pytest.raises(RuntimeError):
            extend_ghost(field_1d([0, 1, 2, 3, 4]), FrozenInitialSlope(), 1)

    def test_policy_names(self):
        assert isinstance(policy_from_name("quadratic"), QuadraticExtrapolate)
        with pytest.raises(ValueError):
            policy_from_name("nope")

    def test_deterministic(self):
        f = field_1d(np.random.default_rng(1).normal(size=9))
        a = extend_ghost(f, QuadraticExtrapolate(), 2)
        b = extend_ghost(f, QuadraticExtrapolate(), 2)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_width_must_be_positive(self):
        with pytest.raises(ValueError):
            extend_ghost(field_1d([0, 1, 2, 3, 4]), LinearExtrapolate(), 0)


class TestStencils:
    def test_linear_exact(self):
        g = Grid1D(-1.0, 1.0, 21)
        Du, D2u = diff_ops(sample(lambda x: x, g))
        np.testing.assert_allclose(Du[:, 0], 1.0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(D2u[:, 0, 0], 0.0, atol=1e-9)

    def test_quadratic_second_derivative(self):
        g = Grid1D(-1.0, 1.0, 21)
        _, D2u = diff_ops(sample(lambda x: x * x, g))
        np.testing.assert_allclose(D2u[1:-1, 0, 0], 2.0, rtol=1e-12)

    def test_mixed_stencil_exact_on_bilinear(self):
        g = TensorGrid2D.square(1.0, 0.1)
        _, D2u = diff_ops(sample(lambda x, y: x * y, g))
        np.testing.assert_allclose(D2u[1:-1, 1:-1, 0, 1], 1.0, rtol=1e-12)
        np.testing.assert_array_equal(D2u[..., 0, 1], D2u[..., 1, 0])

    @given(c=st.lists(st.floats(-3, 3), min_size=6, max_size=6))
    def test_quadratics_exact_2d(self, c):
        a0, ax, ay, axx, axy, ayy = c
        g = TensorGrid2D(-1.0, 1.0, 11, -0.5, 0.5, 9)
        f = sample(lambda x, y: a0 + ax * x + ay * y + axx * x * x + axy * x * y + ayy * y * y, g)
        Du, D2u = diff_ops(f)
        X, Y = g.mesh()
        inner = (slice(1, -1), slice(1, -1))
        scale = 1.0 + max(abs(v) for v in c)
        np.testing.assert_allclose(Du[inner][..., 0], (ax + 2 * axx * X + axy * Y)[inner], atol=1e-12 * scale * 10)
        np.testing.assert_allclose(D2u[inner][..., 0, 0], 2 * axx, atol=1e-10 * scale)
        np.testing.assert_allclose(D2u[inner][..., 1, 1], 2 * ayy, atol=1e-10 * scale)
        np.testing.assert_allclose(D2u[inner][..., 0, 1], axy, atol=1e-10 * scale)

    def test_second_order_convergence(self):
        errs = []
        for n in (41, 81, 161):
            g = Grid1D(-1.0, 1.0, n)
            Du, D2u = diff_ops(sample(np.sin, g))
            x = g.nodes
            errs.append((np.max(np.abs(Du[1:-1, 0] - np.cos(x[1:-1]))),
                         np.max(np.abs(D2u[1:-1, 0, 0] + np.sin(x[1:-1])))))
        for k in range(2):
            for j in range(2):
                assert 3.2 <= errs[k][j] / errs[k + 1][j] <= 4.8

    def test_radial_origin_slope_vanishes(self):
        g = RadialGrid(2.0, 21, 2)
        Du, _ = diff_ops(sample(lambda r: np.cosh(r) + r ** 3, g))
        assert Du[0, 0] == 0.0

    def test_interior_mask(self):
        m = interior_mask(Grid1D(-1.0, 1.0, 11), 3)
        assert m.sum() == 5 and not m[2] and m[3]
        mr = interior_mask(RadialGrid(1.0, 11, 2), 3)
        assert mr[0] and not mr[-3]
