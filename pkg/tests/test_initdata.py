from __future__ import annotations

import math

import numpy as np
import pytest

from mcflab.flow import ClosedCurve
from mcflab.initdata import (
    BUILTIN_NAMES,
    DatumError,
    boundedcase_constant,
    builtin,
    double_at_height,
    measured_lipschitz,
    random_lipschitz,
    reflect_curve,
)
from mcflab.mesh import Grid1D, RadialGrid, TensorGrid2D

G = Grid1D.from_spacing(-4.0, 4.0, 0.01)


def test_builtins_construct():
    for name in BUILTIN_NAMES:
        d = builtin(name)
        assert d.name == name


def test_paraboloid_value_and_flags():
    d = builtin("paraboloid")
    assert d(2.0) == 2.0 and d.convex and d.proper


def test_cone_lipschitz():
    d = builtin("cone", a=1.0)
    assert d.lipschitz == 1.0
    assert measured_lipschitz(d.on(G)) == pytest.approx(1.0)


def test_line_extends_to_plane():
    d = builtin("line", a=2.0, b=1.0)
    assert d(1.0, 5.0) == 3.0
    with pytest.raises(DatumError):
        d.on(RadialGrid.from_spacing(1.0, 0.1, 2))


def test_radial_profile_in_2d():
    d = builtin("paraboloid")
    assert d(3.0, 4.0) == pytest.approx(12.5)
    f = d.on(TensorGrid2D.square(1.0, 0.5))
    assert f.values[2, 2] == 0.0


def test_unknown_and_invalid():
    with pytest.raises(DatumError):
        builtin("sombrero")
    with pytest.raises(DatumError):
        builtin("cone", a=0.0)


def test_shifted():
    d = builtin("abs").shifted(2.0)
    assert d(0.0) == 2.0 and d.params["shift"] == 2.0


class TestRandomLipschitz:
    g = Grid1D.from_spacing(-8.0, 8.0, 0.05)

    @pytest.mark.parametrize("seed", range(5))
    def test_slope_bound(self, seed):
        f = random_lipschitz(seed, 1.0, self.g).on(self.g)
        assert measured_lipschitz(f) <= 1.0 + 1e-12

    def test_deterministic(self):
        a = random_lipschitz(3, 1.0, self.g).on(self.g).values
        b = random_lipschitz(3, 1.0, self.g).on(self.g).values
        np.testing.assert_array_equal(a, b)

    def test_linear_in_bound(self):
        a = random_lipschitz(4, 2.0, self.g).on(self.g)
        b = random_lipschitz(4, 1.0, self.g).on(self.g)
        np.testing.assert_allclose(a.values / 2, b.values, rtol=1e-12, atol=1e-14)
        assert measured_lipschitz(b) == pytest.approx(measured_lipschitz(a) / 2)

    def test_linear_continuation(self):
        d = random_lipschitz(0, 1.0, self.g)
        x = np.array([9.0, 10.0])
        assert np.diff(d(x))[0] == pytest.approx(np.diff(d(np.array([7.95, 8.0])))[0] / 0.05)


class TestBoundedConstant:
    def test_paraboloid(self):
        assert boundedcase_constant(builtin("paraboloid"), G, 0.5) == pytest.approx(math.sqrt(2), abs=G.h)

    def test_flat_line(self):
        assert boundedcase_constant(builtin("line", a=0.0, b=0.5), G, 1.0) == 1.0

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    def test_cone(self, a):
        c = boundedcase_constant(builtin("cone", a=a), G, a)
        assert c == pytest.approx(math.sqrt(1 + a * a), rel=1e-9)

    def test_oscillatory_infinite(self):
        # sampled slopes cannot exceed (osc u0) / h = 200 here, so the cap sits below that
        g = Grid1D.from_spacing(-8.0, 8.0, 0.01)
        assert boundedcase_constant(builtin("oscillatory"), g, 2.0, cap=50.0) == math.inf

    def test_monotone_in_M(self):
        vals = [boundedcase_constant(builtin("cosh"), G, M) for M in (1.5, 2.0, 3.0, 5.0)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_empty_set(self):
        with pytest.raises(DatumError):
            boundedcase_constant(builtin("cosh"), G, 0.5)


class TestDoubling:
    def test_paraboloid_crossings(self):
        c = double_at_height(builtin("paraboloid").on(G), 2.0)
        xs = c.points[np.abs(c.points[:, 1] - 2.0) < 1e-12, 0]
        np.testing.assert_allclose(sorted(xs), [-2.0, 2.0], atol=1e-4)

    def test_abs_square(self):
        c = double_at_height(builtin("abs").on(G), 1.0)
        p = c.points
        for v in [(-1, 1), (1, 1), (0, 0), (0, 2)]:
            assert np.min(np.linalg.norm(p - np.array(v), axis=1)) < 1e-9
        assert abs(c.area) == pytest.approx(2.0, rel=1e-9)

    @pytest.mark.parametrize("name,height", [("paraboloid", 2.0), ("abs", 1.0), ("cosh", 3.0)])
    def test_symmetric_and_convex(self, name, height):
        c = double_at_height(builtin(name).on(G), height)
        np.testing.assert_allclose(reflect_curve(c, height), c.points, atol=1e-12)
        assert c.turning_angles().min() >= -1e-9
        assert c.area > 0 and c.is_simple()

    def test_enclosure(self):
        from shapely.geometry import Polygon

        f = builtin("paraboloid").on(G)
        inner, outer = double_at_height(f, 2.0), double_at_height(f, 4.0)
        assert Polygon(outer.points).buffer(1e-12).contains(Polygon(inner.points))

    def test_empty_region(self):
        with pytest.raises(DatumError, match="empty doubled region"):
            double_at_height(builtin("cosh").on(G), 0.5)

    def test_window_too_small(self):
        with pytest.raises(DatumError):
            double_at_height(builtin("paraboloid").on(G), 10.0)

    def test_result_is_closed_curve(self):
        assert isinstance(double_at_height(builtin("abs").on(G), 2.0), ClosedCurve)
