from __future__ import annotations

import numpy as np
import pytest

from mcflab.flow import (
    ClosedCurve,
    FlowConfig,
    FlowError,
    circle,
    evolve,
    evolve_curve,
    evolve_radial_subdomain,
    extinction_time,
    initial_subdomain_state,
    redistribute,
    sphere_radius,
    stable_dt,
    step,
    step_csf,
    step_closed_curve,
    step_radial,
    velocity,
)
from mcflab.mesh import (
    ExactGhosts,
    Grid1D,
    LinearExtrapolate,
    RadialGrid,
    ScalarField,
    TensorGrid2D,
    sample,
)


def at_time(field, t):
    return ScalarField(field.grid, field.values, t)


class TestStableDt:
    def test_1d(self):
        f = sample(np.abs, Grid1D.from_spacing(-1.0, 1.0, 0.1))
        assert stable_dt(f, FlowConfig(t_end=1.0, cfl=0.4)) == pytest.approx(0.002)

    def test_2d(self):
        f = sample(lambda x, y: x * y, TensorGrid2D.square(1.0, 0.1))
        assert stable_dt(f, FlowConfig(t_end=1.0, cfl=0.4)) == pytest.approx(0.001)

    def test_clamped_to_remaining_time(self):
        f = at_time(sample(np.abs, Grid1D.from_spacing(-1.0, 1.0, 0.1)), 0.9995)
        assert stable_dt(f, FlowConfig(t_end=1.0, cfl=0.4)) == pytest.approx(0.0005)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FlowConfig(t_end=1.0, cfl=1.5)
        with pytest.raises(ValueError):
            FlowConfig(t_end=-1.0)
        with pytest.raises(ValueError):
            FlowConfig(t_end=1.0, form="weak")


class TestVelocity:
    def test_radial_origin_limit_and_interior(self):
        g = RadialGrid.from_spacing(2.0, 0.05, 2)
        ut = velocity(sample(lambda r: 0.5 * r * r, g), LinearExtrapolate())
        assert ut[0] == pytest.approx(2.0, rel=1e-12)
        assert ut[20] == pytest.approx(1.5, rel=1e-12)

    def test_full2d_paraboloid_origin(self):
        g = TensorGrid2D.square(1.0, 0.1)
        ut = velocity(sample(lambda x, y: 0.5 * (x * x + y * y), g), LinearExtrapolate())
        assert ut[10, 10] == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("form", ["nondivergence", "divergence"])
    def test_constant_and_line_stationary(self, form):
        g = Grid1D.from_spacing(-2.0, 2.0, 0.0625)
        for f in (lambda x: 0 * x + 3.0, lambda x: 0.5 * x + 1.0):
            ut = velocity(sample(f, g), LinearExtrapolate(), form)
            assert np.all(ut == 0.0)

    def test_plane_stationary(self):
        g = TensorGrid2D.square(1.0, 0.0625)
        ut = velocity(sample(lambda x, y: 0.5 * x - 0.25 * y + 2.0, g), LinearExtrapolate())
        assert np.all(ut == 0.0)


def grim(x, t):
    return t - np.log(np.cos(x))


class TestSteps:
    def test_grim_reaper_one_step(self):
        g = Grid1D.from_spacing(-1.2, 1.2, 0.01)
        f = sample(lambda x: grim(x, 0.0), g)
        cfg = FlowConfig(t_end=1.0, policy=ExactGhosts(grim))
        dt = stable_dt(f, cfg)
        out = step_csf(f, dt, cfg)
        assert np.max(np.abs(out.values - grim(g.nodes, dt))) <= 50 * dt * g.h ** 2

    def test_forms_agree_on_abs(self):
        g = Grid1D.from_spacing(-4.0, 4.0, 0.05)
        f = sample(np.abs, g)
        a = evolve(f, FlowConfig(t_end=0.1)).final.values
        b = evolve(f, FlowConfig(t_end=0.1, form="divergence")).final.values
        assert np.max(np.abs(a - b)) <= 5 * g.h ** 2 * 10

    def test_dt_above_limit_rejected(self):
        f = sample(np.abs, Grid1D.from_spacing(-1.0, 1.0, 0.1))
        with pytest.raises(FlowError):
            step_csf(f, 0.01, FlowConfig(t_end=1.0))

    def test_wrong_grid_kind(self):
        f = sample(np.abs, Grid1D.from_spacing(-1.0, 1.0, 0.1))
        with pytest.raises(TypeError):
            step_radial(f, 1e-4, FlowConfig(t_end=1.0))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_reports_step(self):
        f = sample(np.abs, Grid1D.from_spacing(-1.0, 1.0, 0.1))
        bad = ScalarField(f.grid, np.where(f.grid.nodes > 0.5, 1e308, f.values), 0.0)
        with pytest.raises(FlowError, match="step 7"):
            step(bad, 1e-3, FlowConfig(t_end=1.0), step_index=7)


class TestEvolve:
    def test_zero_time(self):
        f = sample(np.abs, Grid1D.from_spacing(-1.0, 1.0, 0.1))
        tr = evolve(f, FlowConfig(t_end=0.0))
        assert len(tr.snapshots) == 1 and tr.steps == 0

    def test_line_exactly_stationary(self):
        f = sample(lambda x: 0.5 * x + 1.0, Grid1D.from_spacing(-2.0, 2.0, 0.0625))
        tr = evolve(f, FlowConfig(t_end=1.0))
        np.testing.assert_array_equal(tr.final.values, f.values)
        assert tr.final.time == 1.0

    def test_snapshot_times_hit_exactly(self):
        f = sample(np.abs, Grid1D.from_spacing(-2.0, 2.0, 0.1))
        tr = evolve(f, FlowConfig(t_end=0.1, snapshot_times=(0.025, 0.05)))
        assert list(tr.times) == [0.0, 0.025, 0.05, 0.1]

    def test_deterministic(self):
        f = sample(np.abs, Grid1D.from_spacing(-2.0, 2.0, 0.1))
        a = evolve(f, FlowConfig(t_end=0.05, snapshot_stride=3))
        b = evolve(f, FlowConfig(t_end=0.05, snapshot_stride=3))
        for x, y in zip(a.snapshots, b.snapshots):
            np.testing.assert_array_equal(x.values, y.values)
        np.testing.assert_array_equal(a.monitor, b.monitor)

    def test_comparison_principle(self):
        g = Grid1D.from_spacing(-4.0, 4.0, 0.1)
        lo = evolve(sample(np.abs, g), FlowConfig(t_end=0.2))
        hi = evolve(sample(lambda x: np.abs(x) + 0.1, g), FlowConfig(t_end=0.2))
        assert np.all(hi.final.values >= lo.final.values)

    def test_lower_bound_preserved(self):
        g = Grid1D.from_spacing(-4.0, 4.0, 0.1)
        tr = evolve(sample(lambda x: 0.5 * x * x, g), FlowConfig(t_end=0.2, snapshot_stride=5))
        assert min(s.values.min() for s in tr.snapshots) >= 0.0

    def test_grim_reaper_translator(self):
        g = Grid1D.from_spacing(-1.2, 1.2, 0.006)
        tr = evolve(sample(lambda x: grim(x, 0.0), g), FlowConfig(t_end=0.1, policy=ExactGhosts(grim)))
        assert np.max(np.abs(tr.final.values - grim(g.nodes, 0.1))) <= 5e-4

    def test_monitor_columns(self):
        g = Grid1D.from_spacing(-2.0, 2.0, 0.1)
        tr = evolve(sample(np.cosh, g), FlowConfig(t_end=0.01, monitor_stride=1))
        assert tr.monitor.shape[1] == 5 and tr.monitor[0, 0] == 0.0


class TestCurves:
    def test_circle_radius_law(self):
        R0 = 1.0
        times = tuple(np.linspace(0.05, (R0 ** 2 - (R0 / 4) ** 2) / 2, 8))
        tr = evolve_curve(circle(R0, 128), times[-1], snapshot_times=times)
        for c in tr.snapshots[1:]:
            r = np.linalg.norm(c.points, axis=1)
            exact = np.sqrt(R0 ** 2 - 2 * c.time)
            assert np.max(np.abs(r - exact)) <= 0.01 * exact

    def test_polygon_stays_in_annulus(self):
        R0 = 1.0
        tr = evolve_curve(circle(R0, 24), 0.3, snapshot_times=(0.1, 0.2, 0.3))
        for c in tr.snapshots[1:]:
            r = np.linalg.norm(c.points, axis=1)
            exact = np.sqrt(R0 ** 2 - 2 * c.time)
            assert np.all(np.abs(r - exact) <= 0.05)

    def test_convexity_preserved(self):
        th = np.linspace(0, 2 * np.pi, 120, endpoint=False)
        ellipse = ClosedCurve(np.stack([2 * np.cos(th), np.sin(th)], axis=1))
        tr = evolve_curve(ellipse, 0.3, snapshot_times=(0.1, 0.2))
        for c in tr.snapshots:
            assert c.turning_angles().min() >= -1e-8

    def test_collapse_error(self):
        pts = circle(1.0, 32).points.copy()
        pts[1] = pts[0] + 1e-13
        with pytest.raises(FlowError, match="collapsed"):
            step_closed_curve(ClosedCurve(pts), 1e-30)

    @pytest.mark.parametrize("method", ["spline", "linear"])
    def test_redistribute_uniform(self, method):
        th = np.sort(np.random.default_rng(0).uniform(0, 2 * np.pi, 200))
        pts = np.stack([np.cos(th), np.sin(th)], axis=1)
        new = ClosedCurve(redistribute(pts, method=method))
        seg = new.segment_lengths
        assert seg.max() / seg.min() < 1.2
        np.testing.assert_array_equal(new.points[0], pts[0])

    def test_redistribute_spline_stays_on_circle(self):
        pts = circle(1.0, 64).points
        new = redistribute(pts[::2], n=64)
        assert np.max(np.abs(np.linalg.norm(new, axis=1) - 1.0)) < 1e-4

    def test_redistribute_unknown_method(self):
        with pytest.raises(ValueError):
            redistribute(circle(1.0).points, method="nearest")


class TestSubdomain:
    def test_sphere_law(self):
        assert sphere_radius(2.0, 2, 0.5) == pytest.approx(np.sqrt(3))
        assert extinction_time(2.0, 3) == 1.0

    def test_beyond_extinction(self):
        st = initial_subdomain_state(np.cosh, 2.0, 41, 3)
        with pytest.raises(FlowError, match="extinction"):
            evolve_radial_subdomain(st, FlowConfig(t_end=1.5))

    def test_log_well_outer_window_grows(self):
        R0 = 1.0
        st = initial_subdomain_state(lambda r: -np.log1p(-(r / R0) ** 2), R0, 61, 2)
        tr = evolve_radial_subdomain(st, FlowConfig(t_end=0.1, snapshot_times=(0.02, 0.04, 0.06, 0.08)))
        mins = []
        for s in tr.states:
            r = s.field.grid.nodes
            sel = r >= 0.9 * r[-1]
            mins.append(s.field.values[sel].min())
        assert np.all(np.diff(mins) > 0)
        np.testing.assert_allclose(tr.radii, sphere_radius(R0, 2, tr.times), rtol=1e-12)
