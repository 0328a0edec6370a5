import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanewave.core import ModelParams
from lanewave.fvm import Grid2D
from lanewave.micro import (
    Fleet,
    GhostRule,
    MicroParams,
    Vehicle,
    accelerations,
    density_from_gaps,
    fleet_to_field,
    ftl1d_density,
    ftl1d_step,
    local_density,
    micro_step,
    per_vehicle_density,
    run_micro,
    select_interacting,
)

P = ModelParams(u_ref=1.0, v_ref=0.009)


def fleet(rows, dx=0.1, dy=0.1, **kw):
    """rows: (x, y, u, v) tuples; ids follow row order."""
    rows = np.asarray(rows, dtype=float)
    n = len(rows)
    return Fleet(np.arange(n), np.ones(n), rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], dx, dy, **kw)


class TestFleet:
    def test_validation(self):
        with pytest.raises(ValueError):
            fleet([(0, 0, 0.1, 0)], dx=0.0)
        with pytest.raises(ValueError):
            Fleet([1, 1], [1, 1], [0, 1], [0, 0], [0, 0], [0, 0], 0.1, 0.1)
        with pytest.raises(ValueError):
            fleet([(0, 0, -0.1, 0)])

    def test_vehicle_roundtrip(self):
        vs = [Vehicle(3, 1, 0.0, 0.1, 0.2, 0.0), Vehicle(7, 2, 0.5, 0.2, 0.3, -0.01)]
        f = Fleet.from_vehicles(vs, 0.1, 0.1)
        assert f.vehicles() == vs

    def test_micro_params_constants(self):
        mp = MicroParams(P, 0.005, 0.000375)
        assert mp.c1 == pytest.approx(0.005 * 0.000375)
        assert mp.c2 == pytest.approx(0.009 * 0.005 * 0.000375)
        assert MicroParams(P, 0.01, 0.000375).c1 == pytest.approx(2 * mp.c1)


class TestSelect:
    def test_example(self):
        f = fleet([(0, 0, 0.1, 0.5), (1, 1, 0.1, 0), (0.5, 0.2, 0.1, 0), (0.4, -0.1, 0.1, 0)])
        assert select_interacting(0, f) == 2

    def test_leader_has_none(self):
        f = fleet([(0, 0, 0.1, 0.0), (-1, 0, 0.1, 0.0)])
        assert select_interacting(0, f) is None
        assert select_interacting(1, f) == 0

    def test_tie_smallest_id(self):
        f = fleet([(0, 0, 0.1, 0.0), (1, 0.5, 0.1, 0), (1, -0.5, 0.1, 0)])
        assert select_interacting(0, f) == 1

    def test_zero_lateral_speed_ignores_side(self):
        f = fleet([(0, 0, 0.1, 0.0), (1, -0.3, 0.1, 0)])
        assert select_interacting(0, f) == 1

    def test_side_condition(self):
        f = fleet([(0, 0, 0.1, -0.01), (1, 0.3, 0.1, 0), (2, -0.3, 0.1, 0)])
        assert select_interacting(0, f) == 2

    def test_alongside_car_is_not_ahead(self):
        # a car less than one vehicle length ahead drives alongside
        f = fleet([(0, 0, 0.1, 0.01), (0.05, 0.1, 0.1, 0), (0.5, 0.3, 0.1, 0)], dx=0.1)
        assert select_interacting(0, f) == 2

    def test_ghost(self):
        f = fleet([(0, 0, 0.1, 0.0), (0.5, 0.0, 0.2, 0.0)], ghost=GhostRule(1, 0.3))
        f.lane[1] = 1
        assert select_interacting(1, f) == -1
        assert f.ghost_state() == (0.8, 0.0, 0.2, 0.0)


class TestDensity:
    def test_example(self):
        assert density_from_gaps(0.03, 0.0004, 0.005, 0.000375) == pytest.approx(0.15625)

    def test_packed(self):
        assert density_from_gaps(0.1, 0.1, 0.1, 0.1) == pytest.approx(1.0)

    def test_lateral_clamp(self):
        rho = density_from_gaps(0.1, 0.0, 0.1, 0.1)
        assert np.isfinite(rho) and rho == pytest.approx(1e3)

    def test_longitudinal_clamp(self):
        assert density_from_gaps(0.01, 0.1, 0.1, 0.1) == pytest.approx(1.0)

    def test_not_ahead(self):
        with pytest.raises(ValueError, match="not ahead"):
            density_from_gaps(-0.1, 0.1, 0.1, 0.1)

    def test_local_density_uses_partner(self):
        f = fleet([(0, 0, 0.1, 0.01), (0.4, 0.25, 0.1, 0)])
        assert local_density(0, 1, f) == pytest.approx(0.01 / (0.4 * 0.25))

    @given(gx=st.floats(1e-4, 10), gy=st.floats(-1, 1))
    def test_positive(self, gx, gy):
        assert density_from_gaps(gx, gy, 0.01, 0.01) > 0


class TestAccelerations:
    def test_uniform_platoon(self):
        f = fleet([(0, 0, 0.3, 0.01), (1, 0.5, 0.3, 0.01)])
        assert accelerations(0, 1, f, MicroParams(P, 0.1, 0.1)) == (0.0, 0.0)

    def test_hand_example(self):
        f = fleet([(0, 0, 0.2, 0.0), (1, 1, 0.3, 0.0)], dx=1.0, dy=1.0)
        du, dv = accelerations(0, 1, f, MicroParams(P, 1.0, 1.0))
        assert du == pytest.approx(0.1) and dv == pytest.approx(0.009 * 0.1)

    def test_reduces_to_1d_law(self):
        p0 = ModelParams(u_ref=1.0, v_ref=0.0)
        dX, dY = 0.01, 0.02
        f = fleet([(0, 0, 0.2, 0.0), (0.05, dY, 0.5, 0.0)], dx=dX, dy=dY)
        du, dv = accelerations(0, 1, f, MicroParams(p0, dX, dY))
        assert dv == 0.0
        assert du == pytest.approx(1.0 * dX * 0.3 / 0.05**2)

    def test_not_ahead(self):
        f = fleet([(0, 0, 0.2, 0.0), (-1, 0, 0.3, 0.0)])
        with pytest.raises(ValueError):
            accelerations(0, 1, f, MicroParams(P, 0.1, 0.1))


class TestStep:
    def test_rigid_translation(self):
        f = fleet([(0, 0.3, 0.4, 0.01), (1, 0.5, 0.4, 0.01), (2, 0.2, 0.4, 0.01)], road_width=1.0)
        out = micro_step(f, 0.1, MicroParams(P, 0.1, 0.1))
        np.testing.assert_allclose(out.x, f.x + 0.04, rtol=0, atol=1e-15)
        np.testing.assert_allclose(out.y, f.y + 0.001, rtol=0, atol=1e-15)
        assert np.array_equal(out.u, f.u) and np.array_equal(out.v, f.v)

    def test_zero_dt_identity(self):
        f = fleet([(0, 0.3, 0.4, 0.01), (1, 0.5, 0.1, 0.0)], road_width=1.0)
        out = micro_step(f, 0.0, MicroParams(P, 0.1, 0.1))
        assert np.array_equal(out.x, f.x) and np.array_equal(out.u, f.u)

    def test_two_car_hand_update(self):
        dX = dY = 0.1
        mp = MicroParams(P, dX, dY)
        f = fleet([(0, 0.0, 0.2, 0.0), (0.5, 0.0, 0.6, 0.0)], dx=dX, dy=dY, road_width=1.0)
        out = micro_step(f, 0.01, mp)
        # lateral gap 0 clamps to 1e-3*dY; area = 0.5 * 1e-4
        area = 0.5 * 1e-4
        du = mp.c1 * (0.4 / 0.5) / area
        dv = mp.c2 * (0.4 / 0.5) / area
        assert out.x[0] == pytest.approx(0.002)
        assert out.u[0] == pytest.approx(0.2 + 0.01 * du)
        assert out.v[0] == pytest.approx(0.01 * dv)
        assert out.u[1] == 0.6

    def test_wall_contact_zeroes_v(self):
        f = fleet([(0, 0.995, 0.1, 0.1)], road_width=1.0)
        out = micro_step(f, 0.1, MicroParams(P, 0.1, 0.1))
        assert out.y[0] == 1.0 and out.v[0] == 0.0 and out.events.wall_contact == 1

    def test_u_clamp(self):
        f = fleet([(0, 0.5, 0.5, 0.0), (0.2, 0.5, 0.0, 0.0)], road_width=1.0)
        out = micro_step(f, 1.0, MicroParams(P, 0.1, 0.1))
        assert out.u[0] == 0.0 and out.events.u_clamp == 1

    def test_simultaneous_update(self):
        rows = [(0, 0.5, 0.2, 0.0), (0.3, 0.5, 0.5, 0.0), (0.7, 0.5, 0.1, 0.0)]
        mp = MicroParams(P, 0.1, 0.1)
        a = micro_step(fleet(rows, road_width=1.0), 0.01, mp)
        perm = [2, 0, 1]
        f = fleet([rows[k] for k in perm], road_width=1.0)
        f.id = np.array(perm)
        b = micro_step(f, 0.01, mp)
        order = np.argsort(b.id)
        np.testing.assert_array_equal(a.u, b.u[order])

    def test_reduces_to_ftl1d(self):
        p0 = ModelParams(u_ref=1.0, v_ref=0.0)
        dX, dY = 0.01, 0.02
        n = 12
        rng = np.random.default_rng(1)
        xs = np.cumsum(rng.uniform(0.02, 0.05, n))
        us = rng.uniform(0.1, 0.6, n)
        ys = np.where(np.arange(n) % 2 == 0, 0.0, dY)
        f2 = Fleet(np.arange(n), np.ones(n), xs, ys, us, np.zeros(n), dX, dY, road_width=1.0)
        f1 = Fleet(np.arange(n), np.ones(n), xs, np.zeros(n), us, np.zeros(n), dX, dY)
        mp = MicroParams(p0, dX, dY)
        for _ in range(50):
            f2 = micro_step(f2, 1e-3, mp)
            f1 = ftl1d_step(f1, 1e-3, p0)
        np.testing.assert_allclose(f2.x, f1.x, rtol=0, atol=1e-13)
        np.testing.assert_allclose(f2.u, f1.u, rtol=0, atol=1e-13)

    @given(shift=st.floats(-10, 10))
    @settings(max_examples=25)
    def test_translation_invariance(self, shift):
        rows = np.array([(0, 0.3, 0.2, 0.01), (0.4, 0.5, 0.5, -0.01), (0.9, 0.2, 0.1, 0.0)])
        mp = MicroParams(P, 0.1, 0.1)
        a = micro_step(fleet(rows, road_width=1.0), 0.01, mp)
        rows[:, 0] += shift
        b = micro_step(fleet(rows, road_width=1.0), 0.01, mp)
        np.testing.assert_allclose(b.x - shift, a.x, atol=1e-12)
        np.testing.assert_allclose(b.u, a.u, atol=1e-12)

    def test_deterministic(self):
        rows = [(0, 0.3, 0.2, 0.01), (0.4, 0.5, 0.5, -0.01), (0.9, 0.2, 0.1, 0.0)]
        mp = MicroParams(P, 0.1, 0.1)
        a = run_micro(fleet(rows, road_width=1.0), 0.5, 0.01, mp)[-1][1]
        b = run_micro(fleet(rows, road_width=1.0), 0.5, 0.01, mp)[-1][1]
        assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)


class TestFTL1D:
    def test_translation(self):
        f = fleet([(0, 0, 0.3, 0), (0.2, 0, 0.3, 0)])
        out = ftl1d_step(f, 0.1, P)
        np.testing.assert_allclose(out.x, [0.03, 0.23])

    def test_two_car_hand(self):
        f = fleet([(0, 0, 0.2, 0), (0.5, 0, 0.6, 0)], dx=0.1)
        out = ftl1d_step(f, 0.1, P)
        assert out.u[0] == pytest.approx(0.2 + 0.1 * 0.1 * 0.4 / 0.25)

    def test_ordering_required(self):
        with pytest.raises(ValueError):
            ftl1d_step(fleet([(1, 0, 0.2, 0), (0.5, 0, 0.6, 0)]), 0.01, P)

    def test_step_bound(self):
        with pytest.raises(ValueError):
            ftl1d_step(fleet([(0, 0, 1.0, 0), (0.05, 0, 0.6, 0)]), 0.1, P)

    def test_desired_speed_drift_second_order_per_step(self):
        rng = np.random.default_rng(7)
        n = 30
        xs = np.cumsum(rng.uniform(0.02, 0.05, n))
        us = rng.uniform(0.1, 0.5, n)
        f = Fleet(np.arange(n), np.ones(n), xs, np.zeros(n), us, np.zeros(n), 0.01, 0.01)

        def drift(dt):
            g = ftl1d_step(f, dt, P)
            w0 = f.u[:-1] + ftl1d_density(f)
            w1 = g.u[:-1] + ftl1d_density(g)
            return np.max(np.abs(w1 - w0))

        d1, d2 = drift(1e-3), drift(5e-4)
        assert d1 / d2 == pytest.approx(4.0, rel=0.1)


class TestSampling:
    def test_per_vehicle_density_nan_without_partner(self):
        f = fleet([(0, 0, 0.3, 0), (0.5, 0.1, 0.3, 0)])
        rho = per_vehicle_density(f)
        assert np.isfinite(rho[0]) and np.isnan(rho[1])

    def test_fleet_to_field(self):
        g = Grid2D(4, 2, 0, 1, 0, 0.2)
        f = fleet([(0.1, 0.05, 0.3, 0), (0.2, 0.15, 0.3, 0)], dx=0.1, dy=0.1)
        pv, cells = fleet_to_field(f, g)
        assert pv.shape == (3, 2)
        assert cells[0, 0, 0] == pytest.approx(1.0)
        assert cells[0, 3, 1] == 0.0

    def test_desired_speed_first_order(self):
        # two cars with a fixed partner: w drift halves with dt
        mp = MicroParams(P, 0.01, 0.01)
        f = fleet([(0, 0.0, 0.2, 0.002), (0.1, 0.05, 0.5, 0.0)], dx=0.01, dy=0.01, road_width=1.0)
        drifts = []
        for dt in (2e-3, 1e-3, 5e-4):
            g = run_micro(f, 0.1, dt, mp)[-1][1]
            w0 = f.u[0] + per_vehicle_density(f)[0]
            w1 = g.u[0] + per_vehicle_density(g)[0]
            drifts.append(abs(w1 - w0))
        assert drifts[0] / drifts[1] >= 1.8 and drifts[1] / drifts[2] >= 1.8
