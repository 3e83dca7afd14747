import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgslab.evolution import (
    CALIBRATION_SUITE,
    CalibrationCase,
    DivergenceError,
    PicardReport,
    Trajectory,
    data_norm,
    duhamel,
    evolve,
    frequency,
    lifespan,
    lifespan_exponent,
    linear_propagator,
    local_bound_ratios,
    picard_solve,
    strang_step,
    worst_contraction,
)
from kgslab.gevrey_spaces import GevreyParams, gevrey_norm
from kgslab.kgs_model import InitialDataSpec, KgsState, conjugate_pair_defect, initial_state, to_first_order
from kgslab.spectral_core import SpectralField, TorusGrid, forward_transform

SMALL = InitialDataSpec(0.5, 2.0, 1.0, 1.0, seed=3)


def random_field(rng, grid, decay=0.5):
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return SpectralField(grid, c * np.exp(-decay * grid.xi_l1))


def max_diff(a, b):
    return float(np.max(np.abs(a - b)))


class TestLinearPropagator:
    @pytest.mark.parametrize("h", ["schrodinger", "wave_plus", "wave_minus"])
    def test_identity_at_zero(self, rng, h):
        f = random_field(rng, TorusGrid(1, 16))
        assert np.array_equal(linear_propagator(f, h, 0.0).coeffs, f.coeffs)

    @given(t=st.floats(-30, 30), h=st.sampled_from(["schrodinger", "wave_plus", "wave_minus"]))
    def test_norm_preserved(self, t, h):
        f = random_field(np.random.default_rng(0), TorusGrid(2, 8, 1.5))
        assert linear_propagator(f, h, t).norm() == pytest.approx(f.norm(), rel=1e-13)

    @given(t1=st.floats(-10, 10), t2=st.floats(-10, 10))
    def test_group_law(self, t1, t2):
        f = random_field(np.random.default_rng(1), TorusGrid(1, 32, 2.0))
        for h in ("schrodinger", "wave_plus"):
            a = linear_propagator(linear_propagator(f, h, t1), h, t2).coeffs
            b = linear_propagator(f, h, t1 + t2).coeffs
            assert max_diff(a, b) <= 1e-13 * np.max(np.abs(f.coeffs)) * (1 + abs(t1) + abs(t2)) * 10

    def test_signs(self):
        g = TorusGrid(1, 16, 1.0)
        f = SpectralField.mode(g, 2)
        assert linear_propagator(f, "schrodinger", 0.1).coeff(2) == pytest.approx(np.exp(-0.4j))
        assert linear_propagator(f, "wave_plus", 0.1).coeff(2) == pytest.approx(np.exp(-0.1j * math.sqrt(5)))
        assert linear_propagator(f, "wave_minus", 0.1).coeff(2) == pytest.approx(np.exp(0.1j * math.sqrt(5)))

    def test_unknown_tag(self):
        with pytest.raises(ValueError):
            frequency("heat", TorusGrid(1, 8))


class TestStrang:
    def test_linear_when_u_vanishes(self, rng):
        g = TorusGrid(1, 64, 4.0)
        p, m = to_first_order(forward_transform(rng.standard_normal(64), g), forward_transform(rng.standard_normal(64), g))
        s = KgsState(SpectralField.zeros(g), p, m)
        out = s
        for i in range(10):
            out = strang_step(out, 0.05, i)
        assert np.all(out.u.coeffs == 0)
        assert max_diff(out.n_plus.coeffs, linear_propagator(p, "wave_plus", 0.5).coeffs) <= 1e-13
        assert max_diff(out.n_minus.coeffs, linear_propagator(m, "wave_minus", 0.5).coeffs) <= 1e-13

    def test_free_schrodinger_when_meson_vanishes_and_source_is_constant(self):
        # a single Schroedinger mode only feeds the zero mode of n, which then
        # multiplies u by a phase; with tiny amplitude the flow is linear to 1e-10
        g = TorusGrid(1, 32, 2.0)
        u = SpectralField.mode(g, 3, 1e-6)
        zero = SpectralField.zeros(g)
        traj = evolve(KgsState(u, zero, zero), 1.0, 0.01)
        ref = linear_propagator(u, "schrodinger", 1.0)
        assert max_diff(traj.final.u.coeffs, ref.coeffs) <= 1e-10 * 1e-6

    def test_local_error_third_order(self):
        g = TorusGrid(1, 64, 4.0)
        s = initial_state(SMALL, g)
        ref = s
        for _ in range(8):
            ref = strang_step(ref, 0.1 / 8)
        errs = []
        for dt, n in ((0.1, 1), (0.05, 2)):
            out = s
            for _ in range(n):
                out = strang_step(out, dt)
            errs.append(max_diff(out.stack(), ref.stack()))
        # one step of dt vs two of dt/2: the two-step error is a sum of local ones
        assert 3.0 < errs[0] / errs[1] < 9.0

    def test_pair_invariant_per_step(self):
        g = TorusGrid(1, 64, 4.0)
        s = initial_state(SMALL, g)
        for i in range(100):
            s = strang_step(s, 0.01, i)
        assert conjugate_pair_defect(s) <= 1e-12

    def test_dt_must_be_positive(self):
        s = initial_state(SMALL, TorusGrid(1, 16))
        with pytest.raises(ValueError):
            strang_step(s, 0.0)

    def test_divergence_detected(self):
        g = TorusGrid(1, 16)
        s = initial_state(InitialDataSpec(0.5, 1e200, 1e200, 1e200), g)
        with np.errstate(all="ignore"), pytest.raises(DivergenceError) as info:
            strang_step(s, 0.1, step_index=7)
        assert info.value.step == 7


class TestEvolve:
    def test_zero_horizon(self):
        s = initial_state(SMALL, TorusGrid(1, 16))
        traj = evolve(s, 0.0, 0.1)
        assert len(traj) == 1 and traj.final is not None
        assert np.array_equal(traj.final.stack(), s.stack())

    def test_snapshots_at_requested_times(self):
        s = initial_state(SMALL, TorusGrid(1, 32))
        seen = []
        traj = evolve(s, 1.0, 0.05, [0.0, 0.25, 1.0, 0.5], on_snapshot=lambda t, st_: seen.append(t))
        assert traj.times == pytest.approx([0.0, 0.25, 0.5, 1.0])
        assert seen == traj.times
        assert traj.steps == 20
        assert [st_.t for st_ in traj.states] == traj.times

    def test_output_times_must_align(self):
        s = initial_state(SMALL, TorusGrid(1, 16))
        with pytest.raises(ValueError, match="multiple of dt"):
            evolve(s, 1.0, 0.3, [0.0, 1.0])

    def test_deterministic(self):
        s = initial_state(SMALL, TorusGrid(1, 32))
        a = evolve(s, 0.5, 0.01).final.stack()
        b = evolve(s, 0.5, 0.01).final.stack()
        assert np.array_equal(a, b)

    def test_divergence_carries_partial(self):
        s = initial_state(InitialDataSpec(0.5, 1e150, 1e150, 1e150), TorusGrid(1, 16))
        with np.errstate(all="ignore"), pytest.raises(DivergenceError) as info:
            evolve(s, 1.0, 0.1, [0.0, 0.1, 1.0])
        assert len(info.value.partial.times) >= 1

    def test_trajectory_validation(self):
        s = initial_state(SMALL, TorusGrid(1, 16))
        with pytest.raises(ValueError):
            Trajectory([0.0, 0.0], [s, s], 0.1)
        with pytest.raises(ValueError):
            Trajectory([0.0], [s, s], 0.1)

    def test_global_second_order(self):
        g = TorusGrid(1, 64, 4.0)
        s = initial_state(SMALL, g)
        ref = evolve(s, 0.5, 0.05 / 8).final.stack()
        e1 = max_diff(evolve(s, 0.5, 0.05).final.stack(), ref)
        e2 = max_diff(evolve(s, 0.5, 0.025).final.stack(), ref)
        assert 3.5 <= e1 / e2 <= 4.5

    def test_charge_drift_small_and_shrinking(self):
        # the midpoint coupling step conserves charge only up to its truncation error
        g = TorusGrid(1, 64, 4.0)
        drifts = []
        for dt in (0.01, 0.005):
            traj = evolve(initial_state(SMALL, g), 2.0, dt, [0.0, 1.0, 2.0])
            q = [float(np.sum(np.abs(st_.u.coeffs) ** 2)) for st_ in traj.states]
            drifts.append(max(abs(x - q[0]) for x in q) / q[0])
        assert drifts[0] <= 1e-6
        assert drifts[1] < drifts[0] / 2


class TestDuhamel:
    def test_no_forcing(self, rng):
        g = TorusGrid(1, 16)
        f = random_field(rng, g)
        zero = SpectralField.zeros(g)
        out = duhamel("wave_plus", f, lambda s: zero, 0.7, 3)
        assert max_diff(out.coeffs, linear_propagator(f, "wave_plus", 0.7).coeffs) <= 1e-15

    @pytest.mark.parametrize("h", ["schrodinger", "wave_plus", "wave_minus"])
    def test_constant_forcing_at_zero_frequency(self, h):
        g = TorusGrid(1, 16)
        G = SpectralField.mode(g, 0, 2.0 - 1.0j)
        zero = SpectralField.zeros(g)
        t = 1.3
        out = duhamel(h, zero, lambda s: G, t, 16)
        omega0 = frequency(h, g)[0]
        # -i int_0^t exp(-i (t - s) omega0) G ds in closed form
        if omega0 == 0:
            expected = -1j * t * (2.0 - 1.0j)
        else:
            expected = -1j * (2.0 - 1.0j) * (1 - np.exp(-1j * omega0 * t)) / (1j * omega0)
        assert out.coeff(0) == pytest.approx(expected, rel=1e-13)

    def test_quadrature_self_convergence(self):
        g = TorusGrid(1, 16, 1.0)
        f = SpectralField.zeros(g)
        F = SpectralField.mode(g, 3, 1.0)
        forcing = lambda s: F * np.exp(2.0j * s)  # noqa: E731
        exact = duhamel("schrodinger", f, forcing, 1.0, 20, panels=4).coeffs
        errs = [max_diff(duhamel("schrodinger", f, forcing, 1.0, q).coeffs, exact) for q in (2, 4, 8)]
        assert errs[0] / errs[1] >= 4 and errs[1] / errs[2] >= 4

    def test_quad_nodes_validated(self):
        g = TorusGrid(1, 8)
        with pytest.raises(ValueError):
            duhamel("schrodinger", SpectralField.zeros(g), lambda s: SpectralField.zeros(g), 1.0, 1)


class TestLifespan:
    @pytest.mark.parametrize("d,q", [(1, 2.0), (2, 2.0), (3, 4.0)])
    def test_exponent(self, d, q):
        assert lifespan_exponent(d) == q

    def test_zero_data(self):
        z = SpectralField.zeros(TorusGrid(1, 16))
        assert lifespan(z, z, z, 0.3, 2.0, 5.0) == 5.0

    def test_scaling(self):
        g = TorusGrid(1, 64, 2.0)
        u0, pp, pm = CALIBRATION_SUITE[0].data()
        big = [f * 1000.0 for f in (u0, pp, pm)]
        bigger = [f * 2000.0 for f in (u0, pp, pm)]
        r = lifespan(*bigger, 0.5, 2.0, 1.0) / lifespan(*big, 0.5, 2.0, 1.0)
        assert r == pytest.approx(0.25, rel=1e-3)
        del g

    def test_data_norm(self):
        g = TorusGrid(1, 16, 1.0)
        u0 = SpectralField.mode(g, 1)
        z = SpectralField.zeros(g)
        assert data_norm(u0, z, z, 0.5) == pytest.approx(math.exp(0.5))


class TestPicard:
    def test_zero_u_is_immediate(self):
        case = CALIBRATION_SUITE[0]
        _, pp, pm = case.data()
        z = SpectralField.zeros(pp.grid)
        traj, rep = picard_solve(z, pp, pm, 0.5, 0.3)
        assert rep.converged and rep.iterations == 1
        assert max_diff(traj.final.n_plus.coeffs, linear_propagator(pp, "wave_plus", 0.3).coeffs) <= 1e-13

    def test_contracts_and_agrees_with_strang(self):
        case = CALIBRATION_SUITE[1]
        u0, pp, pm = case.data()
        delta = lifespan(u0, pp, pm, case.sigma, 2.0, 32.0)
        traj, rep = picard_solve(u0, pp, pm, case.sigma, delta)
        assert rep.converged
        assert worst_contraction(rep) <= 0.6
        assert rep.differences[-1] <= rep.tol
        assert all(f > 0 for f in rep.contraction_factors)
        ref = evolve(KgsState(u0, pp, pm), delta, delta / 800).final
        half = GevreyParams(case.sigma / 2, 0.0)
        diff = gevrey_norm(traj.final.u - ref.u, half)
        assert diff <= 1e-6

    def test_oversized_delta_fails(self):
        case = CALIBRATION_SUITE[0]
        u0, pp, pm = case.data()
        delta = 100 * lifespan(u0, pp, pm, case.sigma, 2.0, 128.0)
        _, rep = picard_solve(u0, pp, pm, case.sigma, delta, max_iter=15)
        assert not rep.converged or max(rep.contraction_factors) > 1
        assert rep.suggested_delta == pytest.approx(delta / 2)
        assert "delta" in rep.message

    def test_local_bounds(self):
        case = CALIBRATION_SUITE[0]
        u0, pp, pm = case.data()
        delta = lifespan(u0, pp, pm, case.sigma, 2.0, 32.0)
        traj, _ = picard_solve(u0, pp, pm, case.sigma, delta)
        ratios = local_bound_ratios(traj, u0, pp, pm, case.sigma)
        assert all(r <= 4.0 for r in ratios.values())

    def test_validation(self):
        z = SpectralField.zeros(TorusGrid(1, 16))
        with pytest.raises(ValueError):
            picard_solve(z, z, z, 0.1, -1.0)
        with pytest.raises(ValueError):
            picard_solve(z, z, z, 0.1, 1.0, nodes=4)

    def test_report_helpers(self):
        rep = PicardReport(4, [1.0, 0.5, 0.2, 0.1], [0.5, 0.4, 0.5], True, 0.1, 0.2, 64)
        assert rep.factors_from(3) == [0.4, 0.5]
        assert worst_contraction(rep) == 0.5
        assert rep.to_dict()["nodes"] == 64


def test_calibration_case_data_is_deterministic():
    a = CalibrationCase(seed=5).data()
    b = CalibrationCase(seed=5).data()
    assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a, b))
