import math

import numpy as np
import pytest

from conftest import oracle_worst_error, random_field, random_solenoidal
from viscolimit.analysis import dissipation, energy, energy_drift, sobolev_norm
from viscolimit.constitutive import FlowState, FluidParams, Forcing, elastic_defect, normalize_velocity, rate_of_strain
from viscolimit.solver import (
    LINEAR,
    DtPolicy,
    LayerSpec,
    StepOptions,
    expm_taylor,
    linear_mode_matrix,
    linear_mode_solution,
    newtonian_step,
    oldroyd_step,
    phi_functions,
    phi_matrices,
    run,
    snapshot_times,
)
from viscolimit.spectral import SYMMETRIC, VECTOR, Grid, SpectralField, to_spectral


def taylor_green(grid, amp=1.0):
    x, y = grid.coordinates
    return to_spectral(amp * np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)]), grid, VECTOR)


class TestPhi:
    def test_small_argument_branch_is_continuous(self):
        z = np.array([1e-5, 2e-4, -3e-5, -2e-4, 0.0, 1e-3])
        e, p1, p2 = phi_functions(z)
        with np.errstate(all="ignore"):
            ref1 = np.where(z != 0, np.expm1(z) / z, 1.0)
            ref2 = np.where(z != 0, (np.expm1(z) - z) / z**2, 0.5)
        assert np.allclose(e, np.exp(z), rtol=1e-15)
        assert np.allclose(p1, ref1, rtol=1e-12)
        assert np.allclose(p2[np.abs(z) > 1e-4], ref2[np.abs(z) > 1e-4], rtol=1e-7)
        assert p2[4] == 0.5

    def test_matrix_version_matches_scalar_on_diagonal(self):
        lam = np.array([-1e-6, -0.5, -30.0, -1e4])
        A = np.diag(lam)[None]
        E, P1, P2 = phi_matrices(A)
        e, p1, p2 = phi_functions(lam)
        assert np.allclose(np.diag(E[0]), e, rtol=1e-13, atol=0)
        assert np.allclose(np.diag(P1[0]), p1, rtol=1e-10)
        assert np.allclose(np.diag(P2[0]), p2, rtol=1e-8)

    def test_expm_taylor_against_known_rotation(self):
        t = 2.5
        A = np.array([[0.0, -t], [t, 0.0]])
        R = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        assert np.max(np.abs(expm_taylor(A) - R)) < 1e-14


class TestOracle:
    def test_time_zero(self):
        p = FluidParams(1.0, 0.01, 0.5)
        u0, t0 = np.array([0.3, -0.1j]), np.array([1, 2j, 0.5])
        u, t = linear_mode_solution([1, 3], p, u0, t0, 0.0)
        assert np.allclose(u, u0) and np.allclose(t, t0)

    def test_small_omega_decouples(self):
        p = FluidParams(1.0, 0.1, 1e-12)
        k = np.array([2, 1])
        u0 = np.array([1.0, -2.0]) + 0j  # k.u0 = 0
        t0 = np.array([1.0, 0.5, -0.2]) + 0j
        u, tau = linear_mode_solution(k, p, u0, t0, 0.7)
        assert np.allclose(tau, t0 * math.exp(-7.0), rtol=1e-9, atol=1e-12)
        # u still receives P div tau / Re; without coupling it decays at the solvent rate
        uu, _ = linear_mode_solution(k, p, u0, t0, 0.7, coupling=False)
        assert np.allclose(uu, u0 * math.exp(-(1 - 1e-12) * 5 * 0.7), rtol=1e-12)

    def test_newtonian_eigenvalue_in_the_limit(self):
        k = np.array([3.0, 1.0])
        p = FluidParams(2.0, 1e-6, 0.5)
        ev = np.linalg.eigvals(linear_mode_matrix(k, p))
        slow = ev[np.argmax(ev.real)]
        assert slow.real == pytest.approx(-10.0 / 2.0, rel=1e-4)

    def test_forced_mode_reaches_stokes_balance(self):
        p = FluidParams(1.0, 0.01, 0.5)
        k = np.array([0, 2])
        f = np.array([1.0, 0.0]) + 0j  # solenoidal
        u, tau = linear_mode_solution(k, p, np.zeros(2, complex), np.zeros(3, complex), 50.0, f)
        # steady state of the linear system: |k|^2 u = f with total viscosity 1
        assert np.allclose(u, f / 4, atol=1e-12)


class TestStepper:
    def test_decoupled_stress_decay(self, grid16):
        eps = 0.05
        p = FluidParams(1.0, eps, 0.5)
        tau0 = SpectralField.zeros(grid16, SYMMETRIC)
        tau0.coeffs[(1,) + grid16.mode_index((2, 1))] = 0.7 - 0.2j
        st = FlowState(0.0, SpectralField.zeros(grid16, VECTOR), tau0)
        tr = run(st, p, 0.5, DtPolicy(fixed=1e-3), stride=0.1, layer=False, options=StepOptions(coupling=False))
        for s in tr.snapshots:
            assert np.max(np.abs(s.tau_hat.coeffs - tau0.coeffs * math.exp(-s.t / eps))) <= 1e-10

    def test_stiff_relaxation_keeps_defect_small(self, grid16):
        p = FluidParams(1.0, 1e-8, 0.5)
        u0 = random_solenoidal(grid16, 0, band=3)
        u0 = u0 * (1 / sobolev_norm(u0, 0))
        st = FlowState(0.0, u0, rate_of_strain(u0) * (2 * p.omega))
        for _ in range(100):
            st = oldroyd_step(st, p, 1e-4)
            assert sobolev_norm(elastic_defect(st, p.omega), 0) <= 1e-6

    def test_linear_run_matches_oracle(self, grid16):
        p = FluidParams(1.0, 1e-3, 0.5)
        st = FlowState(0.0, random_solenoidal(grid16, 1), random_field(grid16, SYMMETRIC, 2))
        tr = run(st, p, 0.5, DtPolicy(fixed=1e-3), stride=0.5, layer=False, options=LINEAR)
        assert oracle_worst_error(tr.snapshots[0], tr.final, p, 0.5) <= 1e-8

    def test_forced_linear_run_matches_oracle(self, grid16):
        p = FluidParams(1.0, 0.1, 0.3, forcing=Forcing("shear", 1.5, 2))
        st = FlowState(0.0, random_solenoidal(grid16, 3), random_field(grid16, SYMMETRIC, 4))
        tr = run(st, p, 0.5, DtPolicy(fixed=1e-3), stride=0.5, layer=False, options=LINEAR)
        f_hat = p.forcing.field(grid16)
        assert oracle_worst_error(tr.snapshots[0], tr.final, p, 0.5, forcing=f_hat) <= 1e-8

    @pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    def test_eps_uniform_stability(self, eps):
        grid = Grid(2, 8)
        p = FluidParams(1.0, eps, 0.5)
        st0 = FlowState(0.0, random_solenoidal(grid, 5), random_field(grid, SYMMETRIC, 6))
        st = st0
        ks = [(1, 0), (1, 1), (2, 1)]
        for n in range(1, 201):
            st = oldroyd_step(st, p, 1e-3, LINEAR)
            for k in ks:
                ue, te = linear_mode_solution(k, p, st0.u_hat.mode(k), st0.tau_hat.mode(k), n * 1e-3)
                num = np.linalg.norm(np.concatenate([st.u_hat.mode(k), st.tau_hat.mode(k)]))
                assert num <= 1.01 * np.linalg.norm(np.concatenate([ue, te])) + 1e-300

    def test_solenoidal_and_zero_mean_every_step(self, grid32):
        p = FluidParams(1.0, 0.01, 0.5)
        st = FlowState(0.0, random_solenoidal(grid32, 7, band=6), random_field(grid32, SYMMETRIC, 8, band=6))
        kd = grid32.deriv_wavenumbers
        for _ in range(20):
            st = oldroyd_step(st, p, 1e-3)
            div = sum(k * c for k, c in zip(kd, st.u_hat.coeffs))
            assert np.max(np.abs(div)) <= 1e-12 * sobolev_norm(st.u_hat, 0)
            assert np.all(st.u_hat.coeffs[:, 0, 0] == 0)

    def test_nonzero_slip_stays_bounded(self, grid16):
        p = FluidParams(1.0, 0.05, 0.5, slip=0.7)
        st = FlowState(0.0, random_solenoidal(grid16, 9, band=3), random_field(grid16, SYMMETRIC, 10, band=3))
        tr = run(st, p, 0.5, DtPolicy(fixed=1e-3), stride=0.1)
        assert tr.completed
        assert all(np.all(np.isfinite(s.tau_hat.coeffs)) for s in tr.snapshots)

    def test_step_rejects_bad_dt(self, grid16):
        st = FlowState(0.0, SpectralField.zeros(grid16, VECTOR), SpectralField.zeros(grid16, SYMMETRIC))
        with pytest.raises(ValueError):
            oldroyd_step(st, FluidParams(1, 0.1, 0.5), 0.0)


class TestNewtonian:
    def test_taylor_green_exact_decay(self, grid16):
        p = FluidParams(2.0, 0.1, 0.5)
        u0 = taylor_green(grid16)
        tr = run(FlowState(0.0, u0), p, 1.0, DtPolicy(fixed=1e-2), stride=0.25, model="newtonian")
        for s in tr.snapshots:
            assert np.max(np.abs(s.u_hat.coeffs - u0.coeffs * math.exp(-2 * s.t / p.reynolds))) < 1e-12

    def test_zero_stays_zero(self, grid16):
        st = FlowState(0.0, SpectralField.zeros(grid16, VECTOR))
        out = newtonian_step(st, FluidParams(1, 0.1, 0.5), 1e-3)
        assert np.all(out.u_hat.coeffs == 0) and out.t == pytest.approx(1e-3)

    def test_energy_balance_second_order(self, grid32):
        p = FluidParams(1.0, 0.1, 0.5)
        u0 = random_solenoidal(grid32, 11, band=4)
        drifts = []
        for dt in (4e-3, 2e-3):
            mons = {"E": lambda s: energy(s, p), "D": lambda s: dissipation(s, p)}
            tr = run(FlowState(0.0, u0), p, 0.5, DtPolicy(fixed=dt), stride=0.5, model="newtonian", monitors=mons)
            drifts.append(energy_drift(tr.series["E"], tr.series["D"]))
        # at least second order; the quadrature is fourth order, so a faster decay is fine
        assert abs(drifts[0]) < 1e-4
        assert drifts[0] / drifts[1] >= 3.5

    def test_deterministic(self, grid16):
        p = FluidParams(1.0, 0.1, 0.5)
        u0 = random_solenoidal(grid16, 12, band=4)
        a = run(FlowState(0.0, u0), p, 0.2, model="newtonian").final.u_hat.coeffs
        b = run(FlowState(0.0, u0), p, 0.2, model="newtonian").final.u_hat.coeffs
        assert a.tobytes() == b.tobytes()


class TestRun:
    def test_zero_horizon(self, grid16):
        st = FlowState(0.0, random_solenoidal(grid16, 0), random_field(grid16, SYMMETRIC, 0))
        tr = run(st, FluidParams(1, 0.1, 0.5), 0.0)
        assert len(tr.snapshots) == 1 and tr.completed

    def test_first_snapshot_is_initial_data(self, grid16):
        st = FlowState(0.0, random_solenoidal(grid16, 0), random_field(grid16, SYMMETRIC, 0))
        tr = run(st, FluidParams(1, 0.1, 0.5), 0.05)
        assert np.array_equal(tr.snapshots[0].u_hat.coeffs, st.u_hat.coeffs)
        assert np.array_equal(tr.snapshots[0].tau_hat.coeffs, st.tau_hat.coeffs)
        assert np.all(np.diff(tr.times) > 0) and tr.times[-1] == pytest.approx(0.05)

    def test_compressible_initial_velocity_is_projected(self, grid16):
        u = random_field(grid16, VECTOR, 3)
        st = FlowState(0.0, u, random_field(grid16, SYMMETRIC, 0))
        tr = run(st, FluidParams(1, 0.1, 0.5), 0.0)
        assert np.array_equal(tr.snapshots[0].u_hat.coeffs, normalize_velocity(u).coeffs)

    def test_resume_is_bit_exact(self, grid16):
        st = FlowState(0.0, random_solenoidal(grid16, 4), random_field(grid16, SYMMETRIC, 5))
        p, policy = FluidParams(1, 0.05, 0.5), DtPolicy(fixed=1e-3)
        straight = run(st, p, 0.04, policy, 0.02, layer=False)
        half = run(st, p, 0.02, policy, 0.02, layer=False)
        resumed = run(half.final, p, 0.02, policy, 0.02, layer=False)
        assert np.array_equal(resumed.final.u_hat.coeffs, straight.final.u_hat.coeffs)
        assert np.array_equal(resumed.final.tau_hat.coeffs, straight.final.tau_hat.coeffs)

    def test_nonfinite_state_signals_blowup(self, grid16):
        u = random_solenoidal(grid16, 0)
        u.coeffs[0, 1, 1] = np.nan
        st = FlowState(0.0, u, SpectralField.zeros(grid16, SYMMETRIC))
        tr = run(st, FluidParams(1, 0.1, 0.5), 0.1, DtPolicy(fixed=1e-2), layer=False)
        assert not tr.completed
        assert tr.blowup_time == pytest.approx(1e-2)
        assert "non-finite" in tr.blowup_reason

    def test_growth_guard(self, grid16):
        # negative viscosity is not representable, so drive growth with a huge forcing instead
        p = FluidParams(1.0, 0.1, 0.5, forcing=Forcing("shear", 1e12, 1))
        u = random_solenoidal(grid16, 0) * 1e-3
        tr = run(FlowState(0.0, u, SpectralField.zeros(grid16, SYMMETRIC)), p, 1.0, DtPolicy(fixed=1e-3))
        assert not tr.completed and "exceeds" in tr.blowup_reason

    def test_cfl_cap_limits_step(self, grid16):
        policy = DtPolicy(accuracy=1.0, cfl=0.5)
        assert policy.cfl_cap(grid16, 10.0) == pytest.approx(0.5 * grid16.dx / 10.0)
        assert policy.accuracy_cap(Grid(2, 64)) == pytest.approx(0.5)
        u = taylor_green(grid16, 50.0)
        tr = run(FlowState(0.0, u), FluidParams(1, 0.1, 0.5), 0.01, policy, model="newtonian")
        assert tr.dt_base <= 0.5 * grid16.dx / 50.0 * (1 + 1e-12)

    @pytest.mark.parametrize(
        "kwargs,msg",
        [(dict(horizon=-1.0), "horizon"), (dict(model="giesekus"), "model"), (dict(stride=0.0), "stride")],
    )
    def test_invalid_arguments(self, grid16, kwargs, msg):
        st = FlowState(0.0, random_solenoidal(grid16, 0), random_field(grid16, SYMMETRIC, 0))
        args = dict(horizon=0.1, model="oldroyd", stride=None) | kwargs
        with pytest.raises(ValueError, match=msg):
            run(st, FluidParams(1, 0.1, 0.5), args.pop("horizon"), **args)

    def test_oldroyd_needs_stress(self, grid16):
        with pytest.raises(ValueError, match="stress"):
            run(FlowState(0.0, random_solenoidal(grid16, 0)), FluidParams(1, 0.1, 0.5), 0.1)

    def test_invalid_dt_policy(self):
        with pytest.raises(ValueError):
            DtPolicy(accuracy=0.0)
        with pytest.raises(ValueError):
            DtPolicy(fixed=-1.0)


class TestSchedule:
    def test_layer_refinement(self):
        eps = 1e-3
        t = snapshot_times(1.0, 0.005, LayerSpec(10 * eps, eps / 20))
        coarse = np.arange(0, 201) * 0.005
        assert all(np.min(np.abs(t - c)) < 1e-12 for c in coarse)
        inside = t[t <= 10 * eps + 1e-12]
        assert np.max(np.diff(inside)) <= eps / 20 * (1 + 1e-9)
        assert np.all(np.diff(t) > 0)

    def test_horizon_not_multiple_of_stride(self):
        t = snapshot_times(0.25, 0.1)
        assert np.allclose(t, [0, 0.1, 0.2, 0.25])
