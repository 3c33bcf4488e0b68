import math

import numpy as np
import pytest

from kmfl.dynamics import (
    DynamicsParams,
    NoiseStream,
    ParticleState,
    normalize_params,
    simulate,
    simulate_overdamped,
    step_overdamped,
    step_underdamped,
)
from kmfl.errors import (
    DimensionMismatchError,
    NonFiniteError,
    NonPositiveParameterError,
    ParameterError,
)
from kmfl.functionals import CurieWeissQuadratic, RescaledDriftFunctional
from kmfl.series import ObservableSeries

SQRT2 = math.sqrt(2.0)


def zero_functional(dim=1):
    return CurieWeissQuadratic(kappa=0.0, eps=0.0, dim=dim)


class TestParams:
    def test_table_one_first_column_accepted(self):
        # gamma=0.1, dt=0.02, sigma=0.01*sqrt(2), lambda=1e-4
        p = DynamicsParams(alpha=1.0, gamma=0.1, sigma=0.01 * SQRT2, lam=1e-4,
                           dt=0.02, horizon=300.0, seed=1)
        assert p.n_steps == 15000

    def test_table_one_second_column_accepted(self):
        p = DynamicsParams(alpha=1.0, gamma=0.1, sigma=0.01 * SQRT2, lam=1e-3,
                           dt=0.01, horizon=500.0, seed=1)
        assert p.lam == 1e-3

    def test_dt_exceeding_horizon_rejected(self):
        with pytest.raises(ParameterError):
            DynamicsParams(dt=2.0, horizon=1.0)

    def test_stability_guard(self):
        with pytest.raises(ParameterError):
            DynamicsParams(gamma=10.0, dt=0.2, horizon=1.0)

    def test_frictionless_params_allowed(self):
        # conservative limit used by the energy checks
        assert DynamicsParams(gamma=0.0, sigma=0.0, dt=0.01, horizon=1.0).gamma == 0.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(ParameterError):
            DynamicsParams(sigma=-1.0)


class TestState:
    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ParticleState(np.zeros((3, 2)), np.zeros((3, 1)))

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            ParticleState(np.array([[np.nan]]), np.array([[0.0]]))

    def test_immutability(self):
        st = ParticleState(np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            st.positions[0, 0] = 1.0


class TestNoiseStream:
    def test_counter_purity(self):
        # block draw equals per-element draw for every (step, particle, coord)
        ns = NoiseStream(20240517)
        block = ns.normals(step=3, n=5, width=4)
        for i in range(5):
            for k in range(4):
                assert block[i, k] == ns.normal_at(3, i, k, width=4)

    def test_block_prefix_stability(self):
        ns = NoiseStream(99)
        big = ns.normals(step=0, n=64, width=3)
        small = ns.normals(step=0, n=16, width=3)
        np.testing.assert_array_equal(big[:16], small)

    def test_steps_are_disjoint(self):
        ns = NoiseStream(7)
        a = ns.normals(0, 32, 2)
        b = ns.normals(1, 32, 2)
        assert not np.allclose(a, b)

    def test_seed_changes_stream(self):
        assert not np.allclose(NoiseStream(1).normals(0, 8, 2), NoiseStream(2).normals(0, 8, 2))

    def test_moments_are_standard_normal(self):
        z = NoiseStream(5).normals(0, 200000, 1).ravel()
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01


class TestStepUnderdamped:
    def test_zero_drift_zero_noise_fixed_point(self):
        st = ParticleState(np.array([[0.0]]), np.array([[0.0]]), time=0.0)
        p = DynamicsParams(alpha=1, gamma=1, sigma=0.0, lam=0.0, dt=0.5, horizon=1.0)
        out = step_underdamped(st, p, zero_functional(), NoiseStream(0), step=0)
        np.testing.assert_array_equal(out.positions, st.positions)
        np.testing.assert_array_equal(out.velocities, st.velocities)
        assert out.time == 0.5

    def test_hand_derived_single_step(self):
        # v1 = (1 - 1*0.1)*0 - 1*0.1 = -0.1 ; x1 = 1 + (-0.1)*0.1 = 0.99
        st = ParticleState(np.array([[1.0]]), np.array([[0.0]]))
        p = DynamicsParams(alpha=1, gamma=1, sigma=0.0, lam=0.0, dt=0.1, horizon=1.0)
        f = CurieWeissQuadratic(kappa=1.0, eps=0.0, dim=1)
        out = step_underdamped(st, p, f, NoiseStream(0), step=0)
        np.testing.assert_allclose(out.velocities, [[-0.1]], rtol=1e-14)
        np.testing.assert_allclose(out.positions, [[0.99]], rtol=1e-14)

    def test_euler_scheme_moves_with_old_velocity(self):
        st = ParticleState(np.array([[1.0]]), np.array([[2.0]]))
        p = DynamicsParams(alpha=1, gamma=0.5, sigma=0.0, lam=0.0, dt=0.1, horizon=1.0)
        f = zero_functional()
        semi = step_underdamped(st, p, f, NoiseStream(0), step=0, scheme="semi_implicit")
        euler = step_underdamped(st, p, f, NoiseStream(0), step=0, scheme="euler")
        np.testing.assert_allclose(euler.positions, [[1.0 + 2.0 * 0.1]])
        np.testing.assert_allclose(semi.positions, [[1.0 + (1 - 0.05) * 2.0 * 0.1]])

    def test_dimension_mismatch(self):
        st = ParticleState(np.zeros((2, 3)), np.zeros((2, 3)))
        p = DynamicsParams(dt=0.1, horizon=1.0)
        with pytest.raises(DimensionMismatchError):
            step_underdamped(st, p, zero_functional(dim=2), NoiseStream(0), step=0)

    def test_blowup_reports_step_index(self):
        # kappa*dt large enough to overflow after repeated doubling
        st = ParticleState(np.array([[1e300]]), np.array([[0.0]]))
        p = DynamicsParams(alpha=1, gamma=0.0, sigma=0.0, dt=0.9, horizon=10.0)
        f = CurieWeissQuadratic(kappa=1e9, eps=0.0, dim=1)
        with pytest.raises(NonFiniteError) as err, np.errstate(over="ignore"):
            state = st
            for k in range(20):
                state = step_underdamped(state, p, f, NoiseStream(0), step=k)
        assert err.value.step is not None


class TestStepOverdamped:
    def test_zero_drift_identity(self):
        x = np.array([[1.0, -2.0]])
        p = DynamicsParams(sigma=0.0, dt=0.1, horizon=1.0)
        out = step_overdamped(x, p, zero_functional(dim=2), NoiseStream(0), step=0)
        np.testing.assert_array_equal(out, x)

    def test_linear_contraction(self):
        x = np.array([[2.0]])
        p = DynamicsParams(sigma=0.0, lam=0.0, dt=0.5, horizon=1.0)
        f = CurieWeissQuadratic(kappa=1.0, eps=0.0, dim=1)
        out = step_overdamped(x, p, f, NoiseStream(0), step=0)
        np.testing.assert_allclose(out, [[1.0]])


class TestNormalizeParams:
    def test_identity_at_unit_coefficients(self):
        s = normalize_params(1.0, 1.0, SQRT2)
        np.testing.assert_allclose(s, (1.0, 1.0, 1.0, 1.0), rtol=1e-15)

    def test_table_one_coefficients(self):
        s = normalize_params(1.0, 0.1, 0.01 * SQRT2)
        np.testing.assert_allclose(
            s,
            (math.sqrt(0.002) / (0.01 * SQRT2), math.sqrt(0.2) / (0.01 * SQRT2), 10.0,
             math.sqrt(2.0 / (0.1 * 0.0002))),
            rtol=1e-13,
        )
        np.testing.assert_allclose(s, (3.16228, 31.6228, 10.0, 316.228), rtol=1e-5)

    def test_alpha_two(self):
        s = normalize_params(2.0, 1.0, SQRT2)
        np.testing.assert_allclose((s.space, s.velocity, s.time), (0.5, 1.0, 1.0), rtol=1e-15)

    def test_nonpositive_rejected(self):
        for bad in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)]:
            with pytest.raises(NonPositiveParameterError):
                normalize_params(*bad)


class TestScalingEquivalence:
    """One transformed step of the general dynamics equals one step of the
    unit-coefficient dynamics driven by the same normal draws."""

    @pytest.mark.parametrize("alpha,gamma,sigma", [
        (1.0, 0.1, 0.01 * SQRT2),
        (2.0, 0.5, 0.3),
        (0.7, 1.5, 1.1),
    ])
    def test_one_step_equivalence(self, alpha, gamma, sigma):
        rng = np.random.default_rng(42)
        n, d = 6, 2
        kappa, eps = 0.8, 0.3
        x0 = rng.standard_normal((n, d))
        v0 = rng.standard_normal((n, d))
        dt = 0.01
        seed = 1234

        base = CurieWeissQuadratic(kappa, eps, d)
        params = DynamicsParams(alpha=alpha, gamma=gamma, sigma=sigma, lam=0.0,
                                dt=dt, horizon=dt, seed=seed)
        out = step_underdamped(ParticleState(x0, v0), params, base, NoiseStream(seed), step=0)

        s = normalize_params(alpha, gamma, sigma)
        # time scale is "original units per normalized unit": dt' = dt / s.time
        dt_norm = dt / s.time
        norm_params = DynamicsParams(alpha=1.0, gamma=1.0, sigma=SQRT2, lam=0.0,
                                     dt=dt_norm, horizon=dt_norm, seed=seed)
        scaled = RescaledDriftFunctional(base, space_scale=s.space, drift_scale=s.functional)
        out_norm = step_underdamped(
            ParticleState(s.space * x0, s.velocity * v0),
            norm_params, scaled, NoiseStream(seed), step=0,
        )
        np.testing.assert_allclose(s.space * out.positions, out_norm.positions, rtol=1e-10)
        np.testing.assert_allclose(s.velocity * out.velocities, out_norm.velocities, rtol=1e-10)

    def test_multi_step_trajectory_equivalence(self):
        alpha, gamma, sigma = 1.0, 0.25, 0.9
        kappa, eps = 1.2, 0.0
        n, d, steps = 4, 1, 50
        dt = 0.02
        seed = 77
        rng = np.random.default_rng(3)
        state = ParticleState(rng.standard_normal((n, d)), rng.standard_normal((n, d)))
        base = CurieWeissQuadratic(kappa, eps, d)
        params = DynamicsParams(alpha=alpha, gamma=gamma, sigma=sigma, dt=dt,
                                horizon=steps * dt, seed=seed)
        s = normalize_params(alpha, gamma, sigma)
        norm_params = DynamicsParams(alpha=1.0, gamma=1.0, sigma=SQRT2, dt=dt / s.time,
                                     horizon=steps * dt / s.time, seed=seed)
        scaled = RescaledDriftFunctional(base, s.space, s.functional)
        norm_state = ParticleState(s.space * state.positions, s.velocity * state.velocities)
        noise = NoiseStream(seed)
        for k in range(steps):
            state = step_underdamped(state, params, base, noise, step=k)
            norm_state = step_underdamped(norm_state, norm_params, scaled, noise, step=k)
        np.testing.assert_allclose(s.space * state.positions, norm_state.positions, rtol=1e-9)
        np.testing.assert_allclose(s.velocity * state.velocities, norm_state.velocities, rtol=1e-9)


class TestEnergyConsistency:
    def test_frictionless_energy_drift_halves_with_dt(self):
        # sigma = lambda = gamma = 0 with a conservative functional:
        # E = 0.5 sum |v|^2 + N F(mu_x) drifts O(dt) over a fixed horizon
        rng = np.random.default_rng(11)
        n, d = 8, 2
        f = CurieWeissQuadratic(kappa=1.0, eps=0.5, dim=d)
        x0, v0 = rng.standard_normal((n, d)), rng.standard_normal((n, d))

        def energy(state):
            vsq = 0.5 * float(np.sum(state.velocities**2))
            return vsq + n * f.value(state.positions)

        def max_drift(dt):
            params = DynamicsParams(alpha=1.0, gamma=0.0, sigma=0.0, lam=0.0,
                                    dt=dt, horizon=1.0, seed=0)
            state = ParticleState(x0, v0)
            e0 = energy(state)
            worst = 0.0
            noise = NoiseStream(0)
            for k in range(params.n_steps):
                state = step_underdamped(state, params, f, noise, step=k)
                worst = max(worst, abs(energy(state) - e0))
            return worst

        coarse, fine = max_drift(0.01), max_drift(0.005)
        assert coarse / fine == pytest.approx(2.0, rel=0.5)

    def test_single_step_energy_change_vanishes_with_dt(self):
        rng = np.random.default_rng(12)
        n, d = 4, 1
        f = CurieWeissQuadratic(kappa=2.0, eps=0.0, dim=d)
        x0, v0 = rng.standard_normal((n, d)), rng.standard_normal((n, d))

        def change(dt):
            params = DynamicsParams(alpha=1.0, gamma=0.0, sigma=0.0, dt=dt, horizon=1.0)
            st = ParticleState(x0, v0)
            e0 = 0.5 * float(np.sum(st.velocities**2)) + n * f.value(st.positions)
            nxt = step_underdamped(st, params, f, NoiseStream(0), step=0)
            e1 = 0.5 * float(np.sum(nxt.velocities**2)) + n * f.value(nxt.positions)
            return abs(e1 - e0)

        assert change(0.005) < change(0.01) <= 10.0 * 0.01


class TestSimulate:
    def test_row_count(self):
        st = ParticleState(np.zeros((2, 1)), np.zeros((2, 1)))
        p = DynamicsParams(sigma=0.0, dt=0.5, horizon=1.0)
        series, final = simulate(st, p, zero_functional(), {"kinetic": lambda s: 0.0}, 1)
        np.testing.assert_allclose(series.times, [0.0, 0.5, 1.0])
        assert len(series) == 3
        assert final.time == pytest.approx(1.0)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(5)
        st = ParticleState(rng.standard_normal((4, 2)), rng.standard_normal((4, 2)))
        f = CurieWeissQuadratic(1.0, 0.2, 2)
        p = DynamicsParams(gamma=0.5, sigma=0.7, dt=0.05, horizon=1.0, seed=99)
        obs = {"x": lambda s: float(s.positions.sum()), "v": lambda s: float(s.velocities.sum())}
        s1, f1 = simulate(st, p, f, obs, 2)
        s2, f2 = simulate(st, p, f, obs, 2)
        np.testing.assert_array_equal(s1.column("x"), s2.column("x"))
        np.testing.assert_array_equal(s1.column("v"), s2.column("v"))
        np.testing.assert_array_equal(f1.positions, f2.positions)

    def test_quiescent_start_keeps_kinetic_zero(self):
        st = ParticleState(np.ones((3, 1)), np.zeros((3, 1)))
        p = DynamicsParams(sigma=0.0, dt=0.25, horizon=1.0)
        kinetic = lambda s: 0.5 * float(np.mean(np.sum(s.velocities**2, axis=1)))
        series, _ = simulate(st, p, zero_functional(), {"kinetic": kinetic}, 1)
        np.testing.assert_array_equal(series.column("kinetic"), np.zeros(5))

    def test_overdamped_simulation_matches_manual_steps(self):
        x0 = np.array([[1.0], [2.0]])
        f = CurieWeissQuadratic(1.0, 0.0, 1)
        p = DynamicsParams(sigma=0.4, dt=0.1, horizon=0.5, seed=3)
        series, final = simulate_overdamped(x0, p, f, {"m": lambda s: float(s.positions.mean())}, 1)
        x = x0
        noise = NoiseStream(3)
        for k in range(5):
            x = step_overdamped(x, p, f, noise, step=k)
        np.testing.assert_array_equal(final, x)
        assert len(series) == 6


class TestObservableSeries:
    def test_csv_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(8)
        series = ObservableSeries(
            times=rng.random(7),
            columns={"a": rng.standard_normal(7), "b": 1e-17 * rng.standard_normal(7)},
        )
        path = tmp_path / "series.csv"
        series.to_csv(path)
        back = ObservableSeries.from_csv(path)
        np.testing.assert_array_equal(series.times, back.times)
        for name in series.names:
            np.testing.assert_array_equal(series.column(name), back.column(name))
        back.to_csv(tmp_path / "series2.csv")
        assert (tmp_path / "series.csv").read_bytes() == (tmp_path / "series2.csv").read_bytes()

    def test_rejects_ragged_columns(self):
        with pytest.raises(ValueError):
            ObservableSeries(times=np.zeros(3), columns={"a": np.zeros(2)})
