"""Trajectory surrogates, distance bounds, projection, and the SCA loop."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st_hyp

from arislab import ratemodel, scene, trajectory
from arislab.scene import Path
from conftest import make_run, micro_text


def finite_vec(dim):
    return st_hyp.lists(st_hyp.floats(-1e3, 1e3), min_size=dim, max_size=dim).map(np.array)


class TestDistanceBound:
    def test_tight_at_expansion(self):
        anchor = np.array([1.0, 2.0, 3.0])
        q_t = np.array([4.0, 6.0, 3.0])
        coef, const = trajectory.linear_distance_bound(anchor, q_t)
        assert coef @ q_t + const == pytest.approx(np.linalg.norm(q_t - anchor), rel=1e-12)

    def test_collinear_equality(self):
        coef, const = trajectory.linear_distance_bound(np.zeros(3), np.array([1.0, 0, 0]))
        q = np.array([2.0, 0, 0])
        assert coef @ q + const == pytest.approx(2.0, rel=1e-12)

    def test_orthogonal_under_estimates(self):
        coef, const = trajectory.linear_distance_bound(np.zeros(3), np.array([1.0, 0, 0]))
        q = np.array([1.0, 5.0, 0.0])
        assert coef @ q + const <= np.linalg.norm(q)

    def test_coincident_rejected(self):
        with pytest.raises(ValueError, match="coincides"):
            trajectory.linear_distance_bound(np.ones(3), np.ones(3))

    @settings(max_examples=200, deadline=None)
    @given(finite_vec(3), finite_vec(3), finite_vec(3))
    def test_global_lower_bound_property(self, anchor, q_t, q):
        if np.linalg.norm(q_t - anchor) < 1e-6:
            return
        coef, const = trajectory.linear_distance_bound(anchor, q_t)
        assert coef @ q + const <= np.linalg.norm(q - anchor) + 1e-6


class TestSurrogate:
    def test_cascade_constant_scaling(self):
        # C is distance-free: p * d1^e1 * d2^e2; doubling both distances at
        # eta = (2, 2) divides p by 16 and leaves C unchanged
        p, d1, d2 = 3.0, 10.0, 20.0
        c = p * d1 ** 2 * d2 ** 2
        p_scaled = c * (2 * d1) ** -2.0 * (2 * d2) ** -2.0
        assert p_scaled == pytest.approx(p / 16.0, rel=1e-12)
        assert p_scaled * (2 * d1) ** 2 * (2 * d2) ** 2 == pytest.approx(c, rel=1e-12)

    def test_disabled_when_no_ris(self, micro_run):
        scn, real, frame, st, sic = micro_run
        st.rho_u[:] = 0.0
        _, enabled = trajectory.cascade_constant(scn, frame[0], st, 0, "uav", 0)
        assert not enabled

    def test_tightness_at_expansion(self, micro_run):
        scn, real, frame, st, sic = micro_run
        surr = trajectory.build_surrogates(scn, frame, st, sic)
        for ts in surr:
            if not ts.enabled:
                continue
            got = trajectory.power_surrogate(ts.q_t, ts)
            assert got == pytest.approx(ts.p_cur, rel=1e-9)

    def test_gradients_match_finite_differences(self, micro_run):
        scn, real, frame, st, sic = micro_run
        ts = [t for t in trajectory.build_surrogates(scn, frame, st, sic)
              if t.enabled and t.platform == "uav"][0]

        def h(d1, d2):
            return d1 ** (-ts.eta1) * d2 ** (-ts.eta2)

        step = 1e-6 * ts.d1_t
        num1 = (h(ts.d1_t + step, ts.d2_t) - h(ts.d1_t - step, ts.d2_t)) / (2 * step)
        step2 = 1e-6 * ts.d2_t
        num2 = (h(ts.d1_t, ts.d2_t + step2) - h(ts.d1_t, ts.d2_t - step2)) / (2 * step2)
        assert ts.grad1 == pytest.approx(num1, rel=1e-5)
        assert ts.grad2 == pytest.approx(num2, rel=1e-5)

    def test_moving_toward_user_raises_surrogate(self, micro_run):
        scn, real, frame, st, sic = micro_run
        ts = [t for t in trajectory.build_surrogates(scn, frame, st, sic)
              if t.enabled and t.platform == "uav"][0]
        toward = ts.anchor2 - ts.q_t
        toward /= np.linalg.norm(toward)
        base = trajectory.power_surrogate(ts.q_t, ts)
        moved = trajectory.power_surrogate(ts.q_t + 5.0 * toward, ts)
        # grad2 < 0 and the distance bound falls along this ray
        assert moved > base

    def test_objective_constant_when_all_disabled(self, micro_run):
        scn, real, frame, st, sic = micro_run
        st.rho_u[:] = 0.0
        st.rho_h[:] = 0.0
        surr = trajectory.build_surrogates(scn, frame, st, sic)
        assert not any(ts.enabled for ts in surr)
        v1 = trajectory.surrogate_objective(st.uav_path.positions, st.hap_path.positions, surr)
        v2 = trajectory.surrogate_objective(st.uav_path.positions + 50.0,
                                            st.hap_path.positions, surr)
        assert v1 == v2 == 0.0

    def test_objective_tight_at_expansion(self, micro_run):
        scn, real, frame, st, sic = micro_run
        surr = trajectory.build_surrogates(scn, frame, st, sic)
        got = trajectory.surrogate_objective(st.uav_path.positions,
                                             st.hap_path.positions, surr)
        expected = sum(np.log2(1 + ts.p_cur / ts.interference)
                       for ts in surr if ts.enabled) / scn.n_slots
        assert got == pytest.approx(expected, rel=1e-9)


class TestProjectPath:
    def test_feasible_unchanged(self, micro_run):
        scn, real, frame, st, sic = micro_run
        pos = st.uav_path.positions
        out = trajectory.project_path(pos, scn, "uav")
        np.testing.assert_allclose(out, pos, atol=1e-12)

    def test_displaced_point_repaired(self, desk_scenario):
        scn = scene.place_users(desk_scenario, np.random.default_rng(0))
        uav, _ = scene.init_paths(scn)
        pos = uav.positions.copy()
        cap = scn.v_max_uav * scn.slot_seconds
        pos[2] += np.array([2.5 * cap, 0.0, 0.0])
        out = trajectory.project_path(pos, scn, "uav")
        scene.validate_path(Path(out), scn, "uav")

    def test_altitude_clamped(self, desk_scenario):
        scn = scene.place_users(desk_scenario, np.random.default_rng(1))
        uav, _ = scene.init_paths(scn)
        pos = uav.positions.copy()
        pos[1:-1, 2] = scn.z_uav_max + 500.0
        out = trajectory.project_path(pos, scn, "uav")
        assert out[1:-1, 2].max() <= scn.z_uav_max + 1e-9
        scene.validate_path(Path(out), scn, "uav")

    def test_extreme_garbage_falls_back_to_line(self, desk_scenario):
        scn = scene.place_users(desk_scenario, np.random.default_rng(2))
        uav, _ = scene.init_paths(scn)
        rng = np.random.default_rng(3)
        pos = uav.positions + rng.normal(0, 1e5, uav.positions.shape)
        out = trajectory.project_path(pos, scn, "uav")
        scene.validate_path(Path(out), scn, "uav")


class TestSubproblem:
    def test_zero_gradient_returns_input(self, micro_run):
        scn, real, frame, st, sic = micro_run
        st.rho_u[:] = 0.0
        st.rho_h[:] = 0.0
        surr = trajectory.build_surrogates(scn, frame, st, sic)
        uav, hap = trajectory.solve_trajectory_subproblem(st.uav_path, st.hap_path, surr, scn)
        np.testing.assert_allclose(uav.positions, st.uav_path.positions, atol=1e-12)

    def test_surrogate_never_decreases(self, micro_run):
        scn, real, frame, st, sic = micro_run
        surr = trajectory.build_surrogates(scn, frame, st, sic)
        before = trajectory.surrogate_objective(st.uav_path.positions,
                                                st.hap_path.positions, surr)
        uav, hap = trajectory.solve_trajectory_subproblem(st.uav_path, st.hap_path, surr, scn)
        after = trajectory.surrogate_objective(uav.positions, hap.positions, surr)
        assert after >= before - 1e-12
        scene.validate_path(uav, scn, "uav")
        scene.validate_path(hap, scn, "hap")

    def test_single_free_point_line_scan_oracle(self, micro_scenario):
        # N=3: only the middle point moves; compare against a dense line scan
        scn = scene.load_scenario(micro_text(**{
            "frame.n_slots": "3", "frame.slot_seconds": "10", "users.terrestrial": "1",
        }))
        scn, real, frame, st, sic = make_run(scn, seed=21)
        surr = [ts for ts in trajectory.build_surrogates(scn, frame, st, sic)
                if ts.platform == "uav"]
        uav, hap = trajectory.solve_trajectory_subproblem(st.uav_path, st.hap_path, surr, scn)
        got = trajectory.surrogate_objective(uav.positions, st.hap_path.positions, surr)
        # scan the segment between the points reachable from both endpoints
        cap = scn.v_max_uav * scn.slot_seconds
        base = st.uav_path.positions.copy()
        anchor = surr[1].anchor2 if surr[1].enabled else base[1]
        direction = anchor - base[1]
        direction /= max(np.linalg.norm(direction), 1e-12)
        best = -np.inf
        for t in np.linspace(-cap, cap, 400):
            cand = base.copy()
            cand[1] = base[1] + t * direction
            if max(np.linalg.norm(cand[1] - cand[0]), np.linalg.norm(cand[2] - cand[1])) > cap:
                continue
            cand[1, 2] = np.clip(cand[1, 2], scn.z_uav_min, scn.z_uav_max)
            best = max(best, trajectory.surrogate_objective(cand, st.hap_path.positions, surr))
        assert got >= best - 0.01 * abs(best)


class TestOptimizeTrajectories:
    def test_true_objective_monotone(self, desk_run):
        scn, real, frame, st, sic = desk_run
        before = ratemodel.avg_rate(scn, frame, st, sic)
        frame2, diag = trajectory.optimize_trajectories(scn, frame, st, real, sic)
        after = ratemodel.avg_rate(scn, frame2, st, sic)
        assert after >= before - 1e-12
        for r_before, r_after in diag.accepted:
            assert r_after >= r_before - 1e-12

    def test_paths_stay_feasible(self, desk_run):
        scn, real, frame, st, sic = desk_run
        trajectory.optimize_trajectories(scn, frame, st, real, sic)
        scene.validate_path(st.uav_path, scn, "uav")
        scene.validate_path(st.hap_path, scn, "hap")

    def test_aris_budget_repaired(self, desk_run):
        scn, real, frame, st, sic = desk_run
        frame2, _ = trajectory.optimize_trajectories(scn, frame, st, real, sic)
        for n, ch in enumerate(frame2):
            pu = ratemodel.aris_output_power(st.phi_u(n), ch.H_bU, st.v_b[n], st.sigma_u2)
            assert pu <= scn.p_uav * (1 + 1e-9)

    def test_geometric_audit_moves_track_the_objective(self, desk_scenario):
        # Geometric audit over 10 seeds.  At this scale the optimizer's
        # accepted moves relocate the UAV to cut the cross-tier scatter it
        # forwards toward the weak satellite links (away from the user
        # cluster) rather than chasing the terrestrial centroid; what must
        # hold is that paths move only when the true objective improves,
        # every accepted move raises it, and feasibility is preserved.
        moved_with_gain = 0
        for seed in range(10):
            scn, real, frame, st, sic = make_run(desk_scenario, seed=100 + seed)
            before = ratemodel.avg_rate(scn, frame, st, sic)
            p0 = st.uav_path.positions.copy()
            frame, diag = trajectory.optimize_trajectories(scn, frame, st, real, sic)
            after = ratemodel.avg_rate(scn, frame, st, sic)
            assert after >= before - 1e-12
            for r_before, r_after in diag.accepted:
                assert r_after >= r_before - 1e-12
            moved = np.abs(st.uav_path.positions - p0).max() > 1e-6
            if moved:
                assert after > before
                moved_with_gain += 1
            scene.validate_path(st.uav_path, scn, "uav")
            scene.validate_path(st.hap_path, scn, "hap")
        assert moved_with_gain >= 3  # gains exist and are harvested on several seeds
