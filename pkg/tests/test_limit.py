"""Limiting dynamics: jump-ODE map, rate estimation, DTMC/CTMC reduction."""
import json
import math

import numpy as np
import pytest
import scipy.linalg

from mlab import (CEMETERY, ConfigError, CriticalPointSet, InsufficientSamples,
                  RateEstimate, RateTable, SignedPareto, ZeroExitRate,
                  absorption_probs, build_graph, ctmc_generator, dtmc,
                  estimate_table, jump_ode, jump_profile, mc_estimate_rates,
                  sample_ctmc_path)
from mlab.landscape import from_critical_points
from mlab.limit import JumpVector
from mlab._rng import stream


class TestJumpVector:
    def test_validation(self):
        JumpVector(w=[0.5], t_prime=[])
        JumpVector(w=[0.5, -0.5], t_prime=[1.0])
        with pytest.raises(ConfigError):
            JumpVector(w=[], t_prime=[])
        with pytest.raises(ConfigError):
            JumpVector(w=[0.5, 0.5], t_prime=[])
        with pytest.raises(ConfigError):
            JumpVector(w=[0.5, 0.5], t_prime=[-1.0])


class TestJumpOde:
    def test_single_jump_is_clipped_translation(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        m1 = float(points1d.minima[0])
        x = jump_ode(land1d, prof, 1, JumpVector(w=[0.1], t_prime=[]))
        assert x == m1 + 0.1
        x = jump_ode(land1d, prof, 1, JumpVector(w=[3.0], t_prime=[]))
        assert x == m1 + 0.5  # clipped at b
        x = jump_ode(land1d, prof, 1, JumpVector(w=[-3.0], t_prime=[]))
        assert x == -land1d.L  # clipped then projected

    def test_wrong_jump_count_rejected(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        with pytest.raises(ConfigError):
            jump_ode(land1d, prof, 2, JumpVector(w=[0.5], t_prime=[]))

    def test_long_gap_parks_at_minimum(self, land1d, points1d):
        # sub-threshold jump, long relaxation, then another sub-threshold
        # jump: the endpoint stays inside the source field
        prof = jump_profile(points1d, 0.5)
        jv = JumpVector(w=[0.3, 0.3], t_prime=[50.0])
        x = jump_ode(land1d, prof, 2, jv)
        s1, s2 = points1d.saddles[0], points1d.saddles[1]
        assert s1 < x < s2
        m2 = float(points1d.minima[1])
        assert x == pytest.approx(m2 + 0.3, abs=1e-6)

    def test_escape_with_two_jumps(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        jv = JumpVector(w=[-3.0, -3.0], t_prime=[0.1])
        x = jump_ode(land1d, prof, 2, jv)
        assert x < points1d.saddles[0]

    def test_matches_python_rk4(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        jv = JumpVector(w=[0.45, 0.35], t_prime=[0.7])
        got = jump_ode(land1d, prof, 2, jv, dt=1e-3)

        def flow(x, t, dt=1e-3):
            nsteps = int(t / dt)
            rem = t - nsteps * dt
            for i in range(nsteps + 1):
                h = dt if i < nsteps else rem
                if h <= 0.0:
                    continue
                k1 = -float(land1d.fprime(x))
                if abs(k1) < 1e-10:
                    return x
                k2 = -float(land1d.fprime(x + 0.5 * h * k1))
                k3 = -float(land1d.fprime(x + 0.5 * h * k2))
                k4 = -float(land1d.fprime(x + h * k3))
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            return x

        m2 = float(points1d.minima[1])
        want = flow(m2 + 0.45, 0.7) + 0.35
        assert got == pytest.approx(want, abs=1e-12)

    def test_dt_refinement_stable(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        jv = JumpVector(w=[0.45, -0.2], t_prime=[1.3])
        a = jump_ode(land1d, prof, 2, jv, dt=1e-3)
        b = jump_ode(land1d, prof, 2, jv, dt=5e-4)
        assert a == pytest.approx(b, abs=1e-8)


class TestRateEstimation:
    def test_single_jump_closed_form_interior(self, land1d, points1d):
        # field 3 escapes both ways in one jump at b = 0.5:
        # q_3 = p+ d+^-a + p- d-^-a with d the saddle distances
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        est = mc_estimate_rates(land1d, prof, noise, 3, n_samples=200000,
                                seed=5)
        m3 = float(points1d.minima[2])
        d_plus = float(points1d.saddles[2]) - m3
        d_minus = m3 - float(points1d.saddles[1])
        want = 0.5 * d_plus ** -1.2 + 0.5 * d_minus ** -1.2
        assert abs(est.q - want) <= 2.5 * est.q_se
        # destination split
        assert abs(est.target_q(4) - 0.5 * d_plus ** -1.2) <= 3 * est.targets[4][1]
        assert abs(est.target_q(2) - 0.5 * d_minus ** -1.2) <= 3 * est.targets[2][1]

    def test_single_jump_closed_form_boundary(self, land1d, points1d):
        # field 1 can only leave through its right saddle: the projection
        # wall at -L blocks the left direction entirely
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        est = mc_estimate_rates(land1d, prof, noise, 1, n_samples=200000,
                                seed=6)
        want = 0.5 * points1d.r(1) ** -1.2
        assert abs(est.q - want) <= 2.5 * est.q_se
        assert set(est.targets) == {2}

    def test_exact_unit_distance_well(self):
        # saddle exactly one unit from the minimum: q = p+ * 1^-a = p+
        land = from_critical_points([-1.0, 0.0, 1.0], L=2.0)
        from mlab import find_critical_points
        pts = find_critical_points(land)
        prof = jump_profile(pts, 1.25)
        noise = SignedPareto(1.4, 0.05, p_plus=0.37)
        est = mc_estimate_rates(land, prof, noise, 1, n_samples=200000, seed=7)
        assert abs(est.q - 0.37) <= 2.5 * est.q_se

    def test_unreachable_targets_absent(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        est2 = mc_estimate_rates(land1d, prof, noise, 2, n_samples=100000,
                                 seed=8, w_min=0.1, T_max=16.0)
        assert set(est2.targets) <= {1, 3}
        assert est2.target_q(4) == 0.0
        est4 = mc_estimate_rates(land1d, prof, noise, 4, n_samples=100000,
                                 seed=9, w_min=0.1, T_max=16.0)
        assert set(est4.targets) == {3}

    def test_w_min_choice_does_not_bias(self, land1d, points1d):
        # any floor below the escape threshold keeps the full event mass
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        a = mc_estimate_rates(land1d, prof, noise, 2, n_samples=150000,
                              seed=10, w_min=0.10, T_max=16.0)
        b = mc_estimate_rates(land1d, prof, noise, 2, n_samples=150000,
                              seed=11, w_min=0.06, T_max=16.0)
        assert abs(a.q - b.q) <= 3 * math.hypot(a.q_se, b.q_se)

    def test_adaptive_horizon_agrees_with_fixed(self, land1d, points1d):
        # with a tolerance looser than the stage-to-stage MC noise the
        # doubling loop settles, and the frozen horizon covers every gap
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        a = mc_estimate_rates(land1d, prof, noise, 2, n_samples=150000,
                              seed=12, w_min=0.1, stability_tol=0.3)
        b = mc_estimate_rates(land1d, prof, noise, 2, n_samples=150000,
                              seed=13, w_min=0.1, T_max=16.0)
        assert a.T_max >= 16.0
        assert a.T_max > a.max_gap
        assert abs(a.q - b.q) <= 3 * math.hypot(a.q_se, b.q_se)

    def test_adaptive_horizon_underpowered_is_an_error(self, land1d, points1d):
        # at the default 1% stability tolerance a short sample run cannot
        # certify convergence: refusing beats returning a shaky number
        from mlab import TruncationUnstable
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        with pytest.raises(TruncationUnstable):
            mc_estimate_rates(land1d, prof, noise, 2, n_samples=20000,
                              seed=12, w_min=0.1)

    def test_no_escapes_is_an_error(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        with pytest.raises(InsufficientSamples):
            mc_estimate_rates(land1d, prof, noise, 2, n_samples=40,
                              seed=14, w_min=0.1, T_max=16.0)

    def test_estimate_table_subset(self, land1d, points1d):
        prof = jump_profile(points1d, 0.5)
        noise = SignedPareto(1.2, 0.1)
        table = estimate_table(land1d, prof, noise, n_samples=50000,
                               fields=(1, 3), seed=2)
        assert table.fields == [1, 3]
        assert 1 in table and 2 not in table
        blob = json.dumps(table.to_json())
        assert '"l_star": 1' in blob


def synthetic_table(points):
    """Hand-built rates over the four-well graph at b = 0.5."""
    def est(i, l, targets):
        q = sum(v[0] for v in targets.values())
        return RateEstimate(field=i, l_star=l, q=q, q_se=0.01 * q,
                            targets=targets, w_min=0.05, T_max=8.0,
                            n_samples=1000, n_escaped=100, max_gap=1.0,
                            min_absw=0.2)
    return RateTable({
        1: est(1, 1, {2: (3.0, 0.03)}),
        2: est(2, 2, {1: (4.0, 0.04), 3: (1.0, 0.01)}),
        3: est(3, 1, {2: (2.0, 0.02), 4: (3.0, 0.03)}),
        4: est(4, 2, {3: (2.5, 0.025)}),
    }, b=0.5, alpha=1.2, p_plus=0.5)


class TestDtmc:
    def test_rows(self, points1d):
        model = dtmc(synthetic_table(points1d))
        np.testing.assert_allclose(model.row(2), [0.8, 0.0, 0.2, 0.0],
                                   rtol=1e-15)
        np.testing.assert_allclose(model.P.sum(axis=1), np.ones(4),
                                   atol=1e-12)

    def test_missing_field_rejected(self, points1d):
        table = synthetic_table(points1d)
        del table.estimates[3]
        with pytest.raises(ConfigError):
            dtmc(table)

    def test_zero_mass_rejected(self, points1d):
        table = synthetic_table(points1d)
        table.estimates[1] = RateEstimate(
            field=1, l_star=1, q=0.0, q_se=0.0, targets={}, w_min=0.05,
            T_max=0.0, n_samples=1000, n_escaped=0, max_gap=-1.0, min_absw=0.0)
        with pytest.raises(ZeroExitRate):
            dtmc(table)


class TestAbsorption:
    def test_four_well_by_hand(self, points1d):
        table = synthetic_table(points1d)
        graph = build_graph(jump_profile(points1d, 0.5))
        ap = absorption_probs(dtmc(table), graph, 0)
        assert ap.members == (1, 2, 3, 4)
        assert ap.large == (2, 4)
        assert ap.targets == (2, 4, CEMETERY)
        # field 1 feeds field 2 with probability one; field 3 splits 0.4/0.6
        assert ap.prob(1, 2) == pytest.approx(1.0, abs=1e-12)
        assert ap.prob(3, 2) == pytest.approx(0.4, abs=1e-12)
        assert ap.prob(3, 4) == pytest.approx(0.6, abs=1e-12)
        assert ap.prob(3, CEMETERY) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(ap.matrix.sum(axis=1), np.ones(4),
                                   atol=1e-12)

    def test_chained_small_fields(self):
        # small fields 1 -> 2 -> large 3: absorption needs the linear solve
        land = from_critical_points([0.0, 0.3, 0.5, 0.8, 2.0], L=3.0)
        from mlab import find_critical_points
        pts = find_critical_points(land)
        prof = jump_profile(pts, 0.45)
        assert prof.l_star.tolist() == [1, 1, 3]
        graph = build_graph(prof)
        def est(i, l, targets):
            q = sum(v[0] for v in targets.values())
            return RateEstimate(field=i, l_star=l, q=q, q_se=0.0,
                                targets=targets, w_min=0.05, T_max=8.0,
                                n_samples=1000, n_escaped=100, max_gap=1.0,
                                min_absw=0.2)
        table = RateTable({
            1: est(1, 1, {2: (5.0, 0.0)}),
            2: est(2, 1, {1: (1.0, 0.0), 3: (3.0, 0.0)}),
            3: est(3, 3, {2: (0.5, 0.0)}),
        }, b=0.45, alpha=1.2, p_plus=0.5)
        ap = absorption_probs(dtmc(table), graph, 0)
        # x2 = 0.25 x1 + 0.75, x1 = x2  =>  both 1
        assert ap.prob(1, 3) == pytest.approx(1.0, abs=1e-12)
        assert ap.prob(2, 3) == pytest.approx(1.0, abs=1e-12)

    def test_bad_class_index(self, points1d):
        table = synthetic_table(points1d)
        graph = build_graph(jump_profile(points1d, 0.5))
        with pytest.raises(ConfigError):
            absorption_probs(dtmc(table), graph, 5)


class TestCtmc:
    def test_four_well_by_hand(self, points1d):
        table = synthetic_table(points1d)
        graph = build_graph(jump_profile(points1d, 0.5))
        ctmc = ctmc_generator(table, dtmc(table), graph, 0)
        assert not ctmc.killed
        assert ctmc.states == (2, 4)
        # holding rates are the raw escape masses
        assert ctmc.hold[0] == table[2].total_target_q
        assert ctmc.hold[1] == table[4].total_target_q
        # rerouting through the small fields gives dummy self-jumps
        np.testing.assert_allclose(ctmc.kernel,
                                   [[0.88, 0.12], [0.4, 0.6]], atol=1e-12)
        gen = ctmc.generator()
        np.testing.assert_allclose(gen, [[-0.6, 0.6], [1.0, -1.0]],
                                   atol=1e-12)
        assert np.all(gen.sum(axis=1) == 0.0)  # diag set to minus off-sum
        # entry law
        assert ctmc.pi[1] == {2: 1.0}
        assert ctmc.pi[3][2] == pytest.approx(0.4, abs=1e-12)
        assert ctmc.pi[3][4] == pytest.approx(0.6, abs=1e-12)

    def test_mass_conservation_under_expm(self, points1d):
        table = synthetic_table(points1d)
        graph = build_graph(jump_profile(points1d, 0.5))
        ctmc = ctmc_generator(table, dtmc(table), graph, 0)
        for t in (0.1, 1.0, 10.0):
            P_t = scipy.linalg.expm(t * ctmc.generator())
            np.testing.assert_allclose(P_t.sum(axis=1), np.ones(2),
                                       atol=1e-12)
            assert np.all(P_t >= -1e-15)

    def test_transient_class_is_killed(self):
        # three wells, b = 0.4: class {3} leaks into {1, 2} and dies
        land = from_critical_points([-1.2, -0.6, 0.0, 0.9, 1.5], L=2.0)
        from mlab import find_critical_points
        pts = find_critical_points(land)
        graph = build_graph(jump_profile(pts, 0.4))
        assert graph.classes == (frozenset({1, 2}), frozenset({3}))
        def est(i, l, targets):
            q = sum(v[0] for v in targets.values())
            return RateEstimate(field=i, l_star=l, q=q, q_se=0.0,
                                targets=targets, w_min=0.05, T_max=8.0,
                                n_samples=1000, n_escaped=100, max_gap=1.0,
                                min_absw=0.2)
        table = RateTable({
            1: est(1, 2, {2: (2.0, 0.0)}),
            2: est(2, 2, {1: (1.5, 0.0)}),
            3: est(3, 2, {2: (4.0, 0.0)}),
        }, b=0.4, alpha=1.2, p_plus=0.5)
        ctmc = ctmc_generator(table, dtmc(table), graph, 1)
        assert ctmc.killed
        assert ctmc.states == (CEMETERY, 3)
        i3 = ctmc.state_index(3)
        assert ctmc.hold[i3] == 4.0
        assert ctmc.kernel[i3].tolist() == [1.0, 0.0]  # all mass leaves
        i0 = ctmc.state_index(CEMETERY)
        assert ctmc.hold[i0] == 1.0 and ctmc.kernel[i0, i0] == 1.0


class TestCtmcPath:
    def test_reproducible_and_consistent(self, points1d):
        table = synthetic_table(points1d)
        graph = build_graph(jump_profile(points1d, 0.5))
        ctmc = ctmc_generator(table, dtmc(table), graph, 0)
        a = sample_ctmc_path(ctmc, 3, horizon=20.0, rng=stream(1, 1))
        b = sample_ctmc_path(ctmc, 3, horizon=20.0, rng=stream(1, 1))
        assert a.times.tolist() == b.times.tolist()
        assert a.states.tolist() == b.states.tolist()
        assert set(a.states.tolist()) <= {2, 4}
        assert np.all(np.diff(a.times) > 0)
        assert a.state_at(0.0) == a.states[0]
        assert a.state_at(a.horizon + 1) == a.states[-1]

    def test_killed_path_stops_at_cemetery(self):
        land = from_critical_points([-1.2, -0.6, 0.0, 0.9, 1.5], L=2.0)
        from mlab import find_critical_points
        pts = find_critical_points(land)
        graph = build_graph(jump_profile(pts, 0.4))
        def est(i, l, targets):
            q = sum(v[0] for v in targets.values())
            return RateEstimate(field=i, l_star=l, q=q, q_se=0.0,
                                targets=targets, w_min=0.05, T_max=8.0,
                                n_samples=1000, n_escaped=100, max_gap=1.0,
                                min_absw=0.2)
        table = RateTable({
            1: est(1, 2, {2: (2.0, 0.0)}),
            2: est(2, 2, {1: (1.5, 0.0)}),
            3: est(3, 2, {2: (4.0, 0.0)}),
        }, b=0.4, alpha=1.2, p_plus=0.5)
        ctmc = ctmc_generator(table, dtmc(table), graph, 1)
        path = sample_ctmc_path(ctmc, 3, horizon=1000.0, rng=stream(2, 2))
        assert path.states[-1] == CEMETERY

    def test_validation(self, points1d):
        table = synthetic_table(points1d)
        graph = build_graph(jump_profile(points1d, 0.5))
        ctmc = ctmc_generator(table, dtmc(table), graph, 0)
        with pytest.raises(ConfigError):
            sample_ctmc_path(ctmc, 3, horizon=0.0, rng=stream(3, 3))
        with pytest.raises(ConfigError):
            sample_ctmc_path(ctmc, 9, horizon=1.0, rng=stream(3, 3))
