"""Envelope recursion vs exhaustive oracles; divided stopping machinery."""

import numpy as np
import pytest

from meyerrep.errors import InvalidDividedTime, InvalidInput, TooLarge
from meyerrep.fixtures import hplus_example, random_fixture, worked_example
from meyerrep.probspace import AT, INF, POST, StoppingTime, make_tree
from meyerrep.processes import CostField, LadlagProcess, RandomMeasure
from meyerrep.snell import (
    DividedStoppingTime,
    EnvelopeSolver,
    brute_force_divided_optimum,
    classify_contact,
    contact_time,
    divided_value,
    envelope_oracle,
    enumerate_divided_stopping_times,
    snell_envelope,
    validate_divided,
)


def one_outcome_fixture():
    tree = make_tree([1.0], [[[0]], [[0]]], [[[0]], [[0]]])
    x = LadlagProcess.build(tree, at=[[1.0, 2.0]], post=[[0.0, 0.0]])
    mu = RandomMeasure.build(tree, [[1.0, 0.0]])
    g = CostField.linear(tree)
    return tree, x, mu, g


def s0(tree):
    return StoppingTime.constant(tree, 0, AT)


class TestSnellEnvelope:
    def test_zero_payoff_zero_level(self):
        fx = worked_example()
        x0 = LadlagProcess.zero(fx.tree)
        env = snell_envelope(fx.tree, x0, fx.mu, fx.g, 0.0)
        assert np.all(env.y.at == 0.0) and np.all(env.y.post == 0.0)

    def test_collect_then_stop(self):
        tree, x, mu, g = one_outcome_fixture()
        env = snell_envelope(tree, x, mu, g, 5.0)
        # oracle: enumerate stop times {0, 1, inf}: payoffs 1, 2+5, 0+5
        assert env.y.at[0, 0] == pytest.approx(7.0)

    def test_stop_now_when_cost_hurts(self):
        tree, x, mu, g = one_outcome_fixture()
        env = snell_envelope(tree, x, mu, g, -5.0)
        # payoffs 1, 2-5, -5: stopping at once wins
        assert env.y.at[0, 0] == pytest.approx(1.0)

    def test_worked_fixture_level_zero(self):
        fx = worked_example()
        env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, 0.0)
        assert env.y.at[0, 0] == pytest.approx(1.0)

    def test_infinite_level_rejected(self):
        tree, x, mu, g = one_outcome_fixture()
        with pytest.raises(InvalidInput):
            snell_envelope(tree, x, mu, g, float("inf"))

    def test_dominates_payoff_and_band_measurable(self):
        for seed in range(6):
            fx = random_fixture(seed, n_outcomes=3, horizon=2,
                                family=("linear", "cubic_odd")[seed % 2])
            for ell in (-2.0, 0.0, 1.5):
                env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, ell)
                assert np.all(env.y.at >= fx.x.at - 1e-12)
                assert np.all(env.y.post >= fx.x.post - 1e-12)
                LadlagProcess.build(fx.tree, env.y.at.copy(),
                                    env.y.post.copy())  # measurability


class TestEnvelopeOracle:
    def test_matches_recursion_on_hand_fixtures(self):
        tree, x, mu, g = one_outcome_fixture()
        for ell, want in ((5.0, 7.0), (-5.0, 1.0)):
            ora = envelope_oracle(tree, x, mu, g, ell, s0(tree))
            assert ora[0] == pytest.approx(want)

    def test_zero_case(self):
        fx = worked_example()
        x0 = LadlagProcess.zero(fx.tree)
        ora = envelope_oracle(fx.tree, x0, fx.mu, fx.g, 0.0, s0(fx.tree))
        assert np.allclose(ora, 0.0)

    def test_worked_fixture_by_hand(self):
        fx = worked_example()
        ora = envelope_oracle(fx.tree, fx.x, fx.mu, fx.g, 0.0, s0(fx.tree))
        assert np.allclose(ora, [1.0, 1.0])

    def test_oracle_equals_recursion_randomized(self):
        for seed in range(10):
            fam = ("linear", "cubic_odd", "piecewise_linear")[seed % 3]
            fx = random_fixture(seed, n_outcomes=2 + seed % 3, horizon=2,
                                family=fam)
            solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
            for ell in np.linspace(-2.5, 2.5, 5):
                env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, float(ell),
                                     solver)
                ora = envelope_oracle(fx.tree, fx.x, fx.mu, fx.g, float(ell),
                                      s0(fx.tree))
                assert np.max(np.abs(env.y.at[:, 0] - ora)) <= 1e-9

    def test_oracle_from_post_phase_start(self):
        fx = worked_example()
        s = StoppingTime.constant(fx.tree, 0, POST)
        solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
        for ell in (-1.0, 0.0, 2.0):
            ora = envelope_oracle(fx.tree, fx.x, fx.mu, fx.g, ell, s)
            y_at, y_post = solver.envelope(ell)
            assert np.max(np.abs(y_post[:, 0] - ora)) <= 1e-9


class TestContactAndClassification:
    def test_immediate_contact_when_equal(self):
        fx = worked_example()
        env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, 0.0)
        # level 0: envelope equals payoff at time 0 already
        info = contact_time(fx.tree, fx.x, env, s0(fx.tree))
        assert info.times == (0, 0) and info.kinds == ("at", "at")

    def test_contact_after_collecting(self):
        tree, x, mu, g = one_outcome_fixture()
        env = snell_envelope(tree, x, mu, g, 5.0)
        info = contact_time(tree, x, env, s0(tree))
        assert info.times == (1,) and info.kinds == ("at",)

    def test_interval_jump_classifies_h(self):
        # stopping at the grid instant is optimal although the payoff
        # jumps up on the interval behind the atom
        fx = hplus_example()
        env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, -1.0)
        assert env.y.at[0, 0] == pytest.approx(0.0)
        tau = classify_contact(fx.tree, fx.x, env, s0(fx.tree))
        assert tau.h == frozenset({0}) and tau.times == (0,)

    def test_post_contact_classifies_hplus(self):
        tree = make_tree([1.0], [[[0]], [[0]]], [[[0]], [[0]]])
        x = LadlagProcess.build(tree, at=[[0.0, 0.0]], post=[[5.0, 0.0]])
        mu = RandomMeasure.build(tree, [[1.0, 1.0]])
        g = CostField.linear(tree)
        env = snell_envelope(tree, x, mu, g, 0.0)
        tau = classify_contact(tree, x, env, s0(tree))
        assert tau.hplus == frozenset({0}) and tau.times == (0,)
        val = divided_value(tree, x, mu, g, 0.0, tau, s0(tree))
        assert val[0] == pytest.approx(env.y.at[0, 0]) == pytest.approx(5.0)

    def test_immediate_post_start_classifies_hminus(self):
        tree = make_tree([1.0], [[[0]], [[0]]], [[[0]], [[0]]])
        x = LadlagProcess.build(tree, at=[[0.0, 1.0]], post=[[2.0, 0.0]])
        mu = RandomMeasure.build(tree, [[1.0, 1.0]])
        g = CostField.linear(tree)
        s = StoppingTime.constant(tree, 0, POST)
        env = snell_envelope(tree, x, mu, g, -5.0)
        tau = classify_contact(tree, x, env, s)
        assert tau.hminus == frozenset({0}) and tau.times == (1,)
        val = divided_value(tree, x, mu, g, -5.0, tau, s)
        assert val[0] == pytest.approx(env.y.post[0, 0])

    def test_classification_attains_envelope_randomized(self):
        for seed in range(8):
            fam = ("linear", "piecewise_linear")[seed % 2]
            fx = random_fixture(seed + 100, n_outcomes=3, horizon=2,
                                family=fam)
            solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
            for ell in np.linspace(-2, 2, 9):
                env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, float(ell),
                                     solver)
                tau = classify_contact(fx.tree, fx.x, env, s0(fx.tree))
                val = divided_value(fx.tree, fx.x, fx.mu, fx.g, float(ell),
                                    tau, s0(fx.tree))
                assert np.max(np.abs(val - env.y.at[:, 0])) <= 1e-9

    def test_contact_time_monotone_in_level(self):
        for seed in range(6):
            fx = random_fixture(seed + 30, n_outcomes=3, horizon=2)
            solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
            prev = None
            for ell in np.linspace(-3, 3, 13):
                env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, float(ell),
                                     solver)
                info = contact_time(fx.tree, fx.x, env, s0(fx.tree))
                keys = tuple(info.key(w) for w in range(fx.tree.n_outcomes))
                if prev is not None:
                    assert all(a <= b for a, b in zip(prev, keys))
                prev = keys


class TestDividedValue:
    def test_stop_immediately(self):
        fx = worked_example()
        tau = DividedStoppingTime((0, 0), frozenset(), frozenset({0, 1}),
                                  frozenset())
        val = divided_value(fx.tree, fx.x, fx.mu, fx.g, 3.0, tau, s0(fx.tree))
        assert np.allclose(val, fx.x.at[:, 0])

    def test_hplus_window_includes_atom(self):
        fx = hplus_example()
        tau = DividedStoppingTime((0,), frozenset(), frozenset(),
                                  frozenset({0}))
        for ell in (-1.0, 0.5, 2.0):
            val = divided_value(fx.tree, fx.x, fx.mu, fx.g, ell, tau,
                                s0(fx.tree))
            assert val[0] == pytest.approx(1.0 + ell)

    def test_invalid_quadruple_rejected(self):
        fx = worked_example()
        # H-split not measurable for the band: {T=0 on outcome 0 only}
        tau = DividedStoppingTime((0, INF), frozenset(), frozenset({0, 1}),
                                  frozenset())
        with pytest.raises(InvalidDividedTime):
            validate_divided(fx.tree, tau)

    def test_hminus_needs_announcement(self):
        fx = worked_example()
        # H- at t=1 located by F_1 information only: not announced
        tau = DividedStoppingTime((1, INF), frozenset({0}), frozenset({1}),
                                  frozenset())
        with pytest.raises(InvalidDividedTime):
            validate_divided(fx.tree, tau)


class TestBruteForceDividedOptimum:
    def test_zero_payoff(self):
        fx = worked_example()
        x0 = LadlagProcess.zero(fx.tree)
        opt, tau = brute_force_divided_optimum(fx.tree, x0, fx.mu, fx.g, 0.0,
                                               s0(fx.tree))
        assert np.allclose(opt, 0.0)

    def test_hplus_fixture_level_minus_one(self):
        fx = hplus_example()
        opt, tau = brute_force_divided_optimum(fx.tree, fx.x, fx.mu, fx.g,
                                               -1.0, s0(fx.tree))
        assert opt[0] == pytest.approx(0.0)
        # deterministic tie-break prefers stopping at 0 in H
        assert tau.times == (0,) and tau.h == frozenset({0})

    def test_matches_envelope_randomized(self):
        for seed in range(8):
            fam = ("linear", "cubic_odd", "piecewise_linear")[seed % 3]
            fx = random_fixture(seed + 60, n_outcomes=2 + seed % 2,
                                horizon=2, family=fam)
            start = s0(fx.tree)
            taus = enumerate_divided_stopping_times(fx.tree, start)
            solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
            from meyerrep.snell import DividedEnumeration
            enum = DividedEnumeration(fx.tree, fx.x, start, taus)
            for ell in np.linspace(-1.5, 1.5, 5):
                env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, float(ell),
                                     solver)
                opt, _ = brute_force_divided_optimum(
                    fx.tree, fx.x, fx.mu, fx.g, float(ell), start, enum=enum)
                assert np.max(np.abs(opt - env.y.at[:, 0])) <= 1e-9

    def test_enumeration_guard(self):
        fx = random_fixture(1, n_outcomes=4, horizon=3)
        with pytest.raises(TooLarge):
            enumerate_divided_stopping_times(fx.tree, s0(fx.tree), cap=100)


class TestLevelDependence:
    def test_monotone_and_sandwich(self):
        from meyerrep.processes import lambda_projection
        for seed in range(6):
            fam = ("linear", "cubic_odd", "piecewise_linear")[seed % 3]
            fx = random_fixture(seed + 200, n_outcomes=3, horizon=2,
                                family=fam)
            solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
            levels = np.linspace(-2, 2, 9)
            for lo, hi in zip(levels, levels[1:]):
                ya_lo, yp_lo = solver.envelope(float(lo))
                ya_hi, yp_hi = solver.envelope(float(hi))
                assert np.all(ya_lo <= ya_hi + 1e-10)
                assert np.all(yp_lo <= yp_hi + 1e-10)
                # sandwich: Y^lo >= Y^hi + proj(total(lo)) - proj(total(hi))
                tot_lo = (fx.g.evaluate(float(lo)) * fx.mu.weights).sum(axis=1)
                tot_hi = (fx.g.evaluate(float(hi)) * fx.mu.weights).sum(axis=1)
                m, n1 = tot_lo.shape[0], fx.tree.horizon + 1
                proj_lo = lambda_projection(
                    fx.tree, np.repeat(tot_lo[:, None], n1, axis=1),
                    np.repeat(tot_lo[:, None], n1, axis=1))
                proj_hi = lambda_projection(
                    fx.tree, np.repeat(tot_hi[:, None], n1, axis=1),
                    np.repeat(tot_hi[:, None], n1, axis=1))
                assert np.all(ya_lo >= ya_hi + proj_lo.at - proj_hi.at - 1e-10)
                assert np.all(yp_lo >= yp_hi + proj_lo.post - proj_hi.post - 1e-10)

    def test_continuity_bound(self):
        for seed in range(4):
            fx = random_fixture(seed + 300, n_outcomes=3, horizon=2,
                                family="piecewise_linear")
            solver = EnvelopeSolver(fx.tree, fx.x, fx.mu, fx.g)
            atom_sum = float(fx.mu.weights.sum(axis=1).max())
            for lo, hi in ((-1.0, -0.75), (0.0, 0.125), (1.5, 1.625)):
                ya_lo, yp_lo = solver.envelope(lo)
                ya_hi, yp_hi = solver.envelope(hi)
                dg = float(np.max(np.abs(fx.g.evaluate(hi)
                                         - fx.g.evaluate(lo))))
                bound = atom_sum * dg + 1e-12
                assert np.max(np.abs(ya_hi - ya_lo)) <= bound
                assert np.max(np.abs(yp_hi - yp_lo)) <= bound

    def test_low_level_limit_reaches_payoff(self):
        for seed in range(4):
            fx = random_fixture(seed + 400, n_outcomes=3, horizon=2)
            env = snell_envelope(fx.tree, fx.x, fx.mu, fx.g, -1e6)
            scale = 1.0 + float(np.max(np.abs(fx.x.at)))
            assert np.max(np.abs(env.y.at - fx.x.at)) <= 1e-6 * scale
            assert np.max(np.abs(env.y.post - fx.x.post)) <= 1e-6 * scale
