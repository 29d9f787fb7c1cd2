import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsp_reserve import reserve_discriminative as rdisc
from gsp_reserve.auction_model import AuctionConfig, RankingRule, simplified_loss
from gsp_reserve.exceptions import DimensionError, UnsupportedVFunctionError


def random_instance(gen):
    N = int(gen.integers(2, 9))
    S = int(gen.integers(1, min(N, 4) + 1))
    n = int(gen.integers(1, 51))
    c = tuple(np.sort(gen.uniform(0.05, 1.0, S))[::-1])
    if len(set(c)) < S:
        c = tuple(1.0 - 0.2 * s for s in range(S))
    cfg = AuctionConfig(N, S, c, ctr=tuple(gen.uniform(0.1, 1.0, N)))
    bids = gen.uniform(0.0, 2.0, (n, N))
    return cfg, bids


class TestBreakpoints:
    cfg = AuctionConfig(3, 2, (1.0, 0.5))

    def test_single_auction(self):
        bp = rdisc.extract_breakpoints(np.array([[0.9, 0.6, 0.3]]), self.cfg)
        assert bp.triples() == [(0.9, 0.6, 1.0), (0.6, 0.3, 0.5)]

    def test_zero_bids(self):
        bp = rdisc.extract_breakpoints(np.zeros((4, 3)), self.cfg)
        np.testing.assert_array_equal(bp.p1, 0.0)
        np.testing.assert_array_equal(bp.p2, 0.0)

    def test_rank_by_bid_uses_raw_bids(self):
        cfg = AuctionConfig(3, 2, (1.0, 0.5), ctr=(0.5, 1, 1), ranking_rule=RankingRule.RANK_BY_BID)
        bp = rdisc.extract_breakpoints(np.array([[0.9, 0.6, 0.3]]), cfg)
        assert bp.triples() == [(0.9, 0.6, 1.0), (0.6, 0.3, 0.5)]

    def test_ctr_weights(self):
        cfg = AuctionConfig(3, 2, (1.0, 0.5), ctr=(0.5, 1, 1))
        bp = rdisc.extract_breakpoints(np.array([[1.0, 0.6, 0.3]]), cfg)
        # bidder 0 scores 0.5 and lands in slot 2
        assert bp.triples() == [(0.6, 0.5, 1.0), (0.5, 0.3, 1.0)]

    def test_wrong_width(self):
        with pytest.raises(DimensionError):
            rdisc.extract_breakpoints(np.ones((2, 4)), self.cfg)

    def test_validation(self):
        with pytest.raises(ValueError):
            rdisc.VBreakpoints([0.5], [0.6], [1.0])
        with pytest.raises(ValueError):
            rdisc.VBreakpoints([0.5], [0.4], [0.0])
        with pytest.raises(DimensionError):
            rdisc.VBreakpoints([0.5, 0.7], [0.4], [1.0])

    def test_from_v_functions(self):
        params = [rdisc.VFunctionParams.for_slot(0.5, 0.3)]
        bp = rdisc.breakpoints_from_v_functions(params, [0.6], [0.3])
        assert bp.triples() == [(0.6, 0.3, 0.5)]

    def test_rejects_smooth_v_functions(self):
        with pytest.raises(UnsupportedVFunctionError):
            rdisc.breakpoints_from_v_functions([rdisc.VFunctionParams(0.3, 1.0, 0.1, 0.2)], [0.6], [0.3])


class TestMinimize:
    def test_single_pair(self):
        sol = rdisc.minimize(rdisc.VBreakpoints.from_triples([(0.9, 0.6, 1.0)]))
        assert sol.reserve == 0.9
        assert sol.loss_value == pytest.approx(-0.9)

    def test_global_not_local(self):
        triples = [(1.0, 0.0, 1.0)] + [(0.4, 0.39, 1.0)] * 10
        bp = rdisc.VBreakpoints.from_triples(triples)
        sol = rdisc.minimize(bp)
        assert sol.reserve == 0.4
        assert sol.loss_value == rdisc.brute_force(bp).loss_value

    def test_coefficients_reproduce_loss(self):
        gen = np.random.default_rng(0)
        cfg, bids = random_instance(gen)
        bp = rdisc.extract_breakpoints(bids, cfg)
        knots, d1, d2 = rdisc.sweep_coefficients(bp)
        direct = np.array([rdisc.empirical_loss(bp, r) for r in knots])
        np.testing.assert_allclose(d1 - knots * d2, direct, atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force(self, seed):
        cfg, bids = random_instance(np.random.default_rng(seed))
        bp = rdisc.extract_breakpoints(bids, cfg)
        a, b = rdisc.minimize(bp), rdisc.brute_force(bp)
        assert a.loss_value == b.loss_value
        assert a.reserve == b.reserve

    def test_ties_in_loss_go_to_smaller_reserve(self):
        # both pairs pay the reserve at r=0.5; only the first one does at r=1
        bp = rdisc.VBreakpoints.from_triples([(1.0, 0.0, 1.0), (0.5, 0.0, 1.0)])
        assert rdisc.empirical_loss(bp, 0.5) == rdisc.empirical_loss(bp, 1.0) == -1.0
        assert rdisc.minimize(bp).reserve == 0.5

    def test_all_zero_bids(self):
        bp = rdisc.extract_breakpoints(np.zeros((5, 3)), AuctionConfig(3, 2, (1.0, 0.5)))
        sol = rdisc.minimize(bp)
        assert sol.reserve == 0.0 and sol.loss_value == 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        triples=st.lists(
            st.tuples(st.floats(0, 3), st.floats(0, 1), st.floats(0.1, 2)), min_size=1, max_size=25
        ),
        scale=st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]),
    )
    def test_scaling_equivariance(self, triples, scale):
        # power-of-two scaling is exact in floating point
        triples = [(p1 + p2, p2, w) for p1, p2, w in triples]
        bp = rdisc.VBreakpoints.from_triples(triples)
        scaled = rdisc.VBreakpoints(bp.p1 * scale, bp.p2 * scale, bp.weight)
        a, b = rdisc.minimize(bp), rdisc.minimize(scaled)
        assert b.reserve == a.reserve * scale
        assert b.loss_value == pytest.approx(a.loss_value * scale, rel=1e-12, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        triples=st.lists(
            st.tuples(st.floats(0, 3), st.floats(0, 1), st.floats(0.1, 2)), min_size=1, max_size=25
        ),
        zeros=st.integers(1, 10),
    )
    def test_zero_pairs_do_not_move_minimizer(self, triples, zeros):
        triples = [(p1 + p2, p2, w) for p1, p2, w in triples]
        base = rdisc.minimize(rdisc.VBreakpoints.from_triples(triples))
        padded = rdisc.minimize(rdisc.VBreakpoints.from_triples(triples + [(0.0, 0.0, 1.0)] * zeros))
        assert padded.reserve == base.reserve


class TestGeneralizationBound:
    def test_plug_in(self):
        assert rdisc.generalization_bound(1.0, 1.0, 1, 1 / math.e) == pytest.approx(2 + math.sqrt(0.5))

    def test_decreasing_in_n(self):
        values = [rdisc.generalization_bound(1.45, 0.3, n, 0.05) for n in range(1, 2000)]
        assert np.all(np.diff(values) < 0)

    def test_doubling_mass(self):
        n, delta = 50, 0.1
        third = lambda M: rdisc.generalization_bound(M, 1.0, n, delta) - rdisc.generalization_bound(0, 1.0, n, delta)
        assert third(2.0) == pytest.approx(math.sqrt(2) * third(1.0), rel=1e-12)

    @pytest.mark.parametrize("args", [(1, 1, 0, 0.1), (1, 1, 5, 0.0), (1, 1, 5, 1.0), (1, 0, 5, 0.1), (-1, 1, 5, 0.1)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            rdisc.generalization_bound(*args)


class TestEvaluateReserve:
    cfg = AuctionConfig(3, 2, (1.0, 0.5))
    bids = np.array([[0.9, 0.6, 0.3], [0.2, 0.8, 0.5], [0.4, 0.4, 0.1]])

    def test_zero_reserve_is_second_score_revenue(self):
        expected = -np.mean([0.6 + 0.5 * 0.3, 0.5 + 0.5 * 0.2, 0.4 + 0.5 * 0.1])
        assert rdisc.evaluate_reserve(0.0, self.bids, self.cfg) == pytest.approx(expected)

    def test_matches_minimize(self):
        sol = rdisc.minimize(rdisc.extract_breakpoints(self.bids, self.cfg))
        assert rdisc.evaluate_reserve(sol.reserve, self.bids, self.cfg) == pytest.approx(sol.loss_value / 3, abs=1e-15)

    def test_mean_of_simplified_losses(self):
        r = 0.55
        expected = np.mean([simplified_loss(r, self.cfg, b) for b in self.bids])
        assert rdisc.evaluate_reserve(r, self.bids, self.cfg) == pytest.approx(expected)
