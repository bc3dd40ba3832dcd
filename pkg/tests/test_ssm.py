import math

import numpy as np
import pytest

from groupwise import ssm
from groupwise.errors import DataError, OverlapError
from groupwise.types import TTC_CLAMP, AdverseParams, Frame, TtcKind

from conftest import make_state


def sim_adverse_displaced(leader, follower, params, dt=1e-3):
    """Independent oracle: advance the pair per millisecond (exact ballistic
    update within each step, leader speed floored at zero), then return the
    displaced gap and closing speed."""
    lx, lv = leader.x, leader.v
    fx = follower.x
    remaining = params.duration
    while remaining > 1e-12:
        step = min(dt, remaining)
        if lv > 0:
            t_stop = lv / params.decel
            if t_stop < step:
                lx += lv * t_stop - 0.5 * params.decel * t_stop**2
                lv = 0.0
            else:
                lx += lv * step - 0.5 * params.decel * step**2
                lv -= params.decel * step
        fx += follower.v * step
        remaining -= step
    return lx - fx - leader.length, follower.v - lv


def oracle_adverse_value(leader, follower, params):
    gap, dv = sim_adverse_displaced(leader, follower, params)
    if dv <= 0:
        return math.inf, False
    raw = gap / dv
    if raw <= 0:
        return TTC_CLAMP, True
    return raw, False


class TestTtc:
    def test_worked_example(self):
        lead = make_state("a", 50.0, v=20.0, length=4.0)
        fol = make_state("b", 20.0, v=25.0)
        assert ssm.ttc(lead, fol).value == pytest.approx(5.2, abs=1e-12)

    def test_equal_speeds_infinite(self):
        lead = make_state("a", 50.0, v=20.0)
        fol = make_state("b", 20.0, v=20.0)
        assert math.isinf(ssm.ttc(lead, fol).value)

    def test_slower_follower_infinite(self):
        lead = make_state("a", 50.0, v=20.0)
        fol = make_state("b", 20.0, v=19.999)
        assert math.isinf(ssm.ttc(lead, fol).value)

    def test_overlap_is_data_error(self):
        lead = make_state("a", 21.0, v=20.0, length=4.0)
        fol = make_state("b", 20.0, v=25.0)
        with pytest.raises(OverlapError):
            ssm.ttc(lead, fol)

    def test_overlap_clamped_under_widened_scope(self):
        lead = make_state("a", 21.0, v=20.0, length=4.0)
        fol = make_state("b", 20.0, v=25.0)
        res = ssm.ttc(lead, fol, clamp_scope="all")
        assert res.clamped and res.value == TTC_CLAMP

    def test_different_lanes_rejected(self):
        with pytest.raises(DataError):
            ssm.ttc(make_state("a", 50.0, lane=1), make_state("b", 20.0, lane=2))

    def test_translation_and_scaling_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            gap = float(rng.uniform(0.5, 80.0))
            d = float(rng.uniform(4.0, 12.0))
            vl = float(rng.uniform(0.0, 30.0))
            vf = float(rng.uniform(0.0, 35.0))
            shift = float(rng.uniform(-1000, 1000))
            c = float(rng.uniform(0.1, 5.0))
            base = ssm.ttc(make_state("a", gap + d, v=vl, length=d), make_state("b", 0.0, v=vf)).value
            shifted = ssm.ttc(
                make_state("a", gap + d + shift, v=vl, length=d), make_state("b", shift, v=vf)
            ).value
            if math.isfinite(base):
                assert shifted == pytest.approx(base, rel=1e-9)
            else:
                assert math.isinf(shifted)
            scaled = ssm.ttc(
                make_state("a", c * gap + d, v=c * vl, length=d), make_state("b", 0.0, v=c * vf)
            ).value
            if math.isfinite(base):
                assert scaled == pytest.approx(base, rel=1e-12)
            else:
                assert math.isinf(scaled)


class TestAdverseTtc:
    def test_worked_example(self):
        lead = make_state("a", 50.0, v=20.0, length=4.0)
        fol = make_state("b", 20.0, v=25.0)
        res = ssm.adverse_ttc(lead, fol, AdverseParams(3.0, 1.0))
        assert res.value == pytest.approx(2.4375, abs=1e-12)

    def test_leader_stops_within_window(self):
        # v=2, a=3: stops after 2/3 s having advanced 2/3 m.
        x, v = ssm.braked_leader(50.0, 2.0, AdverseParams(3.0, 1.0))
        assert v == 0.0
        assert x == pytest.approx(50.0 + 2.0 / 3.0, abs=1e-12)
        lead = make_state("a", 50.0, v=2.0, length=4.0)
        fol = make_state("b", 20.0, v=10.0)
        gap, dv = sim_adverse_displaced(lead, fol, AdverseParams(3.0, 1.0))
        assert ssm.adverse_ttc(lead, fol).value == pytest.approx(gap / dv, abs=1e-9)

    def test_slower_follower_after_braking_infinite(self):
        lead = make_state("a", 100.0, v=20.0, length=4.0)
        fol = make_state("b", 20.0, v=10.0)
        assert math.isinf(ssm.adverse_ttc(lead, fol).value)

    def test_displaced_overlap_clamps(self):
        lead = make_state("a", 30.0, v=5.0, length=4.0)
        fol = make_state("b", 20.0, v=30.0)
        res = ssm.adverse_ttc(lead, fol)
        assert res.clamped and res.value == TTC_CLAMP

    def test_matches_millisecond_simulation(self):
        rng = np.random.default_rng(7)
        params = AdverseParams(3.0, 1.0)
        for _ in range(300):
            gap = float(rng.uniform(0.2, 120.0))
            d = float(rng.uniform(4.0, 12.0))
            lead = make_state("a", gap + d, v=float(rng.uniform(0.0, 35.0)), length=d)
            fol = make_state("b", 0.0, v=float(rng.uniform(0.0, 35.0)))
            expected, clamped = oracle_adverse_value(lead, fol, params)
            res = ssm.adverse_ttc(lead, fol, params)
            assert res.clamped == clamped
            if math.isinf(expected):
                assert math.isinf(res.value)
            else:
                assert res.value == pytest.approx(expected, abs=1e-9)

    def test_zero_decel_limit_matches_constant_speed_advance(self):
        params = AdverseParams(1e-9, 1.0)
        lead = make_state("a", 60.0, v=20.0, length=4.0)
        fol = make_state("b", 20.0, v=26.0)
        advanced_lead = make_state("a", 60.0 + 20.0, v=20.0, length=4.0)
        advanced_fol = make_state("b", 20.0 + 26.0, v=26.0)
        expected = ssm.ttc(advanced_lead, advanced_fol).value
        assert ssm.adverse_ttc(lead, fol, params).value == pytest.approx(expected, abs=1e-6)


class TestProjectedTtc:
    def test_worked_example(self):
        a = make_state("a", 30.0, lane=2, v=15.0, length=5.0)
        b = make_state("b", 10.0, lane=3, v=22.0)
        assert ssm.projected_ttc(a, b).value == pytest.approx(15.0 / 7.0, abs=1e-12)

    def test_equal_speeds_infinite(self):
        a = make_state("a", 30.0, lane=2, v=20.0)
        b = make_state("b", 10.0, lane=3, v=20.0)
        assert math.isinf(ssm.projected_ttc(a, b).value)

    def test_overlapping_closing_pair_clamps(self):
        a = make_state("a", 30.0, lane=2, v=15.0, length=5.0)
        b = make_state("b", 30.0, lane=3, v=22.0)
        res = ssm.projected_ttc(a, b)
        assert res.clamped and res.value == TTC_CLAMP

    def test_overlapping_non_closing_pair_is_infinite(self):
        a = make_state("a", 30.0, lane=2, v=22.0, length=5.0)
        b = make_state("b", 30.0, lane=3, v=15.0)
        assert math.isinf(ssm.projected_ttc(a, b).value)

    def test_non_adjacent_lanes_rejected(self):
        with pytest.raises(DataError):
            ssm.projected_ttc(make_state("a", 30.0, lane=1), make_state("b", 10.0, lane=3))


class TestLaneChangeProjections:
    def _frame(self):
        changer = make_state("c", 50.0, lane=2, v=22.0)
        other = make_state("o", 80.0, lane=3, v=20.0)
        return Frame(0.0, (changer, other), {"c": 1}), changer

    def test_two_phantoms(self):
        frame, changer = self._frame()
        origin, target = ssm.lane_change_projections(frame, changer, 1, 2)
        assert origin.lane_id == 1 and target.lane_id == 2
        assert origin.x == target.x == changer.x
        assert origin.v == changer.v and origin.a == changer.a

    def test_same_origin_target_rejected(self):
        frame, changer = self._frame()
        with pytest.raises(DataError):
            ssm.lane_change_projections(frame, changer, 2, 2)

    def test_unflagged_vehicle_rejected(self):
        frame, _ = self._frame()
        other = frame.state_of("o")
        with pytest.raises(DataError):
            ssm.lane_change_projections(frame, other, 2, 3)


class TestPairTtcs:
    def test_chain_of_three(self):
        s1 = make_state("s1", 100.0, v=20.0)
        s2 = make_state("s2", 80.0, v=22.0)
        s3 = make_state("s3", 60.0, v=25.0)
        frame = Frame(0.0, (s1, s2, s3))
        pairs = ssm.pair_ttcs(frame, {"s1", "s2", "s3"})
        got = {(p.leader_id, p.follower_id): p.value for p in pairs}
        assert got[("s1", "s2")] == pytest.approx(16.0 / 2.0)
        assert got[("s2", "s3")] == pytest.approx(16.0 / 3.0)
        assert len(pairs) == 2

    def test_changer_replaced_by_phantoms(self):
        changer = make_state("c", 80.0, lane=2, v=25.0)
        ahead = make_state("o", 100.0, lane=1, v=20.0)
        frame = Frame(0.0, (changer, ahead), {"c": 1})
        pairs = ssm.pair_ttcs(frame, {"c", "o"})
        kinds = {p.kind for p in pairs}
        assert kinds == {TtcKind.LANE_CHANGE_PROJECTION}
        # origin-lane phantom is in-lane with the leader, target-lane phantom adjacent
        assert len(pairs) == 2
        assert all(p.value == pytest.approx(16.0 / 5.0) for p in pairs)

    def test_phantom_overlap_clamps(self):
        changer = make_state("c", 100.0, lane=2, v=25.0)
        abreast = make_state("o", 101.0, lane=1, v=20.0, length=4.0)
        frame = Frame(0.0, (changer, abreast), {"c": 1})
        pairs = ssm.pair_ttcs(frame, {"c", "o"})
        assert any(p.clamped and p.value == TTC_CLAMP for p in pairs)

    def test_no_neighbors_in_target_lane(self):
        changer = make_state("c", 50.0, lane=2, v=22.0)
        far = make_state("o", 60.0, lane=4, v=20.0)
        frame = Frame(0.0, (changer, far), {"c": 1})
        assert ssm.pair_ttcs(frame, {"c", "o"}) == ()

    def test_in_lane_overlap_raises(self):
        a = make_state("a", 21.0, v=20.0, length=4.0)
        b = make_state("b", 20.0, v=25.0)
        frame = Frame(0.0, (a, b))
        with pytest.raises(OverlapError):
            ssm.pair_ttcs(frame, {"a", "b"})

    def test_include_infinite(self):
        a = make_state("a", 100.0, v=25.0)
        b = make_state("b", 20.0, v=20.0)
        frame = Frame(0.0, (a, b))
        assert ssm.pair_ttcs(frame, {"a", "b"}) == ()
        pairs = ssm.pair_ttcs(frame, {"a", "b"}, include_infinite=True)
        assert len(pairs) == 1 and math.isinf(pairs[0].value)

    def test_finite_values_positive_and_clamps_exact(self):
        rng = np.random.default_rng(3)
        from conftest import random_frame

        for _ in range(100):
            frame = random_frame(rng)
            for p in ssm.pair_ttcs(frame, {s.vehicle_id for s in frame.states}):
                assert p.value > 0
                if p.clamped:
                    assert p.value == TTC_CLAMP


class TestClampCalibration:
    def test_fifth_percentile_matches_sort_oracle(self):
        import math as _math

        rng = np.random.default_rng(17)
        frames = []
        expected_pool = []
        for j in range(10):
            states, x = [], 500.0
            for i in range(12):
                v = float(rng.uniform(15.0, 30.0))
                states.append(make_state(f"f{j}v{i}", x, v=v, t=float(j)))
                x -= 4.0 + float(rng.uniform(1.0, 25.0))
            frames.append(Frame(float(j), tuple(states)))
            for lead, fol in zip(states, states[1:]):
                gap = lead.x - fol.x - lead.length
                dv = fol.v - lead.v
                if dv > 0 and gap / dv > 0:
                    expected_pool.append(gap / dv)
        expected = sorted(expected_pool)[max(1, _math.ceil(0.05 * len(expected_pool))) - 1]
        assert ssm.compute_ttc_clamp(frames) == pytest.approx(expected)

    def test_custom_clamp_value_in_pair_list(self):
        changer = make_state("c", 100.0, lane=2, v=25.0)
        abreast = make_state("o", 101.0, lane=1, v=20.0, length=4.0)
        frame = Frame(0.0, (changer, abreast), {"c": 1})
        pairs = ssm.pair_ttcs(frame, {"c", "o"}, clamp_value=0.9)
        assert any(p.clamped and p.value == 0.9 for p in pairs)
