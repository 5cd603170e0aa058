import pytest
from hypothesis import given, strategies as st

from parmosense.geo import GeoPoint, Geofence, offset_point
from parmosense.motivation import (
    ParticipantState,
    award,
    build_feedback,
    current_weight,
    evaluate_dynamic,
    ranking,
    round_half_up,
)
from parmosense.rng import SplitMix64
from parmosense.scenario import (
    Checkpoint,
    CouponSpec,
    CouponTrigger,
    DynamicRule,
    FeedbackConfig,
    RewardPolicy,
)

from oracles import count_entries

ORIGIN = GeoPoint(35.0, 135.0)


def cp(cid="c1", base=10, limit=None):
    return Checkpoint(cid, cid, Geofence(ORIGIN, 50.0), base, "photo", limit)


def policy(**kw):
    defaults = dict(points_enabled=True, demand_weighting_enabled=True, weighting_alpha=1.0,
                    coupons=(), level_threshold_points=100, ranking_enabled=True)
    defaults.update(kw)
    return RewardPolicy(**defaults)


# -- demand weight ----------------------------------------------------------

def test_weight_is_one_when_disabled():
    p = policy(demand_weighting_enabled=False)
    assert current_weight(cp(), {"c1": 0, "c2": 10}, p) == 1.0


def test_weight_two_for_cold_checkpoint():
    assert current_weight(cp("c1"), {"c1": 0, "c2": 10}, policy()) == 2.0


def test_weight_one_for_busiest_checkpoint():
    assert current_weight(cp("c1"), {"c1": 10, "c2": 3}, policy()) == 1.0


@given(st.integers(0, 50), st.integers(0, 50),
       st.floats(min_value=0.0, max_value=10.0))
def test_weight_bounds(u1, u2, alpha):
    p = policy(weighting_alpha=alpha)
    w = current_weight(cp("c1"), {"c1": u1, "c2": u2}, p)
    assert 1.0 <= w <= 1.0 + alpha + 1e-12


@given(st.integers(0, 30), st.integers(1, 30))
def test_weight_monotone_in_own_uploads(u, other):
    p = policy()
    w1 = current_weight(cp("c1"), {"c1": u, "c2": other}, p)
    w2 = current_weight(cp("c1"), {"c1": u + 1, "c2": other}, p)
    assert w2 <= w1 + 1e-12


# -- award ------------------------------------------------------------------

def test_award_arithmetic_base_times_weight():
    state = ParticipantState("p1")
    decision = award(state, cp(base=10), {"c1": 0, "c2": 10}, policy())
    assert decision.accepted
    assert decision.event.points_awarded == 20  # weight 2.0
    assert decision.state.points == 20


def test_rounding_half_up():
    assert round_half_up(10.5) == 11
    assert round_half_up(10.4) == 10
    state = ParticipantState("p1")
    # weight 1.5 with base 7 -> 10.5 -> 11
    decision = award(state, cp(base=7), {"c1": 5, "c2": 10}, policy())
    assert decision.event.points_awarded == 11


def test_contribution_limit_denies_fourth_attempt():
    p = policy(demand_weighting_enabled=False)
    state = ParticipantState("p1")
    checkpoint = cp(limit=3)
    outcomes = []
    for _ in range(5):
        decision = award(state, checkpoint, {}, p)
        outcomes.append(decision.accepted)
        state = decision.state
    assert outcomes == [True, True, True, False, False]
    assert state.points == 30
    assert state.contribution_count("c1") == 3


def test_level_up_and_threshold_coupon():
    p = policy(demand_weighting_enabled=False,
               coupons=(CouponSpec("k1", "Cafe", CouponTrigger("points", 100)),))
    state = ParticipantState("p1", points=90, level=1)
    decision = award(state, cp(base=20), {}, p)
    assert decision.state.points == 110
    assert decision.state.level == 2
    assert decision.event.new_level == 2
    assert decision.event.coupon == "k1"
    # the same coupon never grants twice
    again = award(decision.state, cp(base=20), {}, p)
    assert again.event.coupon is None
    assert again.state.coupons == ("k1",)


def test_checkpoint_triggered_coupon():
    p = policy(demand_weighting_enabled=False,
               coupons=(CouponSpec("k2", "Tower", CouponTrigger("checkpoint", "c9")),))
    state = ParticipantState("p1")
    no = award(state, cp("c1"), {}, p)
    assert no.event.coupon is None
    yes = award(no.state, cp("c9"), {}, p)
    assert yes.event.coupon == "k2"


def test_points_disabled_still_counts_contributions():
    p = policy(points_enabled=False, demand_weighting_enabled=False)
    state = ParticipantState("p1")
    decision = award(state, cp(limit=1), {}, p)
    assert decision.accepted
    assert decision.state.points == 0
    assert decision.event is None
    second = award(decision.state, cp(limit=1), {}, p)
    assert second.denied == "contribution limit"


@given(st.lists(st.integers(0, 3), min_size=0, max_size=40))
def test_ledger_conservation(choices):
    """Total points always equal the sum of round(base * weight) over the
    accepted awards, recomputed independently here."""
    checkpoints = [cp("c1", 10), cp("c2", 15, limit=2), cp("c3", 0), cp("c4", 7)]
    p = policy()
    state = ParticipantState("p1")
    board: dict[str, int] = {}
    expected = 0
    for i in choices:
        c = checkpoints[i]
        limit_hit = (c.contribution_limit is not None
                     and state.contribution_count(c.checkpoint_id) >= c.contribution_limit)
        max_u = max(board.values(), default=0)
        rate = board.get(c.checkpoint_id, 0) / max(1, max_u)
        weight = 1.0 + 1.0 * (1.0 - rate)
        decision = award(state, c, board, p)
        if limit_hit:
            assert not decision.accepted
            continue
        expected += round_half_up(c.base_points * weight)
        state = decision.state
        board[c.checkpoint_id] = board.get(c.checkpoint_id, 0) + 1
    assert state.points == expected


@given(st.lists(st.integers(0, 2), min_size=0, max_size=30))
def test_coupon_granted_at_most_once_per_schedule(choices):
    p = policy(coupons=(CouponSpec("k", "K", CouponTrigger("points", 30)),
                        CouponSpec("k2", "K2", CouponTrigger("checkpoint", "c2"))))
    checkpoints = [cp("c1", 10), cp("c2", 15), cp("c3", 25)]
    state = ParticipantState("p1")
    for i in choices:
        state = award(state, checkpoints[i], {}, p).state
    assert len(state.coupons) == len(set(state.coupons))


# -- dynamic requests ---------------------------------------------------------

RULES = (DynamicRule(Geofence(ORIGIN, 100.0), "photo", "go"),)


def test_entry_fires_once():
    outside = offset_point(ORIGIN, 200.0, 0.0)
    inside_p = offset_point(ORIGIN, 50.0, 0.0)
    assert len(evaluate_dynamic(outside, inside_p, RULES)) == 1
    assert len(evaluate_dynamic(inside_p, inside_p, RULES)) == 0  # dwelling
    assert len(evaluate_dynamic(None, inside_p, RULES)) == 1  # first fix inside


def test_exit_and_reenter_fires_twice():
    outside = offset_point(ORIGIN, 200.0, 0.0)
    inside_p = offset_point(ORIGIN, 50.0, 0.0)
    total = 0
    prev = None
    for cur in (inside_p, outside, inside_p):
        total += len(evaluate_dynamic(prev, cur, RULES))
        prev = cur
    assert total == 2


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 40))
def test_entry_count_matches_brute_force(seed, n_points):
    rng = SplitMix64(seed)
    fence = Geofence(ORIGIN, 120.0)
    rules = (DynamicRule(fence, "photo", "m"),)
    points = [offset_point(ORIGIN, rng.uniform(-300, 300), rng.uniform(-300, 300))
              for _ in range(n_points)]
    fired = 0
    prev = None
    for cur in points:
        fired += len(evaluate_dynamic(prev, cur, rules))
        prev = cur
    expected = count_entries([(p.lat, p.lon) for p in points],
                             ORIGIN.lat, ORIGIN.lon, 120.0)
    assert fired == expected


# -- ranking -------------------------------------------------------------------

def states_with(points):
    return [ParticipantState(f"p{i + 1}", points=pt) for i, pt in enumerate(points)]


def test_ranking_orders_descending():
    entries = ranking(states_with([30, 10, 20]))
    assert [(e.participant_id, e.rank) for e in entries] == [("p1", 1), ("p3", 2), ("p2", 3)]


def test_competition_ranking_for_ties():
    entries = ranking(states_with([30, 30, 10]))
    assert [e.rank for e in entries] == [1, 1, 3]


def test_ranking_empty():
    assert ranking([]) == []


@given(st.lists(st.integers(0, 100), min_size=1, max_size=20), st.randoms())
def test_ranking_permutation_invariant(points, rnd):
    states = states_with(points)
    shuffled = list(states)
    rnd.shuffle(shuffled)
    assert ranking(states) == ranking(shuffled)
    top = ranking(states)[0]
    assert top.points == max(points)
    assert top.rank == 1


# -- feedback -------------------------------------------------------------------

EVENT = {
    "participant_id": "p1",
    "kind": "photo",
    "report_id": "r1",
    "position": {"lat": 35.0, "lon": 135.0},
    "text": "a tree",
    "photo_ref": "abc",
    "captured_at": 123,
    "score": {"points": 10, "level": 1},
}


def test_all_feedback_off_yields_nothing():
    assert build_feedback(EVENT, FeedbackConfig(False, False, False)) == []


def test_timeline_photo_broadcast():
    out = build_feedback(EVENT, FeedbackConfig(False, True, False))
    assert len(out) == 1
    audience, payload = out[0]
    assert audience == "broadcast"
    assert payload["feedback"] == "timeline"


def test_score_panel_targets_uploader_only():
    out = build_feedback(EVENT, FeedbackConfig(False, False, True))
    assert out == [("p1", {"feedback": "score_panel", "score": {"points": 10, "level": 1}})]


def test_map_pin_requires_position():
    event = dict(EVENT, position=None)
    assert build_feedback(event, FeedbackConfig(True, False, False)) == []
    out = build_feedback(EVENT, FeedbackConfig(True, False, False))
    assert out[0][1]["feedback"] == "map_pin"


def test_sensor_samples_stay_off_the_timeline():
    event = dict(EVENT, kind="sensor_sample")
    assert build_feedback(event, FeedbackConfig(False, True, False)) == []
