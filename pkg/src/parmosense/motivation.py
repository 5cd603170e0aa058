"""Motivation rules: demand-weighted points, levels, coupons, rankings,
contribution limits, geofence-triggered task requests, and feedback payloads.

Everything here is a pure function over participant ledgers and the
per-checkpoint task board; the runtime serializes calls per instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

from .geo import GeoPoint, inside
from .scenario import Checkpoint, DynamicRule, FeedbackConfig, RewardPolicy


@dataclass(frozen=True)
class ParticipantState:
    """Per-participant motivation ledger."""

    participant_id: str
    points: int = 0
    level: int = 1
    coupons: tuple[str, ...] = ()
    contributions: tuple[tuple[str, int], ...] = ()
    last_position: GeoPoint | None = None

    def contribution_count(self, checkpoint_id: str) -> int:
        for cid, n in self.contributions:
            if cid == checkpoint_id:
                return n
        return 0

    def to_doc(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "points": self.points,
            "level": self.level,
            "coupons": list(self.coupons),
            "contributions": {cid: n for cid, n in self.contributions},
            "last_position": None
            if self.last_position is None
            else {"lat": self.last_position.lat, "lon": self.last_position.lon},
        }


@dataclass(frozen=True)
class RewardEvent:
    participant_id: str
    checkpoint_id: str
    points_awarded: int
    weight_applied: float
    new_level: int
    coupon: str | None = None

    def to_doc(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "checkpoint_id": self.checkpoint_id,
            "points_awarded": self.points_awarded,
            "weight_applied": self.weight_applied,
            "new_level": self.new_level,
            "coupon": self.coupon,
        }


@dataclass(frozen=True)
class AwardDecision:
    """Either an updated ledger plus its reward event, or a denial reason."""

    state: ParticipantState
    event: RewardEvent | None = None
    denied: str | None = None

    @property
    def accepted(self) -> bool:
        return self.denied is None


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def current_weight(checkpoint: Checkpoint, task_board: Mapping[str, int], policy: RewardPolicy) -> float:
    """Demand weight for a checkpoint, >= 1.

    weight = 1 + alpha * (1 - upload_rate) where upload_rate normalizes this
    checkpoint's uploads by the busiest checkpoint's count. With weighting off
    the weight is exactly 1.
    """
    if not policy.demand_weighting_enabled:
        return 1.0
    max_uploads = max(task_board.values(), default=0)
    rate = task_board.get(checkpoint.checkpoint_id, 0) / max(1, max_uploads)
    return 1.0 + policy.weighting_alpha * (1.0 - rate)


def level_for(points: int, policy: RewardPolicy) -> int:
    return points // policy.level_threshold_points + 1


def _with_contribution(state: ParticipantState, checkpoint_id: str) -> tuple[tuple[str, int], ...]:
    found = False
    out = []
    for cid, n in state.contributions:
        if cid == checkpoint_id:
            out.append((cid, n + 1))
            found = True
        else:
            out.append((cid, n))
    if not found:
        out.append((checkpoint_id, 1))
    return tuple(out)


def _coupon_due(policy: RewardPolicy, state_before: ParticipantState,
                points_after: int, checkpoint_id: str) -> str | None:
    for spec in policy.coupons:
        if spec.coupon_id in state_before.coupons:
            continue
        t = spec.trigger
        if t.kind == "points" and state_before.points < int(t.value) <= points_after:
            return spec.coupon_id
        if t.kind == "checkpoint" and t.value == checkpoint_id:
            return spec.coupon_id
    return None


def award(state: ParticipantState, checkpoint: Checkpoint,
          task_board: Mapping[str, int], policy: RewardPolicy) -> AwardDecision:
    """Apply one accepted checkpoint contribution to the ledger.

    Denies with "contribution limit" when the per-participant cap is reached;
    otherwise adds round(base * weight) points, recomputes the level, and
    grants at most one newly-triggered coupon.
    """
    limit = checkpoint.contribution_limit
    if limit is not None and state.contribution_count(checkpoint.checkpoint_id) >= limit:
        return AwardDecision(state, denied="contribution limit")

    weight = current_weight(checkpoint, task_board, policy)
    gained = round_half_up(checkpoint.base_points * weight) if policy.points_enabled else 0
    points = state.points + gained
    coupon = _coupon_due(policy, state, points, checkpoint.checkpoint_id)
    new_state = replace(
        state,
        points=points,
        level=level_for(points, policy),
        coupons=state.coupons + (coupon,) if coupon else state.coupons,
        contributions=_with_contribution(state, checkpoint.checkpoint_id),
    )
    event = None
    if policy.points_enabled or coupon:
        event = RewardEvent(
            participant_id=state.participant_id,
            checkpoint_id=checkpoint.checkpoint_id,
            points_awarded=gained,
            weight_applied=weight,
            new_level=new_state.level,
            coupon=coupon,
        )
    return AwardDecision(new_state, event=event)


@dataclass(frozen=True)
class DynamicNotification:
    rule_index: int
    task: str
    message: str

    def to_doc(self) -> dict:
        return {"rule_index": self.rule_index, "task": self.task, "message": self.message}


def evaluate_dynamic(prev: GeoPoint | None, cur: GeoPoint,
                     rules: tuple[DynamicRule, ...]) -> list[DynamicNotification]:
    """Entry events only: a rule fires when the position crosses into its fence."""
    out = []
    for i, rule in enumerate(rules):
        was_outside = prev is None or not inside(prev, rule.fence)
        if was_outside and inside(cur, rule.fence):
            out.append(DynamicNotification(i, rule.task, rule.message))
    return out


@dataclass(frozen=True)
class RankEntry:
    participant_id: str
    points: int
    rank: int

    def to_doc(self) -> dict:
        return {"participant_id": self.participant_id, "points": self.points, "rank": self.rank}


def ranking(states: list[ParticipantState]) -> list[RankEntry]:
    """Competition ranking, descending by points: ties share the smallest rank,
    the next distinct score skips past them ([30,30,10] -> ranks 1,1,3)."""
    ordered = sorted(states, key=lambda s: (-s.points, s.participant_id))
    out: list[RankEntry] = []
    for i, s in enumerate(ordered):
        if i > 0 and s.points == ordered[i - 1].points:
            rank = out[-1].rank
        else:
            rank = i + 1
        out.append(RankEntry(s.participant_id, s.points, rank))
    return out


BROADCAST_AUDIENCE = "broadcast"

# report kinds that appear on the shared timeline
TIMELINE_KINDS = ("photo", "questionnaire_answer")


def build_feedback(event: dict, policy: FeedbackConfig) -> list[tuple[str, dict]]:
    """Feedback payloads for one accepted report or reward.

    The event dict carries participant_id, kind, position (or None), and
    summary fields. Returns (audience, payload) pairs: broadcast map pins and
    timeline entries, and an uploader-only score snapshot.
    """
    out: list[tuple[str, dict]] = []
    pid = event["participant_id"]
    if policy.map_pins and event.get("position") is not None:
        out.append((
            BROADCAST_AUDIENCE,
            {
                "feedback": "map_pin",
                "position": event["position"],
                "kind": event["kind"],
                "participant_id": pid,
                "report_id": event.get("report_id"),
            },
        ))
    if policy.timeline and event["kind"] in TIMELINE_KINDS:
        out.append((
            BROADCAST_AUDIENCE,
            {
                "feedback": "timeline",
                "text": event.get("text", ""),
                "photo_ref": event.get("photo_ref"),
                "captured_at": event.get("captured_at"),
                "participant_id": pid,
            },
        ))
    if policy.score_panel and event.get("score") is not None:
        out.append((pid, {"feedback": "score_panel", "score": event["score"]}))
    return out
