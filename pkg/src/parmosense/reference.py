"""Reference scenarios, agent rosters, and a random scenario generator.

The three-checkpoint campaign exercises the full reward pipeline (weights,
limits, coupons, levels); the eight-checkpoint ring is the demand-steering
benchmark map. The generator produces structurally varied valid scenarios for
round-trip and mutation testing.
"""

from __future__ import annotations

import math

from .geo import GeoPoint, Geofence, inside, offset_point
from .rng import SplitMix64
from .scenario import (
    Checkpoint,
    CouponSpec,
    CouponTrigger,
    DynamicRule,
    FeedbackConfig,
    MotivationConfig,
    ProcessingConfig,
    QuestionnaireGraph,
    QuestionnaireNode,
    RewardPolicy,
    Scenario,
    SensingConfig,
    SensorSetting,
)
from .sim import AgentProfile, SimConfig

AREA_CENTER = GeoPoint(34.9850, 135.7588)

PERIOD_START = 1_767_225_600_000  # 2026-01-01T00:00:00Z
PERIOD_END = PERIOD_START + 30 * 86_400_000


def _checkpoint(cid: str, name: str, north_m: float, east_m: float, radius_m: float,
                base_points: int, task: str = "photo", limit: int | None = None,
                questionnaire_id: str | None = None) -> Checkpoint:
    center = offset_point(AREA_CENTER, north_m, east_m)
    return Checkpoint(cid, name, Geofence(center, radius_m), base_points, task,
                      limit, questionnaire_id)


def yes_no_questionnaire() -> QuestionnaireGraph:
    return QuestionnaireGraph(
        entry="n1",
        nodes=(
            QuestionnaireNode("n1", "Is the spot crowded?", "binary",
                              next=(("no", None), ("yes", "n2"))),
            QuestionnaireNode("n2", "How crowded?", "choice",
                              options=("a little", "busy", "packed"),
                              next=(("a little", None), ("busy", None), ("packed", None))),
        ),
    )


def three_checkpoint_scenario(scenario_id: str = "ref3") -> Scenario:
    """Reward-pipeline reference: weighting on, one capped checkpoint, coupons."""
    checkpoints = (
        _checkpoint("c1", "Fountain", 150.0, 0.0, 50.0, 10),
        _checkpoint("c2", "Gate", -120.0, 100.0, 50.0, 10, limit=3),
        _checkpoint("c3", "Tower", 0.0, -170.0, 50.0, 20, task="questionnaire",
                    questionnaire_id="crowding"),
    )
    rules = (
        DynamicRule(Geofence(offset_point(AREA_CENTER, 75.0, 75.0), 60.0),
                    "photo", "Snap what you see here"),
    )
    reward = RewardPolicy(
        points_enabled=True,
        demand_weighting_enabled=True,
        weighting_alpha=1.0,
        coupons=(
            CouponSpec("k-cafe", "Cafe discount", CouponTrigger("points", 100)),
            CouponSpec("k-tower", "Tower souvenir", CouponTrigger("checkpoint", "c3")),
        ),
        level_threshold_points=100,
        ranking_enabled=True,
    )
    return Scenario(
        scenario_id=scenario_id,
        name="Riverside survey",
        description="Reference three-checkpoint campaign",
        area=Geofence(AREA_CENTER, 2000.0),
        period_start=PERIOD_START,
        period_end=PERIOD_END,
        sensing=SensingConfig({"position": SensorSetting(5000, True)}),
        motivation=MotivationConfig(checkpoints, rules, reward, FeedbackConfig(True, True, True)),
        processing=ProcessingConfig(True, True, True),
        questionnaires=(("crowding", yes_no_questionnaire()),),
    )


def reference_agents() -> tuple[AgentProfile, ...]:
    """Two waypoint-driven agents whose loops cross all three checkpoints."""
    loop_a = tuple(
        offset_point(AREA_CENTER, n, e)
        for n, e in ((150.0, 0.0), (-120.0, 100.0), (75.0, 75.0), (0.0, -170.0))
    )
    loop_b = tuple(
        offset_point(AREA_CENTER, n, e)
        for n, e in ((0.0, -170.0), (150.0, 0.0), (-120.0, 100.0))
    )
    return (
        AgentProfile("a1", speed_mps=10.0, waypoints=loop_a, response_dmax_m=400.0),
        AgentProfile("a2", speed_mps=8.0, waypoints=loop_b, response_dmax_m=400.0),
    )


def reward_reference_config(seed: int = 42, ticks: int = 300) -> SimConfig:
    return SimConfig(seed=seed, duration_s=ticks, tick_s=1, agents=reference_agents())


def eight_checkpoint_scenario(scenario_id: str, demand_weighting: bool) -> Scenario:
    """Steering benchmark: eight equal checkpoints on a 500 m ring."""
    checkpoints = []
    for i in range(8):
        angle = 2.0 * math.pi * i / 8.0
        checkpoints.append(_checkpoint(
            f"c{i + 1}", f"Ring {i + 1}",
            500.0 * math.cos(angle), 500.0 * math.sin(angle), 40.0, 10,
        ))
    reward = RewardPolicy(
        points_enabled=True,
        demand_weighting_enabled=demand_weighting,
        weighting_alpha=1.0,
        coupons=(),
        level_threshold_points=100,
        ranking_enabled=True,
    )
    return Scenario(
        scenario_id=scenario_id,
        name="Ring walk",
        description="Eight-checkpoint steering benchmark",
        area=Geofence(AREA_CENTER, 1500.0),
        period_start=PERIOD_START,
        period_end=PERIOD_END,
        sensing=SensingConfig({"position": SensorSetting(10_000, True)}),
        motivation=MotivationConfig(tuple(checkpoints), (), reward, FeedbackConfig(True, False, False)),
        processing=ProcessingConfig(True, True, True),
    )


def steering_agents(count: int = 3) -> tuple[AgentProfile, ...]:
    return tuple(
        AgentProfile(f"s{i + 1}", speed_mps=8.0, waypoints=None,
                     response_dmax_m=500.0, point_seeking=True)
        for i in range(count)
    )


def steering_config(seed: int, ticks: int = 400) -> SimConfig:
    return SimConfig(seed=seed, duration_s=ticks, tick_s=1, agents=steering_agents())


# ---------------------------------------------------------------------------
# random valid scenarios

_WORDS = ("river", "park", "gate", "shrine", "market", "bridge", "hill", "court")


def random_scenario(seed: int) -> Scenario:
    rng = SplitMix64(seed)
    area_center = GeoPoint(rng.uniform(-60.0, 60.0), rng.uniform(-170.0, 170.0))
    area = Geofence(area_center, rng.uniform(500.0, 50_000.0))

    sensors = {}
    for name in ("position", "light", "barometer", "accelerometer",
                 "gyroscope", "heart_rate", "ble_scan"):
        if rng.random() < 0.5:
            sensors[name] = SensorSetting(100 + int(rng.random() * 60_000), rng.random() < 0.5)
    if not sensors:
        sensors["position"] = SensorSetting(1000, True)

    questionnaires = []
    if rng.random() < 0.6:
        n = 2 + int(rng.random() * 4)
        nodes = []
        for i in range(n):
            nid = f"n{i + 1}"
            kind = ("binary", "choice", "photo-with-text")[int(rng.random() * 3)]
            if kind == "binary":
                answers: tuple[str, ...] = ("yes", "no")
                options = None
            elif kind == "choice":
                k = 1 + int(rng.random() * 4)
                options = tuple(f"opt{j}" for j in range(k))
                answers = options
            else:
                answers = ("done",)
                options = None
            # forward chain: the first answer of every non-final node advances to
            # the next node, the rest terminate or advance at random; acyclic,
            # single entry, every node reachable
            succ = f"n{i + 2}" if i + 1 < n else None
            nxt = []
            for j, a in enumerate(answers):
                if succ is not None and (j == 0 or rng.random() < 0.5):
                    nxt.append((a, succ))
                else:
                    nxt.append((a, None))
            nodes.append(QuestionnaireNode(nid, f"Q {nid}?", kind, options, tuple(nxt)))
        questionnaires.append(("q1", QuestionnaireGraph("n1", tuple(nodes))))

    checkpoints = []
    for i in range(int(rng.random() * 6)):
        bearing = rng.random() * 2.0 * math.pi
        dist = rng.random() * area.radius_m * 0.8
        center = offset_point(area_center, dist * math.cos(bearing), dist * math.sin(bearing))
        if not GeoPoint(center.lat, center.lon).is_valid() or not inside(center, area):
            continue
        task = ("photo", "questionnaire", "sensor-sample")[int(rng.random() * 3)]
        if task == "questionnaire" and not questionnaires:
            task = "photo"
        qid = "q1" if task == "questionnaire" else None
        checkpoints.append(Checkpoint(
            f"cp{i + 1}",
            _WORDS[int(rng.random() * len(_WORDS))],
            Geofence(center, rng.uniform(10.0, 200.0)),
            int(rng.random() * 50),
            task,
            (1 + int(rng.random() * 5)) if rng.random() < 0.3 else None,
            qid,
        ))

    rules = tuple(
        DynamicRule(Geofence(area_center, rng.uniform(50.0, area.radius_m)),
                    ("photo", "questionnaire", "sensor-sample")[int(rng.random() * 3)],
                    f"do the {_WORDS[int(rng.random() * len(_WORDS))]} task")
        for _ in range(int(rng.random() * 3))
    )

    points_enabled = rng.random() < 0.9
    coupons = []
    if rng.random() < 0.5:
        coupons.append(CouponSpec("cp-a", "Coffee", CouponTrigger("points", 50)))
    if rng.random() < 0.3 and checkpoints:
        coupons.append(CouponSpec("cp-b", "Sticker",
                                  CouponTrigger("checkpoint", checkpoints[0].checkpoint_id)))
    reward = RewardPolicy(
        points_enabled=points_enabled,
        demand_weighting_enabled=points_enabled and rng.random() < 0.5,
        weighting_alpha=rng.uniform(0.0, 10.0),
        coupons=tuple(coupons),
        level_threshold_points=10 + int(rng.random() * 500),
        ranking_enabled=rng.random() < 0.8,
    )
    start = PERIOD_START + int(rng.random() * 1_000_000_000)
    return Scenario(
        scenario_id=f"gen-{seed}",
        name=f"{_WORDS[int(rng.random() * len(_WORDS))]} campaign",
        description="generated scenario",
        area=area,
        period_start=start,
        period_end=start + 3_600_000 + int(rng.random() * 1_000_000_000),
        sensing=SensingConfig(sensors),
        motivation=MotivationConfig(tuple(checkpoints), rules, reward,
                                    FeedbackConfig(rng.random() < 0.5, rng.random() < 0.5,
                                                   rng.random() < 0.5)),
        processing=ProcessingConfig(rng.random() < 0.8, rng.random() < 0.8, rng.random() < 0.8),
        questionnaires=tuple(questionnaires),
    )
