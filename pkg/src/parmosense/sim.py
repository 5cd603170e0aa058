"""Deterministic agent-based participant simulator.

Agents stand in for smartphone-carrying participants: they move through the
scenario area, sample the enabled virtual sensors, perform checkpoint tasks on
fence entry, and answer pushed task requests with a probability that falls off
linearly with distance. Every report travels through the message plane and the
runtime; the simulator never writes engine state directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import motivation
from .errors import EngineError
from .geo import GeoPoint, Geofence, haversine_m, inside, move_toward, offset_point
from .messaging import Envelope, Subscription, up_topic
from .runtime import Engine
from .rng import SplitMix64
from .scenario import Checkpoint, Scenario

MAX_AGENT_SPEED_MPS = 10.0

# checkpoint task kind -> report kind
_TASK_TO_REPORT = {
    "photo": "photo",
    "questionnaire": "questionnaire_answer",
    "sensor-sample": "sensor_sample",
}

# nominal readings for virtual sensors; noise is per-agent
_SENSOR_BASE = {
    "light": (500.0, "lux"),
    "barometer": (1013.25, "hPa"),
    "accelerometer": (9.81, "m/s2"),
    "gyroscope": (0.0, "rad/s"),
    "heart_rate": (72.0, "bpm"),
    "ble_scan": (3.0, "count"),
}


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    speed_mps: float = 1.4
    waypoints: tuple[GeoPoint, ...] | None = None  # None = random waypoints in the area
    response_dmax_m: float = 500.0
    point_seeking: bool = False
    sensor_noise: tuple[tuple[str, float], ...] = ()

    def noise_for(self, sensor: str) -> float:
        for name, sd in self.sensor_noise:
            if name == sensor:
                return sd
        return 0.0


@dataclass(frozen=True)
class SimConfig:
    seed: int
    duration_s: int
    tick_s: int = 1
    agents: tuple[AgentProfile, ...] = ()

    def validate(self):
        if self.tick_s < 1 or self.duration_s < self.tick_s:
            raise EngineError("invalid sim config", "duration must cover at least one tick")
        for a in self.agents:
            if not (0.0 < a.speed_mps <= MAX_AGENT_SPEED_MPS):
                raise EngineError("invalid sim config", f"agent {a.agent_id} speed out of range")
            if a.response_dmax_m <= 0:
                raise EngineError("invalid sim config", f"agent {a.agent_id} response_dmax_m <= 0")


@dataclass
class SimResult:
    uploads: dict[str, int]
    coverage: float
    states: dict[str, dict]
    trajectories: list[tuple[str, int, float, float]]
    emitted: int = 0
    accepted: int = 0
    denied: int = 0
    rejected: int = 0

    def to_doc(self) -> dict:
        return {
            "uploads": dict(sorted(self.uploads.items())),
            "coverage": self.coverage,
            "states": {pid: self.states[pid] for pid in sorted(self.states)},
            "emitted": self.emitted,
            "accepted": self.accepted,
            "denied": self.denied,
            "rejected": self.rejected,
            "trajectory_rows": len(self.trajectories),
        }

    def trajectory_csv(self) -> bytes:
        lines = ["agent_id,t,lat,lon"]
        for agent_id, t, lat, lon in self.trajectories:
            lines.append(f"{agent_id},{t},{lat!r},{lon!r}")
        return ("\r\n".join(lines) + "\r\n").encode("utf-8")


def config_to_doc(config: SimConfig) -> dict:
    return {
        "seed": config.seed,
        "duration_s": config.duration_s,
        "tick_s": config.tick_s,
        "agents": [
            {
                "agent_id": a.agent_id,
                "speed_mps": a.speed_mps,
                "waypoints": None if a.waypoints is None
                else [{"lat": p.lat, "lon": p.lon} for p in a.waypoints],
                "response_dmax_m": a.response_dmax_m,
                "point_seeking": a.point_seeking,
                "sensor_noise": {k: v for k, v in a.sensor_noise},
            }
            for a in config.agents
        ],
    }


def config_from_doc(doc: dict) -> SimConfig:
    try:
        agents = []
        for a in doc.get("agents", []):
            waypoints = a.get("waypoints")
            agents.append(AgentProfile(
                agent_id=a["agent_id"],
                speed_mps=float(a.get("speed_mps", 1.4)),
                waypoints=None if waypoints is None
                else tuple(GeoPoint(p["lat"], p["lon"]) for p in waypoints),
                response_dmax_m=float(a.get("response_dmax_m", 500.0)),
                point_seeking=bool(a.get("point_seeking", False)),
                sensor_noise=tuple(sorted((a.get("sensor_noise") or {}).items())),
            ))
        config = SimConfig(
            seed=int(doc["seed"]),
            duration_s=int(doc["duration_s"]),
            tick_s=int(doc.get("tick_s", 1)),
            agents=tuple(agents),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise EngineError("invalid sim config", str(e)) from e
    config.validate()
    return config


def response_probability(distance_m: float, dmax_m: float) -> float:
    """Chance of acting on a pushed request: 1 at the task, 0 beyond dmax."""
    if distance_m < 0 or dmax_m <= 0:
        raise EngineError("invalid sim config", "distances must be non-negative, dmax positive")
    return max(0.0, 1.0 - distance_m / dmax_m)


@dataclass
class _AgentRuntime:
    profile: AgentProfile
    participant_id: str
    rng: SplitMix64
    position: GeoPoint
    waypoint: GeoPoint | None = None
    waypoint_index: int = 0
    inside_checkpoints: set[str] = field(default_factory=set)
    own_contributions: dict[str, int] = field(default_factory=dict)
    pending_tasks: list[dict] = field(default_factory=list)
    seq: int = 0
    emitted: int = 0
    sub: Subscription | None = None
    broadcast_sub: Subscription | None = None


class World:
    """Per-run context shared by agent steps: scenario, engine view, timing."""

    def __init__(self, scenario: Scenario, engine: Engine, tick_s: int):
        self.scenario = scenario
        self.engine = engine
        self.tick_s = tick_s

    def checkpoint_utilities(self) -> list[tuple[str, float]]:
        inst = self.engine.instance(self.scenario.scenario_id)
        policy = self.scenario.motivation.reward
        board = inst.task_board
        out = []
        for c in self.scenario.motivation.static_requests:
            out.append((c.checkpoint_id,
                        motivation.current_weight(c, board, policy) * c.base_points))
        return out


def _random_point_in(fence: Geofence, rng: SplitMix64) -> GeoPoint:
    r = fence.radius_m * math.sqrt(rng.random())
    theta = rng.random() * 2.0 * math.pi
    return offset_point(fence.center, r * math.cos(theta), r * math.sin(theta))


def _pick_waypoint(agent: _AgentRuntime, world: World) -> GeoPoint:
    profile = agent.profile
    scenario = world.scenario
    if profile.point_seeking and scenario.motivation.static_requests:
        utilities = world.checkpoint_utilities()
        # utility desc, then distance asc, then checkpoint_id asc
        def sort_key(item):
            cid, utility = item
            cp = scenario.checkpoint(cid)
            return (-utility, haversine_m(agent.position, cp.fence.center), cid)
        best_id = min(utilities, key=sort_key)[0]
        return scenario.checkpoint(best_id).fence.center
    if profile.waypoints:
        wp = profile.waypoints[agent.waypoint_index % len(profile.waypoints)]
        agent.waypoint_index += 1
        return wp
    return _random_point_in(scenario.area, agent.rng)


def step(agent: _AgentRuntime, world: World) -> tuple[GeoPoint, list[dict]]:
    """Advance one tick: move toward the current waypoint, fire entry tasks.

    Returns the new position and the report actions to emit this tick.
    Movement is along the great circle, never more than speed * tick meters.
    """
    profile = agent.profile
    if agent.waypoint is None:
        agent.waypoint = _pick_waypoint(agent, world)
    step_m = profile.speed_mps * world.tick_s
    new_pos = move_toward(agent.position, agent.waypoint, step_m)
    agent.position = new_pos
    if haversine_m(new_pos, agent.waypoint) < 0.5:
        agent.waypoint = _pick_waypoint(agent, world)

    actions: list[dict] = []
    for c in world.scenario.motivation.static_requests:
        now_inside = inside(new_pos, c.fence)
        was_inside = c.checkpoint_id in agent.inside_checkpoints
        if now_inside and not was_inside and not _limit_blocked(agent, c):
            actions.append({"checkpoint": c})
        if now_inside:
            agent.inside_checkpoints.add(c.checkpoint_id)
        else:
            agent.inside_checkpoints.discard(c.checkpoint_id)
    return new_pos, actions


def _limit_blocked(agent: _AgentRuntime, c: Checkpoint) -> bool:
    if c.contribution_limit is None:
        return False
    return agent.own_contributions.get(c.checkpoint_id, 0) >= c.contribution_limit


class Simulation:
    """Drives a set of agents against a running scenario instance."""

    def __init__(self, scenario: Scenario, config: SimConfig, engine: Engine):
        config.validate()
        self.scenario = scenario
        self.config = config
        self.engine = engine
        self.world = World(scenario, engine, config.tick_s)
        self.trajectories: list[tuple[str, int, float, float]] = []
        self.denied = 0
        self.rejected = 0

    def run(self, endpoint: str = "sim.local", on_tick=None) -> SimResult:
        sid = self.scenario.scenario_id
        inst = self.engine.instance(sid)
        if inst.status.state != "running":
            raise EngineError("engine not running", sid)

        root = SplitMix64(self.config.seed)
        agents: list[_AgentRuntime] = []
        for i, profile in enumerate(sorted(self.config.agents, key=lambda p: p.agent_id)):
            rng = root.fork(i)
            code = self.engine.issue_join_code(sid, endpoint)
            pid, _ = self.engine.join(sid, code.payload)
            start = profile.waypoints[0] if profile.waypoints else self._random_start(rng)
            agent = _AgentRuntime(profile, pid, rng, start)
            agent.sub = self.engine.broker.subscribe(f"pms/{sid}/down/{pid}")
            agent.broadcast_sub = self.engine.broker.subscribe(f"pms/{sid}/down/broadcast")
            agent.sub.drain()  # join snapshot already consumed
            agents.append(agent)
            self.trajectories.append((profile.agent_id, 0, start.lat, start.lon))

        ticks = self.config.duration_s // self.config.tick_s
        for t in range(1, ticks + 1):
            t_ms = self.scenario.period_start + t * self.config.tick_s * 1000
            for agent in agents:
                self._consume_downlinks(agent)
                self._act(agent, t, t_ms)
            if on_tick is not None:
                on_tick(t)

        for agent in agents:
            self._consume_downlinks(agent)
            self.engine.broker.unsubscribe(agent.sub)
            self.engine.broker.unsubscribe(agent.broadcast_sub)

        inst = self.engine.instance(sid)
        board = inst.task_board
        checkpoints = self.scenario.motivation.static_requests
        covered = sum(1 for c in checkpoints if board.get(c.checkpoint_id, 0) >= 1)
        coverage = covered / len(checkpoints) if checkpoints else 0.0
        return SimResult(
            uploads=board,
            coverage=coverage,
            states={a.profile.agent_id: inst.states[a.participant_id].to_doc() for a in agents},
            trajectories=self.trajectories,
            emitted=sum(a.emitted for a in agents),
            accepted=len(inst.dataset.originals()),
            denied=self.denied,
            rejected=self.rejected,
        )

    def _random_start(self, rng: SplitMix64) -> GeoPoint:
        return _random_point_in(self.scenario.area, rng)

    def _consume_downlinks(self, agent: _AgentRuntime):
        for env in agent.sub.drain():
            if env.kind == "reward_event":
                cid = env.payload.get("checkpoint_id")
                agent.own_contributions[cid] = agent.own_contributions.get(cid, 0) + 1
            elif env.kind == "task_request":
                agent.pending_tasks.append(env.payload)
            elif env.kind == "status":
                status = env.payload.get("status")
                if status == "denied":
                    self.denied += 1
                elif status == "rejected":
                    self.rejected += 1
        agent.broadcast_sub.drain()  # shared feedback is observed, not acted on

    def _act(self, agent: _AgentRuntime, t: int, t_ms: int):
        _, actions = step(agent, self.world)
        self.trajectories.append((agent.profile.agent_id, t, agent.position.lat, agent.position.lon))

        for action in actions:
            c: Checkpoint = action["checkpoint"]
            self._publish(agent, self._task_report(
                agent, c.task, t_ms, checkpoint_id=c.checkpoint_id,
                questionnaire_id=c.questionnaire_id), t_ms)

        rules = self.scenario.motivation.dynamic_rules
        for task in agent.pending_tasks:
            rule_index = task.get("rule_index", 0)
            target = rules[rule_index].fence.center if rule_index < len(rules) else agent.position
            p = response_probability(haversine_m(agent.position, target),
                                     agent.profile.response_dmax_m)
            if agent.rng.random() < p:
                self._publish(agent, self._task_report(agent, task.get("task", "photo"), t_ms), t_ms)
        agent.pending_tasks = []

        for name, setting in sorted(self.scenario.sensing.sensors.items()):
            if (t * self.world.tick_s * 1000) % setting.interval_ms == 0:
                self._publish(agent, self._sensor_report(agent, name, t_ms), t_ms)

    def _task_report(self, agent: _AgentRuntime, task: str, t_ms: int,
                     checkpoint_id: str | None = None, questionnaire_id: str | None = None) -> dict:
        kind = _TASK_TO_REPORT[task]
        if kind == "photo":
            payload = {"blob_ref": None, "caption": f"photo by {agent.profile.agent_id}"}
        elif kind == "questionnaire_answer":
            payload = {"questionnaire_id": questionnaire_id,
                       "answers": [{"node_id": "n1", "answer": "yes"}]}
        else:
            payload = self._sensor_payload(agent, "position")
        if checkpoint_id is not None:
            payload["checkpoint_id"] = checkpoint_id
        return self._report_doc(agent, kind, payload, t_ms)

    def _sensor_report(self, agent: _AgentRuntime, sensor: str, t_ms: int) -> dict:
        return self._report_doc(agent, "sensor_sample", self._sensor_payload(agent, sensor), t_ms)

    def _sensor_payload(self, agent: _AgentRuntime, sensor: str) -> dict:
        if sensor == "position":
            return {"sensor": "position", "value": None, "unit": "deg"}
        base, unit = _SENSOR_BASE[sensor]
        noise_sd = agent.profile.noise_for(sensor)
        value = base if noise_sd == 0.0 else base + agent.rng.gauss(0.0, noise_sd)
        return {"sensor": sensor, "value": value, "unit": unit}

    def _report_doc(self, agent: _AgentRuntime, kind: str, payload: dict, t_ms: int) -> dict:
        agent.seq += 1
        return {
            "report_id": f"r-{agent.participant_id}-{agent.seq}",
            "scenario_id": self.scenario.scenario_id,
            "participant_id": agent.participant_id,
            "kind": kind,
            "captured_at": t_ms,
            "payload": payload,
            "position": {"lat": agent.position.lat, "lon": agent.position.lon},
            "labels": [],
            "excluded": False,
        }

    def _publish(self, agent: _AgentRuntime, report_doc: dict, t_ms: int):
        sid = self.scenario.scenario_id
        env = Envelope(
            message_id=f"m-{sid}-{report_doc['report_id']}",
            topic=up_topic(sid, agent.participant_id),
            seq=agent.seq,
            sent_at=t_ms,
            kind="report",
            payload=report_doc,
        )
        agent.emitted += 1
        self.engine.broker.publish(env, publisher=agent.participant_id)


def run(scenario: Scenario, config: SimConfig, engine: Engine,
        endpoint: str = "sim.local", on_tick=None) -> SimResult:
    """Run a full simulation against a deployed, running scenario."""
    return Simulation(scenario, config, engine).run(endpoint, on_tick=on_tick)
