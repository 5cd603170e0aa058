"""Scenario documents: the declarative description of one sensing campaign.

A scenario names the campaign, bounds it in space and time, and configures the
function modules it activates: implicit sensing, checkpoint tasks and dynamic
requests, reward rules, feedback channels, and data-tool switches. Documents
are strict versioned JSON; the canonical serialization is byte-stable.
"""

from __future__ import annotations

import json
import math
import secrets
import urllib.parse
from dataclasses import dataclass, field, replace

from . import canonical
from .errors import EngineError
from .geo import GeoPoint, Geofence, haversine_m, inside

SCHEMA_VERSION = 1

SENSOR_NAMES = (
    "position",
    "light",
    "barometer",
    "accelerometer",
    "gyroscope",
    "heart_rate",
    "ble_scan",
)

TASK_KINDS = ("photo", "questionnaire", "sensor-sample")

NODE_KINDS = ("binary", "choice", "photo-with-text")

MIN_INTERVAL_MS = 100
MAX_WEIGHTING_ALPHA = 10.0
MAX_CHOICE_OPTIONS = 4


@dataclass(frozen=True)
class SensorSetting:
    interval_ms: int
    background: bool


@dataclass(frozen=True)
class SensingConfig:
    """Implicit-sensing setup: which sensors run, how often, foreground or not."""

    sensors: dict[str, SensorSetting] = field(default_factory=dict)

    def enabled(self, name: str) -> bool:
        return name in self.sensors

    def __hash__(self):  # dict field keeps the dataclass unhashable by default
        return hash(tuple(sorted(self.sensors.items())))


@dataclass(frozen=True)
class Checkpoint:
    """A static task pinned to a circular fence on the map."""

    checkpoint_id: str
    name: str
    fence: Geofence
    base_points: int
    task: str
    contribution_limit: int | None = None
    questionnaire_id: str | None = None


@dataclass(frozen=True)
class DynamicRule:
    """Entry into the fence pushes a task request with the given message."""

    fence: Geofence
    task: str
    message: str


@dataclass(frozen=True)
class CouponTrigger:
    kind: str  # "points" | "checkpoint"
    value: int | str


@dataclass(frozen=True)
class CouponSpec:
    coupon_id: str
    title: str
    trigger: CouponTrigger


@dataclass(frozen=True)
class RewardPolicy:
    points_enabled: bool = True
    demand_weighting_enabled: bool = False
    weighting_alpha: float = 1.0
    coupons: tuple[CouponSpec, ...] = ()
    level_threshold_points: int = 100
    ranking_enabled: bool = True


@dataclass(frozen=True)
class FeedbackConfig:
    map_pins: bool = False
    timeline: bool = False
    score_panel: bool = False


@dataclass(frozen=True)
class MotivationConfig:
    static_requests: tuple[Checkpoint, ...] = ()
    dynamic_rules: tuple[DynamicRule, ...] = ()
    reward: RewardPolicy = field(default_factory=RewardPolicy)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)


@dataclass(frozen=True)
class QuestionnaireNode:
    node_id: str
    prompt: str
    kind: str
    options: tuple[str, ...] | None = None
    # answer -> next node_id, or None to terminate that branch
    next: tuple[tuple[str, str | None], ...] = ()

    def __post_init__(self):
        # next is a mapping; keep it in canonical (sorted) order
        object.__setattr__(self, "next", tuple(sorted(self.next)))


@dataclass(frozen=True)
class QuestionnaireGraph:
    entry: str
    nodes: tuple[QuestionnaireNode, ...]


@dataclass(frozen=True)
class ProcessingConfig:
    editing: bool = True
    browsing: bool = True
    export: bool = True


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    name: str
    description: str
    area: Geofence
    period_start: int  # ms epoch
    period_end: int  # ms epoch
    sensing: SensingConfig
    motivation: MotivationConfig
    processing: ProcessingConfig
    questionnaires: tuple[tuple[str, QuestionnaireGraph], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "questionnaires",
                           tuple(sorted(self.questionnaires, key=lambda kv: kv[0])))

    def questionnaire(self, qid: str) -> QuestionnaireGraph | None:
        for name, graph in self.questionnaires:
            if name == qid:
                return graph
        return None

    def checkpoint(self, checkpoint_id: str) -> Checkpoint | None:
        for c in self.motivation.static_requests:
            if c.checkpoint_id == checkpoint_id:
                return c
        return None


@dataclass(frozen=True)
class Violation:
    """One broken invariant: stable code plus the document path that broke it."""

    code: str
    path: str
    message: str = ""

    def to_doc(self) -> dict:
        return {"code": self.code, "path": self.path, "message": self.message}


@dataclass(frozen=True)
class JoinCode:
    payload: str


# ---------------------------------------------------------------------------
# document <-> value mapping

def _geopoint_doc(p: GeoPoint) -> dict:
    return {"lat": p.lat, "lon": p.lon}


def _fence_doc(f: Geofence) -> dict:
    return {"center": _geopoint_doc(f.center), "radius_m": f.radius_m}


def _checkpoint_doc(c: Checkpoint) -> dict:
    return {
        "checkpoint_id": c.checkpoint_id,
        "name": c.name,
        "fence": _fence_doc(c.fence),
        "base_points": c.base_points,
        "task": c.task,
        "contribution_limit": c.contribution_limit,
        "questionnaire_id": c.questionnaire_id,
    }


def _node_doc(n: QuestionnaireNode) -> dict:
    return {
        "node_id": n.node_id,
        "prompt": n.prompt,
        "kind": n.kind,
        "options": list(n.options) if n.options is not None else None,
        "next": {k: v for k, v in n.next},
    }


def to_doc(s: Scenario) -> dict:
    """Plain-dict form of a scenario; canonical serialization applies to this."""
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": s.scenario_id,
        "name": s.name,
        "description": s.description,
        "area": _fence_doc(s.area),
        "period": {"start": s.period_start, "end": s.period_end},
        "sensing": {
            "sensors": {
                name: {"interval_ms": st.interval_ms, "background": st.background}
                for name, st in s.sensing.sensors.items()
            }
        },
        "motivation": {
            "static_requests": [_checkpoint_doc(c) for c in s.motivation.static_requests],
            "dynamic_rules": [
                {"fence": _fence_doc(r.fence), "task": r.task, "message": r.message}
                for r in s.motivation.dynamic_rules
            ],
            "reward": {
                "points_enabled": s.motivation.reward.points_enabled,
                "demand_weighting_enabled": s.motivation.reward.demand_weighting_enabled,
                "weighting_alpha": s.motivation.reward.weighting_alpha,
                "coupons": [
                    {
                        "coupon_id": c.coupon_id,
                        "title": c.title,
                        "trigger": {"kind": c.trigger.kind, "value": c.trigger.value},
                    }
                    for c in s.motivation.reward.coupons
                ],
                "level_threshold_points": s.motivation.reward.level_threshold_points,
                "ranking_enabled": s.motivation.reward.ranking_enabled,
            },
            "feedback": {
                "map_pins": s.motivation.feedback.map_pins,
                "timeline": s.motivation.feedback.timeline,
                "score_panel": s.motivation.feedback.score_panel,
            },
        },
        "questionnaires": {
            name: {"entry": g.entry, "nodes": [_node_doc(n) for n in g.nodes]}
            for name, g in s.questionnaires
        },
        "processing": {
            "editing": s.processing.editing,
            "browsing": s.processing.browsing,
            "export": s.processing.export,
        },
    }


def serialize(s: Scenario) -> bytes:
    return canonical.dump_bytes(to_doc(s))


class _Reader:
    """Strict object reader: tracks the path, rejects unknown keys."""

    def __init__(self, obj, path: str):
        if not isinstance(obj, dict):
            raise EngineError("invalid value", "expected an object", path)
        self.obj = obj
        self.path = path
        self.seen: set[str] = set()

    def get(self, key, kinds, required=True, default=None):
        self.seen.add(key)
        if key not in self.obj:
            if required:
                raise EngineError("missing required field", key, f"{self.path}.{key}")
            return default
        value = self.obj[key]
        if value is None and not required:
            return default
        if kinds is not None and not isinstance(value, kinds):
            raise EngineError("invalid value", f"unexpected type for {key}", f"{self.path}.{key}")
        if isinstance(value, bool) and kinds is not None and bool not in _astuple(kinds):
            raise EngineError("invalid value", f"unexpected type for {key}", f"{self.path}.{key}")
        return value

    def sub(self, key) -> "_Reader":
        return _Reader(self.get(key, dict), f"{self.path}.{key}")

    def close(self):
        unknown = set(self.obj) - self.seen
        if unknown:
            name = sorted(unknown)[0]
            raise EngineError("unknown field", name, f"{self.path}.{name}")


def _astuple(kinds):
    return kinds if isinstance(kinds, tuple) else (kinds,)


def _parse_point(obj, path) -> GeoPoint:
    r = _Reader(obj, path)
    lat = r.get("lat", (int, float))
    lon = r.get("lon", (int, float))
    r.close()
    return GeoPoint(float(lat), float(lon))


def _parse_fence(obj, path) -> Geofence:
    r = _Reader(obj, path)
    center = _parse_point(r.get("center", dict), f"{path}.center")
    radius = r.get("radius_m", (int, float))
    r.close()
    return Geofence(center, float(radius))


def _parse_checkpoint(obj, path) -> Checkpoint:
    r = _Reader(obj, path)
    cid = r.get("checkpoint_id", str)
    name = r.get("name", str)
    fence = _parse_fence(r.get("fence", dict), f"{path}.fence")
    base = r.get("base_points", int)
    task = r.get("task", str)
    if task not in TASK_KINDS:
        raise EngineError("invalid value", f"unknown task kind {task!r}", f"{path}.task")
    limit = r.get("contribution_limit", int, required=False)
    qid = r.get("questionnaire_id", str, required=False)
    r.close()
    return Checkpoint(cid, name, fence, base, task, limit, qid)


def _parse_node(obj, path) -> QuestionnaireNode:
    r = _Reader(obj, path)
    nid = r.get("node_id", str)
    prompt = r.get("prompt", str)
    kind = r.get("kind", str)
    if kind not in NODE_KINDS:
        raise EngineError("invalid value", f"unknown node kind {kind!r}", f"{path}.kind")
    options = r.get("options", list, required=False)
    nxt = r.get("next", dict, required=False, default={})
    r.close()
    edges = []
    for answer in sorted(nxt):
        target = nxt[answer]
        if target is not None and not isinstance(target, str):
            raise EngineError("invalid value", "next target must be a node id or null",
                              f"{path}.next.{answer}")
        edges.append((answer, target))
    opts = None
    if options is not None:
        for i, o in enumerate(options):
            if not isinstance(o, str):
                raise EngineError("invalid value", "options must be strings", f"{path}.options[{i}]")
        opts = tuple(options)
    return QuestionnaireNode(nid, prompt, kind, opts, tuple(edges))


def parse_doc(doc: dict) -> Scenario:
    """Build a Scenario from a plain dict, strictly (no unknown or missing fields)."""
    root = _Reader(doc, "$")
    version = root.get("schema_version", int)
    if version != SCHEMA_VERSION:
        raise EngineError("unknown schema version", f"got {version}", "$.schema_version")

    scenario_id = root.get("scenario_id", str)
    name = root.get("name", str)
    description = root.get("description", str)
    area = _parse_fence(root.get("area", dict), "$.area")

    period = root.sub("period")
    start = period.get("start", int)
    end = period.get("end", int)
    period.close()

    sensing_r = root.sub("sensing")
    sensors_obj = sensing_r.get("sensors", dict, required=False, default={})
    sensing_r.close()
    sensors = {}
    for sname in sensors_obj:
        sr = _Reader(sensors_obj[sname], f"$.sensing.sensors.{sname}")
        interval = sr.get("interval_ms", int)
        background = sr.get("background", bool)
        sr.close()
        sensors[sname] = SensorSetting(interval, background)

    mot = root.sub("motivation")
    checkpoints = tuple(
        _parse_checkpoint(c, f"$.motivation.static_requests[{i}]")
        for i, c in enumerate(mot.get("static_requests", list, required=False, default=[]))
    )
    rules = []
    for i, robj in enumerate(mot.get("dynamic_rules", list, required=False, default=[])):
        rr = _Reader(robj, f"$.motivation.dynamic_rules[{i}]")
        fence = _parse_fence(rr.get("fence", dict), f"$.motivation.dynamic_rules[{i}].fence")
        task = rr.get("task", str)
        if task not in TASK_KINDS:
            raise EngineError("invalid value", f"unknown task kind {task!r}",
                              f"$.motivation.dynamic_rules[{i}].task")
        message = rr.get("message", str)
        rr.close()
        rules.append(DynamicRule(fence, task, message))

    rew = mot.sub("reward")
    coupons = []
    for i, cobj in enumerate(rew.get("coupons", list, required=False, default=[])):
        cr = _Reader(cobj, f"$.motivation.reward.coupons[{i}]")
        coupon_id = cr.get("coupon_id", str)
        title = cr.get("title", str)
        tr = cr.sub("trigger")
        tkind = tr.get("kind", str)
        if tkind not in ("points", "checkpoint"):
            raise EngineError("invalid value", f"unknown trigger kind {tkind!r}",
                              f"$.motivation.reward.coupons[{i}].trigger.kind")
        tvalue = tr.get("value", (int, str))
        tr.close()
        cr.close()
        coupons.append(CouponSpec(coupon_id, title, CouponTrigger(tkind, tvalue)))
    reward = RewardPolicy(
        points_enabled=rew.get("points_enabled", bool),
        demand_weighting_enabled=rew.get("demand_weighting_enabled", bool),
        weighting_alpha=float(rew.get("weighting_alpha", (int, float))),
        coupons=tuple(coupons),
        level_threshold_points=rew.get("level_threshold_points", int),
        ranking_enabled=rew.get("ranking_enabled", bool),
    )
    rew.close()

    fb = mot.sub("feedback")
    feedback = FeedbackConfig(
        map_pins=fb.get("map_pins", bool),
        timeline=fb.get("timeline", bool),
        score_panel=fb.get("score_panel", bool),
    )
    fb.close()
    mot.close()

    questionnaires = []
    qobj = root.get("questionnaires", dict, required=False, default={})
    for qname in sorted(qobj):
        qr = _Reader(qobj[qname], f"$.questionnaires.{qname}")
        entry = qr.get("entry", str)
        nodes = tuple(
            _parse_node(n, f"$.questionnaires.{qname}.nodes[{i}]")
            for i, n in enumerate(qr.get("nodes", list))
        )
        qr.close()
        questionnaires.append((qname, QuestionnaireGraph(entry, nodes)))

    proc = root.sub("processing")
    processing = ProcessingConfig(
        editing=proc.get("editing", bool),
        browsing=proc.get("browsing", bool),
        export=proc.get("export", bool),
    )
    proc.close()
    root.close()

    return Scenario(
        scenario_id=scenario_id,
        name=name,
        description=description,
        area=area,
        period_start=start,
        period_end=end,
        sensing=SensingConfig(sensors),
        motivation=MotivationConfig(checkpoints, tuple(rules), reward, feedback),
        processing=processing,
        questionnaires=tuple(questionnaires),
    )


def parse_scenario(text: str | bytes) -> Scenario:
    """Parse a scenario document; syntax errors report line and column."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise EngineError("syntax error", f"{e.msg} at line {e.lineno} column {e.colno}") from e
    scenario = parse_doc(doc)
    hard = [v for v in validate_scenario(scenario) if v.code in _PARSE_HARD_CODES]
    if hard:
        v = hard[0]
        raise EngineError(v.code, v.message or v.code, v.path)
    return scenario


# Structural violations so basic that parse refuses to return a value for them.
_PARSE_HARD_CODES = {"options exceed 4", "options missing"}


# ---------------------------------------------------------------------------
# validation

def _check_fence(fence: Geofence, path: str, out: list[Violation]):
    p = fence.center
    if not (math.isfinite(p.lat) and -90.0 <= p.lat <= 90.0):
        out.append(Violation("lat out of range", f"{path}.center.lat"))
    if not (math.isfinite(p.lon) and -180.0 <= p.lon <= 180.0):
        out.append(Violation("lon out of range", f"{path}.center.lon"))
    if not (math.isfinite(fence.radius_m) and 0.0 < fence.radius_m <= 100_000.0):
        out.append(Violation("radius out of range", f"{path}.radius_m"))


def _check_questionnaire(qname: str, g: QuestionnaireGraph, out: list[Violation]):
    base = f"$.questionnaires.{qname}"
    ids = [n.node_id for n in g.nodes]
    id_set = set(ids)
    if g.entry not in id_set:
        out.append(Violation("entry not found", f"{base}.entry"))
        return
    indegree = {nid: 0 for nid in ids}
    edges: dict[str, list[str]] = {nid: [] for nid in ids}
    for n in g.nodes:
        npath = f"{base}.nodes[{ids.index(n.node_id)}]"
        if n.kind == "choice":
            if not n.options:
                out.append(Violation("options missing", f"{npath}.options"))
            elif len(n.options) > MAX_CHOICE_OPTIONS:
                out.append(Violation("options exceed 4", f"{npath}.options"))
        for answer, target in n.next:
            if target is None:
                continue
            if target not in id_set:
                out.append(Violation("unknown next target", f"{npath}.next.{answer}"))
                continue
            edges[n.node_id].append(target)
            indegree[target] += 1

    roots = [nid for nid in ids if indegree[nid] == 0]
    if len(roots) > 1:
        out.append(Violation("multiple entry nodes", f"{base}.entry"))

    # cycle check: DFS from every node (catches cycles detached from the entry)
    color: dict[str, int] = {}

    def dfs(nid: str) -> bool:
        color[nid] = 1
        for t in edges[nid]:
            c = color.get(t, 0)
            if c == 1:
                return True
            if c == 0 and dfs(t):
                return True
        color[nid] = 2
        return False

    cyclic = any(dfs(nid) for nid in ids if color.get(nid, 0) == 0)
    if cyclic:
        out.append(Violation("cycle in questionnaire graph", base))
        return

    reachable = set()
    stack = [g.entry]
    while stack:
        nid = stack.pop()
        if nid in reachable:
            continue
        reachable.add(nid)
        stack.extend(edges[nid])
    for nid in ids:
        if nid not in reachable:
            out.append(Violation("unreachable node", f"{base}.nodes[{ids.index(nid)}]"))


def validate_scenario(s: Scenario) -> list[Violation]:
    """Check every scenario invariant; an empty list means the scenario is valid."""
    out: list[Violation] = []
    if not s.scenario_id:
        out.append(Violation("scenario id empty", "$.scenario_id"))
    _check_fence(s.area, "$.area", out)
    if s.period_start >= s.period_end:
        out.append(Violation("empty period", "$.period"))

    for name, setting in sorted(s.sensing.sensors.items()):
        path = f"$.sensing.sensors.{name}"
        if name not in SENSOR_NAMES:
            out.append(Violation("unknown sensor", path))
        if setting.interval_ms < MIN_INTERVAL_MS:
            out.append(Violation("interval too small", f"{path}.interval_ms"))

    seen_cp: set[str] = set()
    qnames = {name for name, _ in s.questionnaires}
    for i, c in enumerate(s.motivation.static_requests):
        path = f"$.motivation.static_requests[{i}]"
        if c.checkpoint_id in seen_cp:
            out.append(Violation("duplicate checkpoint id", f"{path}.checkpoint_id"))
        seen_cp.add(c.checkpoint_id)
        _check_fence(c.fence, f"{path}.fence", out)
        if c.base_points < 0:
            out.append(Violation("base points negative", f"{path}.base_points"))
        if c.contribution_limit is not None and c.contribution_limit < 1:
            out.append(Violation("contribution limit not positive", f"{path}.contribution_limit"))
        if c.fence.center.is_valid() and s.area.is_valid():
            if not inside(c.fence.center, s.area):
                out.append(Violation("checkpoint outside area", f"{path}.fence"))
        if c.task == "questionnaire" and c.questionnaire_id is not None:
            if c.questionnaire_id not in qnames:
                out.append(Violation("questionnaire not found", f"{path}.questionnaire_id"))

    for i, r in enumerate(s.motivation.dynamic_rules):
        _check_fence(r.fence, f"$.motivation.dynamic_rules[{i}].fence", out)

    rew = s.motivation.reward
    if rew.demand_weighting_enabled and not rew.points_enabled:
        out.append(Violation("weighting requires points", "$.motivation.reward"))
    if not (0.0 <= rew.weighting_alpha <= MAX_WEIGHTING_ALPHA):
        out.append(Violation("alpha out of range", "$.motivation.reward.weighting_alpha"))
    if rew.level_threshold_points < 1:
        out.append(Violation("level threshold not positive",
                             "$.motivation.reward.level_threshold_points"))
    seen_coupons: set[str] = set()
    for i, c in enumerate(rew.coupons):
        if c.coupon_id in seen_coupons:
            out.append(Violation("duplicate coupon id",
                                 f"$.motivation.reward.coupons[{i}].coupon_id"))
        seen_coupons.add(c.coupon_id)

    for qname, graph in s.questionnaires:
        _check_questionnaire(qname, graph, out)
    return out


# ---------------------------------------------------------------------------
# join codes

URI_SCHEME = "parmosense"


def generate_join_code(s: Scenario, endpoint: str, token: str | None = None) -> JoinCode:
    """Produce the scannable payload installing this scenario from the endpoint.

    The endpoint is a bare authority (host or host:port). Each call mints a
    fresh one-time token unless one is supplied.
    """
    if not endpoint or any(ch in endpoint for ch in "/?#@ \t\n"):
        raise EngineError("invalid endpoint", f"not a bare authority: {endpoint!r}")
    parsed = urllib.parse.urlsplit(f"//{endpoint}")
    if parsed.netloc != endpoint:
        raise EngineError("invalid endpoint", f"not a bare authority: {endpoint!r}")
    if token is None:
        token = secrets.token_urlsafe(12)
    payload = "{}://{}/{}?t={}".format(
        URI_SCHEME,
        endpoint,
        urllib.parse.quote(s.scenario_id, safe=""),
        urllib.parse.quote(token, safe=""),
    )
    return JoinCode(payload)


def decode_join_code(payload: str) -> tuple[str, str, str]:
    """Split a join-code payload into (endpoint, scenario_id, token)."""
    try:
        parsed = urllib.parse.urlsplit(payload)
    except ValueError as e:
        raise EngineError("malformed payload", str(e)) from e
    if parsed.scheme != URI_SCHEME or not parsed.netloc:
        raise EngineError("malformed payload", f"expected {URI_SCHEME}:// payload")
    scenario_id = urllib.parse.unquote(parsed.path.lstrip("/"))
    query = urllib.parse.parse_qs(parsed.query)
    if not scenario_id or "t" not in query or len(query["t"]) != 1:
        raise EngineError("malformed payload", "missing scenario id or token")
    return parsed.netloc, scenario_id, query["t"][0]


def with_scenario_id(s: Scenario, scenario_id: str) -> Scenario:
    return replace(s, scenario_id=scenario_id)
