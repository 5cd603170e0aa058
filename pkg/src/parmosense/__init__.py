"""Scenario-driven participatory mobile sensing engine."""

from .errors import CATALOGUE, EngineError
from .geo import GeoPoint, Geofence, haversine_m, inside
from .messaging import Broker, DedupWindow, Envelope, Topic, dedup_accept
from .metrics import (
    PlatformDescriptor,
    comparison_table,
    function_score,
    load_fixture,
    preparation_workload,
)
from .motivation import (
    ParticipantState,
    RewardEvent,
    award,
    build_feedback,
    current_weight,
    evaluate_dynamic,
    ranking,
)
from .runtime import Engine, InstanceStatus, ScenarioInstance
from .scenario import (
    Checkpoint,
    JoinCode,
    Scenario,
    Violation,
    decode_join_code,
    generate_join_code,
    parse_scenario,
    serialize,
    validate_scenario,
)
from .sim import AgentProfile, SimConfig, SimResult, response_probability, run

__version__ = "0.1.0"

__all__ = [
    "AgentProfile",
    "Broker",
    "CATALOGUE",
    "Checkpoint",
    "DedupWindow",
    "Engine",
    "EngineError",
    "Envelope",
    "GeoPoint",
    "Geofence",
    "InstanceStatus",
    "JoinCode",
    "ParticipantState",
    "PlatformDescriptor",
    "RewardEvent",
    "Scenario",
    "ScenarioInstance",
    "SimConfig",
    "SimResult",
    "Topic",
    "Violation",
    "award",
    "build_feedback",
    "comparison_table",
    "current_weight",
    "decode_join_code",
    "dedup_accept",
    "evaluate_dynamic",
    "function_score",
    "generate_join_code",
    "haversine_m",
    "inside",
    "load_fixture",
    "parse_scenario",
    "preparation_workload",
    "ranking",
    "response_probability",
    "run",
    "serialize",
    "validate_scenario",
]
