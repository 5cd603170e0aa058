"""Stable error codes shared by the engine, CLI, and HTTP service."""

from __future__ import annotations


class EngineError(Exception):
    """Domain error with a stable code; message adds human detail, path locates it."""

    def __init__(self, code: str, message: str = "", path: str = ""):
        self.code = code
        self.message = message or code
        self.path = path
        super().__init__(self.message if not path else f"{self.message} at {path}")

    def to_doc(self) -> dict:
        return {"code": self.code, "message": self.message, "path": self.path}


# Every code the engine can emit, with a one-line description. The service maps
# codes to HTTP statuses from this table; tests assert raise sites stay inside it.
CATALOGUE: dict[str, str] = {
    # document parsing
    "syntax error": "scenario/sim document is not well-formed JSON (position reported)",
    "unknown field": "strict mode rejected a field not in the schema",
    "missing required field": "a required document field is absent",
    "invalid value": "a field holds a value outside its domain",
    "unknown schema version": "document schema_version is not supported",
    # scenario validation violation codes (returned as data, reused as error codes)
    "lat out of range": "latitude outside -90..90 or not finite",
    "lon out of range": "longitude outside -180..180 or not finite",
    "radius out of range": "fence radius not in (0, 100000] meters",
    "base points negative": "checkpoint base_points below zero",
    "contribution limit not positive": "contribution_limit present but < 1",
    "duplicate checkpoint id": "two checkpoints share a checkpoint_id",
    "options exceed 4": "choice node lists more than 4 options",
    "options missing": "choice node lists no options",
    "unknown next target": "questionnaire edge points at a node that does not exist",
    "cycle in questionnaire graph": "questionnaire next-graph is not acyclic",
    "multiple entry nodes": "more than one questionnaire node has no incoming edge",
    "unreachable node": "questionnaire node cannot be reached from the entry",
    "entry not found": "declared questionnaire entry is not a node",
    "questionnaire not found": "checkpoint references a questionnaire id that is not defined",
    "interval too small": "sensor interval below 100 ms",
    "unknown sensor": "sensor name outside the supported set",
    "weighting requires points": "demand weighting enabled while points are disabled",
    "alpha out of range": "weighting_alpha outside 0..10",
    "level threshold not positive": "level_threshold_points < 1",
    "duplicate coupon id": "two coupons share a coupon_id",
    "empty period": "period start is not before period end",
    "checkpoint outside area": "checkpoint fence center not inside the scenario area",
    "scenario id empty": "scenario_id is empty",
    # join codes
    "invalid endpoint": "join-code endpoint is not a bare authority (host[:port])",
    "malformed payload": "join-code payload does not decode to its three components",
    # message plane
    "malformed topic": "topic segments empty or containing '/', '#', '+'",
    "malformed pattern": "subscription filter is not a valid topic pattern",
    "seq regression": "publisher sequence number went backward",
    # runtime
    "invalid scenario": "deploy rejected a scenario with validation violations",
    "duplicate scenario_id": "a scenario with this id is already deployed",
    "unknown scenario": "no deployed scenario has this id",
    "illegal transition": "instance status transition not in the lifecycle machine",
    "invalid token": "join token was never issued for this scenario",
    "token consumed": "join token already used once",
    "scenario stopped": "operation requires a running instance",
    "unknown participant": "participant_id has not joined this scenario",
    "sensor not enabled": "report names a sensor the scenario did not enable",
    "outside period": "captured_at not within the scenario period",
    "unknown checkpoint": "report references a checkpoint_id not in the scenario",
    "task kind mismatch": "report kind does not match the checkpoint task",
    "outside checkpoint fence": "report position not inside the referenced checkpoint fence",
    "contribution limit": "per-participant contribution cap reached for this checkpoint",
    "function not enabled": "the scenario did not enable this function module",
    # data manager
    "duplicate report id": "a report with this id is already stored",
    "unknown report": "edit target report_id not found",
    "unknown edit kind": "edit op kind outside the supported set",
    "malformed bbox": "bbox filter is not (min_lat, min_lon, max_lat, max_lon)",
    "malformed range": "time range filter is not a (from, to) pair of ms epochs",
    "unsupported format": "export format outside {csv, json, gpx, kml}",
    "schema mismatch": "import document does not match the json export schema",
    "scenario mismatch": "import document belongs to a different scenario",
    # simulator / service
    "engine not running": "simulation requires the instance to be running",
    "invalid sim config": "sim config violates its invariants",
    "unknown fixture": "metrics fixture name not found",
    "unauthorized": "missing or wrong bearer token",
}


def ensure_known(code: str) -> str:
    if code not in CATALOGUE:
        raise AssertionError(f"error code not in catalogue: {code!r}")
    return code
