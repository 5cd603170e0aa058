"""Scenario manager and per-scenario instances.

Each deployed scenario gets an isolated runtime holding only the function
modules the scenario enables. Uploads arrive over the message plane, flow
through validation, the motivation rules, and the data manager, and produce
downlinks, all before the publish call returns. Volatile state (ledgers, task
board) is recomputable from the durable logs, which is what the supervisor
does after a crash.
"""

from __future__ import annotations

import os
import shutil
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import canonical, motivation
from .datastore import DataManager, QueryFilters, Report, ScenarioDataset
from .errors import EngineError
from .geo import inside
from .messaging import (
    BROADCAST,
    Broker,
    DedupWindow,
    Envelope,
    Subscription,
    down_topic,
)
from .motivation import ParticipantState
from .scenario import (
    JoinCode,
    Scenario,
    decode_join_code,
    generate_join_code,
    to_doc,
    validate_scenario,
)

STATUSES = ("created", "running", "stopped", "failed")

_LEGAL = {
    ("created", "running"),
    ("running", "stopped"),
    ("running", "failed"),
    ("stopped", "running"),
    ("failed", "running"),
    ("failed", "stopped"),  # supervisor giving up
}

MAX_FAILURES = 3
FAILURE_WINDOW_MS = 60_000


@dataclass
class InstanceStatus:
    state: str
    since: int
    restarts: int

    def to_doc(self) -> dict:
        return {"state": self.state, "since": self.since, "restarts": self.restarts}


def default_clock_ms() -> int:
    fixed = os.environ.get("PARMOSENSE_CLOCK_MS")
    if fixed is not None:
        return int(fixed)
    return int(time.time() * 1000)


class ScenarioInstance:
    """Runtime state of one deployed scenario."""

    def __init__(self, scenario: Scenario, dataset: ScenarioDataset, status: InstanceStatus):
        self.scenario = scenario
        self.dataset = dataset
        self.status = status
        self.lock = threading.RLock()
        self.participants: set[str] = set()
        self.states: dict[str, ParticipantState] = {}
        self.uploads: dict[str, int] = {}  # checkpoint_id -> accepted count
        self.uploads_by_participant: dict[str, dict[str, int]] = {}
        self.dedup = DedupWindow()
        self.tokens: dict[str, str] = {}  # token -> "issued" | "consumed"
        self.subscription: Subscription | None = None
        self.evaluations = 0  # motivation evaluations, one per accepted report
        self.denials: dict[str, int] = {}
        self.fail_times: list[int] = []

    @property
    def task_board(self) -> dict[str, int]:
        board = {c.checkpoint_id: 0 for c in self.scenario.motivation.static_requests}
        board.update(self.uploads)
        return board

    def snapshot_doc(self) -> dict:
        return {
            "scenario": to_doc(self.scenario),
            "status": self.status.to_doc(),
            "participants": sorted(self.participants),
        }


class Engine:
    """Deploys, supervises, and routes messages for every scenario instance."""

    def __init__(self, data_dir: Path | str, broker: Broker | None = None,
                 clock_ms=None, token_factory=None):
        self.data = DataManager(data_dir)
        self.broker = broker or Broker()
        self.clock_ms = clock_ms or default_clock_ms
        self.token_factory = token_factory
        self._instances: dict[str, ScenarioInstance] = {}
        self._lock = threading.RLock()
        self._down_seq: dict[str, int] = {}
        self._down_msg: dict[str, int] = {}
        # answers uploads addressed to deployed-but-not-running scenarios
        self.broker.subscribe("pms/+/up/+", callback=self._catch_all)
        self._rehydrate()

    # -- lifecycle ------------------------------------------------------------

    def deploy(self, scenario: Scenario) -> str:
        violations = validate_scenario(scenario)
        if violations:
            v = violations[0]
            raise EngineError("invalid scenario", f"{v.code} at {v.path}", v.path)
        with self._lock:
            if scenario.scenario_id in self._instances:
                raise EngineError("duplicate scenario_id", scenario.scenario_id)
            dataset = self.data.create(scenario)
            inst = ScenarioInstance(
                scenario, dataset, InstanceStatus("created", self.clock_ms(), 0)
            )
            self._instances[scenario.scenario_id] = inst
            self._persist_status(inst)
            return scenario.scenario_id

    def instance(self, scenario_id: str) -> ScenarioInstance:
        with self._lock:
            if scenario_id not in self._instances:
                raise EngineError("unknown scenario", scenario_id)
            return self._instances[scenario_id]

    def list_instances(self) -> list[dict]:
        with self._lock:
            out = []
            for sid in sorted(self._instances):
                inst = self._instances[sid]
                out.append({
                    "scenario_id": sid,
                    "name": inst.scenario.name,
                    "status": inst.status.to_doc(),
                    "participants": len(inst.participants),
                })
            return out

    def _transition(self, inst: ScenarioInstance, to_state: str):
        frm = inst.status.state
        if (frm, to_state) not in _LEGAL:
            raise EngineError("illegal transition", f"{frm} -> {to_state}",
                              inst.scenario.scenario_id)
        inst.status = InstanceStatus(to_state, self.clock_ms(), inst.status.restarts)
        self._persist_status(inst)

    def start(self, scenario_id: str) -> InstanceStatus:
        inst = self.instance(scenario_id)
        with inst.lock:
            if inst.status.state == "failed":
                # failed -> running is the supervisor's transition, not start's
                raise EngineError("illegal transition", "failed -> running (use supervise)",
                                  scenario_id)
            self._transition(inst, "running")
            self._subscribe(inst)
            return inst.status

    def stop(self, scenario_id: str) -> InstanceStatus:
        """Stop a running instance. Downlinks publish synchronously inside
        handle_upload, so there is never a pending backlog to flush."""
        inst = self.instance(scenario_id)
        with inst.lock:
            if inst.status.state == "failed":
                # failed -> stopped is the supervisor's give-up, not the organizer's stop
                raise EngineError("illegal transition", "failed -> stopped (use supervise)",
                                  scenario_id)
            self._transition(inst, "stopped")
            self._unsubscribe(inst)
            return inst.status

    def fail(self, scenario_id: str):
        """Simulate an instance crash: volatile state is lost, durable logs stay."""
        inst = self.instance(scenario_id)
        with inst.lock:
            self._transition(inst, "failed")
            self._unsubscribe(inst)
            inst.fail_times.append(self.clock_ms())
            inst.participants = set()
            inst.states = {}
            inst.uploads = {}
            inst.uploads_by_participant = {}
            inst.tokens = {}
            inst.dedup = DedupWindow()
            inst.evaluations = 0
            inst.denials = {}

    def supervise(self) -> list[tuple[str, str]]:
        """Restart failed instances from the durable logs; give up on crash loops."""
        actions: list[tuple[str, str]] = []
        with self._lock:
            failed = [i for i in self._instances.values() if i.status.state == "failed"]
        now = self.clock_ms()
        for inst in failed:
            with inst.lock:
                recent = [t for t in inst.fail_times if now - t <= FAILURE_WINDOW_MS]
                if len(recent) > MAX_FAILURES:
                    self._transition(inst, "stopped")
                    actions.append((inst.scenario.scenario_id, "stopped"))
                    continue
                self._replay(inst)
                inst.status = InstanceStatus("running", now, inst.status.restarts + 1)
                self._persist_status(inst)
                self._subscribe(inst)
                actions.append((inst.scenario.scenario_id, "restart"))
        return actions

    def remove(self, scenario_id: str):
        inst = self.instance(scenario_id)
        with inst.lock:
            if inst.status.state == "running":
                raise EngineError("illegal transition", "cannot delete a running scenario",
                                  scenario_id)
            self._unsubscribe(inst)
        with self._lock:
            del self._instances[scenario_id]
            self.data.forget(scenario_id)
            shutil.rmtree(self.data.scenario_dir(scenario_id), ignore_errors=True)

    # -- joining ---------------------------------------------------------------

    def issue_join_code(self, scenario_id: str, endpoint: str) -> JoinCode:
        inst = self.instance(scenario_id)
        token = self.token_factory() if self.token_factory else None
        code = generate_join_code(inst.scenario, endpoint, token=token)
        _, _, token_value = decode_join_code(code.payload)
        with inst.lock:
            inst.tokens[token_value] = "issued"
            self._append_participant_event(inst, {"event": "issued", "token": token_value,
                                                  "at": self.clock_ms()})
        return code

    def join(self, scenario_id: str, payload: str) -> tuple[str, dict]:
        _, sid, token = decode_join_code(payload)
        if sid != scenario_id:
            raise EngineError("scenario mismatch", sid)
        inst = self.instance(scenario_id)
        with inst.lock:
            if inst.status.state != "running":
                raise EngineError("scenario stopped", scenario_id)
            status = inst.tokens.get(token)
            if status is None:
                raise EngineError("invalid token", token)
            if status == "consumed":
                raise EngineError("token consumed", token)
            inst.tokens[token] = "consumed"
            pid = f"p{len(inst.participants) + 1}"
            inst.participants.add(pid)
            inst.states[pid] = ParticipantState(pid)
            self._append_participant_event(inst, {"event": "joined", "participant_id": pid,
                                                  "token": token, "at": self.clock_ms()})
            snapshot = self._snapshot_payload(inst)
            self._downlink(inst, pid, "status", {"status": "joined", **snapshot})
            return pid, snapshot

    def rejoin(self, scenario_id: str, participant_id: str) -> tuple[str, dict]:
        """Re-entry for a remembered participant: prior ledger state is kept."""
        inst = self.instance(scenario_id)
        with inst.lock:
            if inst.status.state != "running":
                raise EngineError("scenario stopped", scenario_id)
            if participant_id not in inst.participants:
                raise EngineError("unknown participant", participant_id)
            snapshot = self._snapshot_payload(inst)
            self._downlink(inst, participant_id, "status", {"status": "rejoined", **snapshot})
            return participant_id, snapshot

    def _snapshot_payload(self, inst: ScenarioInstance) -> dict:
        return {
            "scenario": to_doc(inst.scenario),
            "static_tasks": [
                {
                    "checkpoint_id": c.checkpoint_id,
                    "name": c.name,
                    "task": c.task,
                    "base_points": c.base_points,
                    "contribution_limit": c.contribution_limit,
                }
                for c in inst.scenario.motivation.static_requests
            ],
        }

    # -- upload path -------------------------------------------------------------

    def handle_upload(self, scenario_id: str, env: Envelope) -> list[Envelope]:
        inst = self.instance(scenario_id)
        with inst.lock:
            if inst.status.state != "running":
                raise EngineError("scenario stopped", scenario_id)
            if env.kind != "report":
                return [self._reject(inst, env, "invalid value", "expected a report envelope")]
            if not inst.dedup.accept(env.message_id):
                return []  # duplicate delivery: already processed
            return self._process_report(inst, env)

    def _process_report(self, inst: ScenarioInstance, env: Envelope) -> list[Envelope]:
        sc = inst.scenario
        uploader = env.topic.target
        try:
            report = Report.from_doc(env.payload)
        except (KeyError, TypeError):
            return [self._reject(inst, env, "invalid value", "malformed report payload")]
        if report.scenario_id != sc.scenario_id:
            return [self._reject(inst, env, "scenario mismatch", report.scenario_id)]
        if report.participant_id != uploader or uploader not in inst.participants:
            return [self._reject(inst, env, "unknown participant", report.participant_id)]
        if report.kind not in ("sensor_sample", "photo", "questionnaire_answer"):
            return [self._reject(inst, env, "invalid value", f"unknown kind {report.kind}")]
        if report.kind == "sensor_sample":
            sensor = report.payload.get("sensor")
            if sensor not in sc.sensing.sensors:
                return [self._reject(inst, env, "sensor not enabled", str(sensor))]
        if not (sc.period_start <= report.captured_at <= sc.period_end):
            return [self._reject(inst, env, "outside period", str(report.captured_at))]
        if inst.dataset.has(report.report_id):
            return [self._reject(inst, env, "duplicate report id", report.report_id)]

        checkpoint = None
        checkpoint_id = report.payload.get("checkpoint_id")
        if checkpoint_id is not None:
            checkpoint = sc.checkpoint(checkpoint_id)
            if checkpoint is None:
                return [self._reject(inst, env, "unknown checkpoint", checkpoint_id)]
            task_kind = {"photo": "photo", "questionnaire": "questionnaire_answer",
                         "sensor-sample": "sensor_sample"}[checkpoint.task]
            if report.kind != task_kind:
                return [self._reject(inst, env, "task kind mismatch", report.kind)]
            if report.position is None or not inside(report.position, checkpoint.fence):
                return [self._reject(inst, env, "outside checkpoint fence", checkpoint_id)]

        state = inst.states[uploader]
        out: list[Envelope] = []

        inst.evaluations += 1
        reward_event = None
        if checkpoint is not None:
            decision = motivation.award(state, checkpoint, inst.task_board, sc.motivation.reward)
            if not decision.accepted:
                inst.denials[decision.denied] = inst.denials.get(decision.denied, 0) + 1
                out.append(self._downlink(inst, uploader, "status", {
                    "status": "denied",
                    "code": decision.denied,
                    "checkpoint_id": checkpoint.checkpoint_id,
                    "report_id": report.report_id,
                }))
                return out
            state = decision.state
            reward_event = decision.event

        inst.dataset.append(report)
        if checkpoint is not None:
            cid = checkpoint.checkpoint_id
            inst.uploads[cid] = inst.uploads.get(cid, 0) + 1
            per = inst.uploads_by_participant.setdefault(cid, {})
            per[uploader] = per.get(uploader, 0) + 1

        prev_position = state.last_position
        if report.position is not None:
            state = replace(state, last_position=report.position)
        inst.states[uploader] = state

        if reward_event is not None:
            out.append(self._downlink(inst, uploader, "reward_event", reward_event.to_doc()))

        feedback_event = {
            "participant_id": uploader,
            "kind": report.kind,
            "report_id": report.report_id,
            "position": None if report.position is None
            else {"lat": report.position.lat, "lon": report.position.lon},
            "text": report.payload.get("caption", ""),
            "photo_ref": report.payload.get("blob_ref"),
            "captured_at": report.captured_at,
            "score": {"points": state.points, "level": state.level},
        }
        for audience, payload in motivation.build_feedback(feedback_event, sc.motivation.feedback):
            if audience == motivation.BROADCAST_AUDIENCE:
                kind = "timeline_entry"
                out.append(self._broadcast(inst, kind, payload))
            else:
                out.append(self._downlink(inst, audience, "status", payload))

        if report.position is not None:
            for note in motivation.evaluate_dynamic(prev_position, report.position,
                                                    sc.motivation.dynamic_rules):
                out.append(self._downlink(inst, uploader, "task_request", note.to_doc()))
        return out

    # -- digests and recovery ------------------------------------------------------

    def state_digest(self, scenario_id: str) -> str:
        """Deterministic hash of the durable-equivalent state; ignores wall-clock
        fields and token values so CLI and HTTP drives can be compared."""
        inst = self.instance(scenario_id)
        with inst.lock:
            doc = {
                "scenario": to_doc(inst.scenario),
                "state": inst.status.state,
                "restarts": inst.status.restarts,
                "participants": sorted(inst.participants),
                "states": {pid: inst.states[pid].to_doc() for pid in sorted(inst.states)},
                "uploads": dict(sorted(inst.uploads.items())),
                "reports": [r.to_doc() for r in inst.dataset.query(
                    QueryFilters(include_excluded=True))],
                "edits": [
                    {"kind": op.kind, "target": op.target, "arg": op.arg}
                    for op in inst.dataset.edit_log()
                ],
            }
            return canonical.digest(doc)

    def replay_states(self, scenario_id: str) -> dict[str, ParticipantState]:
        """Recompute every ledger from the durable report log (the crash oracle)."""
        inst = self.instance(scenario_id)
        states: dict[str, ParticipantState] = {}
        uploads: dict[str, int] = {}
        for event in self._participant_events(inst):
            if event["event"] == "joined":
                pid = event["participant_id"]
                states[pid] = ParticipantState(pid)
        self._replay_reports(inst.scenario, inst.dataset, states, uploads)
        return states

    def _replay(self, inst: ScenarioInstance):
        inst.participants = set()
        inst.states = {}
        inst.uploads = {}
        inst.uploads_by_participant = {}
        inst.tokens = {}
        inst.dedup = DedupWindow()
        inst.evaluations = 0
        inst.denials = {}
        for event in self._participant_events(inst):
            if event["event"] == "issued":
                inst.tokens[event["token"]] = "issued"
            elif event["event"] == "joined":
                pid = event["participant_id"]
                inst.tokens[event["token"]] = "consumed"
                inst.participants.add(pid)
                inst.states[pid] = ParticipantState(pid)
        self._replay_reports(inst.scenario, inst.dataset, inst.states, inst.uploads,
                             inst.uploads_by_participant)
        inst.evaluations = len(inst.dataset.originals())

    @staticmethod
    def _replay_reports(scenario: Scenario, dataset: ScenarioDataset,
                        states: dict[str, ParticipantState], uploads: dict[str, int],
                        uploads_by_participant: dict[str, dict[str, int]] | None = None):
        policy = scenario.motivation.reward
        for report in dataset.originals():
            pid = report.participant_id
            state = states.get(pid)
            if state is None:
                state = ParticipantState(pid)
            checkpoint_id = report.payload.get("checkpoint_id")
            if checkpoint_id is not None:
                checkpoint = scenario.checkpoint(checkpoint_id)
                board = {c.checkpoint_id: 0 for c in scenario.motivation.static_requests}
                board.update(uploads)
                decision = motivation.award(state, checkpoint, board, policy)
                state = decision.state
                uploads[checkpoint_id] = uploads.get(checkpoint_id, 0) + 1
                if uploads_by_participant is not None:
                    per = uploads_by_participant.setdefault(checkpoint_id, {})
                    per[pid] = per.get(pid, 0) + 1
            if report.position is not None:
                state = replace(state, last_position=report.position)
            states[pid] = state

    # -- plumbing ---------------------------------------------------------------

    def ranking(self, scenario_id: str) -> list[dict]:
        inst = self.instance(scenario_id)
        if not inst.scenario.motivation.reward.ranking_enabled:
            raise EngineError("function not enabled", "ranking",
                              "$.motivation.reward.ranking_enabled")
        with inst.lock:
            return [e.to_doc() for e in motivation.ranking(list(inst.states.values()))]

    def _participants_log(self, inst: ScenarioInstance) -> Path:
        return self.data.scenario_dir(inst.scenario.scenario_id) / "participants.log"

    def _append_participant_event(self, inst: ScenarioInstance, event: dict):
        with self._participants_log(inst).open("a", encoding="utf-8") as fh:
            fh.write(canonical.dumps(event) + "\n")

    def _participant_events(self, inst: ScenarioInstance) -> list[dict]:
        path = self._participants_log(inst)
        if not path.exists():
            return []
        return [canonical.loads(line) for line in path.read_text("utf-8").splitlines() if line]

    def _persist_status(self, inst: ScenarioInstance):
        path = self.data.scenario_dir(inst.scenario.scenario_id) / "instance.json"
        path.write_bytes(canonical.dump_bytes(inst.status.to_doc()))

    def _rehydrate(self):
        for sid in self.data.known_scenarios():
            dataset = self.data.open(sid)
            status_path = self.data.scenario_dir(sid) / "instance.json"
            if status_path.exists():
                doc = canonical.loads(status_path.read_bytes())
                status = InstanceStatus(doc["state"], doc["since"], doc["restarts"])
            else:
                status = InstanceStatus("created", self.clock_ms(), 0)
            inst = ScenarioInstance(dataset.scenario, dataset, status)
            self._instances[sid] = inst
            self._replay(inst)
            if status.state == "running":
                self._subscribe(inst)

    def _subscribe(self, inst: ScenarioInstance):
        if inst.subscription is not None:
            return
        sid = inst.scenario.scenario_id
        inst.subscription = self.broker.subscribe(
            f"pms/{sid}/up/+", callback=lambda env: self.handle_upload(sid, env)
        )

    def _unsubscribe(self, inst: ScenarioInstance):
        if inst.subscription is not None:
            self.broker.unsubscribe(inst.subscription)
            inst.subscription = None

    def _catch_all(self, env: Envelope):
        sid = env.topic.scenario_id
        with self._lock:
            inst = self._instances.get(sid)
        if inst is None or inst.status.state == "running":
            return  # unknown: drop; running: the instance subscription handles it
        self._downlink(inst, env.topic.target, "status",
                       {"status": "rejected", "code": "scenario stopped"})

    def _reject(self, inst: ScenarioInstance, env: Envelope, code: str, detail: str) -> Envelope:
        uploader = env.topic.target
        return self._downlink(inst, uploader, "status", {
            "status": "rejected", "code": code, "detail": detail,
            "report_id": env.payload.get("report_id") if isinstance(env.payload, dict) else None,
        })

    def _next_downlink(self, sid: str) -> tuple[str, int]:
        with self._lock:
            n = self._down_msg.get(sid, 0) + 1
            self._down_msg[sid] = n
            seq = self._down_seq.get(sid, 0) + 1
            self._down_seq[sid] = seq
            return f"d-{sid}-{n}", seq

    def _downlink(self, inst: ScenarioInstance, target: str, kind: str, payload: dict) -> Envelope:
        sid = inst.scenario.scenario_id
        mid, seq = self._next_downlink(sid)
        env = Envelope(mid, down_topic(sid, target), seq, self.clock_ms(), kind, payload)
        self.broker.publish(env, publisher=f"instance/{sid}")
        return env

    def _broadcast(self, inst: ScenarioInstance, kind: str, payload: dict) -> Envelope:
        return self._downlink(inst, BROADCAST, kind, payload)
