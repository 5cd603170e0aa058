"""Pub/sub message plane between participants and scenario instances.

Topic grammar, message envelopes, and an in-process broker honoring the
delivery contract: at-least-once to every matching subscriber, with
per-publisher per-topic ordering. Consumers finish the job with an
idempotency window (`DedupWindow`) for effectively-once processing.
"""

from __future__ import annotations

import threading
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Any, Callable

from . import canonical
from .errors import EngineError

TOPIC_PREFIX = "pms"
BROADCAST = "broadcast"

ENVELOPE_KINDS = ("report", "task_request", "reward_event", "timeline_entry", "status")

_FORBIDDEN = set("/#+")


def _segment_ok(seg: str) -> bool:
    return bool(seg) and not (_FORBIDDEN & set(seg))


@dataclass(frozen=True)
class Topic:
    scenario_id: str
    direction: str  # "up" | "down"
    target: str  # participant_id, or "broadcast" for downlinks

    def render(self) -> str:
        return f"{TOPIC_PREFIX}/{self.scenario_id}/{self.direction}/{self.target}"

    @staticmethod
    def parse(text: str) -> "Topic":
        parts = text.split("/")
        if len(parts) != 4 or parts[0] != TOPIC_PREFIX or not all(_segment_ok(p) for p in parts[1:]):
            raise EngineError("malformed topic", text)
        _, scenario_id, direction, target = parts
        if direction not in ("up", "down"):
            raise EngineError("malformed topic", text)
        if direction == "up" and target == BROADCAST:
            raise EngineError("malformed topic", text)
        return Topic(scenario_id, direction, target)


def up_topic(scenario_id: str, participant_id: str) -> Topic:
    return Topic(scenario_id, "up", participant_id)


def down_topic(scenario_id: str, target: str = BROADCAST) -> Topic:
    return Topic(scenario_id, "down", target)


@dataclass(frozen=True)
class Envelope:
    message_id: str
    topic: Topic
    seq: int
    sent_at: int  # ms epoch
    kind: str
    payload: Any

    def to_doc(self) -> dict:
        return {
            "message_id": self.message_id,
            "topic": self.topic.render(),
            "seq": self.seq,
            "sent_at": self.sent_at,
            "kind": self.kind,
            "payload": self.payload,
        }

    def wire(self) -> bytes:
        return canonical.dump_bytes(self.to_doc())

    @staticmethod
    def from_doc(doc: dict) -> "Envelope":
        return Envelope(
            message_id=doc["message_id"],
            topic=Topic.parse(doc["topic"]),
            seq=doc["seq"],
            sent_at=doc["sent_at"],
            kind=doc["kind"],
            payload=doc["payload"],
        )


def pattern_ok(pattern: str) -> bool:
    parts = pattern.split("/")
    if len(parts) != 4:
        return False
    return all(seg == "+" or _segment_ok(seg) for seg in parts)


def topic_matches(pattern: str, topic: str) -> bool:
    pp = pattern.split("/")
    tp = topic.split("/")
    return len(pp) == len(tp) and all(a == "+" or a == b for a, b in zip(pp, tp))


@dataclass(frozen=True)
class DeliveryReceipt:
    message_id: str
    deliveries: int


class Subscription:
    """One subscriber's matching stream; queue mode by default, or a callback."""

    def __init__(self, pattern: str, callback: Callable[[Envelope], None] | None = None):
        self.pattern = pattern
        self.callback = callback
        self._queue: deque[Envelope] = deque()
        self.active = True

    def _deliver(self, env: Envelope):
        if self.callback is not None:
            self.callback(env)
        else:
            self._queue.append(env)

    def poll(self) -> Envelope | None:
        if self._queue:
            return self._queue.popleft()
        return None

    def drain(self) -> list[Envelope]:
        out = list(self._queue)
        self._queue.clear()
        return out

    def __len__(self) -> int:
        return len(self._queue)


class Broker:
    """In-process pub/sub hub enforcing the topic grammar and seq monotonicity.

    Safe for concurrent publishers and subscribers. Ordering holds per
    (publisher, topic) pair; there is no global order, no retained messages,
    and no replay for late subscribers.
    """

    def __init__(self):
        self._lock = threading.RLock()
        self._subs: list[Subscription] = []
        # (publisher, topic) -> (last seq, last message_id)
        self._last: dict[tuple[str, str], tuple[int, str]] = {}

    def subscribe(self, pattern: str, callback: Callable[[Envelope], None] | None = None) -> Subscription:
        if not pattern_ok(pattern):
            raise EngineError("malformed pattern", pattern)
        sub = Subscription(pattern, callback)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription):
        with self._lock:
            sub.active = False
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, env: Envelope, publisher: str) -> DeliveryReceipt:
        topic = env.topic.render()
        Topic.parse(topic)  # re-validate segments
        with self._lock:
            key = (publisher, topic)
            last = self._last.get(key)
            if last is not None:
                last_seq, last_mid = last
                redelivery = env.seq == last_seq and env.message_id == last_mid
                if env.seq <= last_seq and not redelivery:
                    raise EngineError(
                        "seq regression",
                        f"seq {env.seq} after {last_seq} from {publisher} on {topic}",
                    )
            self._last[key] = (env.seq, env.message_id)
            targets = [s for s in self._subs if s.active and topic_matches(s.pattern, topic)]
        # deliver outside the lock: subscriber callbacks may publish in turn
        for sub in targets:
            sub._deliver(env)
        return DeliveryReceipt(env.message_id, len(targets))


class DedupWindow:
    """Sliding idempotency window over the most recent message ids.

    The first occurrence of an id is accepted and recorded; replays inside the
    window are duplicates. Once 10 000 newer ids have passed, an id may be
    accepted again (documented bound).
    """

    def __init__(self, capacity: int = 10_000):
        self.capacity = capacity
        self._seen: OrderedDict[str, None] = OrderedDict()

    def accept(self, message_id: str) -> bool:
        if message_id in self._seen:
            return False
        self._seen[message_id] = None
        while len(self._seen) > self.capacity:
            self._seen.popitem(last=False)
        return True


def dedup_accept(seen: DedupWindow, env: Envelope) -> str:
    """Window check as an operation: returns "accept" or "duplicate"."""
    return "accept" if seen.accept(env.message_id) else "duplicate"
