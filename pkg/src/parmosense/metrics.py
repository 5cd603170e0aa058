"""Platform-comparison arithmetic: preparation workload W and function score S.

W sums the five relative setup-task times (w1 development, w2 GUI editing,
w3 store publishing, w4 app installation, w5 function configuration), with
installing one app from a store as the reference unit. S sums per-function
support: 1 for full, 0.5 for partial, 0 for none, over the eight functions
F1..F8. The shipped fixture holds the ten surveyed platforms as data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources

from . import canonical
from .errors import EngineError

FUNCTIONS = ("F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8")

STATUS_SCORE = {"full": 1.0, "partial": 0.5, "none": 0.0}

# allowed contribution values per workload component
WORKLOAD_VALUES = {
    "w1": (0, 8),
    "w2": (0, 4),
    "w3": (0, 8),
    "w4": (0, 1, 2),
    "w5": (0, 2),
}


@dataclass(frozen=True)
class PlatformDescriptor:
    name: str
    statuses: tuple[str, ...]  # F1..F8, each full | partial | none
    w1: int = 0
    w2: int = 0
    w3: int = 0
    w4: int = 0
    w5: int = 0
    open_ended_w1: bool = False  # display flag: development time grows as needed

    def __post_init__(self):
        if len(self.statuses) != len(FUNCTIONS):
            raise EngineError("invalid value", f"{self.name}: need exactly 8 statuses")
        for s in self.statuses:
            if s not in STATUS_SCORE:
                raise EngineError("invalid value", f"{self.name}: unknown status {s!r}")
        for key in WORKLOAD_VALUES:
            if getattr(self, key) not in WORKLOAD_VALUES[key]:
                raise EngineError("invalid value", f"{self.name}: {key} outside its value set")

    def workloads(self) -> tuple[int, int, int, int, int]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5)


def function_score(d: PlatformDescriptor) -> float:
    return sum(STATUS_SCORE[s] for s in d.statuses)


def preparation_workload(d: PlatformDescriptor) -> int:
    return d.w1 + d.w2 + d.w3 + d.w4 + d.w5


def comparison_table(descriptors: list[PlatformDescriptor]) -> list[dict]:
    rows = []
    for d in descriptors:
        rows.append({
            "name": d.name,
            "w1": d.w1, "w2": d.w2, "w3": d.w3, "w4": d.w4, "w5": d.w5,
            "W": preparation_workload(d),
            "S": function_score(d),
            "open_ended_w1": d.open_ended_w1,
        })
    return rows


def table_csv(rows: list[dict]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["name", "w1", "w2", "w3", "w4", "w5", "W", "S"])
    for r in rows:
        w.writerow([r["name"], r["w1"], r["w2"], r["w3"], r["w4"], r["w5"], r["W"], r["S"]])
    return buf.getvalue().encode("utf-8")


def descriptor_from_doc(doc: dict) -> PlatformDescriptor:
    return PlatformDescriptor(
        name=doc["name"],
        statuses=tuple(doc["statuses"][f] for f in FUNCTIONS),
        w1=doc["workloads"]["w1"],
        w2=doc["workloads"]["w2"],
        w3=doc["workloads"]["w3"],
        w4=doc["workloads"]["w4"],
        w5=doc["workloads"]["w5"],
        open_ended_w1=doc.get("open_ended_w1", False),
    )


def load_fixture(name: str = "platforms") -> list[PlatformDescriptor]:
    """Load a named packaged fixture ("platforms" ships the surveyed ten)."""
    try:
        data = resources.files("parmosense.fixtures").joinpath(f"{name}.json").read_bytes()
    except (FileNotFoundError, ModuleNotFoundError) as e:
        raise EngineError("unknown fixture", name) from e
    doc = canonical.loads(data)
    return [descriptor_from_doc(d) for d in doc["platforms"]]


def load_descriptors(data: bytes) -> list[PlatformDescriptor]:
    doc = canonical.loads(data)
    return [descriptor_from_doc(d) for d in doc["platforms"]]
