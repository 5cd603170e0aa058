"""Durable report storage, non-destructive editing, browsing queries, export.

Reports append to `data/<scenario_id>/reports.log` (one canonical JSON doc per
line); edits append to `edits.log` alongside. The browsable view is the fold
of the edit log over the immutable originals, so restore is just truncating
the edit log. Photo payloads reference content-addressed blobs under
`blobs/<sha256>`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from . import canonical
from .errors import EngineError
from .geo import GeoPoint
from .scenario import Scenario, parse_doc, to_doc

REPORT_KINDS = ("sensor_sample", "photo", "questionnaire_answer")

EDIT_KINDS = ("add_label", "remove_label", "exclude", "include", "annotate")

EXPORT_FORMATS = ("csv", "json", "gpx", "kml")

GPX_NS = "http://www.topografix.com/GPX/1/1"
KML_NS = "http://www.opengis.net/kml/2.2"
CREATOR = "parmosense"

CSV_COLUMNS = ("report_id", "participant_id", "kind", "lat", "lon",
               "captured_at", "labels", "payload_summary")


@dataclass(frozen=True)
class Report:
    report_id: str
    scenario_id: str
    participant_id: str
    kind: str
    captured_at: int  # ms epoch
    payload: dict
    position: GeoPoint | None = None
    labels: tuple[str, ...] = ()
    excluded: bool = False

    def to_doc(self) -> dict:
        return {
            "report_id": self.report_id,
            "scenario_id": self.scenario_id,
            "participant_id": self.participant_id,
            "kind": self.kind,
            "captured_at": self.captured_at,
            "payload": self.payload,
            "position": None if self.position is None
            else {"lat": self.position.lat, "lon": self.position.lon},
            "labels": sorted(self.labels),
            "excluded": self.excluded,
        }

    @staticmethod
    def from_doc(doc: dict) -> "Report":
        pos = doc.get("position")
        return Report(
            report_id=doc["report_id"],
            scenario_id=doc["scenario_id"],
            participant_id=doc["participant_id"],
            kind=doc["kind"],
            captured_at=doc["captured_at"],
            payload=doc["payload"],
            position=None if pos is None else GeoPoint(pos["lat"], pos["lon"]),
            labels=tuple(doc.get("labels", ())),
            excluded=doc.get("excluded", False),
        )


@dataclass(frozen=True)
class EditOp:
    op_id: str
    at: int  # ms epoch
    kind: str
    target: str
    arg: object = None

    def to_doc(self) -> dict:
        return {"op_id": self.op_id, "at": self.at, "kind": self.kind,
                "target": self.target, "arg": self.arg}

    @staticmethod
    def from_doc(doc: dict) -> "EditOp":
        return EditOp(doc["op_id"], doc["at"], doc["kind"], doc["target"], doc.get("arg"))


@dataclass
class QueryFilters:
    participant: str | None = None
    time_from: int | None = None
    time_to: int | None = None
    bbox: tuple[float, float, float, float] | None = None  # min_lat, min_lon, max_lat, max_lon
    label: str | None = None
    include_excluded: bool = False


def iso_utc(ms: int) -> str:
    secs, msec = divmod(ms, 1000)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{msec:03d}Z"


def payload_summary(kind: str, payload: dict) -> str:
    if kind == "sensor_sample":
        value = payload.get("value")
        unit = payload.get("unit", "")
        return f"{payload.get('sensor', '?')}={value}{' ' + unit if unit else ''}"
    if kind == "photo":
        return payload.get("caption", "")
    if kind == "questionnaire_answer":
        answers = payload.get("answers", [])
        return "; ".join(f"{a.get('node_id')}={a.get('answer')}" for a in answers)
    return ""


def _fold_edits(originals: dict[str, Report], ops: list[EditOp]) -> dict[str, Report]:
    view = dict(originals)
    for op in ops:
        r = view.get(op.target)
        if r is None:
            continue
        if op.kind == "add_label":
            labels = tuple(sorted(set(r.labels) | {str(op.arg)}))
            view[op.target] = replace(r, labels=labels)
        elif op.kind == "remove_label":
            labels = tuple(sorted(set(r.labels) - {str(op.arg)}))
            view[op.target] = replace(r, labels=labels)
        elif op.kind == "exclude":
            view[op.target] = replace(r, excluded=True)
        elif op.kind == "include":
            view[op.target] = replace(r, excluded=False)
        elif op.kind == "annotate":
            payload = dict(r.payload)
            payload.update(op.arg if isinstance(op.arg, dict) else {})
            view[op.target] = replace(r, payload=payload)
    return view


class ScenarioDataset:
    """All stored data for one scenario: originals, edit log, derived view."""

    def __init__(self, scenario: Scenario, directory: Path):
        self.scenario = scenario
        self.dir = directory
        self._lock = threading.RLock()
        self._originals: dict[str, Report] = {}
        self._order: list[str] = []
        self._ops: list[EditOp] = []
        self._view: dict[str, Report] = {}
        self._load()

    @property
    def reports_log(self) -> Path:
        return self.dir / "reports.log"

    @property
    def edits_log(self) -> Path:
        return self.dir / "edits.log"

    def _load(self):
        if self.reports_log.exists():
            for line in self.reports_log.read_text("utf-8").splitlines():
                if not line:
                    continue
                r = Report.from_doc(canonical.loads(line))
                self._originals[r.report_id] = r
                self._order.append(r.report_id)
        if self.edits_log.exists():
            for line in self.edits_log.read_text("utf-8").splitlines():
                if line:
                    self._ops.append(EditOp.from_doc(canonical.loads(line)))
        self._view = _fold_edits(self._originals, self._ops)

    def _require(self, function: str, enabled: bool):
        if not enabled:
            raise EngineError("function not enabled", function, f"$.processing.{function}")

    # -- storage ------------------------------------------------------------

    def append(self, report: Report) -> str:
        with self._lock:
            if report.report_id in self._originals:
                raise EngineError("duplicate report id", report.report_id)
            if not (self.scenario.period_start <= report.captured_at <= self.scenario.period_end):
                raise EngineError("outside period", f"captured_at {report.captured_at}")
            stored = replace(report, labels=(), excluded=False)
            with self.reports_log.open("a", encoding="utf-8") as fh:
                fh.write(canonical.dumps(stored.to_doc()) + "\n")
            self._originals[stored.report_id] = stored
            self._order.append(stored.report_id)
            self._view[stored.report_id] = stored
            return stored.report_id

    def has(self, report_id: str) -> bool:
        with self._lock:
            return report_id in self._originals

    def originals(self) -> list[Report]:
        with self._lock:
            return [self._originals[rid] for rid in self._order]

    def edit_log(self) -> list[EditOp]:
        with self._lock:
            return list(self._ops)

    # -- browsing -----------------------------------------------------------

    def query(self, filters: QueryFilters | None = None) -> list[Report]:
        f = filters or QueryFilters()
        if f.bbox is not None:
            if len(f.bbox) != 4 or f.bbox[0] > f.bbox[2] or f.bbox[1] > f.bbox[3]:
                raise EngineError("malformed bbox", str(f.bbox))
        if f.time_from is not None and f.time_to is not None and f.time_from > f.time_to:
            raise EngineError("malformed range", f"{f.time_from}..{f.time_to}")
        with self._lock:
            rows = [self._view[rid] for rid in self._order]
        out = []
        for r in rows:
            if r.excluded and not f.include_excluded:
                continue
            if f.participant is not None and r.participant_id != f.participant:
                continue
            if f.time_from is not None and r.captured_at < f.time_from:
                continue
            if f.time_to is not None and r.captured_at > f.time_to:
                continue
            if f.bbox is not None:
                if r.position is None:
                    continue
                min_lat, min_lon, max_lat, max_lon = f.bbox
                if not (min_lat <= r.position.lat <= max_lat and min_lon <= r.position.lon <= max_lon):
                    continue
            if f.label is not None and f.label not in r.labels:
                continue
            out.append(r)
        out.sort(key=lambda r: (r.captured_at, r.report_id))
        return out

    def view_of(self, report_id: str, original: bool = False) -> Report:
        with self._lock:
            table = self._originals if original else self._view
            if report_id not in table:
                raise EngineError("unknown report", report_id)
            return table[report_id]

    # -- editing ------------------------------------------------------------

    def apply_edit(self, op: EditOp) -> dict:
        self._require("editing", self.scenario.processing.editing)
        if op.kind not in EDIT_KINDS:
            raise EngineError("unknown edit kind", op.kind)
        with self._lock:
            if op.target not in self._originals:
                raise EngineError("unknown report", op.target)
            with self.edits_log.open("a", encoding="utf-8") as fh:
                fh.write(canonical.dumps(op.to_doc()) + "\n")
            self._ops.append(op)
            self._view = _fold_edits(self._originals, self._ops)
            target = self._view[op.target]
            return {
                "ops": len(self._ops),
                "target": op.target,
                "labels": sorted(target.labels),
                "excluded": target.excluded,
            }

    def restore(self) -> int:
        with self._lock:
            reverted = len(self._ops)
            self._ops = []
            if self.edits_log.exists():
                self.edits_log.unlink()
            self._view = dict(self._originals)
            return reverted

    # -- export / import ----------------------------------------------------

    def export(self, fmt: str, filters: QueryFilters | None = None) -> bytes:
        self._require("export", self.scenario.processing.export)
        if fmt not in EXPORT_FORMATS:
            raise EngineError("unsupported format", fmt)
        rows = self.query(filters)
        if fmt == "csv":
            return self._export_csv(rows)
        if fmt == "json":
            return self._export_json(rows)
        if fmt == "gpx":
            return self._export_gpx(rows)
        return self._export_kml(rows)

    def _export_csv(self, rows: list[Report]) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([
                r.report_id,
                r.participant_id,
                r.kind,
                "" if r.position is None else repr(r.position.lat),
                "" if r.position is None else repr(r.position.lon),
                iso_utc(r.captured_at),
                ";".join(sorted(r.labels)),
                payload_summary(r.kind, r.payload),
            ])
        return buf.getvalue().encode("utf-8")

    def _export_json(self, rows: list[Report]) -> bytes:
        doc = {
            "schema_version": 1,
            "scenario_id": self.scenario.scenario_id,
            "reports": [r.to_doc() for r in rows],
        }
        return canonical.dump_bytes(doc)

    def _export_gpx(self, rows: list[Report]) -> bytes:
        ET.register_namespace("", GPX_NS)
        root = ET.Element(f"{{{GPX_NS}}}gpx", {"version": "1.1", "creator": CREATOR})
        by_participant: dict[str, list[Report]] = {}
        for r in rows:
            if r.position is not None:
                by_participant.setdefault(r.participant_id, []).append(r)
        for pid in sorted(by_participant):
            trk = ET.SubElement(root, f"{{{GPX_NS}}}trk")
            name = ET.SubElement(trk, f"{{{GPX_NS}}}name")
            name.text = pid
            seg = ET.SubElement(trk, f"{{{GPX_NS}}}trkseg")
            for r in by_participant[pid]:
                pt = ET.SubElement(seg, f"{{{GPX_NS}}}trkpt",
                                   {"lat": repr(r.position.lat), "lon": repr(r.position.lon)})
                t = ET.SubElement(pt, f"{{{GPX_NS}}}time")
                t.text = iso_utc(r.captured_at)
        return ET.tostring(root, encoding="utf-8", xml_declaration=True)

    def _export_kml(self, rows: list[Report]) -> bytes:
        ET.register_namespace("", KML_NS)
        root = ET.Element(f"{{{KML_NS}}}kml")
        doc = ET.SubElement(root, f"{{{KML_NS}}}Document")
        for r in rows:
            if r.position is None:
                continue
            pm = ET.SubElement(doc, f"{{{KML_NS}}}Placemark", {"id": r.report_id})
            name = ET.SubElement(pm, f"{{{KML_NS}}}name")
            name.text = r.report_id
            desc = ET.SubElement(pm, f"{{{KML_NS}}}description")
            desc.text = payload_summary(r.kind, r.payload)
            ts = ET.SubElement(pm, f"{{{KML_NS}}}TimeStamp")
            when = ET.SubElement(ts, f"{{{KML_NS}}}when")
            when.text = iso_utc(r.captured_at)
            point = ET.SubElement(pm, f"{{{KML_NS}}}Point")
            coords = ET.SubElement(point, f"{{{KML_NS}}}coordinates")
            coords.text = f"{r.position.lon!r},{r.position.lat!r}"
        return ET.tostring(root, encoding="utf-8", xml_declaration=True)

    def import_json(self, data: bytes) -> int:
        try:
            doc = canonical.loads(data)
        except Exception as e:
            raise EngineError("schema mismatch", f"not valid JSON: {e}") from e
        if not isinstance(doc, dict) or doc.get("schema_version") != 1 or "reports" not in doc:
            raise EngineError("schema mismatch", "expected a json export document")
        if doc.get("scenario_id") != self.scenario.scenario_id:
            raise EngineError("scenario mismatch", str(doc.get("scenario_id")))
        count = 0
        for rdoc in doc["reports"]:
            try:
                report = Report.from_doc(rdoc)
            except (KeyError, TypeError) as e:
                raise EngineError("schema mismatch", f"bad report entry: {e}") from e
            with self._lock:
                if report.report_id in self._originals:
                    continue  # idempotent re-import
                original = replace(report, labels=(), excluded=False)
                with self.reports_log.open("a", encoding="utf-8") as fh:
                    fh.write(canonical.dumps(original.to_doc()) + "\n")
                self._originals[original.report_id] = original
                self._order.append(original.report_id)
                self._view[original.report_id] = original
                ops = []
                base = f"import-{report.report_id}"
                for label in report.labels:
                    ops.append(EditOp(f"{base}-l{label}", report.captured_at, "add_label",
                                      report.report_id, label))
                if report.excluded:
                    ops.append(EditOp(f"{base}-x", report.captured_at, "exclude", report.report_id))
            for op in ops:
                self.apply_edit(op)
            count += 1
        return count


class DataManager:
    """Scenario datasets plus the content-addressed blob store."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "blobs").mkdir(exist_ok=True)
        self._datasets: dict[str, ScenarioDataset] = {}
        self._lock = threading.RLock()

    def scenario_dir(self, scenario_id: str) -> Path:
        return self.root / "data" / scenario_id

    def create(self, scenario: Scenario) -> ScenarioDataset:
        d = self.scenario_dir(scenario.scenario_id)
        d.mkdir(parents=True, exist_ok=True)
        (d / "scenario.json").write_bytes(canonical.dump_bytes(to_doc(scenario)))
        with self._lock:
            dataset = ScenarioDataset(scenario, d)
            self._datasets[scenario.scenario_id] = dataset
            return dataset

    def open(self, scenario_id: str) -> ScenarioDataset:
        with self._lock:
            if scenario_id not in self._datasets:
                d = self.scenario_dir(scenario_id)
                sfile = d / "scenario.json"
                if not sfile.exists():
                    raise EngineError("unknown scenario", scenario_id)
                scenario = parse_doc(canonical.loads(sfile.read_bytes()))
                self._datasets[scenario_id] = ScenarioDataset(scenario, d)
            return self._datasets[scenario_id]

    def forget(self, scenario_id: str):
        with self._lock:
            self._datasets.pop(scenario_id, None)

    def known_scenarios(self) -> list[str]:
        base = self.root / "data"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if (p / "scenario.json").exists())

    def store_blob(self, data: bytes) -> str:
        ref = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / ref
        if not path.exists():
            path.write_bytes(data)
        return ref

    def blob_path(self, ref: str) -> Path:
        return self.root / "blobs" / ref
