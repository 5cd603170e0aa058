import csv
import io

import pytest

from parmosense import canonical
from parmosense.datastore import (
    DataManager,
    EditOp,
    QueryFilters,
    Report,
    iso_utc,
)
from parmosense.errors import EngineError
from parmosense.geo import GeoPoint
from parmosense.reference import three_checkpoint_scenario
from parmosense.rng import SplitMix64
from parmosense.scenario import with_scenario_id

from oracles import check_gpx, check_kml


@pytest.fixture
def dataset(tmp_path):
    dm = DataManager(tmp_path)
    return dm.create(three_checkpoint_scenario())


def make_report(i, pid="p1", kind="sensor_sample", lat=34.985, lon=135.7588, position=True):
    payloads = {
        "sensor_sample": {"sensor": "position", "value": None, "unit": "deg"},
        "photo": {"blob_ref": None, "caption": f"photo {i}"},
        "questionnaire_answer": {"questionnaire_id": "crowding",
                                 "answers": [{"node_id": "n1", "answer": "yes"}]},
    }
    return Report(
        report_id=f"r{i}",
        scenario_id="ref3",
        participant_id=pid,
        kind=kind,
        captured_at=1_767_225_600_000 + i * 1000,
        payload=payloads[kind],
        position=GeoPoint(lat, lon) if position else None,
    )


def fill(dataset, n=6):
    for i in range(n):
        kind = ("sensor_sample", "photo", "questionnaire_answer")[i % 3]
        pid = "p1" if i % 2 == 0 else "p2"
        dataset.append(make_report(i, pid=pid, kind=kind, lat=34.985 + i * 1e-4))
    return dataset


# -- append / query -----------------------------------------------------------

def test_append_and_query_count(dataset):
    dataset.append(make_report(1))
    assert len(dataset.query()) == 1


def test_duplicate_report_id_rejected(dataset):
    dataset.append(make_report(1))
    with pytest.raises(EngineError) as e:
        dataset.append(make_report(1))
    assert e.value.code == "duplicate report id"


def test_captured_at_outside_period_rejected(dataset):
    late = make_report(1)
    late = Report(**{**late.__dict__, "captured_at": 9_999_999_999_999})
    with pytest.raises(EngineError) as e:
        dataset.append(late)
    assert e.value.code == "outside period"


def test_query_orders_by_time(dataset):
    fill(dataset)
    times = [r.captured_at for r in dataset.query()]
    assert times == sorted(times)


def test_query_filters(dataset):
    fill(dataset)
    assert all(r.participant_id == "p2" for r in dataset.query(QueryFilters(participant="p2")))
    assert dataset.query(QueryFilters(bbox=(0.0, 0.0, 1.0, 1.0))) == []
    lo = 1_767_225_600_000 + 2000
    assert all(r.captured_at >= lo for r in dataset.query(QueryFilters(time_from=lo)))


def test_bbox_excludes_positionless_reports(dataset):
    dataset.append(make_report(1, position=False))
    dataset.append(make_report(2))
    got = dataset.query(QueryFilters(bbox=(34.0, 135.0, 36.0, 136.0)))
    assert [r.report_id for r in got] == ["r2"]


def test_malformed_bbox_rejected(dataset):
    with pytest.raises(EngineError) as e:
        dataset.query(QueryFilters(bbox=(10.0, 0.0, 0.0, 1.0)))
    assert e.value.code == "malformed bbox"


def test_label_filter(dataset):
    fill(dataset)
    for rid in ("r0", "r2", "r4"):
        dataset.apply_edit(EditOp(f"e-{rid}", 0, "add_label", rid, "tree"))
    got = dataset.query(QueryFilters(label="tree"))
    assert sorted(r.report_id for r in got) == ["r0", "r2", "r4"]


# -- editing ------------------------------------------------------------------

def test_exclude_hides_from_default_query(dataset):
    fill(dataset, 3)
    dataset.apply_edit(EditOp("e1", 0, "exclude", "r1"))
    assert "r1" not in [r.report_id for r in dataset.query()]
    assert "r1" in [r.report_id for r in dataset.query(QueryFilters(include_excluded=True))]


def test_add_then_remove_label_restores_labels(dataset):
    fill(dataset, 2)
    dataset.apply_edit(EditOp("e1", 0, "add_label", "r0", "x"))
    dataset.apply_edit(EditOp("e2", 1, "remove_label", "r0", "x"))
    assert dataset.view_of("r0").labels == ()
    assert len(dataset.edit_log()) == 2


def test_annotate_updates_view_keeps_original(dataset):
    dataset.append(make_report(1, kind="photo"))
    dataset.apply_edit(EditOp("e1", 0, "annotate", "r1", {"caption": "fixed caption"}))
    assert dataset.view_of("r1").payload["caption"] == "fixed caption"
    assert dataset.view_of("r1", original=True).payload["caption"] == "photo 1"


def test_edit_unknown_target_rejected(dataset):
    with pytest.raises(EngineError) as e:
        dataset.apply_edit(EditOp("e1", 0, "exclude", "missing"))
    assert e.value.code == "unknown report"


def test_editing_disabled_scenario_rejects_edits(tmp_path):
    from parmosense.scenario import ProcessingConfig
    from dataclasses import replace
    scenario = replace(three_checkpoint_scenario("noedit"),
                       processing=ProcessingConfig(editing=False, browsing=True, export=True))
    ds = DataManager(tmp_path).create(scenario)
    ds.append(make_report(1))
    with pytest.raises(EngineError) as e:
        ds.apply_edit(EditOp("e1", 0, "exclude", "r1"))
    assert e.value.code == "function not enabled"


def test_originals_are_byte_identical_after_any_edits(dataset):
    fill(dataset)
    before = [canonical.dumps(r.to_doc()) for r in dataset.originals()]
    for i, rid in enumerate(["r0", "r1", "r2"]):
        dataset.apply_edit(EditOp(f"e{i}", i, "add_label", rid, "mark"))
        dataset.apply_edit(EditOp(f"x{i}", i, "exclude", rid))
    dataset.apply_edit(EditOp("a1", 9, "annotate", "r1", {"caption": "other"}))
    after = [canonical.dumps(r.to_doc()) for r in dataset.originals()]
    assert before == after


# -- restore --------------------------------------------------------------------

def test_restore_reverts_to_snapshot(dataset):
    fill(dataset)
    snapshot = dataset.export("json")
    dataset.apply_edit(EditOp("e1", 0, "exclude", "r0"))
    dataset.apply_edit(EditOp("e2", 1, "add_label", "r1", "z"))
    assert dataset.export("json") != snapshot
    assert dataset.restore() == 2
    assert dataset.export("json") == snapshot


def test_restore_idempotent(dataset):
    fill(dataset, 2)
    dataset.apply_edit(EditOp("e1", 0, "exclude", "r0"))
    assert dataset.restore() == 1
    assert dataset.restore() == 0


def test_random_edit_sequences_restore_byte_identical(dataset):
    """Randomized mini version of the acceptance criterion."""
    fill(dataset, 8)
    rng = SplitMix64(7)
    rids = [r.report_id for r in dataset.query()]
    snapshot = dataset.export("json")
    for round_no in range(20):
        n_ops = int(rng.random() * 12)
        for k in range(n_ops):
            rid = rids[int(rng.random() * len(rids))]
            kind = ["add_label", "remove_label", "exclude", "include", "annotate"][
                int(rng.random() * 5)]
            arg = {"caption": f"edit {round_no}-{k}"} if kind == "annotate" else f"l{k % 3}"
            dataset.apply_edit(EditOp(f"op-{round_no}-{k}", k, kind, rid, arg))
        dataset.restore()
        assert dataset.export("json") == snapshot


# -- exports ----------------------------------------------------------------------

def test_csv_header_only_when_empty(dataset):
    data = dataset.export("csv").decode("utf-8")
    assert data == "report_id,participant_id,kind,lat,lon,captured_at,labels,payload_summary\r\n"


def test_csv_row_count_matches_query(dataset):
    fill(dataset)
    dataset.apply_edit(EditOp("e1", 0, "exclude", "r3"))
    rows = list(csv.reader(io.StringIO(dataset.export("csv").decode("utf-8"))))
    assert len(rows) - 1 == len(dataset.query())


def test_csv_quoting_is_rfc4180(dataset):
    dataset.append(Report(
        report_id="rq", scenario_id="ref3", participant_id="p1", kind="photo",
        captured_at=1_767_225_600_000,
        payload={"blob_ref": None, "caption": 'a, "quoted" caption\nsecond line'},
        position=GeoPoint(34.985, 135.7588),
    ))
    data = dataset.export("csv").decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    assert rows[1][7] == 'a, "quoted" caption\nsecond line'


def test_gpx_has_one_trkpt_per_positioned_report(dataset):
    fill(dataset, 5)
    dataset.append(make_report(99, position=False))
    data = dataset.export("gpx")
    assert data.count(b"<trkpt") == 5
    assert check_gpx(data) == []


def test_gpx_one_track_per_participant(dataset):
    fill(dataset, 6)
    data = dataset.export("gpx")
    assert data.count(b"<trk>") == 2


def test_kml_placemark_per_positioned_report(dataset):
    fill(dataset, 4)
    data = dataset.export("kml")
    assert data.count(b"<Placemark") == 4
    assert check_kml(data) == []


def test_unsupported_format_rejected(dataset):
    with pytest.raises(EngineError) as e:
        dataset.export("xml")
    assert e.value.code == "unsupported format"


def test_export_disabled_scenario(tmp_path):
    from parmosense.scenario import ProcessingConfig
    from dataclasses import replace
    scenario = replace(three_checkpoint_scenario("noexport"),
                       processing=ProcessingConfig(editing=True, browsing=True, export=False))
    ds = DataManager(tmp_path).create(scenario)
    with pytest.raises(EngineError) as e:
        ds.export("csv")
    assert e.value.code == "function not enabled"


# -- import ------------------------------------------------------------------------

def test_json_roundtrip_through_import(tmp_path, dataset):
    fill(dataset)
    dataset.apply_edit(EditOp("e1", 0, "add_label", "r1", "keep"))
    dataset.apply_edit(EditOp("e2", 1, "exclude", "r2"))
    exported = dataset.export("json", QueryFilters(include_excluded=True))

    other = DataManager(tmp_path / "other").create(three_checkpoint_scenario())
    assert other.import_json(exported) == 6
    assert other.export("json", QueryFilters(include_excluded=True)) == exported


def test_import_empty_array(dataset):
    doc = canonical.dump_bytes({"schema_version": 1, "scenario_id": "ref3", "reports": []})
    assert dataset.import_json(doc) == 0


def test_import_wrong_scenario_rejected(dataset):
    doc = canonical.dump_bytes({"schema_version": 1, "scenario_id": "other", "reports": []})
    with pytest.raises(EngineError) as e:
        dataset.import_json(doc)
    assert e.value.code == "scenario mismatch"


def test_import_schema_mismatch(dataset):
    with pytest.raises(EngineError) as e:
        dataset.import_json(b'{"nope": 1}')
    assert e.value.code == "schema mismatch"


# -- persistence ----------------------------------------------------------------------

def test_view_survives_reopen(tmp_path):
    dm = DataManager(tmp_path)
    ds = dm.create(three_checkpoint_scenario())
    fill(ds, 4)
    ds.apply_edit(EditOp("e1", 0, "exclude", "r1"))
    view = ds.export("json")

    dm2 = DataManager(tmp_path)
    ds2 = dm2.open("ref3")
    assert ds2.export("json") == view


def test_blob_store_content_addressed(tmp_path):
    dm = DataManager(tmp_path)
    ref = dm.store_blob(b"pixels")
    assert dm.blob_path(ref).read_bytes() == b"pixels"
    assert dm.store_blob(b"pixels") == ref


def test_iso_utc_format():
    assert iso_utc(0) == "1970-01-01T00:00:00.000Z"
    assert iso_utc(1_767_225_600_123) == "2026-01-01T00:00:00.123Z"
