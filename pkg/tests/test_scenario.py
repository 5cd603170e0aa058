import json

import pytest

from parmosense import canonical
from parmosense.errors import EngineError
from parmosense.geo import GeoPoint, Geofence
from parmosense.reference import random_scenario, three_checkpoint_scenario
from parmosense.scenario import (
    decode_join_code,
    generate_join_code,
    parse_doc,
    parse_scenario,
    serialize,
    to_doc,
    validate_scenario,
)

MINIMAL = {
    "schema_version": 1,
    "scenario_id": "s1",
    "name": "Min",
    "description": "",
    "area": {"center": {"lat": 35.0, "lon": 135.0}, "radius_m": 1000.0},
    "period": {"start": 0, "end": 3_600_000},
    "sensing": {"sensors": {"position": {"interval_ms": 1000, "background": True}}},
    "motivation": {
        "static_requests": [
            {
                "checkpoint_id": "c1",
                "name": "Spot",
                "fence": {"center": {"lat": 35.0, "lon": 135.0}, "radius_m": 50.0},
                "base_points": 10,
                "task": "photo",
                "contribution_limit": None,
                "questionnaire_id": None,
            }
        ],
        "dynamic_rules": [],
        "reward": {
            "points_enabled": True,
            "demand_weighting_enabled": False,
            "weighting_alpha": 1.0,
            "coupons": [],
            "level_threshold_points": 100,
            "ranking_enabled": True,
        },
        "feedback": {"map_pins": False, "timeline": False, "score_panel": False},
    },
    "questionnaires": {},
    "processing": {"editing": True, "browsing": True, "export": True},
}


def doc_with(**overrides):
    doc = json.loads(json.dumps(MINIMAL))
    doc.update(overrides)
    return doc


def test_minimal_document_parses():
    s = parse_scenario(json.dumps(MINIMAL))
    assert s.scenario_id == "s1"
    assert len(s.motivation.static_requests) == 1
    assert validate_scenario(s) == []


def test_parse_reports_syntax_position():
    with pytest.raises(EngineError) as e:
        parse_scenario("{\n  \"schema_version\": 1,\n  oops\n}")
    assert e.value.code == "syntax error"
    assert "line 3" in e.value.message


def test_unknown_field_rejected():
    doc = doc_with(extra_field=1)
    with pytest.raises(EngineError) as e:
        parse_scenario(json.dumps(doc))
    assert e.value.code == "unknown field"
    assert "extra_field" in e.value.path


def test_missing_required_field():
    doc = doc_with()
    del doc["name"]
    with pytest.raises(EngineError) as e:
        parse_scenario(json.dumps(doc))
    assert e.value.code == "missing required field"


def test_unknown_schema_version():
    with pytest.raises(EngineError) as e:
        parse_scenario(json.dumps(doc_with(schema_version=2)))
    assert e.value.code == "unknown schema version"


def test_five_option_choice_rejected_at_parse():
    doc = doc_with(questionnaires={
        "q1": {
            "entry": "n1",
            "nodes": [
                {
                    "node_id": "n1",
                    "prompt": "pick",
                    "kind": "choice",
                    "options": ["a", "b", "c", "d", "e"],
                    "next": {"a": None, "b": None, "c": None, "d": None, "e": None},
                }
            ],
        }
    })
    with pytest.raises(EngineError) as e:
        parse_scenario(json.dumps(doc))
    assert e.value.code == "options exceed 4"


def test_roundtrip_of_reference_scenario():
    s = three_checkpoint_scenario()
    assert parse_scenario(serialize(s)) == s


def test_serialize_parse_is_canonicalization():
    data = json.dumps(MINIMAL, indent=2, sort_keys=False)
    s = parse_scenario(data)
    assert serialize(s) == canonical.dump_bytes(to_doc(s))


@pytest.mark.parametrize("seed", range(40))
def test_generated_scenarios_valid_and_roundtrip(seed):
    s = random_scenario(seed)
    assert validate_scenario(s) == [], [v.to_doc() for v in validate_scenario(s)]
    assert parse_scenario(serialize(s)) == s


# ---------------------------------------------------------------------------
# validation violations

def violations_of(doc):
    return [v.code for v in validate_scenario(parse_doc(doc))]


def test_cycle_violation():
    doc = doc_with(questionnaires={
        "q1": {
            "entry": "A",
            "nodes": [
                {"node_id": "A", "prompt": "a", "kind": "binary",
                 "options": None, "next": {"yes": "B", "no": None}},
                {"node_id": "B", "prompt": "b", "kind": "binary",
                 "options": None, "next": {"yes": "A", "no": None}},
            ],
        }
    })
    assert "cycle in questionnaire graph" in violations_of(doc)


def test_checkpoint_outside_area_violation():
    doc = doc_with()
    doc["motivation"]["static_requests"][0]["fence"]["center"] = {"lat": 36.0, "lon": 135.0}
    assert "checkpoint outside area" in violations_of(doc)


def test_empty_period_violation():
    doc = doc_with(period={"start": 100, "end": 100})
    assert "empty period" in violations_of(doc)


MUTATIONS = {
    "lat out of range": lambda d: d["area"]["center"].update(lat=95.0),
    "lon out of range": lambda d: d["area"]["center"].update(lon=-188.0),
    "radius out of range (zero)": lambda d: d["area"].update(radius_m=0.0),
    "radius out of range (big)": lambda d: d["area"].update(radius_m=200_000.0),
    "empty period": lambda d: d["period"].update(end=d["period"]["start"]),
    "inverted period": lambda d: d["period"].update(end=d["period"]["start"] - 1),
    "scenario id empty": lambda d: d.update(scenario_id=""),
    "interval too small": lambda d: d["sensing"]["sensors"]["position"].update(interval_ms=50),
    "unknown sensor": lambda d: d["sensing"]["sensors"].update(
        thermometer={"interval_ms": 1000, "background": False}),
    "base points negative": lambda d: d["motivation"]["static_requests"][0].update(
        base_points=-1),
    "contribution limit zero": lambda d: d["motivation"]["static_requests"][0].update(
        contribution_limit=0),
    "checkpoint fence bad lat": lambda d: d["motivation"]["static_requests"][0]["fence"][
        "center"].update(lat=999.0),
    "checkpoint fence bad radius": lambda d: d["motivation"]["static_requests"][0][
        "fence"].update(radius_m=-5.0),
    "checkpoint outside area": lambda d: d["motivation"]["static_requests"][0]["fence"][
        "center"].update(lat=36.0),
    "duplicate checkpoint id": lambda d: d["motivation"]["static_requests"].append(
        json.loads(json.dumps(d["motivation"]["static_requests"][0]))),
    "weighting requires points": lambda d: d["motivation"]["reward"].update(
        points_enabled=False, demand_weighting_enabled=True),
    "alpha out of range": lambda d: d["motivation"]["reward"].update(weighting_alpha=11.0),
    "alpha negative": lambda d: d["motivation"]["reward"].update(weighting_alpha=-0.5),
    "level threshold not positive": lambda d: d["motivation"]["reward"].update(
        level_threshold_points=0),
    "duplicate coupon id": lambda d: d["motivation"]["reward"].update(coupons=[
        {"coupon_id": "k", "title": "A", "trigger": {"kind": "points", "value": 10}},
        {"coupon_id": "k", "title": "B", "trigger": {"kind": "points", "value": 20}},
    ]),
    "dynamic rule bad fence": lambda d: d["motivation"]["dynamic_rules"].append(
        {"fence": {"center": {"lat": 0.0, "lon": 0.0}, "radius_m": -1.0},
         "task": "photo", "message": "m"}),
    "questionnaire cycle": lambda d: d.update(questionnaires={
        "q1": {"entry": "A", "nodes": [
            {"node_id": "A", "prompt": "a", "kind": "binary", "options": None,
             "next": {"yes": "A", "no": None}}]}}),
    "questionnaire bad edge": lambda d: d.update(questionnaires={
        "q1": {"entry": "A", "nodes": [
            {"node_id": "A", "prompt": "a", "kind": "binary", "options": None,
             "next": {"yes": "missing", "no": None}}]}}),
    "questionnaire detached node": lambda d: d.update(questionnaires={
        "q1": {"entry": "A", "nodes": [
            {"node_id": "A", "prompt": "a", "kind": "binary", "options": None,
             "next": {"yes": None, "no": None}},
            {"node_id": "B", "prompt": "b", "kind": "binary", "options": None,
             "next": {"yes": None, "no": None}}]}}),
    "missing questionnaire reference": lambda d: d["motivation"]["static_requests"][0].update(
        task="questionnaire", questionnaire_id="nope"),
}


@pytest.mark.parametrize("label", sorted(MUTATIONS))
def test_each_single_field_corruption_yields_a_violation(label):
    doc = json.loads(json.dumps(MINIMAL))
    MUTATIONS[label](doc)
    scenario = parse_doc(doc)
    assert validate_scenario(scenario), f"corruption {label!r} produced no violation"


def test_valid_scenario_has_no_violations_after_any_repair():
    assert violations_of(doc_with()) == []


# ---------------------------------------------------------------------------
# join codes

def test_join_code_roundtrip():
    s = three_checkpoint_scenario()
    code = generate_join_code(s, "pms.example.org:1883")
    endpoint, sid, token = decode_join_code(code.payload)
    assert endpoint == "pms.example.org:1883"
    assert sid == s.scenario_id
    assert token
    assert code.payload.startswith("parmosense://pms.example.org:1883/")


def test_join_code_tokens_unique():
    s = three_checkpoint_scenario()
    a = generate_join_code(s, "host")
    b = generate_join_code(s, "host")
    assert decode_join_code(a.payload)[2] != decode_join_code(b.payload)[2]


def test_join_code_quotes_special_ids():
    s = three_checkpoint_scenario("name with spaces")
    code = generate_join_code(s, "host:1")
    assert decode_join_code(code.payload)[1] == "name with spaces"


@pytest.mark.parametrize("endpoint", ["", "http://x", "a/b", "a b", "x?y"])
def test_invalid_endpoints_rejected(endpoint):
    s = three_checkpoint_scenario()
    with pytest.raises(EngineError) as e:
        generate_join_code(s, endpoint)
    assert e.value.code == "invalid endpoint"


@pytest.mark.parametrize("payload", [
    "http://host/s1?t=x",
    "parmosense://host",
    "parmosense://host/s1",
    "not a uri",
])
def test_malformed_payloads_rejected(payload):
    with pytest.raises(EngineError) as e:
        decode_join_code(payload)
    assert e.value.code == "malformed payload"
