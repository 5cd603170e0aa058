"""Walk a scenario from document to running instance.

Builds a small campaign document, validates it, deploys it into an engine,
starts it, and prints a join code a participant client would scan.
"""

import json
import tempfile

from parmosense import parse_scenario, serialize, validate_scenario
from parmosense.runtime import Engine

document = {
    "schema_version": 1,
    "scenario_id": "tree-survey",
    "name": "Campus tree survey",
    "description": "Photograph and label the trees around the main quad",
    "area": {"center": {"lat": 34.985, "lon": 135.7588}, "radius_m": 1200.0},
    "period": {"start": 1767225600000, "end": 1769904000000},
    "sensing": {"sensors": {"position": {"interval_ms": 5000, "background": True}}},
    "motivation": {
        "static_requests": [
            {
                "checkpoint_id": "quad-oak",
                "name": "The old oak",
                "fence": {"center": {"lat": 34.9855, "lon": 135.7590}, "radius_m": 40.0},
                "base_points": 10,
                "task": "photo",
                "contribution_limit": None,
                "questionnaire_id": None,
            }
        ],
        "dynamic_rules": [],
        "reward": {
            "points_enabled": True,
            "demand_weighting_enabled": True,
            "weighting_alpha": 1.0,
            "coupons": [
                {"coupon_id": "cafe-10", "title": "Campus cafe 10% off",
                 "trigger": {"kind": "points", "value": 50}}
            ],
            "level_threshold_points": 100,
            "ranking_enabled": True,
        },
        "feedback": {"map_pins": True, "timeline": True, "score_panel": True},
    },
    "questionnaires": {},
    "processing": {"editing": True, "browsing": True, "export": True},
}

scenario = parse_scenario(json.dumps(document))
print(f"parsed scenario {scenario.scenario_id!r} with "
      f"{len(scenario.motivation.static_requests)} checkpoint(s)")

violations = validate_scenario(scenario)
print("violations:", [v.to_doc() for v in violations] or "none")

print("canonical form is byte-stable:",
      parse_scenario(serialize(scenario)) == scenario)

with tempfile.TemporaryDirectory() as workdir:
    engine = Engine(workdir)
    engine.deploy(scenario)
    print("deployed:", engine.instance("tree-survey").status.to_doc())

    engine.start("tree-survey")
    print("started:", engine.instance("tree-survey").status.to_doc())

    code = engine.issue_join_code("tree-survey", "sensing.example.org:1883")
    print("join code payload:", code.payload)

    pid, snapshot = engine.join("tree-survey", code.payload)
    print(f"participant {pid} joined; sees {len(snapshot['static_tasks'])} task(s)")
