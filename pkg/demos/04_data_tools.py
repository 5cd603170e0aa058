"""Non-destructive editing and multi-format export.

Collects a small dataset through a simulated run, then labels, excludes, and
annotates reports, shows that originals stay intact, restores everything, and
writes all four export formats.
"""

import tempfile
from pathlib import Path

from parmosense import sim
from parmosense.datastore import EditOp, QueryFilters
from parmosense.reference import reward_reference_config, three_checkpoint_scenario
from parmosense.runtime import Engine

with tempfile.TemporaryDirectory() as workdir:
    engine = Engine(workdir)
    scenario = three_checkpoint_scenario()
    engine.deploy(scenario)
    engine.start(scenario.scenario_id)
    sim.run(scenario, reward_reference_config(seed=7, ticks=120), engine)

    dataset = engine.instance(scenario.scenario_id).dataset
    reports = dataset.query()
    print(f"collected {len(reports)} reports")

    photo = next(r for r in reports if r.kind == "photo")
    dataset.apply_edit(EditOp("e1", 0, "add_label", photo.report_id, "tree"))
    dataset.apply_edit(EditOp("e2", 1, "annotate", photo.report_id,
                              {"caption": "corrected caption"}))
    dataset.apply_edit(EditOp("e3", 2, "exclude", reports[0].report_id))

    print("labeled view:", dataset.view_of(photo.report_id).labels)
    print("annotated caption:", dataset.view_of(photo.report_id).payload["caption"])
    print("original caption:",
          dataset.view_of(photo.report_id, original=True).payload["caption"])
    print("default query now returns", len(dataset.query()), "reports",
          "(one excluded)")

    out = Path(workdir) / "exports"
    out.mkdir()
    for fmt in ("csv", "json", "gpx", "kml"):
        path = out / f"campaign.{fmt}"
        path.write_bytes(dataset.export(fmt))
        print(f"wrote {path.name}: {path.stat().st_size} bytes")

    reverted = dataset.restore()
    print(f"restore reverted {reverted} edit(s); caption is back to",
          repr(dataset.view_of(photo.report_id).payload["caption"]))
