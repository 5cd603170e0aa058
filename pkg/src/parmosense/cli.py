"""Organizer command line: scenario lifecycle, data tools, simulation, metrics.

Exit codes: 0 success, 1 domain error (stable ApiError code on stderr),
2 usage error. Output format switches between human text, JSON, and CSV.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import canonical, metrics, sim
from .datastore import EditOp, QueryFilters
from .errors import EngineError
from .runtime import Engine
from .scenario import parse_scenario, validate_scenario

DEFAULT_CONFIG_FILE = "parmosense.json"


def load_config(config_path: str | None) -> dict:
    """Single config file plus environment overrides (data dir, bind, token)."""
    cfg = {"data_dir": "./data", "bind": "127.0.0.1:8800", "token": None}
    path = config_path or os.environ.get("PARMOSENSE_CONFIG")
    if path is None and Path(DEFAULT_CONFIG_FILE).exists():
        path = DEFAULT_CONFIG_FILE
    if path:
        cfg.update(canonical.loads(Path(path).read_bytes()))
    if os.environ.get("PARMOSENSE_DATA_DIR"):
        cfg["data_dir"] = os.environ["PARMOSENSE_DATA_DIR"]
    if os.environ.get("PARMOSENSE_BIND"):
        cfg["bind"] = os.environ["PARMOSENSE_BIND"]
    if os.environ.get("PARMOSENSE_TOKEN"):
        cfg["token"] = os.environ["PARMOSENSE_TOKEN"]
    return cfg


class Context:
    def __init__(self, data_dir: str | None, config_path: str | None, fmt: str):
        self.config = load_config(config_path)
        if data_dir:
            self.config["data_dir"] = data_dir
        self.fmt = fmt
        self._engine: Engine | None = None

    @property
    def engine(self) -> Engine:
        if self._engine is None:
            self._engine = Engine(self.config["data_dir"])
        return self._engine

    def emit(self, value, text_lines=None):
        if self.fmt == "json":
            click.echo(canonical.dumps(value))
        elif text_lines is not None:
            for line in text_lines:
                click.echo(line)
        else:
            click.echo(canonical.dumps(value))


def fail(err: EngineError):
    click.echo(canonical.dumps(err.to_doc()), err=True)
    sys.exit(1)


def run_guarded(fn):
    try:
        fn()
    except EngineError as e:
        fail(e)


@click.group()
@click.option("--data-dir", type=click.Path(), default=None, help="Engine data directory.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Config file (JSON: data_dir, bind, token).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "text"]), default="text")
@click.pass_context
def main(ctx, data_dir, config_path, fmt):
    """Scenario-driven participatory sensing engine."""
    ctx.obj = Context(data_dir, config_path, fmt)


# -- scenario ------------------------------------------------------------------

@main.group()
def scenario():
    """Create, inspect, and control deployed scenarios."""


@scenario.command("validate")
@click.argument("file", type=click.Path(exists=True))
@click.pass_obj
def scenario_validate(ctx, file):
    def go():
        s = parse_scenario(Path(file).read_bytes())
        violations = validate_scenario(s)
        if violations:
            fail(EngineError(violations[0].code, "scenario invalid", violations[0].path))
        ctx.emit({"scenario_id": s.scenario_id, "valid": True},
                 [f"{s.scenario_id}: valid"])
    run_guarded(go)


@scenario.command("deploy")
@click.argument("file", type=click.Path(exists=True))
@click.pass_obj
def scenario_deploy(ctx, file):
    def go():
        s = parse_scenario(Path(file).read_bytes())
        sid = ctx.engine.deploy(s)
        status = ctx.engine.instance(sid).status
        ctx.emit({"scenario_id": sid, "status": status.to_doc()},
                 [f"{sid}: {status.state}"])
    run_guarded(go)


@scenario.command("start")
@click.argument("scenario_id")
@click.pass_obj
def scenario_start(ctx, scenario_id):
    run_guarded(lambda: ctx.emit(
        {"scenario_id": scenario_id, "status": ctx.engine.start(scenario_id).to_doc()},
        [f"{scenario_id}: running"]))


@scenario.command("stop")
@click.argument("scenario_id")
@click.pass_obj
def scenario_stop(ctx, scenario_id):
    run_guarded(lambda: ctx.emit(
        {"scenario_id": scenario_id, "status": ctx.engine.stop(scenario_id).to_doc()},
        [f"{scenario_id}: stopped"]))


@scenario.command("list")
@click.pass_obj
def scenario_list(ctx):
    def go():
        rows = ctx.engine.list_instances()
        ctx.emit(rows, [f"{r['scenario_id']}\t{r['status']['state']}\t{r['name']}"
                        for r in rows])
    run_guarded(go)


@scenario.command("joincode")
@click.argument("scenario_id")
@click.option("--endpoint", required=True, help="Engine authority, host[:port].")
@click.pass_obj
def scenario_joincode(ctx, scenario_id, endpoint):
    def go():
        code = ctx.engine.issue_join_code(scenario_id, endpoint)
        ctx.emit({"payload": code.payload}, [code.payload])
    run_guarded(go)


# -- data ------------------------------------------------------------------------

def parse_bbox(text):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise EngineError("malformed bbox", text)
    try:
        return tuple(float(x) for x in parts)
    except ValueError as e:
        raise EngineError("malformed bbox", text) from e


@main.group()
def data():
    """Browse, edit, export, and import collected reports."""


@data.command("query")
@click.argument("scenario_id")
@click.option("--participant", default=None)
@click.option("--time-from", type=int, default=None)
@click.option("--time-to", type=int, default=None)
@click.option("--bbox", default=None, help="min_lat,min_lon,max_lat,max_lon")
@click.option("--label", default=None)
@click.option("--include-excluded", is_flag=True)
@click.pass_obj
def data_query(ctx, scenario_id, participant, time_from, time_to, bbox, label,
               include_excluded):
    def go():
        dataset = ctx.engine.instance(scenario_id).dataset
        filters = QueryFilters(participant, time_from, time_to, parse_bbox(bbox),
                               label, include_excluded)
        rows = dataset.query(filters)
        if ctx.fmt == "csv":
            sys.stdout.buffer.write(dataset.export("csv", filters))
        else:
            ctx.emit([r.to_doc() for r in rows],
                     [f"{r.report_id}\t{r.kind}\t{r.participant_id}" for r in rows])
    run_guarded(go)


@data.command("edit")
@click.argument("scenario_id")
@click.option("--op", "op_kind", required=True,
              type=click.Choice(["add_label", "remove_label", "exclude", "include", "annotate"]))
@click.option("--target", required=True)
@click.option("--arg", default=None, help="Label text, or JSON object for annotate.")
@click.option("--op-id", default=None)
@click.pass_obj
def data_edit(ctx, scenario_id, op_kind, target, arg, op_id):
    def go():
        dataset = ctx.engine.instance(scenario_id).dataset
        parsed_arg = arg
        if op_kind == "annotate" and arg is not None:
            parsed_arg = json.loads(arg)
        op = EditOp(op_id or f"cli-{len(dataset.edit_log()) + 1}",
                    ctx.engine.clock_ms(), op_kind, target, parsed_arg)
        summary = dataset.apply_edit(op)
        ctx.emit(summary, [f"{target}: {op_kind} applied ({summary['ops']} ops)"])
    run_guarded(go)


@data.command("restore")
@click.argument("scenario_id")
@click.pass_obj
def data_restore(ctx, scenario_id):
    def go():
        n = ctx.engine.instance(scenario_id).dataset.restore()
        ctx.emit({"reverted": n}, [f"reverted {n} ops"])
    run_guarded(go)


@data.command("export")
@click.argument("scenario_id")
@click.option("--format", "fmt", required=True,
              type=click.Choice(["csv", "json", "gpx", "kml"]))
@click.option("-o", "--output", type=click.Path(), default=None)
@click.pass_obj
def data_export(ctx, scenario_id, fmt, output):
    def go():
        payload = ctx.engine.instance(scenario_id).dataset.export(fmt)
        if output:
            Path(output).write_bytes(payload)
        else:
            sys.stdout.buffer.write(payload)
    run_guarded(go)


@data.command("import")
@click.argument("scenario_id")
@click.argument("file", type=click.Path(exists=True))
@click.pass_obj
def data_import(ctx, scenario_id, file):
    def go():
        n = ctx.engine.instance(scenario_id).dataset.import_json(Path(file).read_bytes())
        ctx.emit({"loaded": n}, [f"loaded {n} reports"])
    run_guarded(go)


# -- sim ----------------------------------------------------------------------------

@main.group(name="sim")
def sim_group():
    """Agent-based participant simulation."""


@sim_group.command("run")
@click.argument("scenario_id")
@click.option("--sim-config", "sim_config_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--trajectories", type=click.Path(), default=None,
              help="Write the trajectory log CSV here.")
@click.pass_obj
def sim_run(ctx, scenario_id, sim_config_path, seed, trajectories):
    def go():
        config = sim.config_from_doc(canonical.loads(Path(sim_config_path).read_bytes()))
        if seed is not None:
            from dataclasses import replace
            config = replace(config, seed=seed)
        inst = ctx.engine.instance(scenario_id)
        result = sim.run(inst.scenario, config, ctx.engine)
        if trajectories:
            Path(trajectories).write_bytes(result.trajectory_csv())
        doc = result.to_doc()
        ctx.emit(doc, [f"coverage {doc['coverage']:.3f}",
                       f"accepted {doc['accepted']} / emitted {doc['emitted']}"])
    run_guarded(go)


# -- metrics ---------------------------------------------------------------------------

@main.group(name="metrics")
def metrics_group():
    """Platform-comparison arithmetic."""


@metrics_group.command("table")
@click.option("--fixture", default="platforms",
              help="Packaged fixture name, or a path to a descriptor file.")
@click.pass_obj
def metrics_table(ctx, fixture):
    def go():
        if fixture.endswith(".json") or "/" in fixture:
            descriptors = metrics.load_descriptors(Path(fixture).read_bytes())
        else:
            descriptors = metrics.load_fixture(fixture)
        rows = metrics.comparison_table(descriptors)
        if ctx.fmt == "csv":
            sys.stdout.buffer.write(metrics.table_csv(rows))
        else:
            ctx.emit(rows, [f"{r['name']}\tW={r['W']}\tS={r['S']}" for r in rows])
    run_guarded(go)


# -- service -----------------------------------------------------------------------------

@main.command("serve")
@click.option("--bind", default=None, help="host:port (default from config).")
@click.pass_obj
def serve(ctx, bind):
    """Run the HTTP/WS service for the dashboard."""
    import uvicorn

    from .service import create_app

    bind = bind or ctx.config["bind"]
    host, _, port = bind.partition(":")
    app = create_app(ctx.engine, token=ctx.config.get("token"))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8800), log_level="warning")


if __name__ == "__main__":
    main()
