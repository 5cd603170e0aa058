"""Run the reference campaign end to end with simulated participants.

Two agents walk fixed loops through three checkpoints for 300 simulated
seconds. Every report travels over the message plane; the engine applies
demand-weighted points, contribution limits, coupons, and levels, and the
script prints the resulting ledgers and ranking.
"""

import tempfile

from parmosense import sim
from parmosense.reference import reward_reference_config, three_checkpoint_scenario
from parmosense.runtime import Engine

with tempfile.TemporaryDirectory() as workdir:
    engine = Engine(workdir)
    scenario = three_checkpoint_scenario()
    engine.deploy(scenario)
    engine.start(scenario.scenario_id)

    # watch the shared feedback channel like a dashboard would
    feed = engine.broker.subscribe(f"pms/{scenario.scenario_id}/down/broadcast")

    result = sim.run(scenario, reward_reference_config(seed=42, ticks=300), engine)

    print(f"emitted {result.emitted} reports, engine accepted {result.accepted}")
    print("uploads per checkpoint:", result.uploads)
    print(f"checkpoint coverage: {result.coverage:.0%}")

    pins = sum(1 for e in feed.drain() if e.payload.get("feedback") == "map_pin")
    print(f"map pins broadcast to everyone: {pins}")

    print("\nfinal ledgers:")
    for agent_id, state in sorted(result.states.items()):
        print(f"  {agent_id}: {state['points']} points, level {state['level']}, "
              f"coupons {state['coupons']}")

    print("\nranking:")
    for row in engine.ranking(scenario.scenario_id):
        print(f"  #{row['rank']} {row['participant_id']} with {row['points']} points")
