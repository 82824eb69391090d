"""Replay the backdating scenario step by step.

Byzantine C logs an assign whose causal history excludes B's revocation.
Replica A has not received the revocation yet and briefly believes the
assign is authorized; B knows better. After quiescence they agree.
"""

from groupchronicle.scenario import bundled, load_scenario
from groupchronicle.sim import World, check_convergence

world = World(load_scenario(bundled("s3_backdate")).config)
while world.step():
    z = world.labels.get("z")
    if z is None:
        continue
    row = []
    for who in world.honest():
        v = world.verdict(who, z)
        row.append(f"{who}: {'-' if v is None else v}")
    print(f"step {world.now:>2}  " + "  ".join(row))

print("converged:", check_convergence(world) is None)
for who in world.honest():
    print(f"{who} after quiesce: {world.verdict(who, world.labels['z'])}")
print("trace hash", world.trace_hash())
