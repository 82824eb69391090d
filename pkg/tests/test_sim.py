import pytest

from groupchronicle import capabilities as caplib
from groupchronicle.capabilities import PolicyPreset, PresetTag
from groupchronicle.chronicle import Assign, make_event
from groupchronicle.codec import dumps
from groupchronicle.scenario import bundled, load_scenario
from groupchronicle.sim import (
    Action,
    InvalidTimestamp,
    NotByzantine,
    SimulationError,
    World,
    WorldConfig,
    check_convergence,
    random_config,
)


def scripted(replicas, script, preset=PresetTag.ALLOW_ON_CREATION, **kw):
    names = [r if isinstance(r, str) else r[0] for r in replicas]
    roster = [(r, False) if isinstance(r, str) else r for r in replicas]
    return World(WorldConfig(
        replicas=roster,
        preset=PolicyPreset(preset, names),
        adversary_script=script,
        random_actions=False,
        **kw,
    ))


def test_idle_world_is_unchanged():
    w = scripted(["A", "B"], [], max_steps=0)
    before = (w.now, list(w.trace), {k: r.chronicle for k, r in w.replicas.items()})
    assert w.step() is False
    assert (w.now, w.trace, {k: r.chronicle for k, r in w.replicas.items()}) == before


def test_same_seed_same_trace():
    cfg = lambda: random_config(7, PresetTag.ALLOW_REVOKE_LATER, 4, 1, 0.1)
    a, b = World(cfg()).run().quiesce(), World(cfg()).run().quiesce()
    assert a.trace_hash() == b.trace_hash()
    c = World(random_config(8, PresetTag.ALLOW_REVOKE_LATER, 4, 1, 0.1)).run().quiesce()
    assert c.trace_hash() != a.trace_hash()


def test_out_of_order_delivery_is_buffered():
    w = scripted(
        ["A", "B", "C"],
        [
            Action(0, "A", "assign", {"grant": "assign:A", "name": "one"}, label="e1"),
            Action(2, "B", "assign", {"grant": "assign:B", "name": "two"}, label="e2"),
        ],
        link_delays={("A", "C"): 5},
    )
    while w.now < 4:
        w.step()
    c = w.replicas["C"]
    assert w.labels["e2"] in c.pending and w.labels["e2"] not in c.chronicle
    w.run()
    assert {w.labels["e1"], w.labels["e2"]} <= c.chronicle.now()
    assert not c.pending
    assert any(line.split()[1] == "buffer" for line in w.trace)


def test_equivocated_assigns_both_survive():
    w = scripted(
        ["A", "B", ("C", True)],
        [Action(0, "C", "equivocate", {
            "first": {"op": "assign", "grant": "assign:C", "name": "p"},
            "second": {"op": "assign", "grant": "assign:C", "name": "q"},
        })],
    )
    w.run()
    assert check_convergence(w) is None
    for who in w.honest():
        assert caplib.names(w.chronicle(who)) == ["p", "q"]


def test_omission_is_repaired_by_anti_entropy():
    w = scripted(
        ["A", "B", ("C", True)],
        [
            Action(0, "C", "omit", {"targets": ["B"]}),
            Action(1, "C", "assign", {"grant": "assign:C", "name": "hidden"}, label="h"),
        ],
    )
    w.run()
    h = w.labels["h"]
    assert h in w.chronicle("A") and h not in w.chronicle("B")
    w.anti_entropy("A", "B")
    assert h in w.chronicle("B")
    assert dumps(w.chronicle("A")) == dumps(w.chronicle("B"))


def test_anti_entropy_with_identical_replica_changes_nothing():
    w = scripted(["A", "B"], [Action(0, "A", "assign", {"grant": "assign:A", "name": "x"})])
    w.run()
    before = (w.chronicle("A"), w.chronicle("B"))
    w.anti_entropy("A", "B")
    assert (w.chronicle("A"), w.chronicle("B")) == before


def test_adversary_preconditions():
    w = scripted(["A", ("B", True)], [])
    g = w.chronicle("B")
    v = Assign("A", w.labels["assign:A"], "x")
    with pytest.raises(NotByzantine):
        w.adversary_backdate("A", g.now(), v)
    with pytest.raises(NotByzantine):
        w.adversary_omit("A", ["B"])
    bv = Assign("B", w.labels["assign:B"], "x")
    with pytest.raises(InvalidTimestamp):
        w.adversary_backdate("B", {w.labels["create"]}, bv)
    with pytest.raises(InvalidTimestamp):
        w.adversary_backdate("B", g.ancestors(w.labels["create"]), bv)
    with pytest.raises(SimulationError):
        w.anti_entropy("A", "B")


def test_unsigned_events_are_rejected():
    w = scripted(["A", "B"], [])
    forged = make_event([w.labels["create"]], Assign("B", w.labels["assign:B"], "x"))
    w.receive("A", forged)  # never logged by B, so carries no signature of B
    assert forged.id not in w.chronicle("A")
    assert forged.id in w.replicas["A"].rejected


def test_honest_replicas_refuse_unauthorized_invocations():
    w = scripted(["A", "B"], [Action(0, "B", "assign", {"grant": "assign:A", "name": "x"}, label="bad")])
    w.run()
    assert "bad" not in w.labels
    assert any(line.split()[1] == "refuse" for line in w.trace)


def test_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(replicas=[("A", True)])
    with pytest.raises(ValueError):
        WorldConfig(replicas=[("A", False), ("A", False)])
    with pytest.raises(ValueError):
        WorldConfig(replicas=[("A", False)], drop_rate=2.0)


def test_two_honest_lossless_converge():
    w = World(random_config(3, PresetTag.ALLOW_ON_CREATION, 2, 0, 0.0)).run()
    assert check_convergence(w) is None


@pytest.mark.parametrize("seed", range(12))
def test_honest_gatekeeping_and_append_only(seed):
    cfg = random_config(seed, list(PresetTag)[seed % 3], 4, 1 + seed % 2, [0.0, 0.1, 0.3][seed % 3])
    w = World(cfg)
    seen = {h: w.chronicle(h).now() for h in w.honest()}
    while w.step():
        for h in w.honest():
            now = w.chronicle(h).now()
            assert seen[h] <= now
            seen[h] = now
    assert check_convergence(w) is None
    for h in w.honest():
        g = w.chronicle(h)
        for e in g:
            assert caplib.authorizes_precursive(g, e).authorized


def test_backdate_anomaly_is_transient():
    w = World(load_scenario(bundled("s3_backdate")).config)
    disagreed = False
    while w.step():
        z = w.labels.get("z")
        if z is None:
            continue
        verdicts = {h: w.verdict(h, z) for h in w.honest()}
        held = {v.authorized for v in verdicts.values() if v is not None}
        disagreed |= len(held) > 1
    assert disagreed
    assert check_convergence(w) is None
    assert all(not w.verdict(h, w.labels["z"]).authorized for h in w.honest())
