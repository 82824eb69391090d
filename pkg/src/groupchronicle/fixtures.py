"""Small named chronicles exercising the interesting authorization cases.

S0  one setup assign-grant and the create event.
S1  C assigns a name while B concurrently revokes C's grant.
S2  a revocation is itself revoked by a concurrent revocation that succeeds
    the first revocation's target use, re-authorizing that use.
S3  S1 plus an assign by C backdated so that it excludes B's revocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .chronicle import Capability, Create, Event, GroupChronicle, make_event
from .capabilities import mk_assign, mk_grant, mk_revoke


@dataclass
class Fixture:
    name: str
    chronicle: GroupChronicle
    events: dict = field(default_factory=dict)

    def __getitem__(self, label: str) -> Event:
        return self.events[label]

    def id(self, label: str):
        return self.events[label].id


def _chain(labelled):
    g = GroupChronicle()
    events = {}
    for label, v in labelled:
        e = make_event(g.heads(), v)
        g = g.admit(e)
        events[label] = e
    return g, events


def s0() -> Fixture:
    g, ev = _chain([
        ("g0", mk_grant("A", None, Capability.ASSIGN, "A")),
        ("c", Create("A")),
    ])
    return Fixture("S0", g, ev)


def _s1_base():
    return _chain([
        ("g_C", mk_grant("A", None, Capability.ASSIGN, "C")),
        ("g_B", mk_grant("A", None, Capability.REVOKE, "B")),
        ("c", Create("A")),
    ])


def s1() -> Fixture:
    g, ev = _s1_base()
    c = ev["c"].id
    ev["rv"] = make_event({c}, mk_revoke("B", ev["g_B"].id, ev["g_C"].id))
    ev["a"] = make_event({c}, mk_assign("C", ev["g_C"].id, "x"))
    branch_b = g.admit(ev["rv"])
    branch_c = g.admit(ev["a"])
    return Fixture("S1", branch_b.join(branch_c), ev)


def s2() -> Fixture:
    g, ev = _chain([
        ("g1", mk_grant("A", None, Capability.ASSIGN, "C")),
        ("g2", mk_grant("A", None, Capability.REVOKE, "B")),
        ("g3", mk_grant("A", None, Capability.REVOKE, "D")),
        ("c", Create("A")),
    ])
    c = ev["c"].id
    ev["b"] = make_event({c}, mk_assign("C", ev["g1"].id, "y"))
    ev["a"] = make_event({c}, mk_revoke("B", ev["g2"].id, ev["g1"].id))
    ev["c2"] = make_event({ev["b"].id}, mk_revoke("D", ev["g3"].id, ev["g2"].id))
    for label in ("b", "a", "c2"):
        g = g.admit(ev[label])
    return Fixture("S2", g, ev)


def s3() -> Fixture:
    f = s1()
    ev = dict(f.events)
    ev["z"] = make_event({ev["a"].id}, mk_assign("C", ev["g_C"].id, "z"))
    return Fixture("S3", f.chronicle.admit(ev["z"]), ev)


def all_fixtures() -> list:
    return [s0(), s1(), s2(), s3()]
