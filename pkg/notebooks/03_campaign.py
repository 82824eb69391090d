"""A small falsification campaign and what a witness looks like.

The full acceptance corpus lives in tests/test_acceptance.py; this script
samples it so it finishes in seconds.
"""

from groupchronicle import campaign
from groupchronicle.capabilities import PresetTag
from groupchronicle.oracle import replay

for tag in PresetTag:
    r = campaign.run_generated(tag, range(300))
    print(r.summary())

# Revocation cycles: the creator forks two revocations of its own revoke
# grant. Each makes the other undecided, so both end up unauthorized, and
# the first one's verdict flips when the second arrives.
from groupchronicle import capabilities as caplib
from groupchronicle.capabilities import PolicyPreset, mk_assign, mk_revoke
from groupchronicle.chronicle import Capability, make_event
from groupchronicle.oracle import check_authorization_safety

g = caplib.build_preset(PolicyPreset(PresetTag.ALLOW_REVOKE_LATER, ["A", "B"]))
c = g.creation().id
g_rev = next(e for e in g if e.voc.kind is Capability.GRANT and e.voc.cap is Capability.REVOKE)
g_b = next(e for e in g if e.voc.kind is Capability.GRANT and e.voc.obj == "B")
side = make_event([c], mk_assign("B", g_b.id, "n"))
r1 = make_event([c], mk_revoke("A", g_rev.id, g_rev.id))
r2 = make_event([side.id], mk_revoke("A", g_rev.id, g_rev.id))
g = g.admit(side).admit(r1)
w = check_authorization_safety(g, r2)
print(w)
print("replays:", replay(w) is not None)
