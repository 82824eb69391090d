"""Walk through the four fixture chronicles and their verdicts.

Run with ``python3 notebooks/01_fixtures.py``.
"""

from groupchronicle import capabilities as caplib
from groupchronicle.fixtures import all_fixtures


def show(f):
    g = f.chronicle
    label = {e.id: k for k, e in f.events.items()}
    print(f"== {f.name}: {len(g)} events, heads {sorted(label[h] for h in g.heads())}")
    for e in g.topological():
        v = caplib.authorizes(g, e)
        print(f"  {label[e.id]:>4} {e.kind.label:<7} by {e.voc.sbj}  {v}")
    print(f"  caps   {sorted(label[e.id] for e in caplib.caps(g))}")
    print(f"  values {sorted(label[e.id] for e in caplib.values(g))}")


for f in all_fixtures():
    show(f)

# S1: the revocation rv and the assign a are concurrent, and rv wins.
# S2: D's revocation of B's revoke grant is concurrent to B's revocation, so
#     B's revocation fails and C's assign b is authorized again.
# S3: an assign whose history skips rv is still unauthorized, because every
#     revocation not succeeding it counts.
