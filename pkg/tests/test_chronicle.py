import pytest

from groupchronicle.capabilities import mk_assign, mk_grant
from groupchronicle.chronicle import (
    Assign,
    Capability,
    Create,
    DanglingPredecessor,
    Event,
    EventId,
    Grant,
    GroupChronicle,
    InvalidChronicle,
    NotInChronicle,
    Revoke,
    decode_event,
    encode_event,
    make_event,
)
from groupchronicle.fixtures import all_fixtures, s0, s1, s2


def test_event_id_is_digest_of_encoding():
    import hashlib

    e = s0()["c"]
    assert e.id.digest == hashlib.sha256(encode_event(e)).digest()
    assert encode_event(e)[0] == 0x01


def test_pred_order_does_not_matter():
    f = s1()
    v = mk_assign("C", f.id("g_C"), "q")
    e1 = Event([f.id("rv"), f.id("a")], v)
    e2 = Event([f.id("a"), f.id("rv")], v)
    assert e1.encoded == e2.encoded
    assert e1.id == e2.id


def test_encodings_pairwise_distinct_across_fixtures():
    events = {e.id: e for f in all_fixtures() for e in f.chronicle}
    encodings = {e.encoded for e in events.values()}
    assert len(encodings) == len(events)


@pytest.mark.parametrize("f", all_fixtures(), ids=lambda f: f.name)
def test_decode_roundtrip(f):
    for e in f.chronicle:
        assert decode_event(e.encoded) == e
        assert decode_event(e.encoded).voc == e.voc


def test_decode_rejects_trailing_and_truncated_bytes():
    enc = s0()["c"].encoded
    with pytest.raises(ValueError):
        decode_event(enc + b"\x00")
    with pytest.raises(ValueError):
        decode_event(enc[:-1])
    with pytest.raises(ValueError):
        decode_event(b"\x02" + enc[1:])


def test_event_id_rejects_wrong_length():
    with pytest.raises(ValueError):
        EventId(b"short")


def test_invocation_fields_are_checked():
    with pytest.raises(ValueError):
        Assign("A", s0().id("g0"), "x" * 257)
    with pytest.raises(ValueError):
        Assign("", s0().id("g0"), "x")


def test_admit_requires_predecessors():
    f = s1()
    g = s0().chronicle
    with pytest.raises(DanglingPredecessor):
        g.admit(f["rv"])


def test_admit_is_idempotent_and_append_only():
    f = s1()
    g = f.chronicle
    assert g.admit(f["a"]) is g
    g2 = g.log(mk_assign("C", f.id("g_C"), "later"))
    assert g.now() < g2.now()
    assert len(g2.heads()) == 1


def test_timestamps_and_order():
    f = s1()
    g = f.chronicle
    c, rv, a = f.id("c"), f.id("rv"), f.id("a")
    assert g.tme(rv) == g.tme(a) == g.closure([c])
    assert g.concurrent(rv, a)
    assert g.precedes(c, a)
    assert not g.precedes(a, c)
    assert g.heads() == {rv, a}
    assert g.frontier(g.now()) == g.heads()
    assert g.timestamp_valid(g.closure([a]))
    assert not g.timestamp_valid({a})
    with pytest.raises(NotInChronicle):
        g.tme(s0().id("c"))


def test_validity():
    assert all(f.chronicle.valid() for f in all_fixtures())
    assert not GroupChronicle().valid()
    setup_only = GroupChronicle().log(mk_grant("A", None, Capability.ASSIGN, "A"))
    assert not setup_only.valid()
    with pytest.raises(InvalidChronicle):
        setup_only.creation()
    two_creates = s0().chronicle.log(Create("B"))
    assert not two_creates.valid()
    # an event concurrent to the create event breaks validity
    g = s0().chronicle
    side = make_event([], mk_grant("B", None, Capability.ASSIGN, "B"))
    assert not g.admit(side).valid()


def test_pre_and_conc():
    f = s2()
    g = f.chronicle
    pre = g.pre(f["c2"])
    assert pre.now() == g.closure([f.id("b")])
    conc = g.conc(f["c2"])
    assert f.id("a") in conc and f.id("c2") not in conc
    assert conc.now() == g.now() - {f.id("c2")}


def test_subset_requires_closure():
    f = s1()
    with pytest.raises(Exception):
        f.chronicle.subset({f.id("a")})


def test_topological_order_respects_links():
    g = s2().chronicle
    seen = set()
    for e in g.topological():
        assert e.preds <= seen
        seen.add(e.id)


def test_revoke_and_assign_constructors():
    f = s1()
    assert isinstance(f["rv"].voc, Revoke)
    assert f["rv"].kind is Capability.REVOKE
    assert f["a"].kind is Capability.ASSIGN
