"""A second, independent encoder for event ids, written directly from the
byte layout with only hashlib and struct. Used to freeze and re-derive the
golden fixture ids."""

import hashlib
import struct

TAGS = {"create": 0, "grant": 1, "revoke": 2, "assign": 3}
CAPS = {"create": 0, "grant": 1, "revoke": 2, "assign": 3}


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def body(kind: str, sbj: str, **f) -> bytes:
    out = bytes([TAGS[kind]]) + _text(sbj)
    if kind == "grant":
        claim = f.get("grnt")
        out += b"\x00" if claim is None else b"\x01" + claim
        out += bytes([CAPS[f["cap"]]]) + _text(f["obj"])
    elif kind == "revoke":
        out += f["grnt"] + f["obj"]
    elif kind == "assign":
        out += f["grnt"] + _text(f["name"])
    return out


def event_id(preds, kind: str, sbj: str, **f) -> bytes:
    ps = sorted(preds)
    b = body(kind, sbj, **f)
    enc = b"\x01" + struct.pack(">I", len(ps)) + b"".join(ps) + struct.pack(">I", len(b)) + b
    return hashlib.sha256(enc).digest()


def fixture_ids() -> dict:
    """Ids of every fixture event, labelled ``<fixture>.<event>``."""
    out = {}
    # S0
    g0 = event_id([], "grant", "A", grnt=None, cap="assign", obj="A")
    c = event_id([g0], "create", "A")
    out.update({"S0.g0": g0, "S0.c": c})
    # S1 and S3
    gC = event_id([], "grant", "A", grnt=None, cap="assign", obj="C")
    gB = event_id([gC], "grant", "A", grnt=None, cap="revoke", obj="B")
    c1 = event_id([gB], "create", "A")
    rv = event_id([c1], "revoke", "B", grnt=gB, obj=gC)
    a = event_id([c1], "assign", "C", grnt=gC, name="x")
    z = event_id([a], "assign", "C", grnt=gC, name="z")
    for k, v in {"g_C": gC, "g_B": gB, "c": c1, "rv": rv, "a": a}.items():
        out[f"S1.{k}"] = v
        out[f"S3.{k}"] = v
    out["S3.z"] = z
    # S2
    g1 = event_id([], "grant", "A", grnt=None, cap="assign", obj="C")
    g2 = event_id([g1], "grant", "A", grnt=None, cap="revoke", obj="B")
    g3 = event_id([g2], "grant", "A", grnt=None, cap="revoke", obj="D")
    c2 = event_id([g3], "create", "A")
    b = event_id([c2], "assign", "C", grnt=g1, name="y")
    ra = event_id([c2], "revoke", "B", grnt=g2, obj=g1)
    rc = event_id([b], "revoke", "D", grnt=g3, obj=g2)
    out.update({"S2.g1": g1, "S2.g2": g2, "S2.g3": g3, "S2.c": c2, "S2.b": b, "S2.a": ra, "S2.c2": rc})
    return out
