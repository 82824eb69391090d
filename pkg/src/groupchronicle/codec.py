"""Chronicle file format, JSON export and Graphviz export."""

from __future__ import annotations

import json
import struct
from typing import Callable, Optional

from .chronicle import (
    Assign,
    Capability,
    ChronicleError,
    Create,
    DanglingPredecessor,
    EventId,
    Grant,
    GroupChronicle,
    InvalidChronicle,
    Revoke,
    decode_event,
)


class MalformedFile(ChronicleError):
    pass


MAGIC = b"GCHRON1\n"


def dumps(g: GroupChronicle) -> bytes:
    """Magic line, then per event in deterministic topological order: a
    u32 length, the canonical encoding and the 32-byte event id."""
    out = bytearray(MAGIC)
    for e in g.topological():
        out += struct.pack(">I", len(e.encoded))
        out += e.encoded
        out += e.id.digest
    return bytes(out)


def loads(data: bytes, check_valid: bool = False) -> GroupChronicle:
    """Parse a chronicle file, recomputing and checking every event id."""
    if not data.startswith(MAGIC):
        raise MalformedFile("not a chronicle file (bad magic)")
    events = []
    pos = len(MAGIC)
    while pos < len(data):
        if pos + 4 > len(data):
            raise MalformedFile(f"truncated length prefix at byte {pos}")
        (n,) = struct.unpack(">I", data[pos:pos + 4])
        pos += 4
        if pos + n + 32 > len(data):
            raise MalformedFile(f"truncated event at byte {pos}")
        try:
            e = decode_event(data[pos:pos + n])
        except ValueError as exc:
            raise MalformedFile(f"event at byte {pos}: {exc}") from None
        if e.id.digest != data[pos + n:pos + n + 32]:
            raise MalformedFile(f"event at byte {pos}: id mismatch")
        events.append(e)
        pos += n + 32
    if len({e.id for e in events}) != len(events):
        raise MalformedFile("duplicate event in file")
    try:
        g = GroupChronicle.from_events(events)
    except DanglingPredecessor as exc:
        raise MalformedFile(f"link closure fails: {exc}") from None
    if check_valid and not g.valid():
        raise InvalidChronicle("chronicle fails validity")
    return g


def save(g: GroupChronicle, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(g))


def load(path, check_valid: bool = False) -> GroupChronicle:
    with open(path, "rb") as fh:
        return loads(fh.read(), check_valid=check_valid)


def invocation_to_json(v) -> dict:
    d = {"kind": v.kind.label, "sbj": v.sbj}
    if isinstance(v, Grant):
        d["grnt"] = v.grnt.hex() if v.grnt else None
        d["cap"] = v.cap.label
        d["obj"] = v.obj
    elif isinstance(v, Revoke):
        d["grnt"] = v.grnt.hex()
        d["obj"] = v.obj.hex()
    elif isinstance(v, Assign):
        d["grnt"] = v.grnt.hex()
        d["name"] = v.name
    return d


def invocation_from_json(d: dict):
    kind = d["kind"]
    if kind == "create":
        return Create(d["sbj"])
    if kind == "grant":
        grnt = EventId.fromhex(d["grnt"]) if d.get("grnt") else None
        return Grant(d["sbj"], grnt, Capability.parse(d["cap"]), d["obj"])
    if kind == "revoke":
        return Revoke(d["sbj"], EventId.fromhex(d["grnt"]), EventId.fromhex(d["obj"]))
    if kind == "assign":
        return Assign(d["sbj"], EventId.fromhex(d["grnt"]), d["name"])
    raise ValueError(f"unknown invocation kind {kind!r}")


def to_json(g: GroupChronicle) -> list:
    return [
        {
            "id": e.id.hex(),
            "preds": sorted(p.hex() for p in e.preds),
            "voc": invocation_to_json(e.voc),
        }
        for e in g
    ]


def dumps_json(g: GroupChronicle) -> str:
    return json.dumps(to_json(g), indent=2, sort_keys=True)


def to_dot(g: GroupChronicle, verdict: Optional[Callable] = None) -> str:
    """Graphviz digraph; edges point from an event to its direct predecessors."""
    lines = ["digraph chronicle {", "  rankdir=BT;"]
    heads = g.heads()
    for e in g:
        label = f"{e.id.short} {e.kind.label} {e.voc.sbj}"
        if verdict is not None:
            label += f"\\n{verdict(e)}"
        shape = "doubleoctagon" if e.id in heads else "box"
        lines.append(f'  "{e.id.short}" [label="{label}", shape={shape}];')
    for e in g:
        for p in sorted(e.preds):
            lines.append(f'  "{e.id.short}" -> "{p.short}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
