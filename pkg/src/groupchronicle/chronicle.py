"""Hash-linked, partially ordered event log for a collaboration group.

Events name their direct causal predecessors by digest, so an event's full
causal history is fixed the moment its identifier is known. A chronicle is a
set of such events closed under predecessor links; merging two chronicles is
set union.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Optional, Union

FORMAT_VERSION = 0x01
MAX_ENTITY_BYTES = 64
MAX_NAME_BYTES = 256


class ChronicleError(Exception):
    """Base class for chronicle errors."""


class DanglingPredecessor(ChronicleError):
    """An event references a predecessor that the chronicle does not hold."""

    def __init__(self, missing: "EventId"):
        super().__init__(f"unknown predecessor {missing.hex()}")
        self.missing = missing


class NotInChronicle(ChronicleError):
    pass


class InvalidChronicle(ChronicleError):
    pass


class PreconditionViolated(ChronicleError):
    pass


@dataclass(frozen=True, order=True)
class EventId:
    """32-byte digest naming an event. Ordering is bytewise and carries no meaning."""

    digest: bytes

    def __post_init__(self):
        if not isinstance(self.digest, bytes) or len(self.digest) != 32:
            raise ValueError("EventId digest must be exactly 32 bytes")

    def hex(self) -> str:
        return self.digest.hex()

    @property
    def short(self) -> str:
        return self.digest.hex()[:8]

    @classmethod
    def fromhex(cls, text: str) -> "EventId":
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return f"EventId({self.short})"

    # bytes caches its own hash; the generated tuple-based methods are a hot spot
    def __hash__(self) -> int:
        return hash(self.digest)

    def __eq__(self, other) -> bool:
        if other.__class__ is EventId:
            return self.digest == other.digest
        return NotImplemented


class Capability(enum.IntEnum):
    CREATE = 0
    GRANT = 1
    REVOKE = 2
    ASSIGN = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Capability":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown capability {text!r}") from None


def check_entity(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise ValueError("entity id must be a non-empty string")
    if not name.isprintable():
        raise ValueError(f"entity id {name!r} has non-printable characters")
    if len(name.encode("utf-8")) > MAX_ENTITY_BYTES:
        raise ValueError(f"entity id {name!r} exceeds {MAX_ENTITY_BYTES} bytes")
    return name


@dataclass(frozen=True)
class Create:
    sbj: str

    kind = Capability.CREATE
    grnt = None

    def __post_init__(self):
        check_entity(self.sbj)


@dataclass(frozen=True)
class Grant:
    """`sbj` grants `obj` the right to invoke `cap`, presenting grant `grnt`.

    `grnt` is ``None`` only for setup grants logged before the create event.
    """

    sbj: str
    grnt: Optional[EventId]
    cap: Capability
    obj: str

    kind = Capability.GRANT

    def __post_init__(self):
        check_entity(self.sbj)
        check_entity(self.obj)
        object.__setattr__(self, "cap", Capability(self.cap))


@dataclass(frozen=True)
class Revoke:
    sbj: str
    grnt: EventId
    obj: EventId

    kind = Capability.REVOKE

    def __post_init__(self):
        check_entity(self.sbj)


@dataclass(frozen=True)
class Assign:
    sbj: str
    grnt: EventId
    name: str

    kind = Capability.ASSIGN

    def __post_init__(self):
        check_entity(self.sbj)
        if len(self.name.encode("utf-8")) > MAX_NAME_BYTES:
            raise ValueError(f"group name exceeds {MAX_NAME_BYTES} bytes")


Invocation = Union[Create, Grant, Revoke, Assign]

# frozenset of ids; valid when downward-closed (see `GroupChronicle.timestamp_valid`)
Timestamp = frozenset


def _str_field(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def _encode_invocation(v: Invocation) -> bytes:
    out = bytearray([int(v.kind)])
    out += _str_field(v.sbj)
    if isinstance(v, Create):
        pass
    elif isinstance(v, Grant):
        if v.grnt is None:
            out.append(0)
        else:
            out.append(1)
            out += v.grnt.digest
        out.append(int(v.cap))
        out += _str_field(v.obj)
    elif isinstance(v, Revoke):
        out += v.grnt.digest
        out += v.obj.digest
    elif isinstance(v, Assign):
        out += v.grnt.digest
        out += _str_field(v.name)
    else:
        raise TypeError(f"not an invocation: {v!r}")
    return bytes(out)


class Event:
    """An invocation bound to the identifiers of its direct predecessors."""

    __slots__ = ("preds", "voc", "__dict__")

    def __init__(self, preds: Iterable[EventId], voc: Invocation):
        object.__setattr__(self, "preds", frozenset(preds))
        object.__setattr__(self, "voc", voc)

    def __setattr__(self, name, value):
        raise AttributeError("events are immutable")

    @cached_property
    def encoded(self) -> bytes:
        return encode_event(self)

    @cached_property
    def id(self) -> EventId:
        return EventId(hashlib.sha256(self.encoded).digest())

    @property
    def kind(self) -> Capability:
        return self.voc.kind

    def __eq__(self, other):
        if not isinstance(other, Event):
            return NotImplemented
        return self.id == other.id

    def __hash__(self):
        return hash(self.id.digest)

    def __repr__(self) -> str:
        return f"Event({self.id.short} {self.voc.kind.label} by {self.voc.sbj})"


def encode_event(e: Event) -> bytes:
    """Canonical, injective byte encoding of an event (the id preimage)."""
    out = bytearray([FORMAT_VERSION])
    preds = sorted(e.preds)
    out += struct.pack(">I", len(preds))
    for p in preds:
        out += p.digest
    body = _encode_invocation(e.voc)
    out += struct.pack(">I", len(body))
    out += body
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated event encoding")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def eid(self) -> EventId:
        return EventId(self.take(32))


def decode_event(data: bytes) -> Event:
    """Inverse of `encode_event`; rejects anything that is not canonical."""
    r = _Reader(data)
    if r.u8() != FORMAT_VERSION:
        raise ValueError("unsupported event format version")
    preds = [r.eid() for _ in range(r.u32())]
    body = _Reader(r.take(r.u32()))
    if r.pos != len(data):
        raise ValueError("trailing bytes after event")
    tag = body.u8()
    sbj = body.text()
    if tag == Capability.CREATE:
        voc: Invocation = Create(sbj)
    elif tag == Capability.GRANT:
        flag = body.u8()
        if flag not in (0, 1):
            raise ValueError("bad grant claim flag")
        grnt = body.eid() if flag else None
        cap = Capability(body.u8())
        voc = Grant(sbj, grnt, cap, body.text())
    elif tag == Capability.REVOKE:
        voc = Revoke(sbj, body.eid(), body.eid())
    elif tag == Capability.ASSIGN:
        voc = Assign(sbj, body.eid(), body.text())
    else:
        raise ValueError(f"unknown invocation tag {tag}")
    if body.pos != len(body.data):
        raise ValueError("trailing bytes in invocation")
    e = Event(preds, voc)
    if e.encoded != data:
        raise ValueError("non-canonical event encoding")
    return e


def event_id(e: Event) -> EventId:
    return e.id


def make_event(frontier: Iterable[EventId], v: Invocation) -> Event:
    return Event(frontier, v)


def _maximal(ids: frozenset, ancestors: dict) -> frozenset:
    covered = set()
    for i in ids:
        covered |= ancestors[i]
    return frozenset(i for i in ids if i not in covered)


class GroupChronicle:
    """Immutable set of events closed under predecessor links.

    Mutating operations (`admit`, `log`, `join`) return new chronicles.
    """

    __slots__ = ("_events", "_anc", "_cache")

    def __init__(self):
        self._events: dict[EventId, Event] = {}
        # id -> ids of all strict precursors (the recovered timestamp)
        self._anc: dict[EventId, frozenset] = {}
        self._cache: dict = {}

    @classmethod
    def _build(cls, events: dict, anc: dict) -> "GroupChronicle":
        g = cls.__new__(cls)
        g._events = events
        g._anc = anc
        g._cache = {}
        return g

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "GroupChronicle":
        """Build a chronicle from events given in any order.

        Raises `DanglingPredecessor` if the set is not closed under links.
        """
        pending = {e.id: e for e in events}
        out = dict()
        anc: dict[EventId, frozenset] = {}
        progress = True
        while pending and progress:
            progress = False
            for i in sorted(pending):
                e = pending[i]
                if all(p in out for p in e.preds):
                    out[i] = e
                    anc[i] = _closure_of(e.preds, anc)
                    del pending[i]
                    progress = True
        if pending:
            for e in pending.values():
                for p in sorted(e.preds):
                    if p not in out and p not in pending:
                        raise DanglingPredecessor(p)
            raise DanglingPredecessor(min(pending))
        return cls._build(out, anc)

    # -- set-like surface -------------------------------------------------

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return (self._events[i] for i in sorted(self._events))

    def __contains__(self, item) -> bool:
        if isinstance(item, Event):
            return item.id in self._events
        return item in self._events

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupChronicle):
            return NotImplemented
        return self._events.keys() == other._events.keys()

    def __hash__(self) -> int:
        return hash(self.now())

    def __repr__(self) -> str:
        return f"GroupChronicle({len(self)} events)"

    def get(self, i: EventId) -> Optional[Event]:
        return self._events.get(i)

    def __getitem__(self, i: EventId) -> Event:
        try:
            return self._events[i]
        except KeyError:
            raise NotInChronicle(i.hex()) from None

    # -- mutate -----------------------------------------------------------

    def admit(self, e: Event) -> "GroupChronicle":
        if e.id in self._events:
            return self
        for p in e.preds:
            if p not in self._events:
                raise DanglingPredecessor(p)
        events = dict(self._events)
        events[e.id] = e
        anc = dict(self._anc)
        anc[e.id] = _closure_of(e.preds, self._anc)
        return self._build(events, anc)

    def log(self, v: Invocation) -> "GroupChronicle":
        """Append `v` as an event succeeding every event held."""
        return self.admit(make_event(self.heads(), v))

    def join(self, other: "GroupChronicle") -> "GroupChronicle":
        if other._events.keys() <= self._events.keys():
            return self
        if self._events.keys() <= other._events.keys():
            return other
        events = dict(self._events)
        events.update(other._events)
        anc = dict(self._anc)
        anc.update(other._anc)
        return self._build(events, anc)

    # -- queries ----------------------------------------------------------

    def events(self) -> frozenset:
        return frozenset(self._events.values())

    def now(self) -> frozenset:
        return frozenset(self._events)

    def heads(self) -> frozenset:
        if "heads" not in self._cache:
            self._cache["heads"] = _maximal(self.now(), self._anc)
        return self._cache["heads"]

    def _member(self, e) -> EventId:
        i = e.id if isinstance(e, Event) else e
        if i not in self._events:
            raise NotInChronicle(i.hex())
        return i

    def tme(self, e) -> frozenset:
        """Ids of all strict precursors of member `e`."""
        return self._anc[self._member(e)]

    def ancestors(self, i: EventId) -> frozenset:
        return self._anc[i]

    def closure(self, ids: Iterable[EventId]) -> frozenset:
        """Downward closure of `ids` (all of which must be members)."""
        ids = frozenset(ids)
        for i in ids:
            self._member(i)
        return ids | _closure_of(ids, self._anc)

    def frontier(self, ids: Iterable[EventId]) -> frozenset:
        """Maximal elements of a set of member ids."""
        ids = frozenset(ids)
        for i in ids:
            self._member(i)
        return _maximal(ids, self._anc)

    def timestamp_valid(self, ts: Iterable[EventId]) -> bool:
        """True iff `ts` is downward-closed with respect to this chronicle."""
        ts = frozenset(ts)
        return all(self._anc[i] <= ts for i in ts if i in self._anc)

    def precedes(self, e1, e2) -> bool:
        return self._member(e1) in self._anc[self._member(e2)]

    def concurrent(self, e1, e2) -> bool:
        a, b = self._member(e1), self._member(e2)
        return a != b and a not in self._anc[b] and b not in self._anc[a]

    def successors(self, e) -> frozenset:
        i = self._member(e)
        return frozenset(j for j, a in self._anc.items() if i in a)

    def subset(self, ids: Iterable[EventId]) -> "GroupChronicle":
        """Sub-chronicle on a link-closed id set."""
        ids = frozenset(ids)
        for i in ids:
            if not self._anc[self._member(i)] <= ids:
                raise ChronicleError("id set is not closed under predecessor links")
        return self._build({i: self._events[i] for i in ids}, {i: self._anc[i] for i in ids})

    def creation(self) -> Event:
        if not self.valid():
            raise InvalidChronicle("chronicle has no unique, totally ordered create event")
        return self._cache["creation"]

    def pre(self, e) -> "GroupChronicle":
        """Wind back to the precursors of `e`."""
        i = self._member(e)
        if not self.valid():
            raise InvalidChronicle("pre requires a valid chronicle")
        return self.subset(self._anc[i])

    def conc(self, e) -> "GroupChronicle":
        """Precursors of `e` together with events concurrent to it."""
        i = self._member(e)
        if not self.valid():
            raise InvalidChronicle("conc requires a valid chronicle")
        keep = frozenset(j for j in self._events if j != i and i not in self._anc[j])
        return self.subset(keep)

    def valid(self) -> bool:
        if "valid" in self._cache:
            return self._cache["valid"]
        creates = [e for e in self._events.values() if isinstance(e.voc, Create)]
        ok = len(creates) == 1
        if ok:
            c = creates[0].id
            below = self._anc[c]
            ok = all(i == c or i in below or c in self._anc[i] for i in self._events)
            # timestamps are built as link closures, hence always downward-closed
            if ok:
                self._cache["creation"] = creates[0]
        self._cache["valid"] = ok
        return ok

    def topological(self) -> list:
        """Events in a deterministic topological order (ties broken by id bytes)."""
        indeg = {i: len(e.preds) for i, e in self._events.items()}
        children: dict = {i: [] for i in self._events}
        for i, e in self._events.items():
            for p in e.preds:
                children[p].append(i)
        ready = [i for i, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        out = []
        while ready:
            i = heapq.heappop(ready)
            out.append(self._events[i])
            for j in children[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(ready, j)
        return out


def _closure_of(preds: Iterable[EventId], anc: dict) -> frozenset:
    acc = set()
    for p in preds:
        acc.add(p)
        acc |= anc[p]
    return frozenset(acc)


def timestamp_from(events: Iterable[Event]) -> frozenset:
    return frozenset(e.id for e in events)
