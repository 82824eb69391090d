"""Reference evaluator, chronicle generators and invariant checkers.

Nothing here reuses the evaluator in `capabilities`; the naive predicate is
written directly against the chronicle's `pre`/`conc` style queries so the
two can be compared against each other.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

from . import capabilities as caplib
from .chronicle import (
    Assign,
    Capability,
    Event,
    EventId,
    Grant,
    GroupChronicle,
    Invocation,
    PreconditionViolated,
    Revoke,
    decode_event,
    make_event,
)
from .codec import dumps, invocation_from_json, invocation_to_json, loads

UNKNOWN_ID = EventId(hashlib.sha256(b"groupchronicle: never logged").digest())

Authorize = Callable[[GroupChronicle, Event], bool]


# -- naive reference evaluator -------------------------------------------------

def _k_and(*parts):
    if any(p is False for p in parts):
        return False
    if all(p is True for p in parts):
        return True
    return None


def _k_not(p):
    return None if p is None else not p


def naive_authorizes(g: GroupChronicle, e: Event) -> bool:
    """Unmemoized recursive evaluation of the authorization predicate.

    Re-entering an event already on the recursion path yields "unknown";
    an event whose value stays unknown is unauthorized.
    """
    if not g.valid():
        raise PreconditionViolated("authorization requires a valid chronicle")
    if e not in g:
        for p in e.preds:
            if p not in g:
                raise PreconditionViolated("event timestamp references events outside the chronicle")
    return _naive(g, e, frozenset()) is True


def _naive(g: GroupChronicle, e: Event, path: frozenset):
    creation = g.creation()
    if e == creation:
        return True
    member = e in g
    if member and g.precedes(e, creation):
        return True
    path = path | {e.id}

    def value(x: Event):
        return None if x.id in path else _naive(g, x, path)

    precursors = [g[i] for i in (g.tme(e) if member else g.closure(e.preds))]
    if member:
        rivals = list(g.conc(e))
    else:
        rivals = list(g)
    v = e.voc
    claim = getattr(v, "grnt", None)

    granted = False
    for gr in precursors:
        if not isinstance(gr.voc, Grant):
            continue
        if gr.id == claim and v.sbj == gr.voc.obj and v.kind == gr.voc.cap:
            granted = value(gr)
            break

    revoked = False
    if granted is not False:
        for rv in rivals:
            if isinstance(rv.voc, Revoke) and rv.voc.obj == claim:
                r = value(rv)
                if r is True:
                    revoked = True
                    break
                if r is None:
                    revoked = None

    target_ok = True
    if isinstance(v, Revoke):
        target_ok = any(isinstance(gr.voc, Grant) and gr.id == v.obj for gr in precursors)

    return _k_and(granted, _k_not(revoked), target_ok)


def reference_authorize(g: GroupChronicle, e: Event) -> bool:
    return caplib.authorizes(g, e).authorized


_PRECURSIVE_MEMO: dict = {}
_PRECURSIVE_MEMO_SIZE = 1 << 18


def precursive(authorize: Authorize, g: GroupChronicle, e: Event) -> bool:
    """Apply `authorize` to the chronicle wound back to the precursors of `e`.

    The wound-back chronicle is fixed by the event id, so results for
    members are memoized per (evaluator, id).
    """
    member = e in g
    key = (authorize, e.id)
    if member:
        hit = _PRECURSIVE_MEMO.get(key)
        if hit is not None:
            return hit
    c = g.creation()
    if e == c or g.precedes(e, c):
        return True
    wound_back = g.pre(e)
    out = wound_back.valid() and bool(authorize(wound_back, e))
    if member:
        if len(_PRECURSIVE_MEMO) >= _PRECURSIVE_MEMO_SIZE:
            _PRECURSIVE_MEMO.clear()
        _PRECURSIVE_MEMO[key] = out
    return out


def ignores_concurrent_revocations(g: GroupChronicle, e: Event) -> bool:
    """Deliberately broken evaluator: only revocations among precursors count."""
    if e in g:
        return precursive(reference_authorize, g, e)
    history = g.closure(e.preds)
    return caplib.authorizes(g.subset(history), e).authorized


# -- violations ---------------------------------------------------------------

class Invariant(str, enum.Enum):
    AUTHORIZATION_SAFETY = "AuthorizationSafety"
    QUERY_SAFETY = "QuerySafety"
    REVOCATION_SAFETY = "RevocationSafety"
    CONVERGENCE = "Convergence"
    ORACLE_MISMATCH = "OracleMismatch"


WITNESS_MAGIC = b"GCWITNESS1\n"


@dataclass
class Violation:
    invariant: Invariant
    chronicle: GroupChronicle
    event: Optional[Event] = None
    invocation: Optional[Invocation] = None
    timestamp: Optional[frozenset] = None
    verdicts: dict = field(default_factory=dict)
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.invariant.value} violated: {self.detail}"

    def to_bytes(self) -> bytes:
        header = {
            "invariant": self.invariant.value,
            "event": self.event.encoded.hex() if self.event is not None else None,
            "invocation": invocation_to_json(self.invocation) if self.invocation is not None else None,
            "timestamp": sorted(i.hex() for i in self.timestamp) if self.timestamp is not None else None,
            "verdicts": self.verdicts,
            "detail": self.detail,
        }
        raw = json.dumps(header, sort_keys=True).encode()
        return WITNESS_MAGIC + struct.pack(">I", len(raw)) + raw + dumps(self.chronicle)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Violation":
        if not data.startswith(WITNESS_MAGIC):
            raise ValueError("not a violation witness")
        pos = len(WITNESS_MAGIC)
        (n,) = struct.unpack(">I", data[pos:pos + 4])
        header = json.loads(data[pos + 4:pos + 4 + n])
        g = loads(data[pos + 4 + n:])
        return cls(
            invariant=Invariant(header["invariant"]),
            chronicle=g,
            event=decode_event(bytes.fromhex(header["event"])) if header["event"] else None,
            invocation=invocation_from_json(header["invocation"]) if header["invocation"] else None,
            timestamp=frozenset(EventId.fromhex(h) for h in header["timestamp"])
            if header["timestamp"] is not None else None,
            verdicts=header["verdicts"],
            detail=header["detail"],
        )


def replay(w: Violation, authorize: Authorize = reference_authorize) -> Optional[Violation]:
    """Re-run the checker that produced `w`."""
    g = w.chronicle
    if w.invariant is Invariant.AUTHORIZATION_SAFETY:
        return check_authorization_safety(g, w.event, authorize)
    if w.invariant is Invariant.QUERY_SAFETY:
        return check_query_safety(g, w.event, authorize)
    if w.invariant is Invariant.REVOCATION_SAFETY:
        return check_revocation_safety(g, w.invocation, authorize)
    if w.invariant is Invariant.ORACLE_MISMATCH:
        return check_oracle(g)
    raise ValueError(f"{w.invariant.value} witnesses are replayed by the simulator")


# -- invariant checkers ---------------------------------------------------------

def _extend(g: GroupChronicle, e_m: Event) -> GroupChronicle:
    if not g.valid():
        raise PreconditionViolated("base chronicle is not valid")
    if e_m in g:
        raise PreconditionViolated("new event is already a member")
    try:
        g2 = g.admit(e_m)
    except Exception:
        raise PreconditionViolated("new event is not admissible") from None
    if not g2.valid():
        raise PreconditionViolated("extended chronicle is not valid")
    return g2


def check_authorization_safety(
    g: GroupChronicle, e_m: Event, authorize: Authorize = reference_authorize
) -> Optional[Violation]:
    """Adding `e_m` must leave every precursive verdict unchanged, and every
    discursive verdict too unless `e_m` is an authorized revocation."""
    g2 = _extend(g, e_m)
    exempt = isinstance(e_m.voc, Revoke) and authorize(g2, e_m)
    for e in g:
        before, after = precursive(authorize, g, e), precursive(authorize, g2, e)
        if before != after:
            return Violation(
                Invariant.AUTHORIZATION_SAFETY, g, event=e_m,
                verdicts={"subject": e.id.hex(), "precursive_before": before, "precursive_after": after},
                detail=f"precursive verdict of {e.id.short} changed",
            )
        if exempt:
            continue
        before, after = authorize(g, e), authorize(g2, e)
        if before != after:
            return Violation(
                Invariant.AUTHORIZATION_SAFETY, g, event=e_m,
                verdicts={"subject": e.id.hex(), "before": before, "after": after},
                detail=f"discursive verdict of {e.id.short} changed by {e_m.kind.label} {e_m.id.short}",
            )
    return None


def _caps_values(g: GroupChronicle, authorize: Authorize):
    if authorize is reference_authorize:
        return (
            frozenset(e.id for e in caplib.caps(g)),
            frozenset(e.id for e in caplib.values(g)),
        )
    ok = {e.id: authorize(g, e) for e in g}
    revoked = {e.voc.obj for e in g if isinstance(e.voc, Revoke) and ok[e.id]}
    cs = frozenset(e.id for e in g if isinstance(e.voc, Grant) and ok[e.id] and e.id not in revoked)
    live = [e for e in g if isinstance(e.voc, Assign) and ok[e.id]]
    shadowed = set().union(*(g.ancestors(e.id) for e in live)) if live else set()
    return cs, frozenset(e.id for e in live if e.id not in shadowed)


def check_query_safety(
    g: GroupChronicle, e_m: Event, authorize: Authorize = reference_authorize
) -> Optional[Violation]:
    """Any event that changes `caps` or `values` must be authorized."""
    g2 = _extend(g, e_m)
    before, after = _caps_values(g, authorize), _caps_values(g2, authorize)
    for query, b, a in zip(("caps", "values"), before, after):
        if b != a and not authorize(g, e_m):
            return Violation(
                Invariant.QUERY_SAFETY, g, event=e_m,
                verdicts={"query": query, "authorized_before": False,
                          "authorized_after": authorize(g2, e_m)},
                detail=f"unauthorized {e_m.kind.label} {e_m.id.short} changed {query}",
            )
    return None


def ideals(g: GroupChronicle, limit: Optional[int] = None) -> Iterator[frozenset]:
    """Every downward-closed subset of `now(g)`, stopping after `limit`."""
    order = [e.id for e in g.topological()]
    preds = {i: g[i].preds for i in order}
    count = 0
    stack = [(0, frozenset())]
    while stack:
        k, chosen = stack.pop()
        if k == len(order):
            yield chosen
            count += 1
            if limit is not None and count >= limit:
                return
            continue
        i = order[k]
        stack.append((k + 1, chosen))
        if preds[i] <= chosen:
            stack.append((k + 1, chosen | {i}))


def sample_ideals(g: GroupChronicle, count: int, rng: random.Random) -> list:
    """Approximately uniform ideals via a toggle Markov chain on the ideal lattice."""
    order = [e.id for e in g.topological()]
    if not order:
        return [frozenset()] * count
    preds = {i: g[i].preds for i in order}
    children: dict = {i: set() for i in order}
    for i in order:
        for p in preds[i]:
            children[p].add(i)
    current = set(order)
    n = len(order)
    out = []

    def walk(steps):
        for _ in range(steps):
            x = order[rng.randrange(n)]
            if x in current:
                if not (children[x] & current):
                    current.discard(x)
            elif preds[x] <= current:
                current.add(x)

    walk(50 * n)
    for _ in range(count):
        walk(5 * n)
        out.append(frozenset(current))
    return out


EXHAUSTIVE_IDEALS = 4096
SAMPLED_IDEALS = 512


def check_revocation_safety(
    g: GroupChronicle, v: Invocation, authorize: Authorize = reference_authorize
) -> Optional[Violation]:
    """If `v` is unauthorized when logged at `now(g)`, it must stay unauthorized
    when logged at any earlier timestamp.

    Timestamps at which logging `v` reproduces an existing member are skipped:
    that event is already part of the chronicle, not a new backdated one.
    """
    if not g.valid():
        raise PreconditionViolated("revocation safety requires a valid chronicle")
    at_now = make_event(g.heads(), v)
    if authorize(g, at_now):
        return None
    candidates = list(ideals(g, limit=EXHAUSTIVE_IDEALS + 1))
    if len(candidates) > EXHAUSTIVE_IDEALS:
        seed = hashlib.sha256(b"".join(sorted(i.digest for i in g.now())) + at_now.encoded).digest()
        candidates = sample_ideals(g, SAMPLED_IDEALS, random.Random(seed))
    for ts in candidates:
        e = make_event(g.frontier(ts), v)
        if e in g:
            continue
        if authorize(g, e):
            return Violation(
                Invariant.REVOCATION_SAFETY, g, invocation=v, timestamp=ts,
                verdicts={"at_now": False, "at_timestamp": True},
                detail=f"{v.kind.label} by {v.sbj} unauthorized now but authorized at a "
                       f"{len(ts)}-event timestamp",
            )
    return None


def check_oracle(g: GroupChronicle) -> Optional[Violation]:
    """Memoized and naive evaluators must agree on every member."""
    for e in g:
        fast = caplib.authorizes(g, e).authorized
        slow = naive_authorizes(g, e)
        if fast != slow:
            return Violation(
                Invariant.ORACLE_MISMATCH, g, event=e,
                verdicts={"memoized": fast, "naive": slow},
                detail=f"evaluators disagree on {e.id.short}",
            )
    return None


def probe_invocations(g: GroupChronicle) -> list:
    """Invocations worth checking for revocation safety on `g`.

    Every post-creation invocation already logged, plus the use each grant
    would authorize for its own object.
    """
    out = []
    seen = set()
    below = g.ancestors(g.creation().id) | {g.creation().id}
    for e in g:
        if e.id not in below and e.voc not in seen:
            seen.add(e.voc)
            out.append(e.voc)
        if isinstance(e.voc, Grant):
            gr = e.voc
            if gr.cap is Capability.ASSIGN:
                v = Assign(gr.obj, e.id, "probe")
            elif gr.cap is Capability.REVOKE:
                v = Revoke(gr.obj, e.id, e.id)
            elif gr.cap is Capability.GRANT:
                v = Grant(gr.obj, e.id, Capability.ASSIGN, gr.obj)
            else:
                continue
            if v not in seen:
                seen.add(v)
                out.append(v)
    return out


def check_extension(
    g: GroupChronicle, e_m: Event, authorize: Authorize = reference_authorize
) -> Optional[Violation]:
    return check_authorization_safety(g, e_m, authorize) or check_query_safety(g, e_m, authorize)


def check_chronicle(g: GroupChronicle, authorize: Authorize = reference_authorize) -> Optional[Violation]:
    """Run every chronicle-level check on a valid `g`.

    Oracle equivalence on all members; the extension invariants for each
    head whose removal leaves a valid chronicle; revocation safety for every
    probe invocation.
    """
    w = check_oracle(g) if authorize is reference_authorize else None
    if w is not None:
        return w
    c = g.creation().id
    for e_m in sorted(g.heads()):
        if e_m == c:
            continue
        parent = g.subset(g.now() - {e_m})
        if parent.valid():
            w = check_extension(parent, g[e_m], authorize)
            if w is not None:
                return w
    for v in probe_invocations(g):
        w = check_revocation_safety(g, v, authorize)
        if w is not None:
            return w
    return None


# -- chronicle generation ------------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    max_events: int
    entities: tuple
    preset: caplib.PolicyPreset
    byz_entities: frozenset = frozenset()
    allow_backdating: bool = True
    allow_equivocation: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "byz_entities", frozenset(self.byz_entities))
        if not 0 < self.max_events <= 16:
            raise ValueError("max_events must be in 1..16")
        if not self.byz_entities < set(self.entities):
            raise ValueError("Byzantine entities must be a strict subset of the entities")
        if not set(self.preset.participants) <= set(self.entities):
            raise ValueError("preset participants must be entities")


@dataclass
class Generated:
    chronicle: GroupChronicle
    steps: list  # (event, heads of the chronicle just before the event was added)
    base: GroupChronicle


NAMES = ("red", "blue", "green")


def _honest_invocation(g: GroupChronicle, who: str, entities, rng: random.Random):
    live = sorted((e for e in caplib.caps(g) if e.voc.obj == who), key=lambda e: e.id)
    options = []
    for gr in live:
        cap = gr.voc.cap
        if cap is Capability.ASSIGN:
            options.append(Assign(who, gr.id, rng.choice(NAMES)))
        elif cap is Capability.REVOKE:
            targets = sorted(
                (x for x in caplib.caps(g) if x.voc.cap is Capability.ASSIGN), key=lambda e: e.id
            )
            if targets:
                options.append(Revoke(who, gr.id, rng.choice(targets).id))
        elif cap is Capability.GRANT:
            options.append(Grant(who, gr.id, Capability.ASSIGN, rng.choice(entities)))
    return rng.choice(options) if options else None


def _byzantine_invocation(g: GroupChronicle, who: str, entities, rng: random.Random):
    ids = sorted(g.now()) + [UNKNOWN_ID]
    grants = sorted(e.id for e in g if isinstance(e.voc, Grant)) or [UNKNOWN_ID]
    # bias claims and targets toward grants, where they can matter
    pick = lambda: rng.choice(grants) if rng.random() < 0.8 else rng.choice(ids)
    kind = rng.choice((Capability.ASSIGN, Capability.REVOKE, Capability.GRANT))
    if kind is Capability.ASSIGN:
        return Assign(who, pick(), rng.choice(NAMES))
    if kind is Capability.REVOKE:
        return Revoke(who, pick(), pick())
    cap = rng.choice((Capability.ASSIGN, Capability.REVOKE, Capability.GRANT, Capability.CREATE))
    return Grant(who, pick(), cap, rng.choice(entities))


def _random_ideal_frontier(g: GroupChronicle, rng: random.Random) -> frozenset:
    c = g.creation().id
    later = sorted(i for i in g.now() if c in g.ancestors(i))
    k = rng.randint(0, len(later))
    chosen = rng.sample(later, k) if k else []
    return g.frontier(g.closure(chosen + [c]))


def generate(cfg: GenConfig) -> Generated:
    """Grow a valid chronicle from the preset, deterministically in `cfg.seed`.

    Honest entities log at the current frontier with a live grant of their
    own. Byzantine entities forge claims, backdate to any timestamp at or
    after creation, and equivocate by reusing the predecessors of their
    previous event.
    """
    rng = random.Random(cfg.seed)
    base = caplib.build_preset(cfg.preset)
    g = base
    steps = []
    target = rng.randint(len(base) + 1, max(len(base) + 1, cfg.max_events))
    last_preds: dict = {}
    attempts = 0
    while len(g) < target and attempts < 4 * cfg.max_events:
        attempts += 1
        who = rng.choice(cfg.entities)
        heads = g.heads()
        if who in cfg.byz_entities:
            v = _byzantine_invocation(g, who, cfg.entities, rng)
            roll = rng.random()
            if cfg.allow_equivocation and who in last_preds and roll < 0.3:
                preds = last_preds[who]
            elif cfg.allow_backdating and roll < 0.7:
                preds = _random_ideal_frontier(g, rng)
            else:
                preds = heads
        else:
            v = _honest_invocation(g, who, cfg.entities, rng)
            if v is None:
                continue
            preds = heads
        e = make_event(preds, v)
        if e in g:
            continue
        steps.append((e, heads))
        g = g.admit(e)
        last_preds[who] = preds
    return Generated(g, steps, base)


def gen_chronicle(cfg: GenConfig) -> GroupChronicle:
    return generate(cfg).chronicle


# -- exhaustive enumeration ------------------------------------------------------

def _antichain_frontiers(g: GroupChronicle) -> list:
    """Frontiers of every ideal of `g` that contains the create event."""
    c = g.creation().id
    base = g.ancestors(c) | {c}
    out = set()
    for ts in ideals(g):
        if base <= ts:
            out.add(g.frontier(ts))
    return sorted(out, key=lambda f: sorted(f))


def default_alphabet(g: GroupChronicle, history: frozenset, entities) -> list:
    """Invocations considered for an event whose strict precursors are `history`.

    Assigns may claim any grant in the history or one never-logged id, which
    covers every way a claim can fail to match. Revocations and grants are
    only issued under a revoke or grant capability the subject holds in the
    history; a revocation may target any grant there or the never-logged id.
    Other invocations fail the same local checks as an assign with a bad
    claim and, being unauthorized, cannot influence any other verdict.
    """
    grants = sorted(i for i in history if isinstance(g[i].voc, Grant))
    out = []
    for s in entities:
        for claim in grants + [UNKNOWN_ID]:
            out.append(Assign(s, claim, "n"))
        for claim in grants:
            gr = g[claim].voc
            if gr.obj != s:
                continue
            if gr.cap is Capability.REVOKE:
                for target in grants + [UNKNOWN_ID]:
                    out.append(Revoke(s, claim, target))
            elif gr.cap is Capability.GRANT:
                for obj in entities:
                    out.append(Grant(s, claim, Capability.ASSIGN, obj))
    return out


def enumerate_extensions(
    preset: caplib.PolicyPreset,
    max_extra_events: int,
    entities: Optional[Iterable[str]] = None,
    alphabet: Callable = default_alphabet,
) -> Iterator[tuple]:
    """Yield (parent, new_event, child) for every distinct child chronicle.

    Children are valid by construction (every new event succeeds the create
    event) and deduplicated by id set.
    """
    if not 0 <= max_extra_events <= 5:
        raise ValueError("max_extra_events must be in 0..5")
    entities = tuple(entities or preset.participants)
    root = caplib.build_preset(preset)
    seen = {root.now()}

    # depth-first, so only the current path of chronicles stays in memory
    def expand(g: GroupChronicle, depth: int):
        if depth == max_extra_events:
            return
        for front in _antichain_frontiers(g):
            history = g.closure(front)
            for v in alphabet(g, history, entities):
                e = make_event(front, v)
                if e in g:
                    continue
                key = g.now() | {e.id}
                if key in seen:
                    continue
                seen.add(key)
                child = g.admit(e)
                yield g, e, child
                yield from expand(child, depth + 1)

    yield from expand(root, 0)


def enumerate_chronicles(
    preset: caplib.PolicyPreset,
    max_extra_events: int,
    entities: Optional[Iterable[str]] = None,
    alphabet: Callable = default_alphabet,
) -> Iterator[GroupChronicle]:
    yield caplib.build_preset(preset)
    for _, _, child in enumerate_extensions(preset, max_extra_events, entities, alphabet):
        yield child
