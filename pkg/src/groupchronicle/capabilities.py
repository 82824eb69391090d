"""Capability-based authorization over a group chronicle.

Every event other than the create event and its precursors must present the
id of a grant event (its claim). The event is authorized when that grant is
an authorized precursor matching the event's subject and kind, and no
authorized revocation of the grant precedes or is concurrent to the event.

Revocations may depend on each other through concurrency, so member verdicts
are solved together as the least fixpoint of a three-valued evaluation. A
verdict still undecided at the fixpoint hinges on a cycle of concurrent
revocations and is reported unauthorized with reason ``CYCLE_INVOLVED``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

from .chronicle import (
    Assign,
    Capability,
    Create,
    DanglingPredecessor,
    Event,
    EventId,
    Grant,
    GroupChronicle,
    Invocation,
    PreconditionViolated,
    Revoke,
    check_entity,
)


class Reason(str, enum.Enum):
    CREATION = "Creation"
    CREATION_PRECURSOR = "CreationPrecursor"
    GRANT_MATCHED = "GrantMatched"
    NO_MATCHING_GRANT = "NoMatchingGrant"
    SUBJECT_MISMATCH = "SubjectMismatch"
    CAPABILITY_MISMATCH = "CapabilityMismatch"
    REVOKED_CONCURRENTLY = "RevokedConcurrently"
    REVOKE_TARGET_MISSING = "RevokeTargetMissing"
    CYCLE_INVOLVED = "CycleInvolved"

    def __str__(self) -> str:
        return self.value


AUTHORIZING = frozenset({Reason.CREATION, Reason.CREATION_PRECURSOR, Reason.GRANT_MATCHED})


@dataclass(frozen=True)
class AuthVerdict:
    authorized: bool
    reason: Reason

    def __post_init__(self):
        if self.authorized != (self.reason in AUTHORIZING):
            raise ValueError(f"verdict {self.authorized} inconsistent with {self.reason}")

    def __bool__(self) -> bool:
        return self.authorized

    def __str__(self) -> str:
        return f"{'authorized' if self.authorized else 'unauthorized'} ({self.reason})"


def _verdict(reason: Reason) -> AuthVerdict:
    return AuthVerdict(reason in AUTHORIZING, reason)


# -- invocation constructors ------------------------------------------------

def mk_create(sbj: str) -> Create:
    return Create(sbj)


def mk_grant(sbj: str, grnt: Optional[EventId], cap: Capability, obj: str) -> Grant:
    return Grant(sbj, grnt, cap, obj)


def mk_revoke(sbj: str, grnt: EventId, obj: EventId) -> Revoke:
    return Revoke(sbj, grnt, obj)


def mk_assign(sbj: str, grnt: EventId, name: str) -> Assign:
    return Assign(sbj, grnt, name)


# -- discursive authorization -------------------------------------------------

def local_check(g: GroupChronicle, v: Invocation, history: frozenset) -> Optional[Reason]:
    """Checks on an invocation that do not depend on any other verdict.

    `history` is the ids of the event's strict precursors. Returns the
    failing reason, or None when only the grant's own authorization and the
    absence of revocations remain to be settled.
    """
    if isinstance(v, Create) or v.grnt is None or v.grnt not in history:
        return Reason.NO_MATCHING_GRANT
    gr = g[v.grnt].voc
    if not isinstance(gr, Grant):
        return Reason.NO_MATCHING_GRANT
    if v.sbj != gr.obj:
        return Reason.SUBJECT_MISMATCH
    if v.kind != gr.cap:
        return Reason.CAPABILITY_MISMATCH
    if isinstance(v, Revoke):
        if v.obj not in history or not isinstance(g[v.obj].voc, Grant):
            return Reason.REVOKE_TARGET_MISSING
    return None


def _revokes_by_target(g: GroupChronicle) -> dict:
    out = g._cache.get("revokes")
    if out is None:
        out = {}
        for e in g:
            if isinstance(e.voc, Revoke):
                out.setdefault(e.voc.obj, []).append(e.id)
        g._cache["revokes"] = out
    return out


def _settle(grant_value, attacker_values) -> Optional[Reason]:
    """Kleene combination; None means still undecided."""
    if grant_value is False:
        return Reason.NO_MATCHING_GRANT
    if any(a is True for a in attacker_values):
        return Reason.REVOKED_CONCURRENTLY
    if grant_value is True and all(a is False for a in attacker_values):
        return Reason.GRANT_MATCHED
    return None


def member_verdicts(g: GroupChronicle) -> dict:
    """Verdicts for every member of a valid chronicle, memoized on `g`."""
    cached = g._cache.get("verdicts")
    if cached is not None:
        return cached
    if not g.valid():
        raise PreconditionViolated("authorization requires a valid chronicle")
    c = g.creation().id
    below = g.ancestors(c)
    by_target = _revokes_by_target(g)

    value: dict = {}
    reason: dict = {}
    open_ids = []
    deps: dict = {}
    for e in g:
        i = e.id
        if i == c:
            value[i], reason[i] = True, Reason.CREATION
            continue
        if i in below:
            value[i], reason[i] = True, Reason.CREATION_PRECURSOR
            continue
        failed = local_check(g, e.voc, g.ancestors(i))
        if failed is not None:
            value[i], reason[i] = False, failed
            continue
        claim = e.voc.grnt
        # revocations of the claimed grant that precede or are concurrent to e
        attackers = [r for r in by_target.get(claim, ()) if r != i and i not in g.ancestors(r)]
        deps[i] = (claim, attackers)
        value[i] = None
        open_ids.append(i)

    changed = True
    while changed and open_ids:
        changed = False
        still_open = []
        for i in open_ids:
            claim, attackers = deps[i]
            r = _settle(value[claim], [value[a] for a in attackers])
            if r is None:
                still_open.append(i)
            else:
                value[i] = r in AUTHORIZING
                changed = True
        open_ids = still_open

    verdicts = {}
    for i in value:
        if i in deps:
            claim, attackers = deps[i]
            r = _settle(value[claim], [value[a] for a in attackers]) or Reason.CYCLE_INVOLVED
            verdicts[i] = _verdict(r)
        else:
            verdicts[i] = _verdict(reason[i])
    g._cache["verdicts"] = verdicts
    return verdicts


def _undecided_value(v: AuthVerdict):
    return None if v.reason is Reason.CYCLE_INVOLVED else v.authorized


def authorizes(g: GroupChronicle, e: Event) -> AuthVerdict:
    """Discursive authorization of `e` against everything `g` holds.

    `e` need not be a member; a non-member is judged as if logged at the
    timestamp given by its predecessors, which must all be members of `g`.
    """
    verdicts = member_verdicts(g)
    if e.id in verdicts:
        return verdicts[e.id]
    try:
        history = g.closure(e.preds)
    except Exception:
        raise PreconditionViolated("event timestamp references events outside the chronicle") from None
    failed = local_check(g, e.voc, history)
    if failed is not None:
        return _verdict(failed)
    claim = e.voc.grnt
    # no member can succeed a non-member, so every matching revocation counts
    attackers = [r for r in _revokes_by_target(g).get(claim, ())]
    r = _settle(
        _undecided_value(verdicts[claim]),
        [_undecided_value(verdicts[a]) for a in attackers],
    )
    return _verdict(r or Reason.CYCLE_INVOLVED)


def authorizes_precursive(g: GroupChronicle, e: Event) -> AuthVerdict:
    """Authorization judged only against the causal precursors of `e`.

    Works for members and for events whose predecessors are all held by `g`.
    The verdict depends on the event's history alone, so it never changes as
    the chronicle grows.
    """
    if e.id in g:
        if g.valid():
            c = g.creation()
            if e.id == c.id:
                return _verdict(Reason.CREATION)
            if e.id in g.ancestors(c.id):
                return _verdict(Reason.CREATION_PRECURSOR)
        history = g.ancestors(e.id)
    else:
        for p in e.preds:
            if p not in g:
                raise DanglingPredecessor(p)
        history = g.closure(e.preds)
    wound_back = g.subset(history)
    if not wound_back.valid():
        return _verdict(Reason.NO_MATCHING_GRANT)
    return authorizes(wound_back, e)


# -- queries --------------------------------------------------------------

def caps(g: GroupChronicle) -> frozenset:
    """Authorized grant events that no authorized revocation targets."""
    verdicts = member_verdicts(g)
    revoked = {
        e.voc.obj for e in g if isinstance(e.voc, Revoke) and verdicts[e.id].authorized
    }
    return frozenset(
        e for e in g
        if isinstance(e.voc, Grant) and verdicts[e.id].authorized and e.id not in revoked
    )


def values(g: GroupChronicle) -> frozenset:
    """Authorized assign events without an authorized assign successor."""
    verdicts = member_verdicts(g)
    live = [e for e in g if isinstance(e.voc, Assign) and verdicts[e.id].authorized]
    shadowed = set()
    for e in live:
        shadowed |= g.ancestors(e.id)
    return frozenset(e for e in live if e.id not in shadowed)


def names(g: GroupChronicle) -> list:
    """The group name candidates, sorted."""
    return sorted(e.voc.name for e in values(g))


# -- policy presets -----------------------------------------------------------

class PresetTag(str, enum.Enum):
    ALLOW_ON_CREATION = "AllowOnCreation"
    DENY_GRANT_LATER = "DenyGrantLater"
    ALLOW_REVOKE_LATER = "AllowRevokeLater"

    @classmethod
    def parse(cls, text: str) -> "PresetTag":
        key = text.replace("-", "").replace("_", "").lower()
        for tag in cls:
            if tag.value.lower() == key:
                return tag
        raise ValueError(f"unknown preset {text!r}")


@dataclass(frozen=True)
class PolicyPreset:
    tag: PresetTag
    participants: tuple

    def __post_init__(self):
        object.__setattr__(self, "tag", PresetTag(self.tag))
        object.__setattr__(self, "participants", tuple(self.participants))
        if not self.participants:
            raise ValueError("a preset needs at least one participant")
        if len(set(self.participants)) != len(self.participants):
            raise ValueError("participants must be distinct")
        for p in self.participants:
            check_entity(p)

    @property
    def creator(self) -> str:
        return self.participants[0]


def setup_grants(p: PolicyPreset) -> list:
    creator = p.creator
    if p.tag is PresetTag.DENY_GRANT_LATER:
        return [Grant(creator, None, Capability.GRANT, creator)]
    grants = [Grant(creator, None, Capability.ASSIGN, who) for who in p.participants]
    if p.tag is PresetTag.ALLOW_REVOKE_LATER:
        grants.append(Grant(creator, None, Capability.REVOKE, creator))
    return grants


def build_setup(creator: str, grants: Iterable[Invocation]) -> GroupChronicle:
    """Log setup invocations one after another, then the create event."""
    g = GroupChronicle()
    for v in grants:
        g = g.log(v)
    return g.log(Create(creator))


def build_preset(p: PolicyPreset) -> GroupChronicle:
    return build_setup(p.creator, setup_grants(p))
