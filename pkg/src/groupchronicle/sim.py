"""Deterministic discrete-event simulation of replicas sharing a group chronicle.

Each replica keeps its own chronicle. Honest replicas log at their local
frontier, broadcast, and admit only events that are precursively authorized
and signed by their subject. Byzantine replicas may backdate, equivocate and
withhold events. The network delays each message by a uniform number of
steps and may drop it. All randomness comes from one seeded generator, so a
(config, seed) pair always yields the same trace.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import capabilities as caplib
from .chronicle import (
    Assign,
    Capability,
    ChronicleError,
    Event,
    EventId,
    Grant,
    GroupChronicle,
    Invocation,
    Revoke,
    make_event,
)
from .codec import dumps
from .oracle import Invariant, Violation


class SimulationError(ChronicleError):
    pass


class NotByzantine(SimulationError):
    pass


class InvalidTimestamp(SimulationError):
    pass


@dataclass
class Action:
    """One scripted action. `args` depends on `op`; see `World.perform`."""

    step: int
    actor: str
    op: str
    args: dict = field(default_factory=dict)
    label: Optional[str] = None


@dataclass
class WorldConfig:
    replicas: list  # (entity, byzantine) pairs; the first entity creates the group
    preset: Optional[caplib.PolicyPreset] = None
    setup: Optional[list] = None  # (label, Grant) pairs used instead of a preset
    drop_rate: float = 0.0
    max_delay: int = 0
    adversary_script: list = field(default_factory=list)
    seed: int = 0
    max_steps: int = 20
    random_actions: bool = True
    act_rate: float = 0.7
    link_delays: dict = field(default_factory=dict)  # (src, dst) -> fixed delay

    def __post_init__(self):
        self.replicas = [(str(e), bool(b)) for e, b in self.replicas]
        names = [e for e, _ in self.replicas]
        if len(set(names)) != len(names):
            raise ValueError("replica entities must be distinct")
        byz = sum(b for _, b in self.replicas)
        if not self.replicas or byz >= len(self.replicas):
            raise ValueError("need at least one honest replica (f/n < 1)")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be a probability")
        if self.max_delay < 0 or self.max_steps < 0:
            raise ValueError("max_delay and max_steps must be non-negative")
        if self.preset is None and self.setup is None:
            self.preset = caplib.PolicyPreset(caplib.PresetTag.ALLOW_REVOKE_LATER, names)

    @property
    def creator(self) -> str:
        if self.preset is not None:
            return self.preset.creator
        return self.replicas[0][0]


@dataclass
class Replica:
    entity: str
    chronicle: GroupChronicle
    byzantine: bool = False
    pending: dict = field(default_factory=dict)
    rejected: set = field(default_factory=set)
    omit: set = field(default_factory=set)
    last_preds: Optional[frozenset] = None


@dataclass(order=True)
class _Message:
    deliver_at: int
    seq: int
    src: str = field(compare=False)
    dst: str = field(compare=False)
    event: Event = field(compare=False)


NAMES = ("red", "blue", "green", "amber")


class World:
    def __init__(self, config: WorldConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        self.now = 0
        self.labels: dict = {}
        if config.setup is not None:
            base = caplib.build_setup(config.creator, [v for _, v in config.setup])
            ordered = [e for e in base.topological() if isinstance(e.voc, Grant)]
            for (label, _), e in zip(config.setup, ordered):
                if label:
                    self.labels[label] = e.id
        else:
            base = caplib.build_preset(config.preset)
            # preset grants are labelled by capability and holder, e.g. "assign:B"
            for e in base:
                if isinstance(e.voc, Grant):
                    self.labels[f"{e.voc.cap.label}:{e.voc.obj}"] = e.id
        self.base = base
        self.labels.setdefault("create", base.creation().id)
        self.replicas = {
            e: Replica(e, base, byzantine=b) for e, b in config.replicas
        }
        self.order = [e for e, _ in config.replicas]
        self.queue: list = []
        self._seq = 0
        self.trace: list = []
        # models signatures: which entity authored each event
        self.author = {e.id: config.creator for e in base}
        self._precursive: dict = {}
        self.logging = True
        self.script = sorted(config.adversary_script, key=lambda a: a.step)

    # -- helpers ---------------------------------------------------------

    def honest(self) -> list:
        return [e for e in self.order if not self.replicas[e].byzantine]

    def _log_line(self, kind: str, who: str, e: Optional[Event] = None, extra: str = "") -> None:
        ident = e.id.hex() if e is not None else "-"
        line = f"{self.now} {kind} {who} {ident}"
        if extra:
            line += f" {extra}"
        self.trace.append(line)

    def trace_hash(self) -> str:
        return hashlib.sha256("\n".join(self.trace).encode()).hexdigest()

    def chronicle(self, who: str) -> GroupChronicle:
        return self.replicas[who].chronicle

    def precursive(self, g: GroupChronicle, e: Event) -> caplib.AuthVerdict:
        # depends only on the event's history, which its id pins down
        v = self._precursive.get(e.id)
        if v is None:
            v = caplib.authorizes_precursive(g, e)
            self._precursive[e.id] = v
        return v

    def verdict(self, who: str, ident: EventId) -> Optional[caplib.AuthVerdict]:
        """Discursive verdict of an event at one replica, None if not held."""
        g = self.chronicle(who)
        if ident not in g:
            return None
        return caplib.authorizes(g, g[ident])

    # -- network -----------------------------------------------------------

    def _send(self, src: str, dst: str, e: Event) -> None:
        if self.rng.random() < self.config.drop_rate:
            self._log_line("drop", f"{src}->{dst}", e)
            return
        fixed = self.config.link_delays.get((src, dst))
        delay = fixed if fixed is not None else self.rng.randint(0, self.config.max_delay)
        self._seq += 1
        heapq.heappush(self.queue, _Message(self.now + 1 + delay, self._seq, src, dst, e))

    def broadcast(self, src: str, e: Event, targets: Optional[Iterable[str]] = None) -> None:
        sender = self.replicas[src]
        allowed = set(targets) if targets is not None else None
        for dst in self.order:
            if dst == src or dst in sender.omit:
                continue
            if allowed is not None and dst not in allowed:
                continue
            self._send(src, dst, e)

    def receive(self, who: str, e: Event) -> None:
        r = self.replicas[who]
        if e.id in r.chronicle or e.id in r.pending or e.id in r.rejected:
            return
        if not r.byzantine and self.author.get(e.id) != e.voc.sbj:
            r.rejected.add(e.id)
            self._log_line("reject", who, e, "unsigned")
            return
        if any(p in r.rejected for p in e.preds):
            r.rejected.add(e.id)
            self._log_line("reject", who, e, "rejected-ancestor")
            return
        if not all(p in r.chronicle for p in e.preds):
            r.pending[e.id] = e
            self._log_line("buffer", who, e)
            return
        self._accept(r, e)
        self._flush(r)

    def _accept(self, r: Replica, e: Event) -> None:
        if not r.byzantine:
            v = self.precursive(r.chronicle, e)
            if not v.authorized:
                r.rejected.add(e.id)
                self._log_line("reject", r.entity, e, str(v.reason))
                return
        r.chronicle = r.chronicle.admit(e)
        self._log_line("admit", r.entity, e)

    def _flush(self, r: Replica) -> None:
        progress = True
        while progress and r.pending:
            progress = False
            for i in sorted(r.pending):
                e = r.pending[i]
                if any(p in r.rejected for p in e.preds):
                    del r.pending[i]
                    r.rejected.add(i)
                    self._log_line("reject", r.entity, e, "rejected-ancestor")
                    progress = True
                elif all(p in r.chronicle for p in e.preds):
                    del r.pending[i]
                    self._accept(r, e)
                    progress = True

    def deliver_due(self) -> int:
        n = 0
        while self.queue and self.queue[0].deliver_at <= self.now:
            m = heapq.heappop(self.queue)
            self.receive(m.dst, m.event)
            n += 1
        return n

    # -- honest behaviour ---------------------------------------------------

    def log(self, who: str, v: Invocation, label: Optional[str] = None) -> Optional[Event]:
        """An honest replica logs `v` at its frontier if precursively authorized."""
        r = self.replicas[who]
        if v.sbj != who:
            raise SimulationError(f"{who} cannot sign an invocation by {v.sbj}")
        e = make_event(r.chronicle.heads(), v)
        if not r.byzantine:
            verdict = caplib.authorizes(r.chronicle, e)
            if not verdict.authorized:
                self._log_line("refuse", who, e, str(verdict.reason))
                return None
        return self._emit(who, e, label)

    def _emit(self, who: str, e: Event, label: Optional[str], targets=None) -> Event:
        r = self.replicas[who]
        self.author[e.id] = who
        if label:
            self.labels[label] = e.id
        if e.id not in r.chronicle:
            r.chronicle = r.chronicle.admit(e)
        r.last_preds = e.preds
        self._log_line("log", who, e, e.kind.label)
        self.broadcast(who, e, targets)
        return e

    def random_honest_invocation(self, who: str) -> Optional[Invocation]:
        g = self.chronicle(who)
        live = caplib.caps(g)
        mine = sorted((e for e in live if e.voc.obj == who), key=lambda e: e.id)
        options = []
        for gr in mine:
            cap = gr.voc.cap
            if cap is Capability.ASSIGN:
                options.append(Assign(who, gr.id, self.rng.choice(NAMES)))
            elif cap is Capability.REVOKE:
                targets = sorted(
                    (x for x in live if x.voc.cap is Capability.ASSIGN and x.voc.obj != who),
                    key=lambda x: x.id,
                )
                if targets:
                    options.append(Revoke(who, gr.id, self.rng.choice(targets).id))
            elif cap is Capability.GRANT:
                options.append(Grant(who, gr.id, Capability.ASSIGN, self.rng.choice(self.order)))
        return self.rng.choice(options) if options else None

    # -- adversary ----------------------------------------------------------

    def _byzantine(self, who: str) -> Replica:
        r = self.replicas[who]
        if not r.byzantine:
            raise NotByzantine(who)
        return r

    def adversary_backdate(self, who: str, ts: Iterable[EventId], v: Invocation,
                           label: Optional[str] = None) -> Event:
        """Log `v` with the causal history `ts` and broadcast it."""
        r = self._byzantine(who)
        ts = frozenset(ts)
        g = r.chronicle
        if not all(i in g for i in ts) or not g.timestamp_valid(ts):
            raise InvalidTimestamp("timestamp is not downward-closed in the local chronicle")
        c = g.creation().id
        if c not in ts:
            raise InvalidTimestamp("timestamp must include the create event")
        e = make_event(g.frontier(ts), v)
        self._log_line("backdate", who, e, f"|T|={len(ts)}")
        return self._emit(who, e, label)

    def adversary_equivocate(self, who: str, v1: Invocation, v2: Invocation,
                             to_first: Optional[Iterable[str]] = None,
                             to_second: Optional[Iterable[str]] = None,
                             labels=(None, None)) -> tuple:
        """Two events on the same frontier, each shown to a different group."""
        r = self._byzantine(who)
        others = [e for e in self.order if e != who]
        if to_first is None and to_second is None:
            half = (len(others) + 1) // 2
            to_first, to_second = others[:half], others[half:]
        front = r.chronicle.heads()
        e1, e2 = make_event(front, v1), make_event(front, v2)
        self._log_line("equivocate", who, e1, e2.id.hex())
        self._emit(who, e1, labels[0], targets=list(to_first or ()))
        self._emit(who, e2, labels[1], targets=list(to_second or ()))
        return e1, e2

    def adversary_omit(self, who: str, targets: Iterable[str]) -> None:
        r = self._byzantine(who)
        r.omit |= set(targets)
        self._log_line("omit", who, None, ",".join(sorted(r.omit)))

    def _forged_invocation(self, who: str) -> Invocation:
        g = self.chronicle(who)
        grants = sorted(e.id for e in g if isinstance(e.voc, Grant))
        ids = sorted(g.now())
        pick = lambda: self.rng.choice(grants) if self.rng.random() < 0.8 else self.rng.choice(ids)
        kind = self.rng.choice(("assign", "revoke", "grant"))
        if kind == "assign":
            return Assign(who, pick(), self.rng.choice(NAMES))
        if kind == "revoke":
            return Revoke(who, pick(), pick())
        cap = self.rng.choice(list(Capability))
        return Grant(who, pick(), cap, self.rng.choice(self.order))

    def random_byzantine_action(self, who: str) -> None:
        r = self.replicas[who]
        g = r.chronicle
        move = self.rng.choice(("log", "backdate", "equivocate", "omit"))
        if move == "omit":
            others = [e for e in self.order if e != who]
            k = self.rng.randint(0, len(others))
            self.adversary_omit(who, self.rng.sample(others, k))
        elif move == "backdate":
            c = g.creation().id
            later = sorted(i for i in g.now() if c in g.ancestors(i))
            k = self.rng.randint(0, len(later))
            ts = g.closure(self.rng.sample(later, k) + [c])
            self.adversary_backdate(who, ts, self._forged_invocation(who))
        elif move == "equivocate":
            self.adversary_equivocate(who, self._forged_invocation(who), self._forged_invocation(who))
        else:
            self._emit(who, make_event(g.heads(), self._forged_invocation(who)), None)

    # -- anti-entropy -----------------------------------------------------------

    def anti_entropy(self, a: str, b: str) -> None:
        """Exchange every event one honest replica holds or buffers and the other lacks."""
        for who in (a, b):
            if self.replicas[who].byzantine:
                raise SimulationError("anti-entropy runs between honest replicas only")
        ra, rb = self.replicas[a], self.replicas[b]
        for src, dst in ((ra, rb), (rb, ra)):
            missing = src.chronicle.now() - dst.chronicle.now()
            for e in src.chronicle.topological():
                if e.id in missing:
                    self.receive(dst.entity, e)
            for i in sorted(src.pending):
                self.receive(dst.entity, src.pending[i])
        self._log_line("sync", f"{a}<->{b}")

    def _honest_state(self) -> tuple:
        return tuple(
            (frozenset(self.replicas[h].chronicle.now()), frozenset(self.replicas[h].pending))
            for h in self.honest()
        )

    def anti_entropy_round(self) -> None:
        """Gather at the first honest replica and scatter back, until stable."""
        honest = self.honest()
        hub = honest[0]
        before = None
        while before != self._honest_state():
            before = self._honest_state()
            for other in honest[1:]:
                self.anti_entropy(hub, other)
            for other in honest[1:]:
                self.anti_entropy(hub, other)

    # -- scheduling -------------------------------------------------------------

    def perform(self, a: Action) -> None:
        from .scenario import build_invocation

        if a.op in ("assign", "revoke", "grant"):
            v = build_invocation(self, a.actor, a.op, a.args)
            if self.replicas[a.actor].byzantine:
                g = self.chronicle(a.actor)
                self._emit(a.actor, make_event(g.heads(), v), a.label)
            else:
                self.log(a.actor, v, a.label)
        elif a.op == "backdate":
            g = self.chronicle(a.actor)
            ts = g.closure([self.labels[x] for x in a.args.get("after", [])] + [self.labels["create"]])
            v = build_invocation(self, a.actor, a.args["invocation"]["op"], a.args["invocation"])
            self.adversary_backdate(a.actor, ts, v, a.label)
        elif a.op == "equivocate":
            first, second = a.args["first"], a.args["second"]
            self.adversary_equivocate(
                a.actor,
                build_invocation(self, a.actor, first["op"], first),
                build_invocation(self, a.actor, second["op"], second),
                a.args.get("to_first"), a.args.get("to_second"),
                labels=(first.get("label"), second.get("label")),
            )
        elif a.op == "omit":
            self.adversary_omit(a.actor, a.args.get("targets", []))
        elif a.op == "sync":
            self.anti_entropy(a.actor, a.args["peer"])
        else:
            raise SimulationError(f"unknown action {a.op!r}")

    def idle(self) -> bool:
        return not self.queue and (not self.logging or self.now >= self.config.max_steps) and not self.script

    def step(self) -> bool:
        """Advance one time step. Returns False (and changes nothing) when idle."""
        if self.idle():
            return False
        self.deliver_due()
        if self.logging and self.now < self.config.max_steps:
            while self.script and self.script[0].step <= self.now:
                self.perform(self.script.pop(0))
            if self.config.random_actions and self.rng.random() < self.config.act_rate:
                who = self.rng.choice(self.order)
                if self.replicas[who].byzantine:
                    self.random_byzantine_action(who)
                else:
                    v = self.random_honest_invocation(who)
                    if v is not None:
                        self.log(who, v)
        elif self.script and not self.logging:
            self.script = []
        self.now += 1
        return True

    def run(self) -> "World":
        while self.step():
            pass
        return self

    def quiesce(self) -> "World":
        """Stop logging, deliver everything in flight, then reconcile honest replicas."""
        self.logging = False
        self.script = []
        while self.queue:
            self.now = max(self.now, self.queue[0].deliver_at)
            self.deliver_due()
        self.anti_entropy_round()
        self._log_line("quiesce", "-")
        return self


def check_convergence(world: World) -> Optional[Violation]:
    """Quiesce `world`, then require identical chronicles and query results
    on every honest replica."""
    world.quiesce()
    honest = world.honest()
    ref = world.chronicle(honest[0])
    ref_bytes = dumps(ref)
    ref_caps = {e.id for e in caplib.caps(ref)}
    ref_values = {e.id for e in caplib.values(ref)}
    for who in honest[1:]:
        g = world.chronicle(who)
        problem = None
        if dumps(g) != ref_bytes:
            problem = "chronicles differ"
        elif {e.id for e in caplib.caps(g)} != ref_caps:
            problem = "caps differ"
        elif {e.id for e in caplib.values(g)} != ref_values:
            problem = "values differ"
        if problem:
            return Violation(
                Invariant.CONVERGENCE, ref,
                verdicts={"replicas": [honest[0], who]},
                detail=f"{problem} between {honest[0]} and {who}",
            )
    return None


def random_config(seed: int, preset_tag: caplib.PresetTag, n_replicas: int, n_byz: int,
                  drop_rate: float, max_delay: int = 3, max_steps: int = 24,
                  byz_names: Optional[Iterable[str]] = None) -> WorldConfig:
    """A randomized world on replicas A, B, ... whose Byzantine replicas are
    `byz_names` if given, else `n_byz` drawn from the roster by the seed."""
    names = [chr(ord("A") + k) for k in range(n_replicas)]
    rng = random.Random(seed ^ 0x5EED)
    byz = set(byz_names) if byz_names is not None else set(rng.sample(names, n_byz))
    if not byz <= set(names):
        raise ValueError(f"Byzantine replicas {sorted(byz - set(names))} are not in the roster")
    return WorldConfig(
        replicas=[(n, n in byz) for n in names],
        preset=caplib.PolicyPreset(preset_tag, names),
        drop_rate=drop_rate,
        max_delay=max_delay,
        seed=seed,
        max_steps=max_steps,
    )
