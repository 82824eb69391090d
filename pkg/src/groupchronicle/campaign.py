"""Falsification campaigns: run every checker over a corpus of chronicles.

Two corpora exist per preset. The enumerated corpus holds every chronicle
with at most eight events reachable from the preset through the pruned
enumeration alphabet. The generated corpus holds seeded random chronicles
with Byzantine participants.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import capabilities as caplib
from .oracle import GenConfig, Invariant, Violation, check_chronicle, enumerate_chronicles, gen_chronicle

MAX_TOTAL_EVENTS = 8
MAX_EXTRA_EVENTS = 5
ENUM_PARTICIPANTS = ("A", "B")
GEN_ENTITIES = ("A", "B", "C")
GEN_MAX_EVENTS = 16


@dataclass
class CampaignResult:
    label: str
    cases: int = 0
    violations: Counter = field(default_factory=Counter)
    first: Optional[Violation] = None
    first_case: Optional[int] = None
    elapsed: float = 0.0
    acyclic: int = 0  # violations whose chronicles contain no revocation cycle

    @property
    def ok(self) -> bool:
        return not self.violations

    def record(self, case: int, w: Optional[Violation]) -> None:
        self.cases += 1
        if w is None:
            return
        self.violations[w.invariant] += 1
        if not involves_cycle(w):
            self.acyclic += 1
        if self.first is None:
            self.first, self.first_case = w, case

    def count(self, *invariants: Invariant) -> int:
        return sum(self.violations[i] for i in invariants)

    def summary(self) -> str:
        body = ", ".join(f"{k.value}={v}" for k, v in sorted(self.violations.items())) or "no violations"
        extra = f" ({self.acyclic} without a revocation cycle)" if self.violations else ""
        return f"{self.label}: {self.cases} cases, {body}{extra}, {self.elapsed:.1f}s"


def enumeration_depth(tag: caplib.PresetTag, participants=ENUM_PARTICIPANTS) -> int:
    """Extra events allowed so the total stays within the eight-event bound."""
    base = len(caplib.build_preset(caplib.PolicyPreset(tag, participants)))
    return max(0, min(MAX_EXTRA_EVENTS, MAX_TOTAL_EVENTS - base))


def gen_config(tag: caplib.PresetTag, seed: int, max_events: int = GEN_MAX_EVENTS,
               byz: Optional[Iterable[str]] = None) -> GenConfig:
    """Generator config for one seed. Unless given, the Byzantine entity
    rotates through the roster with the seed, so the creator is covered."""
    if byz is None:
        byz = {GEN_ENTITIES[seed % len(GEN_ENTITIES)]}
    return GenConfig(
        max_events=max_events,
        entities=GEN_ENTITIES,
        preset=caplib.PolicyPreset(tag, GEN_ENTITIES),
        byz_entities=frozenset(byz),
        seed=seed,
    )


def run_enumerated(tag: caplib.PresetTag, stop_on_first: bool = False,
                   progress: Optional[Callable[[int], None]] = None) -> CampaignResult:
    preset = caplib.PolicyPreset(tag, ENUM_PARTICIPANTS)
    res = CampaignResult(f"{tag.value} enumerated")
    t0 = time.perf_counter()
    for k, g in enumerate(enumerate_chronicles(preset, enumeration_depth(tag))):
        res.record(k, check_chronicle(g))
        if progress is not None and k % 10000 == 0:
            progress(k)
        if stop_on_first and res.first is not None:
            break
    res.elapsed = time.perf_counter() - t0
    return res


def run_generated(tag: caplib.PresetTag, seeds: Iterable[int], max_events: int = GEN_MAX_EVENTS,
                  byz: Optional[Iterable[str]] = None, stop_on_first: bool = False) -> CampaignResult:
    res = CampaignResult(f"{tag.value} generated")
    t0 = time.perf_counter()
    for seed in seeds:
        g = gen_chronicle(gen_config(tag, seed, max_events, byz))
        res.record(seed, check_chronicle(g))
        if stop_on_first and res.first is not None:
            break
    res.elapsed = time.perf_counter() - t0
    return res


def involves_cycle(w: Violation) -> bool:
    """True when some member of the witness chronicle, or of the chronicle
    extended by the offending event, hinges on a revocation cycle."""
    chronicles = [w.chronicle]
    if w.event is not None and w.event.id not in w.chronicle:
        try:
            chronicles.append(w.chronicle.admit(w.event))
        except Exception:
            pass
    return any(
        v.reason is caplib.Reason.CYCLE_INVOLVED
        for g in chronicles
        for v in caplib.member_verdicts(g).values()
    )
