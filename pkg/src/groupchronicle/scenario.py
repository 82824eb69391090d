"""YAML scenario files for the replica simulator.

A scenario names a replica roster, either a preset or explicit labelled setup
grants, network parameters, a seed and an ordered action script. Actions
refer to events by label: labelled setup grants, preset grants (named
``<capability>:<holder>``, e.g. ``assign:B``), the create event (``create``)
and any scripted event carrying ``label``.

Example::

    name: s1_concurrent_revoke
    seed: 1
    max_steps: 3
    random_actions: false
    replicas: [A, B, C]
    setup:
      creator: A
      grants:
        - {label: g_C, cap: assign, obj: C}
        - {label: g_B, cap: revoke, obj: B}
    script:
      - {step: 0, actor: B, op: revoke, grant: g_B, target: g_C, label: rv}
      - {step: 0, actor: C, op: assign, grant: g_C, name: x, label: a}
    expect:
      names: []
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .capabilities import PolicyPreset, PresetTag
from .chronicle import Assign, Capability, Grant, Revoke
from .sim import Action, SimulationError, WorldConfig


class ScenarioError(ValueError):
    pass


OPS = ("assign", "revoke", "grant", "backdate", "equivocate", "omit", "sync")


@dataclass
class Scenario:
    name: str
    config: WorldConfig
    expect: dict = field(default_factory=dict)
    source: Optional[str] = None


def _need(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"{where}: missing field '{key}'")
    return d[key]


def _cap(text, where: str) -> Capability:
    try:
        return Capability.parse(str(text))
    except ValueError:
        raise ScenarioError(f"{where}: unknown capability {text!r}") from None


def _replicas(raw, where="replicas") -> list:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError(f"{where}: expected a non-empty list")
    out = []
    for k, r in enumerate(raw):
        if isinstance(r, str):
            out.append((r, False))
        elif isinstance(r, dict):
            out.append((str(_need(r, "entity", f"{where}[{k}]")), bool(r.get("byzantine", False))))
        else:
            raise ScenarioError(f"{where}[{k}]: expected an entity name or mapping")
    return out


def _actions(raw) -> list:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ScenarioError("script: expected a list of actions")
    out = []
    for k, a in enumerate(raw):
        where = f"script[{k}]"
        if not isinstance(a, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        op = _need(a, "op", where)
        if op not in OPS:
            raise ScenarioError(f"{where}.op: unknown action {op!r}")
        step = _need(a, "step", where)
        if not isinstance(step, int) or step < 0:
            raise ScenarioError(f"{where}.step: expected a non-negative integer")
        args = {k2: v for k2, v in a.items() if k2 not in ("step", "actor", "op", "label")}
        out.append(Action(step, str(_need(a, "actor", where)), op, args, a.get("label")))
    return out


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        at = f" line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{source}:{at} YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    known = {"name", "seed", "max_steps", "random_actions", "act_rate", "replicas", "preset",
             "setup", "network", "script", "expect"}
    for key in doc:
        if key not in known:
            raise ScenarioError(f"{source}: unknown field '{key}'")
    replicas = _replicas(_need(doc, "replicas", source))
    names = [e for e, _ in replicas]
    preset = setup = None
    if "preset" in doc:
        try:
            preset = PolicyPreset(PresetTag.parse(str(doc["preset"])), names)
        except ValueError as exc:
            raise ScenarioError(f"preset: {exc}") from None
    elif "setup" in doc:
        s = doc["setup"]
        creator = str(_need(s, "creator", "setup"))
        if creator != names[0]:
            raise ScenarioError("setup.creator: must be the first replica")
        setup = []
        for k, gr in enumerate(_need(s, "grants", "setup") or []):
            where = f"setup.grants[{k}]"
            setup.append((gr.get("label"), Grant(creator, None, _cap(_need(gr, "cap", where), where + ".cap"),
                                                str(_need(gr, "obj", where)))))
    net = doc.get("network") or {}
    links = {}
    for k, link in enumerate(net.get("links") or []):
        where = f"network.links[{k}]"
        links[(str(_need(link, "src", where)), str(_need(link, "dst", where)))] = int(_need(link, "delay", where))
    try:
        config = WorldConfig(
            replicas=replicas,
            preset=preset,
            setup=setup,
            drop_rate=float(net.get("drop_rate", 0.0)),
            max_delay=int(net.get("max_delay", 0)),
            adversary_script=_actions(doc.get("script")),
            seed=int(doc.get("seed", 0)),
            max_steps=int(doc.get("max_steps", 20)),
            random_actions=bool(doc.get("random_actions", True)),
            act_rate=float(doc.get("act_rate", 0.7)),
            link_delays=links,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    for a in config.adversary_script:
        if a.actor not in names:
            raise ScenarioError(f"script: unknown actor {a.actor!r}")
    return Scenario(str(doc.get("name", Path(source).stem)), config, doc.get("expect") or {}, source)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"{p}: {exc.strerror}") from None
    return parse_scenario(text, str(p))


def bundled(name: str) -> Path:
    """Path to a scenario shipped with the package."""
    p = resources.files("groupchronicle") / "scenarios" / f"{name}.yaml"
    return Path(str(p))


def bundled_names() -> list:
    d = resources.files("groupchronicle") / "scenarios"
    return sorted(Path(str(f)).stem for f in d.iterdir() if str(f).endswith(".yaml"))


def _label(world, key, where: str):
    if key not in world.labels:
        raise SimulationError(f"{where}: unknown event label {key!r}")
    return world.labels[key]


def build_invocation(world, actor: str, op: str, args: dict):
    """Turn a scripted invocation into an Invocation signed by `actor`."""
    where = f"{actor} {op}"
    if op == "assign":
        return Assign(actor, _label(world, args["grant"], where), str(args["name"]))
    if op == "revoke":
        return Revoke(actor, _label(world, args["grant"], where), _label(world, args["target"], where))
    if op == "grant":
        return Grant(actor, _label(world, args["grant"], where), Capability.parse(str(args["cap"])), str(args["obj"]))
    raise SimulationError(f"{where}: not an invocation")
