"""Command-line entry point.

Exit status: 0 when every check passes, 1 when a violation is found (a
witness file is written) or a chronicle fails validity, 2 on usage, parse or
I/O errors.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path
from typing import Optional

from . import capabilities as caplib
from .campaign import GEN_ENTITIES, gen_config
from .chronicle import ChronicleError
from .codec import MalformedFile, dumps_json, load, save, to_dot
from .oracle import Violation, check_chronicle, gen_chronicle, replay
from .scenario import ScenarioError, bundled, bundled_names, load_scenario
from .sim import SimulationError, World, check_convergence, random_config

OK, VIOLATION, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_seeds(text: str) -> range:
    """``A..B`` is the half-open range [A, B); a bare ``N`` is the single seed N."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            return range(int(a), int(b))
        n = int(text)
        return range(n, n + 1)
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; expected A..B") from None


def _preset(text: str) -> caplib.PresetTag:
    try:
        return caplib.PresetTag.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _entities(text: Optional[str]) -> Optional[list]:
    if text is None:
        return None
    return [x for x in (p.strip() for p in text.split(",")) if x]


def _write_witness(w: Violation, out: Path, stem: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.witness"
    path.write_bytes(w.to_bytes())
    return path


# -- run ------------------------------------------------------------------------

def cmd_run(args) -> int:
    target = args.scenario
    path = Path(target)
    if not path.exists() and target in bundled_names():
        path = bundled(target)
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    cfg = sc.config
    if args.seed is not None:
        cfg.seed = args.seed
    if args.drop_rate is not None:
        cfg.drop_rate = args.drop_rate
    if args.max_delay is not None:
        cfg.max_delay = args.max_delay
    out = Path(args.out)
    try:
        world = World(cfg)
        world.run()
        problem = check_convergence(world)
    except (SimulationError, KeyError) as exc:
        print(f"error: scenario {sc.name}: {exc}", file=sys.stderr)
        return USAGE
    if problem is None:
        for who in world.honest():
            problem = check_chronicle(world.chronicle(who))
            if problem is not None:
                break
    expected = sc.expect.get("names")
    mismatch = None
    for who in world.honest():
        g = world.chronicle(who)
        names = caplib.names(g)
        print(f"{who} events={len(g)} names={names} caps={sorted(e.id.short for e in caplib.caps(g))}")
        if expected is not None and sorted(map(str, expected)) != names and mismatch is None:
            mismatch = f"{who} holds names {names}, scenario expects {sorted(map(str, expected))}"
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / f"{sc.name}.trace"
    trace_path.write_text("\n".join(world.trace) + "\n")
    print(f"trace {trace_path} sha256={world.trace_hash()}")
    if problem is not None:
        wpath = _write_witness(problem, out, sc.name)
        print(f"VIOLATION {problem}; witness {wpath}")
        return VIOLATION
    if mismatch is not None:
        print(f"EXPECTATION FAILED {mismatch}")
        return VIOLATION
    print(f"{sc.name}: converged, all checks passed")
    return OK


# -- fuzz -------------------------------------------------------------------------

def _repro(args, seed: int) -> str:
    parts = ["groupchronicle", "fuzz", "--mode", args.mode, "--preset", args.preset,
             "--seeds", f"{seed}..{seed + 1}", "--max-events", str(args.max_events)]
    if args.byz is not None:
        parts += ["--byz", args.byz]
    if args.mode == "sim":
        parts += ["--replicas", str(args.replicas), "--drop-rate", str(args.drop_rate or 0.0),
                  "--max-delay", str(args.max_delay if args.max_delay is not None else 3)]
    return " ".join(shlex.quote(p) for p in parts)


def _fuzz_one(args, tag, seed: int) -> Optional[Violation]:
    byz = _entities(args.byz)
    if args.mode == "chronicle":
        return check_chronicle(gen_chronicle(gen_config(tag, seed, args.max_events, byz)))
    n = args.replicas
    cfg = random_config(seed, tag, n, 0, args.drop_rate or 0.0,
                        args.max_delay if args.max_delay is not None else 3, args.max_events,
                        byz_names=byz or ())
    world = World(cfg).run()
    return check_convergence(world)


def cmd_fuzz(args) -> int:
    tag = _preset(args.preset)
    seeds = parse_seeds(args.seeds)
    byz = _entities(args.byz)
    if args.mode == "chronicle" and not 1 <= args.max_events <= 16:
        raise UsageError("--max-events must be in 1..16 for chronicle fuzzing")
    if byz and args.mode == "chronicle" and not set(byz) < set(GEN_ENTITIES):
        raise UsageError(f"--byz must be a strict subset of {','.join(GEN_ENTITIES)}")
    for seed in seeds:
        try:
            w = _fuzz_one(args, tag, seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if w is not None:
            path = _write_witness(w, Path(args.out), f"fuzz-{tag.value}-{seed}")
            print(f"VIOLATION at seed {seed}: {w}")
            print(f"witness {path}")
            print(f"reproduce: {_repro(args, seed)}")
            return VIOLATION
    print(f"{len(seeds)} cases, 0 violations ({tag.value}, mode {args.mode})")
    return OK


# -- check / export / replay ----------------------------------------------------------

def _load(path: str):
    try:
        return load(path)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except MalformedFile as exc:
        raise UsageError(f"{path}: malformed chronicle file: {exc}") from None


def cmd_check(args) -> int:
    g = _load(args.file)
    if not g.valid():
        print(f"{args.file}: INVALID (needs exactly one create event comparable to every event)")
        return VIOLATION
    for e in g:
        v = caplib.authorizes(g, e)
        print(f"event {e.id.hex()} {e.kind.label} {e.voc.sbj} {'authorized' if v else 'unauthorized'} {v.reason}")
    for e in sorted(caplib.caps(g), key=lambda x: x.id):
        gr = e.voc
        print(f"cap {e.id.hex()} {gr.cap.label} -> {gr.obj}")
    for e in sorted(caplib.values(g), key=lambda x: x.id):
        print(f"value {e.id.hex()} {e.voc.name}")
    print(f"{args.file}: valid, {len(g)} events")
    return OK


def cmd_export(args) -> int:
    g = _load(args.file)
    if args.format == "json":
        text = dumps_json(g)
    else:
        verdict = None
        if g.valid():
            verdict = lambda e: str(caplib.authorizes(g, e).reason)
        text = to_dot(g, verdict)
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return OK


def cmd_replay(args) -> int:
    try:
        w = Violation.from_bytes(Path(args.file).read_bytes())
    except OSError as exc:
        raise UsageError(f"{args.file}: {exc.strerror}") from None
    except (ValueError, MalformedFile, KeyError) as exc:
        raise UsageError(f"{args.file}: malformed witness: {exc}") from None
    again = replay(w)
    if again is None:
        print(f"not reproduced: {w}")
        return OK
    print(f"reproduced: {again}")
    return VIOLATION


def cmd_save_fixture(args) -> int:
    from .fixtures import all_fixtures

    for f in all_fixtures():
        if f.name.lower() == args.name.lower():
            save(f.chronicle, args.out)
            print(f"wrote {f.name} to {args.out}")
            return OK
    raise UsageError(f"unknown fixture {args.name!r}")


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="groupchronicle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or bundled scenario name")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--drop-rate", type=float)
    r.add_argument("--max-delay", type=int)
    r.add_argument("--out", default=".", help="directory for the trace log and witness")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fuzz", help="seeded falsification campaign")
    f.add_argument("--preset", default="AllowRevokeLater")
    f.add_argument("--seeds", default="0..100", help="half-open range A..B")
    f.add_argument("--mode", choices=("chronicle", "sim"), default="chronicle")
    f.add_argument("--max-events", type=int, default=16,
                   help="chronicle size (chronicle mode) or logging steps (sim mode)")
    f.add_argument("--byz", help="comma-separated Byzantine entities; by default the "
                                 "Byzantine entity rotates with the seed (chronicle mode)")
    f.add_argument("--replicas", type=int, default=4)
    f.add_argument("--drop-rate", type=float)
    f.add_argument("--max-delay", type=int)
    f.add_argument("--out", default=".", help="directory for witness files")
    f.set_defaults(func=cmd_fuzz)

    c = sub.add_parser("check", help="verify a chronicle file and print verdicts")
    c.add_argument("file")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("export", help="export a chronicle file")
    e.add_argument("file")
    e.add_argument("--format", choices=("dot", "json"), default="dot")
    e.add_argument("--out", help="output path (default: standard output)")
    e.set_defaults(func=cmd_export)

    w = sub.add_parser("replay", help="re-run the checker recorded in a witness file")
    w.add_argument("file")
    w.set_defaults(func=cmd_replay)

    s = sub.add_parser("fixture", help="write a named fixture chronicle (S0..S3)")
    s.add_argument("name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_save_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except ChronicleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
