"""Command-line front end: ``sge synth | verify | simulate | transform | analyze``.

Exit codes: 0 positive answer, 1 negative answer (not realizable within the
bound, or the TGE violates the formula), 2 unknown (budget exhausted),
10 bad usage, 11 invalid input file or argument, 12 TGE/spec partition mismatch.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import random
import re
import sys
import tempfile
import time
from typing import Sequence

from . import __version__
from .automata import LassoWord, eval_ltl_lasso, nbw_from_ltl
from .logic import (
    Not,
    SignalPartition,
    assignments,
    atoms as formula_atoms,
    cl_hidden,
    cl_hidden_f,
    format_assignment,
    hidden_classes,
    pretty,
    prop_set,
)
from .specfile import SpecFile, SpecFileError, load_spec
from .synth import MODES, SizingError, solve
from .tge import (
    Computation,
    Tge,
    Transducer,
    count_programs,
    delegate_outputs,
    format_program,
    program_ids,
    reveal_inputs,
    run_tge,
    tge_from_dict,
    tge_to_dict,
    tge_to_dot,
    tge_to_transducer,
    tighten_tge,
    transducer_to_tge,
    verify_tge,
)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 10
EXIT_INPUT = 11
EXIT_MISMATCH = 12

OUTCOME_EXIT = {"Realizable": EXIT_OK, "NotRealizableWithinBound": EXIT_NEGATIVE, "Unknown": EXIT_UNKNOWN}
DEFAULT_OUT = "sge-out"
TABLE_CAP = 64


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# small helpers


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def digest(*paths: str) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def parse_signal_list(text: str) -> tuple[str, ...]:
    return tuple(x for x in re.split(r"[,\s]+", text.strip()) if x)


_STEPS = re.compile(r"\s*(\{[^{}]*\}\s*(,\s*\{[^{}]*\}\s*)*)?")


def parse_lasso(text: str) -> LassoWord | list[frozenset[str]]:
    """``"{i} ; {i,o},{}"``: prefix steps, then the period.  Without ``;`` the word is finite."""

    def steps(part: str) -> list[frozenset[str]]:
        if not _STEPS.fullmatch(part):
            raise CliError(f"bad lasso steps {part.strip()!r}; expected brace sets like {{i}},{{}}")
        return [frozenset(parse_signal_list(x)) for x in re.findall(r"\{([^{}]*)\}", part)]

    if text.count(";") > 1:
        raise CliError("a lasso literal has at most one ';'")
    if ";" not in text:
        return steps(text)
    prefix, period = text.split(";")
    period_steps = steps(period)
    if not period_steps:
        raise CliError("lasso period must be non-empty")
    return LassoWord(steps(prefix), period_steps)


def format_lasso(w: LassoWord, order: Sequence[str]) -> str:
    def fmt(xs):
        return ",".join(format_assignment(a, order) for a in xs)

    return f"{fmt(w.prefix)} ; {fmt(w.period)}".strip()


def load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not valid JSON ({exc})") from None


def load_tge(path: str) -> Tge:
    data = load_json(path)
    try:
        return tge_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{path}: malformed TGE ({exc})") from None


def load_transducer(path: str) -> Transducer:
    data = load_json(path)
    try:
        return Transducer.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{path}: malformed transducer ({exc})") from None


def read_spec(path: str) -> SpecFile:
    try:
        return load_spec(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except SpecFileError as exc:
        raise CliError(f"{path}: {exc}") from None


def parse_schedule(text: str | None) -> dict:
    if text is None:
        return {}
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise CliError(f"bad --bound-schedule {text!r}; expected INITIAL,GROWTH[,MAX]", EXIT_USAGE) from None
    if not 2 <= len(nums) <= 3:
        raise CliError(f"bad --bound-schedule {text!r}; expected INITIAL,GROWTH[,MAX]", EXIT_USAGE)
    out = {"bound_initial": nums[0], "bound_growth": nums[1]}
    if len(nums) == 3:
        out["bound_max"] = nums[2]
    return out


def format_partition(p: SignalPartition) -> str:
    return " ".join(f"{k}={{{','.join(getattr(p, n))}}}" for k, n in zip("VHCG", ("visible", "hidden", "controlled", "guided")))


def format_set(preds) -> str:
    return "{" + ", ".join(pretty(q) for q in preds) + "}"


def computation_table(t: Tge, comp: Computation) -> list[str]:
    part = t.partition
    ids = program_ids(t)
    rows = [("j", "v", "h", "state", "c", "program", "memory", "g")]
    for j, st in enumerate(comp.steps, start=1):
        rows.append(
            (
                str(j),
                format_assignment(st.visible, part.visible),
                format_assignment(st.hidden, part.hidden),
                f"s{st.state}->s{st.next_state}",
                format_assignment(st.controlled, part.controlled),
                ids.get(st.program, "?"),
                f"m{st.memory}->m{st.next_memory}",
                format_assignment(st.guided, part.guided),
            )
        )
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    if comp.loop_start is not None:
        lines.append(f"loop: after step {len(comp.steps)} continue with step {comp.loop_start + 1}")
    return lines


class Run:
    """Collects the report of one invocation."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.start = time.monotonic()
        self.report: dict = {"tool": "sge", "version": __version__, "command": command, "seed": args.seed}
        self.artifacts: dict[str, str] = {}

    @property
    def out_dir(self) -> str | None:
        return self.args.out

    def emit(self, name: str, text: str, key: str) -> str:
        out = self.out_dir or DEFAULT_OUT
        path = os.path.join(out, name)
        write_atomic(path, text)
        self.artifacts[key] = path
        return path

    def finish(self, outcome: str, code: int, always: bool = False) -> int:
        self.report["outcome"] = outcome
        self.report["exit_code"] = code
        self.report["artifacts"] = dict(sorted(self.artifacts.items()))
        self.report["wall_time"] = round(time.monotonic() - self.start, 6)
        self.report["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        if always or self.out_dir:
            path = os.path.join(self.out_dir or DEFAULT_OUT, "report.json")
            write_atomic(path, dump_json(self.report))
        return code


def _emit_automaton(run: Run, phi) -> None:
    if run.args.emit_automaton:
        bad = nbw_from_ltl(Not(phi), formula_atoms(phi))
        path = run.emit("automaton.json", dump_json(bad.to_dict()), "automaton")
        print(f"automaton for the negated formula: {bad.num_states} states -> {path}")


def _check_atoms(phi, max_atoms: int | None) -> None:
    if max_atoms is not None and len(formula_atoms(phi)) > max_atoms:
        raise CliError(f"formula has {len(formula_atoms(phi))} atoms, above --max-atoms {max_atoms}")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    run = Run(args, "synth")
    spec = read_spec(args.spec)
    overrides = parse_schedule(args.bound_schedule)
    overrides.update(program_mode=args.program_mode, max_atoms=args.max_atoms, time_budget=args.time_budget)
    if args.memory is not None:
        overrides["memory"] = args.memory
    try:
        config = spec.config(**overrides)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    phi = spec.phi
    run.report["input"] = {"spec": args.spec, "sha256": digest(args.spec)}
    run.report["config"] = {
        "memory": config.memory,
        "bound_initial": config.bound_initial,
        "bound_growth": config.bound_growth,
        "bound_max": config.bound_max,
        "program_mode": config.program_mode,
        "max_atoms": config.max_atoms,
        "time_budget": config.time_budget,
    }
    try:
        outcome = solve(phi, spec.partition, config)
    except SizingError as exc:
        raise CliError(str(exc)) from None
    stats = dict(outcome.stats)
    stats.pop("wall_time", None)
    run.report["bound"] = outcome.bound
    run.report["stats"] = stats
    run.emit("spec.spec", spec.to_text(), "spec")
    print(f"outcome: {outcome.tag} (bound {outcome.bound}, memory {config.memory})")
    if outcome.tge is not None:
        t = outcome.tge
        run.emit("tge.json", dump_json(tge_to_dict(t)), "tge")
        if args.emit_dot:
            run.emit("tge.dot", tge_to_dot(t), "dot")
        run.report["tge"] = {"states": t.num_states, "memory": t.memory_size, "programs": len(t.programs())}
        print(f"TGE: {t.num_states} states, memory {t.memory_size}, {len(t.programs())} programs")
        ids = program_ids(t)
        for p, pid in ids.items():
            print(format_program(p, t.partition, pid))
    elif outcome.tag == "Unknown":
        print(f"budget exhausted: {stats.get('budget', '')}")
    _emit_automaton(run, phi)
    code = run.finish(outcome.tag, OUTCOME_EXIT[outcome.tag], always=True)
    print(f"report: {os.path.join(run.out_dir or DEFAULT_OUT, 'report.json')}")
    return code


def cmd_verify(args) -> int:
    run = Run(args, "verify")
    t = load_tge(args.tge)
    spec = read_spec(args.spec)
    if t.partition != spec.partition:
        raise CliError(
            f"partition mismatch: TGE has {format_partition(t.partition)}, spec has {format_partition(spec.partition)}",
            EXIT_MISMATCH,
        )
    phi = spec.phi
    _check_atoms(phi, args.max_atoms)
    run.report["input"] = {"tge": args.tge, "spec": args.spec, "sha256": digest(args.tge, args.spec)}
    res = verify_tge(t, phi)
    _emit_automaton(run, phi)
    failures = 0
    if args.samples:
        rng = random.Random(args.seed)
        for _ in range(args.samples):
            w = random_lasso(rng, t.partition.inputs)
            if not eval_ltl_lasso(phi, run_tge(t, w).word()):
                failures += 1
        run.report["samples"] = {"lassos": args.samples, "violations": failures}
        print(f"sampled {args.samples} random input lassos: {failures} violations")
    if res.realizes:
        if failures:
            raise CliError("sampled run contradicts the emptiness check", EXIT_UNKNOWN)
        print("TGE realizes the formula")
        return run.finish("Realizes", EXIT_OK)
    inputs = t.partition.inputs
    run.report["counterexample"] = {
        "input": format_lasso(res.counterexample, inputs),
        "computation": format_lasso(res.computation.word(), t.partition.signals),
    }
    print("TGE violates the formula")
    print(f"counterexample input: {format_lasso(res.counterexample, inputs)}")
    print("\n".join(computation_table(t, res.computation)))
    return run.finish("Violates", EXIT_NEGATIVE)


def random_lasso(rng: random.Random, signals: Sequence[str], max_len: int = 4) -> LassoWord:
    letters = assignments(signals)
    prefix = [rng.choice(letters) for _ in range(rng.randint(0, max_len))]
    period = [rng.choice(letters) for _ in range(rng.randint(1, max_len))]
    return LassoWord(prefix, period)


def cmd_simulate(args) -> int:
    run = Run(args, "simulate")
    t = load_tge(args.tge)
    inputs = t.partition.inputs
    if args.input is not None:
        word = parse_lasso(args.input)
    else:
        word = random_lasso(random.Random(args.seed), inputs)
    letters = list(word.prefix) + list(word.period) if isinstance(word, LassoWord) else word
    extra = set().union(*letters) - set(inputs) if letters else set()
    if extra:
        raise CliError(f"input mentions signals outside V u H: {sorted(extra)}")
    comp = run_tge(t, word)
    if isinstance(word, LassoWord):
        print(f"input: {format_lasso(word, inputs)}")
    print("\n".join(computation_table(t, comp)))
    run.report["steps"] = len(comp.steps)
    run.report["loop_start"] = comp.loop_start
    return run.finish("Simulated", EXIT_OK)


def cmd_transform(args) -> int:
    run = Run(args, "transform")
    action = args.action
    run.report["action"] = action
    if action == "from-transducer":
        src = load_transducer(args.artifact)
        before = {"states": src.num_states, "memory": 1}
        result = transducer_to_tge(src)
    else:
        src = load_tge(args.artifact)
        before = {"states": src.num_states, "memory": src.memory_size}
        try:
            if action == "to-transducer":
                result = tge_to_transducer(src)
            elif action == "reveal":
                result = reveal_inputs(src, parse_signal_list(args.signals))
            elif action == "delegate":
                result = delegate_outputs(src, parse_signal_list(args.signals))
            else:
                spec = read_spec(args.spec)
                if spec.partition != src.partition:
                    raise CliError("partition mismatch between TGE and spec", EXIT_MISMATCH)
                mode = args.program_mode or "tight"
                if mode == "full":
                    raise CliError("tighten needs --program-mode tight or f-tight", EXIT_USAGE)
                result = tighten_tge(src, spec.phi, mode)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    run.report["input"] = {"artifact": args.artifact, "sha256": digest(args.artifact)}
    if isinstance(result, Transducer):
        after = {"states": result.num_states, "memory": 1}
        path = run.emit("transducer.json", dump_json(result.to_dict()), "transducer")
    else:
        after = {"states": result.num_states, "memory": result.memory_size}
        path = run.emit("tge.json", dump_json(tge_to_dict(result)), "tge")
        if args.emit_dot:
            run.emit("tge.dot", tge_to_dot(result), "dot")
        for p, pid in program_ids(result).items():
            print(format_program(p, result.partition, pid))
    run.report["before"] = before
    run.report["after"] = after
    print(
        f"{action}: {before['states']} states / memory {before['memory']}"
        f" -> {after['states']} states / memory {after['memory']}"
    )
    print(f"wrote {path}")
    return run.finish("Transformed", EXIT_OK, always=True)


def cl_f_table(phi, partition: SignalPartition, cap: int = TABLE_CAP) -> tuple[list[str], list[int]]:
    """Rows ``F T | {h2}`` over all assignments to V u C, plus class counts per row."""
    fixed = partition.visible + partition.controlled
    header = " ".join(fixed) + " | cl_H,f" if fixed else "(no V or C signals) | cl_H,f"
    lines = [header]
    counts = []
    for j, f in enumerate(assignments(fixed)):
        if j >= cap:
            lines.append(f"... {2 ** len(fixed) - cap} more rows")
            break
        preds = cl_hidden_f(phi, partition, f)
        cells = " ".join(("T" if s in f else "F").ljust(len(s)) for s in fixed)
        lines.append(f"{cells} | {format_set(preds)}")
        counts.append(hidden_classes(preds, partition).num_classes)
    return lines, counts


def cmd_analyze(args) -> int:
    run = Run(args, "analyze")
    spec = read_spec(args.spec)
    phi = spec.phi
    _check_atoms(phi, args.max_atoms)
    part = spec.partition
    k = args.memory or spec.config().memory
    run.report["input"] = {"spec": args.spec, "sha256": digest(args.spec)}
    props = prop_set(phi)
    cl = cl_hidden(phi, part)
    index = hidden_classes(cl, part)
    full = count_programs(k, len(part.hidden), len(part.guided))
    tight = count_programs(k, len(part.hidden), len(part.guided), index.num_classes)
    table, counts = cl_f_table(phi, part)
    print(f"formula: {pretty(phi)}")
    print(f"partition: {format_partition(part)}")
    print(f"|phi| atoms: {len(formula_atoms(phi))}")
    print(f"prop: {format_set(props)}")
    print(f"cl_H: {format_set(cl)}")
    print(f"hidden classes: {index.num_classes} of {2 ** len(part.hidden)} assignments")
    print("cl_H,f table:")
    print("\n".join(table))
    print(f"f-tight class counts: {', '.join(map(str, counts))}")
    print(f"programs with memory {k}: full {full}, tight {tight}")
    run.report.update(
        prop=[pretty(q) for q in props],
        cl_hidden=[pretty(q) for q in cl],
        hidden_classes=index.num_classes,
        cl_f_table=table,
        programs={"memory": k, "full": str(full), "tight": str(tight)},
    )
    _emit_automaton(run, phi)
    return run.finish("Analyzed", EXIT_OK)


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--out", default=d(None), help=f"output directory (synth/transform default: {DEFAULT_OUT})")
    p.add_argument("--seed", type=int, default=d(0), help="seed for randomized sampling (recorded in report.json)")
    p.add_argument("--max-atoms", type=int, default=d(None), help="cap on the number of formula atoms")
    p.add_argument("--bound-schedule", default=d(None), metavar="INIT,GROWTH[,MAX]", help="counter bound schedule")
    p.add_argument("--program-mode", choices=MODES, default=d(None), help="program class searched or produced")
    p.add_argument("--emit-dot", action="store_true", default=d(False), help="also write tge.dot")
    p.add_argument("--emit-automaton", action="store_true", default=d(False), help="write the automaton for the negated formula")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sge", description="Synthesis with a guided environment.")
    parser.add_argument("--version", action="version", version=f"sge {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        return p

    p = add("synth", "decide bounded realizability and write a TGE")
    p.add_argument("spec")
    p.add_argument("--memory", type=int, help="override the memory bound k")
    p.add_argument("--time-budget", type=float, help="seconds before giving up with Unknown")
    p.set_defaults(func=cmd_synth)

    p = add("verify", "check a TGE against a spec")
    p.add_argument("tge")
    p.add_argument("spec")
    p.add_argument("--samples", type=int, default=0, help="also replay this many random input lassos")
    p.set_defaults(func=cmd_verify)

    p = add("simulate", "run a TGE on an input word")
    p.add_argument("tge")
    p.add_argument("input", nargs="?", help='input word, e.g. "{i} ; {i,o},{}" (random lasso if omitted)')
    p.set_defaults(func=cmd_simulate)

    p = add("transform", "apply a TGE transformation")
    p.add_argument("action", choices=("to-transducer", "from-transducer", "reveal", "delegate", "tighten"))
    p.add_argument("artifact", help="TGE file, or transducer file for from-transducer")
    p.add_argument("--signals", help="signals to reveal or delegate (comma separated, may be empty)")
    p.add_argument("--spec", help="spec file for tighten")
    p.set_defaults(func=cmd_transform)

    p = add("analyze", "print the predicate analysis of a spec")
    p.add_argument("spec")
    p.add_argument("--memory", type=int, help="memory bound used for program counts")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "transform":
        if args.action in ("reveal", "delegate") and args.signals is None:
            parser.error(f"transform {args.action} needs --signals")
        if args.action == "tighten" and not args.spec:
            parser.error("transform tighten needs --spec")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"sge: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
