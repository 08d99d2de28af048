"""Line-oriented specification files.

A file has three sections::

    # comment lines before the first section form the header
    [signals]
    visible = req
    hidden = sens
    controlled = open
    guided = high

    [spec]
    formula = G (req -> F open)
    formula = G F !open

    [engine]
    memory = 2
    bound_max = 16

Text after ``#`` is a comment.  Signal lists are separated by commas or
whitespace.  Repeated ``formula`` lines are conjoined in order.  Unknown
sections and keys are errors.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .logic import Formula, SignalPartition, conjunction, parse_formula
from .synth import SolverConfig


class SpecFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


SIGNAL_KEYS = ("visible", "hidden", "controlled", "guided")

# engine key -> (SolverConfig field, parser)
ENGINE_KEYS = {
    "memory": ("memory", int),
    "bound_initial": ("bound_initial", int),
    "bound_growth": ("bound_growth", int),
    "bound_max": ("bound_max", int),
    "program_mode": ("program_mode", str),
    "max_atoms": ("max_atoms", int),
    "program_cap": ("program_cap", int),
    "time_budget": ("time_budget", float),
    "max_positions": ("max_positions", int),
}

_SIGNAL = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class SpecFile:
    partition: SignalPartition
    formulas: tuple[str, ...]
    engine: tuple[tuple[str, str], ...] = ()  # raw key/value pairs in file order
    header: tuple[str, ...] = field(default=(), compare=False)

    @property
    def phi(self) -> Formula:
        return conjunction([parse_formula(text, self.partition) for text in self.formulas])

    def config(self, **overrides) -> SolverConfig:
        values = {}
        for key, raw in self.engine:
            name, conv = ENGINE_KEYS[key]
            values[name] = conv(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig(**values)

    def to_text(self) -> str:
        lines = list(self.header)
        if lines:
            lines.append("")
        lines.append("[signals]")
        for key in SIGNAL_KEYS:
            lines.append(f"{key} = {', '.join(getattr(self.partition, key))}".rstrip())
        lines += ["", "[spec]"]
        lines += [f"formula = {text}" for text in self.formulas]
        if self.engine:
            lines += ["", "[engine]"]
            lines += [f"{k} = {v}" for k, v in self.engine]
        return "\n".join(lines) + "\n"


def _signals(value: str, line: int) -> tuple[str, ...]:
    names = tuple(x for x in re.split(r"[,\s]+", value.strip()) if x)
    for n in names:
        if not _SIGNAL.match(n):
            raise SpecFileError(f"invalid signal name {n!r}", line)
    if len(set(names)) != len(names):
        raise SpecFileError("duplicate signal in list", line)
    return names


def parse_spec(text: str) -> SpecFile:
    header: list[str] = []
    section = None
    signals: dict[str, tuple[str, ...]] = {}
    formulas: list[tuple[int, str]] = []
    engine: list[tuple[str, str]] = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            if section is None and line:
                header.append(line)
            continue
        line = line.split("#", 1)[0].rstrip()  # trailing comment
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            section = m.group(1)
            if section not in ("signals", "spec", "engine"):
                raise SpecFileError(f"unknown section [{section}]", no)
            continue
        if section is None:
            raise SpecFileError("content before the first section", no)
        if "=" not in line:
            raise SpecFileError("expected 'key = value'", no)
        key, value = (x.strip() for x in line.split("=", 1))
        if section == "signals":
            if key not in SIGNAL_KEYS:
                raise SpecFileError(f"unknown signals key {key!r}", no)
            if key in signals:
                raise SpecFileError(f"repeated key {key!r}", no)
            signals[key] = _signals(value, no)
        elif section == "spec":
            if key != "formula":
                raise SpecFileError(f"unknown spec key {key!r}", no)
            if not value:
                raise SpecFileError("empty formula", no)
            formulas.append((no, value))
        else:
            if key not in ENGINE_KEYS:
                raise SpecFileError(f"unknown engine key {key!r}", no)
            if any(k == key for k, _ in engine):
                raise SpecFileError(f"repeated key {key!r}", no)
            try:
                ENGINE_KEYS[key][1](value)
            except ValueError:
                raise SpecFileError(f"bad value for {key}: {value!r}", no) from None
            engine.append((key, value))
    if not formulas:
        raise SpecFileError("no formula given")
    try:
        partition = SignalPartition(*(signals.get(k, ()) for k in SIGNAL_KEYS))
    except ValueError as exc:
        raise SpecFileError(str(exc)) from None
    for no, text in formulas:
        try:
            parse_formula(text, partition)
        except ValueError as exc:
            raise SpecFileError(str(exc), no) from None
    spec = SpecFile(partition, tuple(t for _, t in formulas), tuple(engine), tuple(header))
    try:
        spec.config()
    except ValueError as exc:
        raise SpecFileError(str(exc)) from None
    return spec


def load_spec(path) -> SpecFile:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())

