"""Gate-level netlist IR with ISCAS ``.bench`` and structural Verilog readers."""
from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable


class CellKind(str, Enum):
    INPUT = "INPUT"
    CONST0 = "CONST0"
    CONST1 = "CONST1"
    AND = "AND"
    NAND = "NAND"
    OR = "OR"
    NOR = "NOR"
    XOR = "XOR"
    XNOR = "XNOR"
    NOT = "NOT"
    BUF = "BUF"
    DFF = "DFF"

    @property
    def is_source(self) -> bool:
        return self in SOURCE_KINDS


SOURCE_KINDS = frozenset({CellKind.INPUT, CellKind.CONST0, CellKind.CONST1})

_GATE_ALIASES = {
    "AND": CellKind.AND,
    "NAND": CellKind.NAND,
    "OR": CellKind.OR,
    "NOR": CellKind.NOR,
    "XOR": CellKind.XOR,
    "XNOR": CellKind.XNOR,
    "NOT": CellKind.NOT,
    "INV": CellKind.NOT,
    "BUF": CellKind.BUF,
    "BUFF": CellKind.BUF,
    "DFF": CellKind.DFF,
}
_SINGLE_INPUT = {CellKind.NOT, CellKind.BUF, CellKind.DFF}


class NetlistError(ValueError):
    """Structural problems; ``violations`` lists every one found."""

    def __init__(self, violations: list[str], source: str = ""):
        self.violations = list(violations)
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(self.violations))


class NetlistSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, source: str = ""):
        self.line = line
        loc = f"{source}:{line}" if source else f"line {line}"
        ValueError.__init__(self, f"{loc}: {message}")
        self.violations = [message]
        self.source = source


class UnsupportedConstruct(NetlistSyntaxError):
    pass


class CombinationalCycle(NetlistError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__(["combinational cycle: " + " -> ".join(cycle + cycle[:1])])


@dataclass(frozen=True)
class Cell:
    id: str
    kind: CellKind
    inputs: tuple[str, ...]
    output: str

    @property
    def clocked(self) -> bool:
        # fully synchronous SFQ: every logic gate takes a clock pulse
        return not self.kind.is_source


@dataclass(frozen=True)
class Net:
    name: str
    drivers: tuple[str, ...]
    sinks: tuple[str, ...]  # one entry per input pin
    output_taps: int = 0

    @property
    def driver(self) -> str | None:
        return self.drivers[0] if len(self.drivers) == 1 else None

    def fanout(self, count_output_taps: bool = True) -> int:
        return len(self.sinks) + (self.output_taps if count_output_taps else 0)


@dataclass(frozen=True)
class Netlist:
    name: str
    cells: dict[str, Cell]
    nets: dict[str, Net]
    primary_inputs: tuple[str, ...]
    primary_outputs: tuple[str, ...]

    @classmethod
    def build(cls, name: str, cells: Iterable[Cell], primary_outputs: Iterable[str] = ()) -> "Netlist":
        cell_map: dict[str, Cell] = {}
        dup_ids = []
        for c in cells:
            if c.id in cell_map:
                dup_ids.append(c.id)
            cell_map[c.id] = c
        if dup_ids:
            raise NetlistError([f"duplicate cell id: {d}" for d in dup_ids], name)
        pos = tuple(primary_outputs)
        drivers = defaultdict(list)
        sinks = defaultdict(list)
        for c in cell_map.values():
            drivers[c.output].append(c.id)
            for i in c.inputs:
                sinks[i].append(c.id)
        taps = Counter(pos)
        names = list(dict.fromkeys([*drivers, *sinks, *pos]))
        nets = {
            n: Net(n, tuple(drivers.get(n, ())), tuple(sinks.get(n, ())), taps.get(n, 0))
            for n in names
        }
        pis = tuple(c.output for c in cell_map.values() if c.kind is CellKind.INPUT)
        return cls(name, cell_map, nets, pis, pos)

    @property
    def logic_cells(self) -> list[Cell]:
        return [c for c in self.cells.values() if c.clocked]

    def driver_of(self, net: str) -> Cell | None:
        d = self.nets[net].driver
        return self.cells.get(d) if d is not None else None


# ---------------------------------------------------------------- validation


def validate_netlist(n: Netlist) -> list[str]:
    out = []
    for net in n.nets.values():
        if len(net.drivers) > 1:
            out.append(f"multiple drivers: {net.name}")
        elif not net.drivers:
            out.append(f"undriven net: {net.name}")
        for s in set(net.sinks):
            if s not in n.cells:
                out.append(f"unknown sink cell: {s} on net {net.name}")
    for c in n.cells.values():
        if not c.kind.is_source and not c.inputs:
            out.append(f"cell {c.id} ({c.kind.value}) has no inputs")
        if c.kind in _SINGLE_INPUT and len(c.inputs) > 1:
            out.append(f"cell {c.id} ({c.kind.value}) takes one input, got {len(c.inputs)}")
    cycle = find_cycle(n)
    if cycle:
        out.append("combinational cycle: " + " -> ".join(cycle + cycle[:1]))
    return out


def _successors(n: Netlist) -> dict[str, list[str]]:
    succ = {cid: [] for cid in n.cells}
    for net in n.nets.values():
        for d in net.drivers:
            if d in succ:
                succ[d].extend(s for s in dict.fromkeys(net.sinks) if s in n.cells)
    return succ


def find_cycle(n: Netlist) -> list[str]:
    """One cycle of cell ids, or [] when the graph is acyclic."""
    succ = _successors(n)
    color = dict.fromkeys(succ, 0)
    for root in succ:
        if color[root]:
            continue
        stack = [(root, iter(succ[root]))]
        path = [root]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                path.pop()
            elif color[nxt] == 1:
                return path[path.index(nxt):]
            elif color[nxt] == 0:
                color[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(succ[nxt])))
    return []


def _checked(n: Netlist) -> Netlist:
    problems = validate_netlist(n)
    if problems:
        raise NetlistError(problems, n.name)
    return n


# ------------------------------------------------------------------- .bench

_BENCH_IO = re.compile(r"^(INPUT|OUTPUT)\s*\(\s*([^()\s]+)\s*\)$", re.I)
_BENCH_GATE = re.compile(r"^([^=\s]+)\s*=\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)$")


def parse_bench(text: str, name: str = "bench", source: str = "") -> Netlist:
    cells = []
    outputs = []
    driven: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _BENCH_IO.match(line)
        if m:
            kw, net = m.group(1).upper(), m.group(2)
            if kw == "INPUT":
                _claim(driven, net, lineno, source)
                cells.append(Cell(net, CellKind.INPUT, (), net))
            else:
                outputs.append(net)
            continue
        m = _BENCH_GATE.match(line)
        if not m:
            raise NetlistSyntaxError(f"cannot parse {line!r}", lineno, source)
        out, gate, args = m.groups()
        kind = _GATE_ALIASES.get(gate.upper())
        if kind is None:
            raise NetlistSyntaxError(f"unknown gate kind {gate!r}", lineno, source)
        ins = tuple(a.strip() for a in args.split(",") if a.strip())
        if not ins:
            raise NetlistSyntaxError(f"gate {out} has no inputs", lineno, source)
        _claim(driven, out, lineno, source)
        cells.append(Cell(out, kind, ins, out))
    return _checked(Netlist.build(name, cells, outputs))


def _claim(driven: dict[str, int], net: str, lineno: int, source: str):
    if net in driven:
        raise NetlistSyntaxError(f"multiple drivers: {net} (first driven on line {driven[net]})", lineno, source)
    driven[net] = lineno


# ------------------------------------------------------- structural Verilog

_V_PRIMS = {"and", "nand", "or", "nor", "xor", "xnor", "not", "buf"}
_V_IDENT = r"[A-Za-z_][A-Za-z0-9_$]*|\\\S+"
_V_INST = re.compile(rf"^({'|'.join(_V_PRIMS)})\s*(?:({_V_IDENT})\s*)?\((.*)\)$", re.S)
_V_ASSIGN = re.compile(rf"^assign\s+({_V_IDENT})\s*=\s*(.+)$", re.S)
_V_CONST = re.compile(r"^1'[bB]([01])$")
_V_UNSUPPORTED = ("always", "initial", "reg", "function", "task", "generate", "parameter", "localparam")


def _strip_verilog_comments(text: str) -> str:
    # keep newlines so statement line numbers survive
    text = re.sub(r"/\*.*?\*/", lambda m: "\n" * m.group(0).count("\n"), text, flags=re.S)
    return re.sub(r"//[^\n]*", "", text)


def _split_names(body: str) -> list[str]:
    return [x.strip() for x in body.split(",") if x.strip()]


def parse_verilog_subset(text: str, name: str | None = None, source: str = "") -> Netlist:
    """Read one flat module of primitive gate instances.

    ``assign a = b;`` merges ``a`` into ``b`` (a plain wire) and
    ``assign a = 1'b0;`` ties ``a`` to a constant; any other ``assign`` and
    all behavioural constructs are rejected.
    """
    text = _strip_verilog_comments(text)
    module = None
    inputs: list[str] = []
    outputs: list[str] = []
    gates: list[tuple[int, str, str, list[str]]] = []
    aliases: dict[str, str] = {}
    consts: dict[str, int] = {}
    ended = False
    line = 1
    for stmt in text.split(";"):
        lead = len(stmt) - len(stmt.lstrip())
        lineno = line + stmt[:lead].count("\n")
        line += stmt.count("\n")
        s = " ".join(stmt.split())
        while s.startswith("endmodule"):
            if module is None:
                raise NetlistSyntaxError("endmodule without module", lineno, source)
            ended = True
            s = s[len("endmodule"):].strip()
        if not s:
            continue
        if ended:
            raise UnsupportedConstruct("only a single module is supported", lineno, source)
        head = s.split(None, 1)[0].split("(", 1)[0]
        if head in _V_UNSUPPORTED or s.startswith("@"):
            raise UnsupportedConstruct(f"unsupported construct '{head}'", lineno, source)
        if "[" in s and head in ("input", "output", "wire"):
            raise UnsupportedConstruct("vector declarations are not supported", lineno, source)
        if head == "module":
            if module is not None:
                raise UnsupportedConstruct("only a single module is supported", lineno, source)
            m = re.match(rf"module\s+({_V_IDENT})", s)
            if not m:
                raise NetlistSyntaxError(f"bad module header {s!r}", lineno, source)
            module = m.group(1)
            continue
        if module is None:
            raise NetlistSyntaxError(f"statement outside a module: {s!r}", lineno, source)
        if head == "input":
            inputs += _split_names(s[len("input"):])
        elif head == "output":
            outputs += _split_names(s[len("output"):])
        elif head == "wire":
            pass
        elif head == "assign":
            m = _V_ASSIGN.match(s)
            if not m:
                raise NetlistSyntaxError(f"bad assign {s!r}", lineno, source)
            lhs, rhs = m.group(1), m.group(2).strip()
            c = _V_CONST.match(rhs)
            if c:
                consts[lhs] = int(c.group(1))
            elif re.fullmatch(_V_IDENT, rhs):
                aliases[lhs] = rhs
            else:
                raise UnsupportedConstruct(f"assign with an expression: {s!r}", lineno, source)
        elif head in _V_PRIMS:
            m = _V_INST.match(s)
            if not m:
                raise NetlistSyntaxError(f"bad gate instance {s!r}", lineno, source)
            prim, inst, pins = m.group(1), m.group(2), _split_names(m.group(3))
            if any("." in p or "(" in p for p in pins):
                raise UnsupportedConstruct("named port connections are not supported", lineno, source)
            if len(pins) < 2:
                raise NetlistSyntaxError(f"gate needs an output and an input: {s!r}", lineno, source)
            if prim in ("not", "buf") and len(pins) > 2:
                raise UnsupportedConstruct(f"multi-output {prim} is not supported", lineno, source)
            gates.append((lineno, prim, inst or f"{prim}_{len(gates)}", pins))
        else:
            raise UnsupportedConstruct(f"unsupported construct '{head}'", lineno, source)
    if module is None:
        raise NetlistSyntaxError("no module found", 1, source)

    def resolve(net: str) -> str:
        seen = set()
        while net in aliases:
            if net in seen:
                raise NetlistError([f"assign loop through {net}"], source or module)
            seen.add(net)
            net = aliases[net]
        return net

    cells = [Cell(pi, CellKind.INPUT, (), pi) for pi in inputs]
    for net, v in consts.items():
        cells.append(Cell(f"{net}$tie{v}", CellKind.CONST1 if v else CellKind.CONST0, (), net))
    for _, prim, inst, pins in gates:
        kind = _GATE_ALIASES[prim.upper()]
        cells.append(Cell(inst, kind, tuple(resolve(p) for p in pins[1:]), resolve(pins[0])))
    aliased_driven = [a for a in aliases if any(c.output == a for c in cells)]
    if aliased_driven:
        raise NetlistError([f"multiple drivers: {a}" for a in aliased_driven], source or module)
    pos = [resolve(o) for o in outputs]
    return _checked(Netlist.build(name or module, cells, pos))


def load_netlist(path: str | Path) -> Netlist:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".bench":
        return parse_bench(text, name=path.stem, source=str(path))
    if path.suffix.lower() == ".v":
        return parse_verilog_subset(text, name=path.stem, source=str(path))
    raise NetlistError([f"unknown netlist format {path.suffix!r}"], str(path))


# ------------------------------------------------------------------ analyses


@dataclass(frozen=True)
class FanoutProfile:
    per_net: dict[str, int]
    histogram: dict[int, int]
    max_fanout: int


def fanout_profile(n: Netlist, count_output_taps: bool = True) -> FanoutProfile:
    per_net = {name: net.fanout(count_output_taps) for name, net in n.nets.items()}
    hist = Counter(per_net.values())
    return FanoutProfile(per_net, dict(sorted(hist.items())), max(per_net.values(), default=0))


@dataclass(frozen=True)
class StageMap:
    per_cell: dict[str, int]
    stage_sizes: dict[int, int] = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return max(self.stage_sizes, default=0)

    def largest_stages(self) -> list[int]:
        if not self.stage_sizes:
            return []
        top = max(self.stage_sizes.values())
        return [s for s, k in self.stage_sizes.items() if k == top]

    def cells_in(self, stage: int) -> list[str]:
        return sorted(c for c, s in self.per_cell.items() if s == stage)


def levelize(n: Netlist) -> StageMap:
    """Longest-path depth of every logic cell; cells fed only by sources are stage 1."""
    succ = _successors(n)
    indeg = dict.fromkeys(succ, 0)
    for outs in succ.values():
        for s in outs:
            indeg[s] += 1
    depth = {cid: 0 for cid in succ}
    ready = [cid for cid, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        cid = ready.pop()
        seen += 1
        base = depth[cid] + (0 if n.cells[cid].kind.is_source else 1)
        depth[cid] = base
        for s in succ[cid]:
            if depth[s] < base:
                depth[s] = base
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if seen < len(succ):
        raise CombinationalCycle(find_cycle(n))
    per_cell = {cid: depth[cid] for cid, c in n.cells.items() if c.clocked}
    sizes = Counter(per_cell.values())
    return StageMap(per_cell, dict(sorted(sizes.items())))


def profile_report(n: Netlist, count_output_taps: bool = True) -> dict:
    """JSON-shaped summary with a stable key order."""
    prof = fanout_profile(n, count_output_taps)
    stages = levelize(n)
    return {
        "netlist": n.name,
        "cells": len(n.logic_cells),
        "primary_inputs": len(n.primary_inputs),
        "primary_outputs": len(n.primary_outputs),
        "max_fanout": prof.max_fanout,
        "fanout_histogram": {str(k): v for k, v in prof.histogram.items()},
        "stages": {str(k): v for k, v in stages.stage_sizes.items()},
    }
