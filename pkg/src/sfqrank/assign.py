"""Rank assignment over a netlist, amplifying-chain repair, and clock planning.

The pass follows five steps: seed the largest clocked stage from the clock
root, merge ranks across FO1 connections, merge sinks that share a source,
settle the remaining cells with the smallest sufficient rank, and plan a
clock tree that feeds every stage at its assigned ranks.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping

from .netlist import Netlist, levelize, parse_bench
from .ranks import (
    DEFAULT_LADDER,
    DEFAULT_POLICY,
    AmplifierPolicy,
    JtlChainPlan,
    RankError,
    RankLadder,
    chain_violations,
    fanout_capacity,
    plan_chain,
)
from .synth import SPLITTER_JJS, FanoutTree, TreeMode, ranked_tree

PO_TAP = "$out"  # sink name for a primary-output read; always rank 1


class StagePolicy(str, Enum):
    HIGHEST = "highest_rank"
    LOWEST = "lowest_rank"


class InfeasibleAssignment(RankError):
    pass


class RankConflict(RankError):
    def __init__(self, cells: list[str], ranks: list[int]):
        self.cells = cells
        self.ranks = ranks
        super().__init__(
            "contradictory ranks in one group: "
            + ", ".join(f"{c}=R{r}" for c, r in zip(cells, ranks))
        )


@dataclass(frozen=True)
class AssignmentOptions:
    stage_policy: StagePolicy = StagePolicy.HIGHEST
    clock_root_rank: int | None = None  # None means the ladder top
    allow_infeasible: bool = False
    # the seeded stage also forwards the clock to the following stage
    forward_tap: bool = True
    seed_stage: int | None = None  # override the argmax stage
    fixed_ranks: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "stage_policy", StagePolicy(self.stage_policy))

    def root(self, ladder: RankLadder) -> int:
        return ladder.top if self.clock_root_rank is None else ladder.check(self.clock_root_rank)


# ------------------------------------------------------------- data types


@dataclass(frozen=True)
class FanNode:
    """An amplifying chain whose output drives ``sinks`` directly plus ``children``."""

    chain: JtlChainPlan
    sinks: tuple[str, ...] = ()
    children: tuple["FanNode", ...] = ()

    @property
    def fanout(self) -> int:
        return len(self.sinks) + len(self.children)

    @property
    def jj_count(self) -> int:
        return self.chain.jj_count + sum(c.jj_count for c in self.children)

    def chains(self):
        yield self.chain
        for c in self.children:
            yield from c.chains()

    def all_sinks(self) -> list[str]:
        out = list(self.sinks)
        for c in self.children:
            out += c.all_sinks()
        return out

    def to_dict(self) -> dict:
        d = {"stages": [list(s) for s in self.chain.stages], "from": self.chain.source_rank,
             "to": self.chain.target_rank, "sinks": list(self.sinks)}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d) -> "FanNode":
        chain = JtlChainPlan(d["from"], d["to"], tuple(tuple(s) for s in d["stages"]))
        return cls(chain, tuple(d["sinks"]), tuple(cls.from_dict(c) for c in d.get("children", ())))


@dataclass(frozen=True)
class ClockLine:
    """A rank-1 tree output amplified to ``chain.target_rank`` feeding ``cells``."""

    chain: JtlChainPlan
    cells: tuple[str, ...]
    rank: int  # rank of the cells it feeds


@dataclass(frozen=True)
class ClockPlan:
    root_rank: int
    lines: tuple[ClockLine, ...]
    distribution: FanoutTree | None  # None when one line hangs off the root
    conventional_jj: int

    @property
    def jj_count(self) -> int:
        dist = self.distribution.jj_cost if self.distribution is not None else 0
        return dist + sum(ln.chain.jj_count for ln in self.lines)

    @property
    def sinks(self) -> int:
        return sum(len(ln.cells) for ln in self.lines)

    def outline(self) -> dict:
        groups = defaultdict(list)
        for ln in self.lines:
            groups[(ln.rank, ln.chain.target_rank, len(ln.cells))].append(ln)
        d = self.distribution
        return {
            "root_rank": self.root_rank,
            "lines": len(self.lines),
            "distribution": None if d is None else {
                "blocks": d.block_count, "jj": d.jj_cost, "stage_fanouts": list(d.stage_fanouts)},
            "line_groups": [
                {"count": len(v), "amplified_to": t, "fanout": k, "cell_rank": r}
                for (r, t, k), v in sorted(groups.items(), key=lambda kv: (-kv[0][1], -kv[0][2], kv[0][0]))
            ],
            "jj_ranked": self.jj_count,
            "jj_conventional": self.conventional_jj,
        }


@dataclass
class RankAssignment:
    netlist: str
    per_cell_rank: dict[str, int]
    inserted_chains: dict[str, FanNode]  # net -> repair tree rooted at the driver
    input_source_ranks: dict[str, int]
    seed_stage: int
    clock_root_rank: int
    clock_plan: ClockPlan | None = None
    violations: list = field(default_factory=list)  # only with allow_infeasible

    @property
    def data_jj(self) -> int:
        return sum(f.jj_count for f in self.inserted_chains.values())

    def to_dict(self) -> dict:
        d = {
            "netlist": self.netlist,
            "seed_stage": self.seed_stage,
            "clock_root_rank": self.clock_root_rank,
            "ranks": dict(sorted(self.per_cell_rank.items())),
            "input_source_ranks": dict(sorted(self.input_source_ranks.items())),
            "chains": {k: v.to_dict() for k, v in sorted(self.inserted_chains.items())},
        }
        if self.clock_plan is not None:
            cp = self.clock_plan
            d["clock"] = cp.outline()
            d["clock"]["line_detail"] = [
                {"stages": [list(s) for s in ln.chain.stages], "from": ln.chain.source_rank,
                 "to": ln.chain.target_rank, "cells": list(ln.cells), "rank": ln.rank}
                for ln in cp.lines
            ]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict, ladder: RankLadder = DEFAULT_LADDER,
                  policy: AmplifierPolicy = DEFAULT_POLICY) -> "RankAssignment":
        a = cls(
            d["netlist"],
            {k: int(v) for k, v in d["ranks"].items()},
            {k: FanNode.from_dict(v) for k, v in d["chains"].items()},
            {k: int(v) for k, v in d["input_source_ranks"].items()},
            int(d["seed_stage"]),
            int(d["clock_root_rank"]),
        )
        if "clock" in d:
            c = d["clock"]
            lines = tuple(
                ClockLine(JtlChainPlan(x["from"], x["to"], tuple(tuple(s) for s in x["stages"])),
                          tuple(x["cells"]), int(x["rank"]))
                for x in c["line_detail"]
            )
            a.clock_plan = _clock_plan_from_lines(lines, int(c["root_rank"]), ladder, policy)
        return a

    @classmethod
    def from_json(cls, text: str, ladder: RankLadder = DEFAULT_LADDER,
                  policy: AmplifierPolicy = DEFAULT_POLICY) -> "RankAssignment":
        return cls.from_dict(json.loads(text), ladder, policy)


# -------------------------------------------------------------- union-find


class _DSU:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # lexicographically smaller id becomes the root, for determinism
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> dict[str, list[str]]:
        g = defaultdict(list)
        for x in sorted(self.parent):
            g[self.find(x)].append(x)
        return dict(g)


def _logic_sinks(n: Netlist, net) -> list[str]:
    return [s for s in net.sinks if n.cells[s].clocked]


def rank_groups(n: Netlist) -> dict[str, list[str]]:
    """Cells forced to share a rank: FO1 pairs and sinks of one source."""
    dsu = _DSU(c.id for c in n.logic_cells)
    for net in n.nets.values():
        sinks = _logic_sinks(n, net)
        drv = net.driver
        if drv is not None and n.cells[drv].clocked and len(sinks) == 1 and net.fanout() == 1:
            dsu.union(drv, sinks[0])
        for s in sinks[1:]:
            dsu.union(sinks[0], s)
    return dsu.groups()


def propagate(n: Netlist, ranks: Mapping[str, int]) -> dict[str, int]:
    """Spread known ranks over their groups; raises RankConflict on disagreement."""
    out = dict(ranks)
    for members in rank_groups(n).values():
        known = sorted({out[m] for m in members if m in out})
        if len(known) > 1:
            who = [m for m in members if m in out]
            raise RankConflict(who, [out[m] for m in who])
        if known:
            for m in members:
                out[m] = known[0]
    return out


# ---------------------------------------------------------------- assign


def _targets(n: Netlist, net, ranks: Mapping[str, int]) -> list[tuple[str, int]]:
    t = [(s, ranks[s]) for s in _logic_sinks(n, net)]
    t += [(PO_TAP, 1)] * net.output_taps
    return t


def _fan_plan(s: int, targets: list[tuple[str, int]], ladder, policy) -> FanNode | None:
    """Cheapest-structure repair letting a rank-``s`` driver feed ``targets``; None if none needed."""
    if not targets:
        return None
    k = len(targets)
    tmax = max(r for _, r in targets)
    need = tmax + k - 1
    if need <= s:
        return None
    if need <= ladder.top:
        return FanNode(plan_chain(s, need, policy), tuple(x for x, _ in targets))
    cap = fanout_capacity(ladder.top, tmax)
    if cap < 2:
        raise InfeasibleAssignment(f"FO{k} into rank-{tmax} sinks cannot be staged below rank {ladder.top}")
    # group sinks bottom-up into full blocks; each block is entered at rank tmax
    items: list = [x for x, _ in sorted(targets, key=lambda kv: (-kv[1], kv[0]))]
    while len(items) > cap:
        nxt = []
        for i in range(0, len(items), cap):
            chunk = items[i:i + cap]
            if len(chunk) == 1:
                nxt.append(chunk[0])
                continue
            sinks = tuple(x for x in chunk if isinstance(x, str))
            kids = tuple(x for x in chunk if isinstance(x, FanNode))
            nxt.append(FanNode(plan_chain(tmax, tmax + len(chunk) - 1, policy), sinks, kids))
        items = nxt
    r = tmax + len(items) - 1
    root_chain = plan_chain(s, r, policy) if s < r else JtlChainPlan(s, s)
    return FanNode(root_chain,
                   tuple(x for x in items if isinstance(x, str)),
                   tuple(x for x in items if isinstance(x, FanNode)))


def _seed(n: Netlist, stages, ladder, opts) -> tuple[int, int, list[str]]:
    if not stages.stage_sizes:
        return 0, 0, []
    if opts.seed_stage is not None:
        stage = opts.seed_stage
        if stage not in stages.stage_sizes:
            raise InfeasibleAssignment(f"no stage {stage}")
    else:
        top = max(stages.stage_sizes.values())
        stage = min(s for s, k in stages.stage_sizes.items() if k == top)
    size = stages.stage_sizes[stage]
    root = opts.root(ladder)
    # the clock also continues to the next stage unless this is the last one
    load = size + (1 if opts.forward_tap and stage < stages.depth else 0)
    problems = []
    cap = fanout_capacity(root, 1)
    if load > cap:
        msg = (f"stage {stage} has {size} clocked cells (clock load {load}) but a rank-{root} "
               f"clock root drives at most {cap}")
        if not opts.allow_infeasible:
            raise InfeasibleAssignment(msg)
        problems.append(msg)
        rank = 1
    elif opts.stage_policy is StagePolicy.HIGHEST:
        rank = root - load + 1
    else:
        rank = 1
    return stage, rank, problems


def _ranks_and_repairs(n, stages, stage, seed_rank, ladder, policy, opts):
    problems = []

    # Step 1, plus any caller-fixed ranks
    ranks = {c: ladder.check(r) for c, r in opts.fixed_ranks.items()}
    for cid in stages.cells_in(stage):
        if cid in ranks and ranks[cid] != seed_rank:
            raise RankConflict([cid], [ranks[cid]])
        ranks[cid] = seed_rank

    # Steps 2-3
    groups = rank_groups(n)
    try:
        ranks = propagate(n, ranks)
    except RankConflict as e:
        if not opts.allow_infeasible:
            raise
        problems.append(str(e))

    # Step 4: settle unranked groups, latest stage first so their sinks are known
    member_of = {m: g for g, ms in groups.items() for m in ms}
    pending = [g for g, ms in groups.items() if ms[0] not in ranks]
    pending.sort(key=lambda g: (-max(stages.per_cell[m] for m in groups[g]), g))
    for g in pending:
        need = 1
        for m in groups[g]:
            net = n.nets[n.cells[m].output]
            tg = []
            for sk in _logic_sinks(n, net):
                same = member_of[sk] == g
                tg.append(1 if same or sk not in ranks else ranks[sk])
            tg += [1] * net.output_taps
            if tg:
                need = max(need, min(ladder.top, max(tg) + len(tg) - 1))
        # a top-rank cell cannot sit on a shared net; stay below and let repair stage the rest
        if any(n.nets[i].fanout(True) > 1 for m in groups[g] for i in n.cells[m].inputs):
            need = min(need, ladder.top - 1)
        for m in groups[g]:
            ranks[m] = need

    # amplify wherever a driver is still too weak; primary inputs get the rank they need
    chains: dict[str, FanNode] = {}
    input_ranks: dict[str, int] = {}
    for name, net in n.nets.items():
        targets = _targets(n, net, ranks)
        drv = n.cells.get(net.driver) if net.driver else None
        if drv is None or not targets:
            continue
        if drv.clocked:
            s = ranks[drv.id]
        else:
            k = len(targets)
            s = min(ladder.top, max(r for _, r in targets) + k - 1)
            input_ranks[name] = s
        try:
            plan = _fan_plan(s, targets, ladder, policy)
        except InfeasibleAssignment as e:
            if not opts.allow_infeasible:
                raise InfeasibleAssignment(f"net {name}: {e}") from None
            problems.append(f"net {name}: {e}")
            continue
        if plan is not None:
            chains[name] = plan

    return ranks, chains, input_ranks, problems


def assign_ranks(
    n: Netlist,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
    opts: AssignmentOptions | None = None,
    clock: bool = True,
) -> RankAssignment:
    opts = opts or AssignmentOptions()
    stages = levelize(n)
    stage, seed_rank, problems = _seed(n, stages, ladder, opts)
    # a high seed can leave a top-rank cell on a shared net, which no chain can repair;
    # step the seed down until the repair pass fits on the ladder
    while True:
        try:
            ranks, chains, input_ranks, extra = _ranks_and_repairs(n, stages, stage, seed_rank, ladder, policy, opts)
            break
        except InfeasibleAssignment:
            if opts.allow_infeasible or seed_rank <= 1 or opts.stage_policy is not StagePolicy.HIGHEST:
                raise
            seed_rank -= 1
    problems += extra

    a = RankAssignment(n.name, dict(sorted(ranks.items())), chains, input_ranks, stage,
                       opts.root(ladder), violations=problems)
    if clock and n.logic_cells:
        a.clock_plan = plan_clock_tree(n, a, ladder, policy)
    return a


# ------------------------------------------------------------ clock plan


def _line_cost(t: int, load: int, policy) -> int:
    return plan_chain(1, t + load - 1, policy).jj_count if t + load - 1 > 1 else 0


def _clock_plan_from_lines(lines, root, ladder, policy, conventional=None) -> ClockPlan:
    c = sum(len(ln.cells) for ln in lines)
    conv = SPLITTER_JJS * (c - 1) if conventional is None else conventional
    if len(lines) <= 1:
        return ClockPlan(root, tuple(lines), None, conv)
    dist = ranked_tree(len(lines), ladder, policy, TreeMode.RIGHT_SIZED, "paper_balanced",
                       leaf_rank=1, source_rank=root)
    return ClockPlan(root, tuple(lines), dist, conv)


def plan_clock_tree(
    n: Netlist,
    a: RankAssignment,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
) -> ClockPlan:
    """Clock sinks grouped by rank into lines; lines hang off a rank-1 distribution tree.

    Each rank group picks how many cells a line feeds; the choice is refined by
    coordinate descent on total JJs.
    """
    root = a.clock_root_rank
    by_rank = defaultdict(list)
    for c in n.logic_cells:
        by_rank[a.per_cell_rank[c.id]].append(c.id)
    groups = sorted(by_rank.items())
    caps = {t: fanout_capacity(ladder.top, t) for t, _ in groups}

    def build(loads) -> list[ClockLine]:
        lines = []
        for t, cells in groups:
            load = loads[t]
            cells = sorted(cells)
            for i in range(0, len(cells), load):
                chunk = tuple(cells[i:i + load])
                need = t + len(chunk) - 1
                lines.append(ClockLine(plan_chain(1, need, policy) if need > 1 else JtlChainPlan(1, 1), chunk, t))
        if len(lines) == 1:
            # a single line hangs straight off the clock root
            ln = lines[0]
            need = ln.rank + len(ln.cells) - 1
            ch = plan_chain(root, need, policy) if root < need else JtlChainPlan(root, root)
            lines = [ClockLine(ch, ln.cells, ln.rank)]
        return lines

    def cost(loads) -> int:
        return _clock_plan_from_lines(build(loads), root, ladder, policy).jj_count

    loads = {t: min(caps[t], len(cells)) for t, cells in groups}
    best = cost(loads)
    improved = True
    while improved:
        improved = False
        for t, cells in groups:
            for L in range(1, min(caps[t], len(cells)) + 1):
                if L == loads[t]:
                    continue
                trial = {**loads, t: L}
                c = cost(trial)
                if c < best:
                    best, loads, improved = c, trial, True
    return _clock_plan_from_lines(build(loads), root, ladder, policy)


# ---------------------------------------------------------------- verify


@dataclass(frozen=True)
class Violation:
    rule: str
    net: str | None = None
    source_rank: int | None = None
    target_rank: int | None = None
    required_jtls: int | None = None
    detail: str = ""

    def __str__(self):
        parts = []
        if self.net is not None:
            parts.append(f"net {self.net}")
        if self.source_rank is not None:
            parts.append(f"R{self.source_rank}->R{self.target_rank}")
        if self.required_jtls is not None:
            parts.append(f"needs {self.required_jtls} JTL(s)")
        if self.detail:
            parts.append(self.detail)
        return self.rule + (": " + ", ".join(parts) if parts else "")


def _check_direct(net, s, targets, ladder, policy) -> list[Violation]:
    if not targets:
        return []
    k = len(targets)
    tmax = max(r for _, r in targets)
    cap = fanout_capacity(s, tmax)
    if cap is not None and k <= cap:
        return []
    need = tmax + k - 1
    jtls = plan_chain(s, need, policy).jtls if need <= ladder.top else None
    detail = f"FO{k} into rank {tmax} needs a rank-{need} source"
    return [Violation("insufficient drive", net, s, tmax, jtls, detail)]


def _check_node(net, node: FanNode, in_rank, ranks_of, ladder, policy) -> list[Violation]:
    out = []
    ch = node.chain
    if ch.source_rank != in_rank:
        out.append(Violation("chain input mismatch", net, in_rank, ch.source_rank,
                             detail=f"chain expects rank {ch.source_rank}"))
    for msg in chain_violations(ch, policy):
        out.append(Violation("malformed chain", net, ch.source_rank, ch.target_rank, detail=msg))
    if not 1 <= ch.target_rank <= ladder.top:
        out.append(Violation("chain leaves the ladder", net, ch.source_rank, ch.target_rank))
        return out
    targets = [(x, ranks_of(x)) for x in node.sinks]
    targets += [(f"block{i}", c.chain.source_rank) for i, c in enumerate(node.children)]
    out += _check_direct(net, ch.target_rank, targets, ladder, policy)
    for c in node.children:
        out += _check_node(net, c, c.chain.source_rank, ranks_of, ladder, policy)
    return out


def verify_assignment(
    n: Netlist,
    a: RankAssignment,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
) -> list[Violation]:
    out: list[Violation] = []
    ranks = a.per_cell_rank
    for c in n.logic_cells:
        r = ranks.get(c.id)
        if r is None:
            out.append(Violation("unranked cell", detail=c.id))
        elif not isinstance(r, int) or not 1 <= r <= ladder.top:
            out.append(Violation("rank off the ladder", detail=f"{c.id}=R{r}"))
    if out:
        return out

    def ranks_of(x):
        return 1 if x == PO_TAP else ranks[x]

    for name, net in n.nets.items():
        targets = _targets(n, net, ranks)
        drv = n.cells.get(net.driver) if net.driver else None
        if drv is None or not targets:
            continue
        if drv.clocked:
            s = ranks[drv.id]
        elif name in a.input_source_ranks:
            s = a.input_source_ranks[name]
        else:
            out.append(Violation("primary input without a source rank", name))
            continue
        plan = a.inserted_chains.get(name)
        if plan is None:
            out += _check_direct(name, s, targets, ladder, policy)
            continue
        if sorted(plan.all_sinks()) != sorted(x for x, _ in targets):
            out.append(Violation("chain sinks differ from net sinks", name))
        out += _check_node(name, plan, s, ranks_of, ladder, policy)

    for members in rank_groups(n).values():
        rs = {ranks[m] for m in members}
        if len(rs) > 1:
            out.append(Violation("shared-rank group split", detail=", ".join(f"{m}=R{ranks[m]}" for m in members)))

    cp = a.clock_plan
    if cp is not None:
        out += _verify_clock(n, a, cp, ladder, policy)
    return out


def _verify_clock(n, a, cp: ClockPlan, ladder, policy) -> list[Violation]:
    out = []
    fed = [c for ln in cp.lines for c in ln.cells]
    want = sorted(c.id for c in n.logic_cells)
    if sorted(fed) != want:
        out.append(Violation("clock tree does not feed every clocked cell exactly once"))
    single = len(cp.lines) == 1
    for i, ln in enumerate(cp.lines):
        src = cp.root_rank if single else 1
        net = f"clock line {i}"
        if ln.chain.source_rank != src:
            out.append(Violation("clock chain input mismatch", net, src, ln.chain.source_rank))
        for msg in chain_violations(ln.chain, policy):
            out.append(Violation("malformed chain", net, ln.chain.source_rank, ln.chain.target_rank, detail=msg))
        targets = [(c, a.per_cell_rank.get(c, 1)) for c in ln.cells]
        out += _check_direct(net, ln.chain.target_rank, targets, ladder, policy)
    if not single:
        d = cp.distribution
        if d is None or d.leaves != len(cp.lines) or d.leaf_rank != 1 or d.source_rank != cp.root_rank:
            out.append(Violation("clock distribution tree does not match its lines"))
        else:
            for _, node in d.walk():
                cap = fanout_capacity(node.chain.target_rank, 1)
                if node.fanout > cap:
                    out.append(Violation("insufficient drive", "clock distribution",
                                         node.chain.target_rank, 1, detail=f"FO{node.fanout}"))
    return out


# ------------------------------------------------------------------- KSA


def ksa_example() -> Netlist:
    """Bundled fully synchronous 2-bit Kogge-Stone adder with carry-in."""
    text = resources.files("sfqrank.data").joinpath("ksa2.bench").read_text()
    return parse_bench(text, name="ksa2")


def conventional_split_jj(n: Netlist, count_output_taps: bool = True) -> int:
    """JJs spent on data and clock splitters in the conventional methodology."""
    data = sum(SPLITTER_JJS * (net.fanout(count_output_taps) - 1)
               for net in n.nets.values() if net.fanout(count_output_taps) > 1)
    c = len(n.logic_cells)
    return data + SPLITTER_JJS * max(c - 1, 0)
