"""Splitter trees, ranked amplifying-chain trees, and their JJ / bias costs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

import yaml

from .netlist import CellKind, Netlist, fanout_profile, levelize
from .ranks import (
    DEFAULT_LADDER,
    DEFAULT_POLICY,
    AmplifierPolicy,
    InfeasibleFanout,
    JtlChainPlan,
    RankError,
    RankLadder,
    fanout_capacity,
    plan_chain,
    rank_to_current,
    required_source_rank,
)

SPLITTER_JJS = 3


class TreeMode(str, Enum):
    CONVENTIONAL = "conventional"
    RIGHT_SIZED = "ranked_right_sized"
    MODULAR_UNIFORM = "ranked_modular_uniform"

    @classmethod
    def parse(cls, v) -> "TreeMode":
        if isinstance(v, cls):
            return v
        short = {"right_sized": cls.RIGHT_SIZED, "modular_uniform": cls.MODULAR_UNIFORM}
        return short.get(v) or cls(v)


class StageOrder(str, Enum):
    PAPER_BALANCED = "paper_balanced"  # reduced factor second-to-last
    MIN_COST = "min_cost"  # factors ascending
    ROOT_MAX = "root_max"  # root takes the widest fan-out, branches split evenly


def split_even(n: int, k: int) -> list[int]:
    q, r = divmod(n, k)
    return [q + 1] * r + [q] * (k - r)


# ---------------------------------------------------------------- tree nodes
#
# Subtrees are shared (an FO1024 tree has only a handful of distinct shapes),
# so every node carries its own aggregate counts.


@dataclass(frozen=True, eq=False)
class Splitter:
    children: tuple["Node", ...]
    leaves: int
    jj_cost: int
    nodes: int
    depth: int

    fanout = 2


@dataclass(frozen=True, eq=False)
class ChainBlock:
    chain: JtlChainPlan
    children: tuple["Node", ...]
    leaves: int
    jj_cost: int
    nodes: int
    depth: int

    @property
    def fanout(self) -> int:
        return len(self.children)


Node = Union[Splitter, ChainBlock, None]  # None is a leaf


def _stats(children) -> tuple[int, int, int, int]:
    leaves = jj = nodes = depth = 0
    for c in children:
        if c is None:
            leaves += 1
        else:
            leaves += c.leaves
            jj += c.jj_cost
            nodes += c.nodes
            depth = max(depth, c.depth)
    return leaves, jj, nodes, depth


def _splitter(children) -> Splitter:
    leaves, jj, nodes, depth = _stats(children)
    return Splitter(tuple(children), leaves, jj + SPLITTER_JJS, nodes + 1, depth + 1)


def _block(chain: JtlChainPlan, children) -> ChainBlock:
    leaves, jj, nodes, depth = _stats(children)
    return ChainBlock(chain, tuple(children), leaves, jj + chain.jj_count, nodes + 1, depth + 1)


@dataclass(frozen=True)
class FanoutTree:
    root: Node
    leaves: int
    mode: TreeMode
    leaf_rank: int = 1
    source_rank: int = 1
    stage_fanouts: tuple[int, ...] = ()

    @property
    def jj_cost(self) -> int:
        return 0 if self.root is None else self.root.jj_cost

    @property
    def node_count(self) -> int:
        return 0 if self.root is None else self.root.nodes

    @property
    def depth(self) -> int:
        return 0 if self.root is None else self.root.depth

    @property
    def block_count(self) -> int:
        return 0 if self.mode is TreeMode.CONVENTIONAL else self.node_count

    def walk(self):
        """Yield ``(depth, node)`` for every node, expanding shared subtrees."""
        stack = [(0, self.root)] if self.root is not None else []
        while stack:
            d, node = stack.pop()
            yield d, node
            for c in reversed(node.children):
                if c is not None:
                    stack.append((d + 1, c))


# ------------------------------------------------------------ conventional


@lru_cache(maxsize=None)
def _splitter_node(n: int) -> Node:
    if n == 1:
        return None
    return _splitter((_splitter_node((n + 1) // 2), _splitter_node(n // 2)))


def splitter_tree(n: int) -> FanoutTree:
    """Balanced tree of FO2 splitters: n-1 splitters, depth ceil(log2 n)."""
    if n < 1:
        raise ValueError(f"fan-out must be >= 1, got {n}")
    return FanoutTree(_splitter_node(n), n, TreeMode.CONVENTIONAL, stage_fanouts=(2,) * math.ceil(math.log2(n)))


# ------------------------------------------------------------------ ranked


def stage_factors(n: int, max_fanout: int, order: StageOrder = StageOrder.PAPER_BALANCED) -> list[int]:
    """Nominal per-stage fan-outs whose product covers ``n``.

    All stages take ``max_fanout`` except one reduced stage that absorbs the
    remainder; ``order`` decides where the reduced stage sits.
    """
    order = StageOrder(order)
    if n <= 1:
        return []
    if max_fanout < 2:
        raise RankError("ladder too short for any fan-out")
    m = 1
    while max_fanout**m < n:
        m += 1
    reduced = -(-n // max_fanout ** (m - 1))
    full = [max_fanout] * (m - 1)
    if reduced == max_fanout or m == 1:
        return sorted(full + [reduced])
    if order is StageOrder.MIN_COST:
        # root-first is cheapest by block count; ranked_tree also tries the other slots
        return [reduced] + full
    # paper_balanced; ROOT_MAX has no fixed factor list but report one anyway
    return full[:-1] + [reduced] + full[-1:] if m >= 2 else [reduced]


class _Builder:
    def __init__(self, ladder, policy, mode, leaf_rank):
        self.ladder = ladder
        self.policy = policy
        self.mode = mode
        self.leaf_rank = leaf_rank
        self.max_fanout = fanout_capacity(ladder.top, leaf_rank)
        self.memo = {}

    def chain(self, src: int, fanout: int) -> JtlChainPlan:
        if self.mode is TreeMode.MODULAR_UNIFORM:
            need = self.ladder.top
        else:
            need = required_source_rank(fanout, self.leaf_rank, self.ladder)
        # a source already at or above the needed rank drives directly
        if src >= need:
            return JtlChainPlan(src, src)
        return plan_chain(src, need, self.policy)

    def block(self, src: int, children) -> ChainBlock:
        return _block(self.chain(src, len(children)), children)

    def by_factors(self, n: int, factors: tuple[int, ...], src: int) -> Node:
        key = ("f", n, factors, src)
        if key in self.memo:
            return self.memo[key]
        rest = math.prod(factors[1:])
        k = max(1, -(-n // rest)) if len(factors) > 1 else n
        if k == 1 and len(factors) > 1:
            # nothing to split at this stage; pass straight through
            node = self.by_factors(n, factors[1:], src)
        else:
            kids = [None if p == 1 else self.by_factors(p, factors[1:], self.leaf_rank) for p in split_even(n, k)]
            node = self.block(src, kids)
        self.memo[key] = node
        return node

    def root_max(self, n: int, src: int) -> Node:
        key = ("g", n, src)
        if key in self.memo:
            return self.memo[key]
        if n <= self.max_fanout:
            node = self.block(src, [None] * n)
        else:
            kids = [None if p == 1 else self.root_max(p, self.leaf_rank) for p in split_even(n, self.max_fanout)]
            node = self.block(src, kids)
        self.memo[key] = node
        return node


def ranked_tree(
    n: int,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
    mode="right_sized",
    stage_order="paper_balanced",
    leaf_rank: int = 1,
    source_rank: int | None = None,
) -> FanoutTree:
    """Tree of amplifying-chain blocks fanning one rank-``source_rank`` signal to
    ``n`` rank-``leaf_rank`` sinks, at most ``top - leaf_rank + 1`` per block."""
    mode = TreeMode.parse(mode)
    if mode is TreeMode.CONVENTIONAL:
        return splitter_tree(n)
    order = StageOrder(stage_order)
    if n < 1:
        raise ValueError(f"fan-out must be >= 1, got {n}")
    ladder.check(leaf_rank)
    src = leaf_rank if source_rank is None else ladder.check(source_rank)
    b = _Builder(ladder, policy, mode, leaf_rank)
    if b.max_fanout < 2 and n > 1:
        raise InfeasibleFanout(n, leaf_rank, leaf_rank + n - 1, ladder.top)
    if n == 1:
        return FanoutTree(None, 1, mode, leaf_rank, src)
    if order is StageOrder.ROOT_MAX:
        root = b.root_max(n, src)
        factors = ()
    else:
        factors = tuple(stage_factors(n, b.max_fanout, order))
        candidates = [factors]
        if order is StageOrder.MIN_COST and len(set(factors)) > 1:
            red, full = factors[0], factors[1:]
            candidates += [full[:i] + (red,) + full[i:] for i in range(1, len(factors))]
        # earliest candidate wins ties
        root, factors = min(((b.by_factors(n, f, src), f) for f in candidates), key=lambda rf: rf[0].jj_cost)
    return FanoutTree(root, n, mode, leaf_rank, src, factors)


# ------------------------------------------------------------------- costs


@dataclass(frozen=True)
class CostReport:
    jj_conventional: int
    jj_ranked: int
    jj_logic: int | None = None
    bias_conventional: float | None = None
    bias_ranked: float | None = None
    breakdown: Mapping[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.jj_conventional < 0 or self.jj_ranked < 0:
            raise ValueError("JJ counts must be non-negative")

    @property
    def savings_pct(self) -> float:
        return savings(self.jj_conventional, self.jj_ranked)

    def __add__(self, other: "CostReport") -> "CostReport":
        bd = dict(self.breakdown)
        for k, (c, r) in other.breakdown.items():
            c0, r0 = bd.get(k, (0, 0))
            bd[k] = (c0 + c, r0 + r)
        logic = None
        if self.jj_logic is not None or other.jj_logic is not None:
            logic = (self.jj_logic or 0) + (other.jj_logic or 0)
        return CostReport(
            self.jj_conventional + other.jj_conventional,
            self.jj_ranked + other.jj_ranked,
            logic,
            breakdown=bd,
        )

    def to_dict(self) -> dict:
        d = {
            "jj_conventional": self.jj_conventional,
            "jj_ranked": self.jj_ranked,
            "savings_pct": round(self.savings_pct, 4),
        }
        if self.jj_logic is not None:
            d["jj_logic"] = self.jj_logic
        if self.bias_conventional is not None:
            d["bias_conventional_uA"] = round(self.bias_conventional, 3)
            d["bias_ranked_uA"] = round(self.bias_ranked, 3)
        if self.breakdown:
            d["breakdown"] = {k: {"conv": c, "ranked": r} for k, (c, r) in self.breakdown.items()}
        return d


def savings(conv: float, ranked: float) -> float:
    return 0.0 if conv == 0 else 100.0 * (conv - ranked) / conv


def net_split_cost(
    n: int, ladder: RankLadder = DEFAULT_LADDER, policy: AmplifierPolicy = DEFAULT_POLICY
) -> CostReport:
    """Splitting cost of one rank-1 net with fan-out ``n``.

    Above the single-block limit the root takes the widest fan-out and the
    sinks are spread evenly over its branches, recursively.
    """
    if n < 1:
        raise ValueError(f"fan-out must be >= 1, got {n}")
    conv = SPLITTER_JJS * (n - 1)
    ranked = _net_split_ranked(n, ladder, policy)
    return CostReport(conv, ranked, breakdown={"data_splitting": (conv, ranked)})


@lru_cache(maxsize=4096)
def _net_split_ranked(n, ladder, policy) -> int:
    return ranked_tree(n, ladder, policy, TreeMode.RIGHT_SIZED, StageOrder.ROOT_MAX).jj_cost


def data_split_cost(
    n: Netlist,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
    count_output_taps: bool = True,
) -> CostReport:
    conv = ranked = 0
    for fo in fanout_profile(n, count_output_taps).per_net.values():
        if fo > 1:
            r = net_split_cost(fo, ladder, policy)
            conv += r.jj_conventional
            ranked += r.jj_ranked
    return CostReport(conv, ranked, breakdown={"data_splitting": (conv, ranked)})


@dataclass(frozen=True)
class ClockCost:
    report: CostReport
    modes: Mapping[str, int]
    per_stage: Mapping[int, int]

    @property
    def sinks(self) -> int:
        return sum(self.per_stage.values())


def clock_tree_cost(
    stage_sizes: Mapping[int, int] | object,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
    mode="right_sized",
    stage_order="paper_balanced",
) -> ClockCost:
    """One clock tree feeding every clocked cell as a rank-1 sink."""
    sizes = getattr(stage_sizes, "stage_sizes", stage_sizes)
    c = sum(sizes.values())
    if c < 1:
        raise ValueError("clock tree needs at least one sink")
    conv = SPLITTER_JJS * (c - 1)
    costs = {
        m.value: ranked_tree(c, ladder, policy, m, stage_order).jj_cost
        for m in (TreeMode.RIGHT_SIZED, TreeMode.MODULAR_UNIFORM)
    }
    ranked = costs[TreeMode.parse(mode).value]
    rep = CostReport(conv, ranked, breakdown={"clock": (conv, ranked)})
    return ClockCost(rep, costs, dict(sizes))


# ------------------------------------------------------------- cell library


class UnknownCellKind(KeyError):
    def __str__(self):
        return f"cell library has no entry for {self.args[0]}"


@dataclass(frozen=True)
class CellSpec:
    jj_count: int
    bias_ua: float

    def __post_init__(self):
        if self.jj_count <= 0 or self.bias_ua <= 0:
            raise ValueError("cell JJ count and bias must be positive")


@dataclass(frozen=True)
class CellLibrary:
    cells: Mapping[str, CellSpec]
    beta: float = 0.7
    splitter_bias_ua: float = 250.0
    reference_rank: int = 6
    provenance: str = ""

    def __post_init__(self):
        if not 0 < self.beta <= 1.5:
            raise ValueError(f"beta must be in (0, 1.5], got {self.beta}")
        if self.splitter_bias_ua <= 0:
            raise ValueError("splitter bias must be positive")

    def spec(self, kind) -> CellSpec:
        key = kind.value if isinstance(kind, CellKind) else str(kind).upper()
        if key == "INV":
            key = "NOT"
        try:
            return self.cells[key]
        except KeyError:
            raise UnknownCellKind(key) from None

    def jj_count(self, kind) -> int:
        return self.spec(kind).jj_count

    def bias(self, kind, rank: int | None = None, ladder: RankLadder = DEFAULT_LADDER) -> float:
        """Cell bias, scaled linearly with the rank current ratio."""
        b = self.spec(kind).bias_ua
        if rank is None:
            return b
        return b * rank_to_current(ladder, rank) / rank_to_current(ladder, self.reference_rank)

    def scaled(self, k: float) -> "CellLibrary":
        cells = {n: CellSpec(c.jj_count, c.bias_ua * k) for n, c in self.cells.items()}
        return CellLibrary(cells, self.beta, self.splitter_bias_ua * k, self.reference_rank, self.provenance)

    def with_bias(self, kind, bias_ua: float) -> "CellLibrary":
        self.spec(kind)
        key = kind.value if isinstance(kind, CellKind) else str(kind).upper()
        key = "NOT" if key == "INV" else key
        cells = dict(self.cells)
        cells[key] = CellSpec(cells[key].jj_count, bias_ua)
        return CellLibrary(cells, self.beta, self.splitter_bias_ua, self.reference_rank, self.provenance)

    @classmethod
    def from_dict(cls, d: dict) -> "CellLibrary":
        cells = {
            str(k).upper(): CellSpec(int(v["jj_count"]), float(v["bias_ua"]))
            for k, v in d["cells"].items()
        }
        return cls(
            cells,
            beta=float(d.get("beta", 0.7)),
            splitter_bias_ua=float(d.get("splitter_bias_ua", 250.0)),
            reference_rank=int(d.get("reference_rank", 6)),
            provenance=str(d.get("provenance", "")).strip(),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CellLibrary":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


def default_library() -> CellLibrary:
    with resources.files("sfqrank.data").joinpath("cells.yaml").open() as fh:
        return CellLibrary.from_dict(yaml.safe_load(fh))


def total_cost(
    n: Netlist,
    lib: CellLibrary,
    ladder: RankLadder = DEFAULT_LADDER,
    policy: AmplifierPolicy = DEFAULT_POLICY,
    count_output_taps: bool = True,
    clock_mode="right_sized",
) -> CostReport:
    logic = sum(lib.jj_count(c.kind) for c in n.logic_cells)
    data = data_split_cost(n, ladder, policy, count_output_taps)
    clock = clock_tree_cost(levelize(n), ladder, policy, clock_mode).report
    return CostReport(
        logic + data.jj_conventional + clock.jj_conventional,
        logic + data.jj_ranked + clock.jj_ranked,
        jj_logic=logic,
        breakdown={
            "logic": (logic, logic),
            "data_splitting": (data.jj_conventional, data.jj_ranked),
            "clock": (clock.jj_conventional, clock.jj_ranked),
        },
    )


# --------------------------------------------------------------- bias model


class BiasMode(str, Enum):
    FLEXIBLE = "flexible"
    MATCHED = "matched"


def _splitter_bias(lib: CellLibrary, ladder: RankLadder, rank: int) -> float:
    # input JJ one rank above the two output JJs; I_X sets the absolute level
    scale = lib.splitter_bias_ua / rank_to_current(ladder, lib.reference_rank)
    upper = rank_to_current(ladder, min(rank + 1, ladder.top))
    return lib.beta * (upper + 2 * rank_to_current(ladder, rank)) * scale


def _jtl_bias(lib: CellLibrary, ladder: RankLadder, chain: JtlChainPlan) -> float:
    scale = lib.splitter_bias_ua / rank_to_current(ladder, lib.reference_rank)
    return sum(
        lib.beta * (rank_to_current(ladder, a) + rank_to_current(ladder, b)) * scale for a, b in chain.stages
    )


def bias_totals(
    kind, n: int, mode, lib: CellLibrary, ladder: RankLadder = DEFAULT_LADDER, policy: AmplifierPolicy = DEFAULT_POLICY
) -> tuple[float, float]:
    """(conventional, ranked) total bias in uA for one cell fanning out to ``n`` copies."""
    mode = BiasMode(mode)
    r0 = lib.reference_rank
    b = lib.bias(kind, r0, ladder)
    conv = b + (n - 1) * _splitter_bias(lib, ladder, r0) + n * b
    if n == 1:
        return conv, conv
    if mode is BiasMode.FLEXIBLE:
        cap = fanout_capacity(r0, 1)
        if n > cap:
            raise InfeasibleFanout(n, 1, r0 + n - 1, r0)
        ranked = b + n * lib.bias(kind, r0 - n + 1, ladder)
    else:
        tree = ranked_tree(n, ladder, policy, TreeMode.RIGHT_SIZED, StageOrder.PAPER_BALANCED, leaf_rank=r0, source_rank=r0)
        ranked = b + n * b + sum(_jtl_bias(lib, ladder, node.chain) for _, node in tree.walk())
    return conv, ranked


def bias_savings(
    kind, n: int, mode, lib: CellLibrary, ladder: RankLadder = DEFAULT_LADDER, policy: AmplifierPolicy = DEFAULT_POLICY
) -> float:
    conv, ranked = bias_totals(kind, n, mode, lib, ladder, policy)
    return savings(conv, ranked)


def calibrate(
    kind, target_pct: float, n: int = 2, mode="flexible", lib: CellLibrary | None = None,
    ladder: RankLadder = DEFAULT_LADDER, policy: AmplifierPolicy = DEFAULT_POLICY,
) -> float:
    """Cell bias (uA at the reference rank) that makes ``bias_savings`` hit ``target_pct``.

    Both totals are affine in the cell bias, so this is one linear solve.
    """
    lib = lib or default_library()
    c0, r0 = bias_totals(kind, n, mode, lib.with_bias(kind, 1.0), ladder, policy)
    c1, r1 = bias_totals(kind, n, mode, lib.with_bias(kind, 2.0), ladder, policy)
    ac, bc = c1 - c0, c0 - (c1 - c0)
    ar, br = r1 - r0, r0 - (r1 - r0)
    keep = 1 - target_pct / 100
    denom = keep * ac - ar
    if abs(denom) < 1e-12:
        raise ValueError("savings do not depend on the cell bias here")
    b = (br - keep * bc) / denom
    if b <= 0:
        raise ValueError(f"{target_pct}% needs a non-positive bias ({b:.1f} uA)")
    return b


# ------------------------------------------------------------------ export


def export_tree_netlist(tree: FanoutTree, ladder: RankLadder = DEFAULT_LADDER) -> dict:
    """Every ranked block with its JTL stages as (I_in, I_out) uA pairs."""
    if tree.mode is TreeMode.CONVENTIONAL:
        raise ValueError("export needs a ranked tree; conventional splitter trees have no chains")
    blocks = []
    # shared subtrees are expanded so every physical block gets its own id
    counter = 0
    stack = [(tree.root, None, 0)] if tree.root is not None else []
    while stack:
        node, parent, depth = stack.pop()
        bid = counter
        counter += 1
        blocks.append({
            "id": bid,
            "parent": parent,
            "depth": depth,
            "source_rank": node.chain.source_rank,
            "fanout": node.fanout,
            "leaf_outputs": sum(1 for c in node.children if c is None),
            "stages": [
                [rank_to_current(ladder, a), rank_to_current(ladder, b)] for a, b in node.chain.stages
            ],
        })
        for c in reversed(node.children):
            if c is not None:
                stack.append((c, bid, depth + 1))
    return {
        "mode": tree.mode.value,
        "fanout": tree.leaves,
        "leaf_rank": tree.leaf_rank,
        "leaf_current_uA": rank_to_current(ladder, tree.leaf_rank),
        "jj_count": tree.jj_cost,
        "blocks": blocks,
    }
