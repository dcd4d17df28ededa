import itertools
import json

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from sfqrank.assign import (
    AssignmentOptions, FanNode, InfeasibleAssignment, RankAssignment, RankConflict, assign_ranks,
    conventional_split_jj, ksa_example, plan_clock_tree, propagate, rank_groups, verify_assignment,
)
from sfqrank.netlist import CellKind, levelize, parse_bench
from sfqrank.ranks import JtlChainPlan, fanout_capacity
from sfqrank.synth import ranked_tree

GATES = {
    CellKind.AND: lambda *x: all(x), CellKind.OR: lambda *x: any(x), CellKind.XOR: lambda a, b: a != b,
    CellKind.NOT: lambda a: not a, CellKind.BUF: lambda a: a, CellKind.DFF: lambda a: a,
    CellKind.NAND: lambda *x: not all(x), CellKind.NOR: lambda *x: not any(x),
    CellKind.XNOR: lambda a, b: a == b,
}


def simulate(n, values):
    """Evaluate a path-balanced synchronous netlist as steady-state logic."""
    v = dict(values)
    stages = levelize(n)
    for cid in sorted(stages.per_cell, key=stages.per_cell.get):
        c = n.cells[cid]
        v[c.output] = GATES[c.kind](*(v[i] for i in c.inputs))
    return v


@pytest.fixture(scope="module")
def ksa():
    return ksa_example()


@pytest.fixture(scope="module")
def ksa_a(ksa):
    return assign_ranks(ksa)


class TestKsa:
    def test_adds_exhaustively(self, ksa):
        for bits in itertools.product([False, True], repeat=5):
            a0, b0, a1, b1, cin = bits
            v = simulate(ksa, dict(zip(["A0", "B0", "A1", "B1", "Cin"], bits)))
            total = a0 + b0 + cin + 2 * (a1 + b1)
            assert (v["s0f"], v["s1d"], v["Cout"]) == (bool(total & 1), bool(total & 2), bool(total & 4))

    def test_stage_profile(self, ksa):
        assert levelize(ksa).stage_sizes == {1: 5, 2: 5, 3: 6, 4: 4, 5: 3}

    def test_seed_and_ranks(self, ksa, ksa_a):
        a = ksa_a
        assert a.seed_stage == 3
        st3 = levelize(ksa).cells_in(3)
        # six cells plus the forwarded clock share a rank-8 root: 8 - 7 + 1
        assert {a.per_cell_rank[c] for c in st3} == {2}
        assert {c for c, r in a.per_cell_rank.items() if r == 3} == {"c0d", "g0", "p0", "g0d"}
        assert a.input_source_ranks == {"A0": 4, "B0": 4, "A1": 3, "B1": 3, "Cin": 3}

    def test_chains(self, ksa_a):
        ch = {k: [tuple(s) for s in v.chain.stages] for k, v in ksa_a.inserted_chains.items()}
        assert ch == {"a0": [(2, 3)], "p1d": [(2, 3), (3, 4)]}
        assert ksa_a.data_jj == 6

    def test_no_violations(self, ksa, ksa_a):
        assert verify_assignment(ksa, ksa_a) == []

    def test_clock_plan(self, ksa, ksa_a):
        cp = ksa_a.clock_plan
        assert cp.sinks == len(ksa.logic_cells) == 23
        assert cp.jj_count == 28 and cp.conventional_jj == 66

    def test_cheaper_than_conventional(self, ksa, ksa_a):
        ranked = ksa_a.data_jj + ksa_a.clock_plan.jj_count
        assert ranked == 34 < conventional_split_jj(ksa) == 96

    def test_root_too_weak(self, ksa):
        with pytest.raises(InfeasibleAssignment, match="stage 3"):
            assign_ranks(ksa, opts=AssignmentOptions(clock_root_rank=4))

    def test_root_too_weak_reported_when_allowed(self, ksa):
        a = assign_ranks(ksa, opts=AssignmentOptions(clock_root_rank=4, allow_infeasible=True))
        assert any("stage 3" in p for p in a.violations)

    def test_lowest_policy(self, ksa):
        a = assign_ranks(ksa, opts=AssignmentOptions(stage_policy="lowest_rank"))
        assert {a.per_cell_rank[c] for c in levelize(ksa).cells_in(3)} == {1}
        assert verify_assignment(ksa, a) == []

    def test_no_forward_tap(self, ksa):
        a = assign_ranks(ksa, opts=AssignmentOptions(forward_tap=False))
        assert {a.per_cell_rank[c] for c in levelize(ksa).cells_in(3)} == {3}
        assert verify_assignment(ksa, a) == []

    def test_fixed_rank_conflict(self, ksa):
        with pytest.raises(RankConflict):
            assign_ranks(ksa, opts=AssignmentOptions(fixed_ranks={"C1": 5}))

    def test_deterministic(self, ksa, ksa_a):
        assert assign_ranks(ksa).to_json() == ksa_a.to_json()

    def test_round_trip(self, ksa, ksa_a):
        text = ksa_a.to_json()
        b = RankAssignment.from_json(text)
        assert b.to_json() == text
        assert verify_assignment(ksa, b) == []

    def test_idempotent(self, ksa, ksa_a):
        assert propagate(ksa, ksa_a.per_cell_rank) == ksa_a.per_cell_rank

    def test_rank_bumps_detected(self, ksa, ksa_a):
        for cid, r in ksa_a.per_cell_rank.items():
            for d in (-1, 1):
                if not 1 <= r + d <= 8:
                    continue
                b = RankAssignment.from_dict(ksa_a.to_dict())
                b.per_cell_rank[cid] = r + d
                assert verify_assignment(ksa, b), (cid, r + d)

    def test_removing_any_jtl_detected(self, ksa, ksa_a):
        for net, node in ksa_a.inserted_chains.items():
            for i in range(len(node.chain.stages)):
                stages = node.chain.stages[:i] + node.chain.stages[i + 1:]
                b = RankAssignment.from_dict(ksa_a.to_dict())
                if stages:
                    ch = JtlChainPlan(stages[0][0], stages[-1][1], stages)
                else:
                    ch = JtlChainPlan(node.chain.source_rank, node.chain.source_rank)
                b.inserted_chains[net] = FanNode(ch, node.sinks, node.children)
                assert verify_assignment(ksa, b), (net, i)

    def test_dropping_a_chain_detected(self, ksa, ksa_a):
        for net in ksa_a.inserted_chains:
            b = RankAssignment.from_dict(ksa_a.to_dict())
            del b.inserted_chains[net]
            v = verify_assignment(ksa, b)
            assert v and v[0].net == net and v[0].rule == "insufficient drive"


def test_single_cell_at_top():
    n = parse_bench("INPUT(a)\nOUTPUT(b)\nb = DFF(a)")
    a = assign_ranks(n)
    assert a.per_cell_rank == {"b": 8}
    assert verify_assignment(n, a) == []


def test_three_sinks_need_rank_four():
    n = parse_bench("INPUT(a)\nOUTPUT(y1)\nOUTPUT(y2)\nOUTPUT(y3)\n"
                    "x = BUF(a)\ny1 = BUF(x)\ny2 = BUF(x)\ny3 = BUF(x)")
    ranks = {"x": 2, "y1": 2, "y2": 2, "y3": 2}
    a = RankAssignment(n.name, ranks, {}, {"a": 2}, 1, 8)
    v = verify_assignment(n, a)
    assert len(v) == 1
    bad = v
    assert bad[0].net == "x" and bad[0].required_jtls == 2
    assert bad[0].source_rank == 2 and bad[0].target_rank == 2 and "rank-4" in bad[0].detail


def test_argmax_tie_takes_earliest_stage():
    n = parse_bench("INPUT(a)\nOUTPUT(z)\nOUTPUT(w)\nx = BUF(a)\ny = NOT(a)\nz = BUF(x)\nw = NOT(y)")
    assert assign_ranks(n).seed_stage == 1


def test_top_rank_seed_steps_down_when_unrepairable():
    # one cell reading the same input twice: a rank-8 target on an FO2 net needs rank 9
    n = parse_bench("INPUT(a)\nOUTPUT(g)\ng = AND(a, a)")
    a = assign_ranks(n)
    assert a.per_cell_rank == {"g": 7}
    assert a.input_source_ranks == {"a": 8}
    assert verify_assignment(n, a) == []


def test_clock_64_rank1_matches_tree():
    txt = "\n".join(["INPUT(a)"] + [f"OUTPUT(c{i})" for i in range(64)] + [f"c{i} = BUF(a)" for i in range(64)])
    n = parse_bench(txt)
    a = RankAssignment(n.name, {f"c{i}": 1 for i in range(64)}, {}, {}, 1, 1)
    cp = plan_clock_tree(n, a)
    assert cp.jj_count == ranked_tree(64).jj_cost == 72
    assert cp.conventional_jj == 189


@st.composite
def layered_netlists(draw):
    """Random synchronous DAGs whose stages are the drawn layers."""
    n_in = draw(st.integers(1, 4))
    prev = [f"i{k}" for k in range(n_in)]
    avail = list(prev)
    lines = [f"INPUT({x})" for x in prev]
    body, outs, used = [], [], set()
    cid = 0
    total = draw(st.integers(1, 20))
    while cid < total:
        width = draw(st.integers(1, min(6, total - cid)))
        layer = []
        for _ in range(width):
            kind = draw(st.sampled_from(["AND", "OR", "XOR", "NOT", "BUF", "DFF", "NAND"]))
            first = draw(st.sampled_from(prev))
            args = [first]
            if kind in ("AND", "OR", "XOR", "NAND"):
                args.append(draw(st.sampled_from(avail)))
            name = f"g{cid}"
            cid += 1
            used.update(args)
            body.append(f"{name} = {kind}({', '.join(args)})")
            layer.append(name)
        prev = layer
        avail += layer
    outs = [x for x in avail if x not in used and not x.startswith("i")] or [prev[0]]
    lines += [f"OUTPUT({x})" for x in outs] + body
    return parse_bench("\n".join(lines), name="rand")


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(layered_netlists(), st.sampled_from(["highest_rank", "lowest_rank"]), st.booleans())
def test_random_dags_verify_clean(n, policy, tap):
    a = assign_ranks(n, opts=AssignmentOptions(stage_policy=policy, forward_tap=tap))
    assert verify_assignment(n, a) == []
    for members in rank_groups(n).values():
        assert len({a.per_cell_rank[m] for m in members}) == 1
    assert RankAssignment.from_json(a.to_json()).to_json() == a.to_json()
