"""One check per acceptance criterion; each records a PASS/FAIL line printed after the run.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest.
"""
import io
import contextlib
import math
import subprocess
import sys
import time

import pytest

import conftest
from conftest import CORPUS, DATA
from sfqrank import synth
from sfqrank.assign import (
    AssignmentOptions, assign_ranks, conventional_split_jj, ksa_example, propagate, verify_assignment,
)
from sfqrank.cli import main
from sfqrank.config import RunConfig
from sfqrank.netlist import levelize
from sfqrank.ranks import (
    DEFAULT_POLICY, STEP2_POLICY, SQRT2, AmplifierPolicy, build_ladder, current_to_rank,
    fanout_capacity, plan_chain, rank_to_current,
)
from sfqrank.report import averages, benchmark_row, load_corpus
from sfqrank.synth import (
    bias_savings, clock_tree_cost, default_library, export_tree_netlist, net_split_cost, ranked_tree,
    savings, splitter_tree, total_cost,
)
from test_ranks import bfs_min_jtls

# per-benchmark data-splitting savings, step sqrt2 and step 2
REFERENCE = {
    "c17": (33.3, 33.3), "c432": (42.5, 50.3), "c499": (45.9, 65.3), "c880": (48.7, 60.5),
    "c1355": (47.6, 55.1), "c1908": (39.6, 47.6), "c2670": (43.0, 51.9), "c3540": (46.7, 56.5),
    "c5315": (48.1, 58.7), "c6288": (36.0, 53.9), "c7552": (44.9, 56.0),
}
AVG_SQRT2, AVG_2 = 43.3, 53.6
CLOCK_REF, TOTAL_REF = 32.3, 10.0
KSA_SPLIT_REF, KSA_TOTAL_REF = 114, 17.7


def record(k: int, title: str, ok: bool, detail: str, status: str | None = None):
    status = status or ("PASS" if ok else "FAIL")
    conftest.ACCEPTANCE_LINES[k] = f"[{status}] {k:>2}. {title}: {detail}"


def best_time(fn, reps=5, reset=()):
    best = math.inf
    for _ in range(reps):
        for r in reset:
            r()
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def quiet_main(*argv):
    with contextlib.redirect_stdout(io.StringIO()) as out, contextlib.redirect_stderr(io.StringIO()):
        code = main(list(argv))
    return code, out.getvalue()


@pytest.fixture(scope="module")
def rows():
    cfg = RunConfig()
    lib = default_library()
    nets, bad = load_corpus(CORPUS)
    assert not bad
    return {n.name: benchmark_row(n, cfg, lib) for n in nets}


def test_c01_ladder():
    lad = build_ladder(46, 500, SQRT2)
    want = [46, 66, 88, 125, 180, 250, 353, 500]
    close = len(lad.currents) == 8 and all(abs(a - b) <= 2 for a, b in zip(lad.currents, want))
    dt = best_time(lambda: build_ladder(46, 500, SQRT2), reps=20)
    ok = close and dt < 1e-3
    record(1, "ladder 46..500 uA, step sqrt2", ok, f"{list(lad.currents)}, {dt * 1e3:.3f} ms (< 1 ms)")
    assert close and dt < 1e-3


def test_c02_worked_examples():
    checks = {
        "cap(6,3)=4": fanout_capacity(6, 3) == 4,
        "cap(8,2)=7": fanout_capacity(8, 2) == 7,
        "cap(4,2)=3": fanout_capacity(4, 2) == 3,
        "cap(t,t)=1": all(fanout_capacity(t, t) == 1 for t in range(1, 9)),
        "chain(3,6)": plan_chain(3, 6).stages == ((3, 4), (5, 6)),
        "chain(1,8) sqrt2": plan_chain(1, 8).jtls == 4 and plan_chain(1, 8).jj_count == 8,
        "chain(1,8) p_a=2": plan_chain(1, 8, STEP2_POLICY).stages == ((1, 3), (4, 6), (7, 8)),
        "chain(2,3)": plan_chain(2, 3).jtls == 1,
    }
    bad = [k for k, v in checks.items() if not v]
    record(2, "worked examples", not bad, "all exact" if not bad else "mismatch: " + ", ".join(bad))
    assert not bad


def test_c03_fo1024():
    conv = splitter_tree(1024).jj_cost
    t = ranked_tree(1024, mode="modular_uniform", stage_order="paper_balanced")
    pct = savings(conv, t.jj_cost)
    dt = best_time(lambda: (splitter_tree(1024), ranked_tree(1024, mode="modular_uniform")),
                   reset=[synth._splitter_node.cache_clear])
    ok = conv == 3069 and t.block_count == 201 and t.jj_cost == 1608 and abs(pct - 47.6) <= 0.1 and dt < 0.01
    record(3, "FO1024 tree", ok, f"{t.block_count} blocks, {t.jj_cost} vs {conv} JJs, {pct:.1f}%, "
           f"{dt * 1e3:.2f} ms (< 10 ms)")
    assert ok


def test_c04_c17():
    import json
    f = str(DATA / "c17.bench")
    code, out = quiet_main("analyze", f, "--format", "json")
    d = json.loads(out)["data_splitting"]
    dt = best_time(lambda: quiet_main("analyze", f, "--format", "json"))
    ok = code == 0 and d["savings_sqrt2_pct"] == 33.3 and d["savings_2_pct"] == 33.3 and dt < 0.05
    record(4, "c17 data splitting", ok, f"{d['savings_sqrt2_pct']}% / {d['savings_2_pct']}%, "
           f"{dt * 1e3:.1f} ms (< 50 ms)")
    assert ok


def _corpus_averages(**kw):
    cfg = RunConfig(**kw)
    lib = default_library()
    nets, _ = load_corpus(CORPUS)
    a = averages([benchmark_row(n, cfg, lib) for n in nets])
    return a["data_sqrt2"], a["data_2"]


def test_c05_iscas_averages(rows):
    avg = averages(list(rows.values()))
    avg_ok = abs(avg["data_sqrt2"] - AVG_SQRT2) <= 3 and abs(avg["data_2"] - AVG_2) <= 3
    misses = []
    for name, (r1, r2) in REFERENCE.items():
        row = rows[name]
        for got, ref, tag in ((row.data_savings_sqrt2, r1, "sqrt2"), (row.data_savings_2, r2, "2")):
            if abs(got - ref) > 6:
                misses.append(f"{name}/{tag} {got:.1f} vs {ref}")
    # the two chain-model toggles should land on either side of each average
    gap = _corpus_averages(chain_model="gap")
    eq2 = _corpus_averages(chain_model="eq2")
    brackets = all(min(g, e) <= ref <= max(g, e) for g, e, ref in zip(gap, eq2, (AVG_SQRT2, AVG_2)))
    dt = best_time(lambda: quiet_main("bench", str(CORPUS)), reps=1)
    ok = avg_ok and not misses and brackets and dt < 5
    detail = (f"avg {avg['data_sqrt2']:.1f}/{avg['data_2']:.1f} vs {AVG_SQRT2}/{AVG_2} (+-3: "
              f"{'ok' if avg_ok else 'out'}); per-benchmark +-6: "
              f"{'ok' if not misses else 'misses ' + '; '.join(misses)}; "
              f"gap {gap[0]:.1f}/{gap[1]:.1f} vs eq2 {eq2[0]:.1f}/{eq2[1]:.1f} "
              f"{'bracket' if brackets else 'do not bracket'}; {dt:.2f} s (< 5 s)")
    record(5, "ISCAS'85 data splitting", ok, detail)
    assert ok


def test_c06_clock(rows):
    cfg = RunConfig()
    nets, _ = load_corpus(CORPUS)
    res = {}
    for mode in ("right_sized", "modular_uniform"):
        vals = [clock_tree_cost(levelize(n), cfg.ladder(), cfg.policy(), mode).report.savings_pct for n in nets]
        res[mode] = sum(vals) / len(vals)
    ok = any(abs(v - CLOCK_REF) <= 6 for v in res.values())
    record(6, "clock savings", ok, ", ".join(f"{k} {v:.1f}%" for k, v in res.items())
           + f" vs {CLOCK_REF} +-6")
    assert ok


def test_c07_total(rows):
    lib = default_library()
    labelled = "calibration data" in lib.provenance
    _, md = quiet_main("bench", str(CORPUS))
    labelled = labelled and "calibration data" in md
    avg = averages(list(rows.values()))["total"]
    ok = abs(avg - TOTAL_REF) <= 4 and labelled
    record(7, "total JJ savings (calibration library)", ok,
           f"{avg:.1f}% vs {TOTAL_REF} +-4; library labelled: {labelled}")
    assert ok


def test_c08_ksa():
    n = ksa_example()
    a = assign_ranks(n)
    st3 = {a.per_cell_rank[c] for c in levelize(n).cells_in(3)}
    viol = verify_assignment(n, a)
    ranked = a.data_jj + a.clock_plan.jj_count
    conv = conventional_split_jj(n)
    tot = total_cost(n, default_library()).savings_pct
    ok = st3 == {2} and not viol and ranked < conv
    record(8, "KSA pipeline", ok,
           f"stage 3 ranks {sorted(st3)}, {len(viol)} violations, splitting {ranked} vs {conv} JJs; "
           f"soft refs: conventional splitting {conv} (ref {KSA_SPLIT_REF}), total savings {tot:.1f}% "
           f"(ref {KSA_TOTAL_REF}%)")
    assert ok


def test_c09_properties():
    failures = []
    # chain lengths against breadth-first search, both models
    for pol in (DEFAULT_POLICY, AmplifierPolicy(1, chain_model="eq2"), STEP2_POLICY):
        for s in range(1, 9):
            for t in range(s, 9):
                if plan_chain(s, t, pol).jtls != bfs_min_jtls(s, t, pol.intra_step_ranks, pol.between_gain,
                                                              pol.terminal_gain):
                    failures.append(f"chain {s}->{t} {pol.chain_model.value}")
    if any(splitter_tree(n).jj_cost != 3 * (n - 1) for n in range(1, 4097)):
        failures.append("splitter law")
    if any(not net_split_cost(n).jj_ranked < net_split_cost(n).jj_conventional for n in range(2, 9)):
        failures.append("ranked < conventional 2..8")
    for n in range(1, 1025):
        for m in ("right_sized", "modular_uniform"):
            t = ranked_tree(n, mode=m)
            if (t.root.leaves if t.root else 1) != n:
                failures.append(f"leaves {n} {m}")
    lad = build_ladder()
    if any(current_to_rank(lad, rank_to_current(lad, r)) != r for r in lad.ranks()):
        failures.append("ladder round trip")
    n = ksa_example()
    a = assign_ranks(n)
    if propagate(n, a.per_cell_rank) != a.per_cell_rank:
        failures.append("idempotence")
    if assign_ranks(n).to_json() != a.to_json():
        failures.append("determinism")
    lib = default_library()
    for kind in ("AND", "OR", "XOR", "NOT", "DFF"):
        for k in (0.1, 3.0, 17.0):
            if abs(bias_savings(kind, 4, "matched", lib) - bias_savings(kind, 4, "matched", lib.scaled(k))) > 1e-9:
                failures.append(f"bias scale {kind}")
    for fmt in ("csv", "md", "json"):
        if quiet_main("bench", str(CORPUS), "--format", fmt) != quiet_main("bench", str(CORPUS), "--format", fmt):
            failures.append(f"bench bytes {fmt}")
    record(9, "property suites", not failures, "all hold" if not failures else "; ".join(failures))
    assert not failures


def test_c10_excluded_analog():
    doc = export_tree_netlist(ranked_tree(1024, mode="modular_uniform"))
    ok = len(doc["blocks"]) == 201 and all(len(b["stages"]) == 4 for b in doc["blocks"])
    record(10, "analog margins and waveforms", ok,
           "excluded (not reproducible without circuit simulation); chain topology export "
           + ("available" if ok else "BROKEN"), status="EXCLUDED" if ok else "FAIL")
    assert ok


if __name__ == "__main__":
    # fresh interpreter so pytest can rewrite asserts in modules imported above
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", __file__, "-q", "-p", "no:cacheprovider"]))
