"""Command-line front end: ``python3 -m sfqrank <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .assign import AssignmentOptions, InfeasibleAssignment, RankConflict, assign_ranks, conventional_split_jj, verify_assignment
from .config import ConfigError, RunConfig
from .netlist import NetlistError, NetlistSyntaxError, load_netlist
from .ranks import InfeasibleFanout, RankError, connection_rule_table, rank_to_current
from .report import analyze_dict, benchmark_row, discover, load_corpus, render_analyze, render_bench, render_rule_table
from .synth import CellLibrary, default_library, export_tree_netlist, ranked_tree, savings, splitter_tree

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INFEASIBLE = 0, 1, 2, 3
BUNDLED_CORPUS = Path(__file__).parent / "data" / "iscas85"


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--step", choices=["sqrt2", "2"], help="amplification step size p_a")
    common.add_argument("--chain-model", choices=["gap", "eq2"])
    common.add_argument("--format", choices=["csv", "md", "json"])
    common.add_argument("--cell-lib", help="cell library YAML (default: bundled calibration data)")
    common.add_argument("--out", help="write output here instead of stdout")

    p = argparse.ArgumentParser(prog="sfqrank", description=__doc__, parents=[common])
    p.add_argument("--version", action="version", version=f"sfqrank {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("table", parents=[common], help="connection-rule table for the ladder")
    t = sub.add_parser("tree", parents=[common], help="conventional vs ranked tree for one fan-out")
    t.add_argument("n", type=int)
    t.add_argument("--mode", choices=["right_sized", "modular_uniform"], help="default: report both")
    t.add_argument("--order", choices=["paper_balanced", "min_cost"], default="paper_balanced")
    a = sub.add_parser("analyze", parents=[common], help="fan-out and cost report for one netlist")
    a.add_argument("file")
    s = sub.add_parser("assign", parents=[common], help="rank assignment and clock plan for one netlist")
    s.add_argument("file")
    s.add_argument("--clock-root-rank", type=int)
    s.add_argument("--lowest", action="store_true", help="seed the largest stage at rank 1")
    s.add_argument("--no-forward-tap", action="store_true")
    b = sub.add_parser("bench", parents=[common], help="savings table over a corpus directory")
    b.add_argument("dir", nargs="?", help="directory of .bench/.v files (default: bundled ISCAS'85)")
    e = sub.add_parser("export", parents=[common], help="chain topology with JJ currents")
    e.add_argument("target", help="a fan-out N, or a netlist file to export its assignment")
    e.add_argument("--mode", choices=["right_sized", "modular_uniform"], default="modular_uniform")
    e.add_argument("--order", choices=["paper_balanced", "min_cost"], default="paper_balanced")
    return p


def load_config(args) -> RunConfig:
    path = getattr(args, "config", None)
    cfg = RunConfig.load(path) if path else RunConfig()
    step = getattr(args, "step", None)
    over = {
        "p_a": {"sqrt2": "sqrt2", "2": 2.0}.get(step),
        "chain_model": getattr(args, "chain_model", None),
        "format": getattr(args, "format", None),
        "cell_lib": getattr(args, "cell_lib", None),
    }
    if getattr(args, "clock_root_rank", None) is not None:
        over["clock_root_rank"] = args.clock_root_rank
    if getattr(args, "lowest", False):
        over["stage_policy"] = "lowest_rank"
    if getattr(args, "no_forward_tap", False):
        over["forward_tap"] = False
    return cfg.replace(**over)


def library(cfg: RunConfig) -> CellLibrary:
    return CellLibrary.load(cfg.cell_lib) if cfg.cell_lib else default_library()


def cmd_table(cfg: RunConfig, args) -> tuple[str, int]:
    ladder = cfg.ladder()
    return render_rule_table(connection_rule_table(ladder, cfg.policy()), ladder, cfg.format), EXIT_OK


def tree_report(cfg: RunConfig, n: int, modes=("modular_uniform", "right_sized"), order="paper_balanced") -> dict:
    if n < 1:
        raise UsageError("fan-out must be >= 1")
    conv = splitter_tree(n)
    ranked = []
    for mode in modes:
        rt = ranked_tree(n, cfg.ladder(), cfg.policy(), mode, order)
        ranked.append({
            "mode": mode,
            "stage_fanouts": list(rt.stage_fanouts),
            "blocks": rt.block_count,
            "ranked_jj": rt.jj_cost,
            "savings_pct": round(savings(conv.jj_cost, rt.jj_cost), 1),
        })
    return {
        "fanout": n,
        "stage_order": order,
        "conventional_splitters": conv.node_count,
        "conventional_jj": conv.jj_cost,
        "ranked": ranked,
    }


def cmd_tree(cfg: RunConfig, args) -> tuple[str, int]:
    modes = (args.mode,) if args.mode else ("modular_uniform", "right_sized")
    d = tree_report(cfg, args.n, modes, args.order)
    if cfg.format == "json":
        return json.dumps(d, indent=2) + "\n", EXIT_OK
    if cfg.format == "csv":
        rows = ["fanout,mode,stage_fanouts,blocks,ranked_jj,conv_jj,savings_pct"]
        for r in d["ranked"]:
            fo = "x".join(map(str, r["stage_fanouts"]))
            rows.append(f"{args.n},{r['mode']},{fo},{r['blocks']},{r['ranked_jj']},{d['conventional_jj']},{r['savings_pct']:.1f}")
        return "\n".join(rows) + "\n", EXIT_OK
    out = [f"FO{args.n} conventional: {d['conventional_splitters']} splitters, {d['conventional_jj']} JJs"]
    for r in d["ranked"]:
        fo = "x".join(map(str, r["stage_fanouts"])) or "-"
        out.append(f"FO{args.n} {r['mode']} (stages {fo}): {r['blocks']} blocks, "
                   f"{r['ranked_jj']} vs {d['conventional_jj']} JJs, {r['savings_pct']:.1f}%")
    return "\n".join(out) + "\n", EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> tuple[str, int]:
    n = load_netlist(args.file)
    return render_analyze(analyze_dict(n, cfg, library(cfg)), cfg.format), EXIT_OK


def _options(cfg: RunConfig) -> AssignmentOptions:
    return AssignmentOptions(cfg.stage_policy, cfg.clock_root_rank, forward_tap=cfg.forward_tap)


def cmd_assign(cfg: RunConfig, args) -> tuple[str, int]:
    n = load_netlist(args.file)
    ladder, policy = cfg.ladder(), cfg.policy()
    a = assign_ranks(n, ladder, policy, _options(cfg))
    viol = verify_assignment(n, a, ladder, policy)
    conv = conventional_split_jj(n, cfg.count_output_taps)
    ranked = a.data_jj + (a.clock_plan.jj_count if a.clock_plan else 0)
    if cfg.format == "json":
        d = a.to_dict()
        d["violations"] = [str(v) for v in viol]
        d["splitting_jj"] = {"conventional": conv, "ranked": ranked}
        return json.dumps(d, indent=2) + "\n", EXIT_OK if not viol else EXIT_INFEASIBLE
    if cfg.format == "csv":
        lines = ["cell,rank"] + [f"{c},{r}" for c, r in sorted(a.per_cell_rank.items())]
        return "\n".join(lines) + "\n", EXIT_OK if not viol else EXIT_INFEASIBLE
    out = [f"{n.name}: seeded stage {a.seed_stage} from a rank-{a.clock_root_rank} clock root"]
    by_rank = {}
    for c, r in a.per_cell_rank.items():
        by_rank.setdefault(r, []).append(c)
    for r in sorted(by_rank, reverse=True):
        out.append(f"  R{r}: {' '.join(sorted(by_rank[r]))}")
    if a.input_source_ranks:
        out.append("input source ranks: " + ", ".join(f"{k}=R{v}" for k, v in sorted(a.input_source_ranks.items())))
    for net, node in sorted(a.inserted_chains.items()):
        stages = " ".join(f"{x}-{y}" for x, y in node.chain.stages)
        extra = f" + {len(node.children)} sub-blocks" if node.children else ""
        out.append(f"chain on {net}: [{stages}] -> {', '.join(node.sinks)}{extra}")
    if a.clock_plan:
        o = a.clock_plan.outline()
        out.append(f"clock: root R{o['root_rank']}, {o['lines']} lines, {o['jj_ranked']} JJs "
                   f"(conventional {o['jj_conventional']})")
        for g in o["line_groups"]:
            out.append(f"  {g['count']} line(s) amplified to R{g['amplified_to']} feeding {g['fanout']} R{g['cell_rank']} cell(s)")
    out.append(f"splitting JJs: ranked {ranked} vs conventional {conv} ({savings(conv, ranked):.1f}%)")
    out.append("violations: none" if not viol else "violations:\n" + "\n".join(f"  {v}" for v in viol))
    return "\n".join(out) + "\n", EXIT_OK if not viol else EXIT_INFEASIBLE


def cmd_bench(cfg: RunConfig, args) -> tuple[str, int]:
    corpus = args.dir or cfg.corpus or BUNDLED_CORPUS
    if not Path(corpus).is_dir():
        raise UsageError(f"corpus directory {corpus} not found")
    lib = library(cfg)
    nets, bad = load_corpus(corpus)
    rows = [benchmark_row(n, cfg, lib) for n in nets]
    for f, e in bad:
        print(f"error: {e}", file=sys.stderr)
    if not discover(corpus):
        print(f"error: no .bench or .v files in {corpus}", file=sys.stderr)
        return render_bench(rows, cfg.format), EXIT_USAGE
    return render_bench(rows, cfg.format), EXIT_PARSE if bad else EXIT_OK


def cmd_export(cfg: RunConfig, args) -> tuple[str, int]:
    ladder, policy = cfg.ladder(), cfg.policy()
    if args.target.isdigit():
        tree = ranked_tree(int(args.target), ladder, policy, args.mode, args.order)
        return json.dumps(export_tree_netlist(tree, ladder), indent=2) + "\n", EXIT_OK
    n = load_netlist(args.target)
    a = assign_ranks(n, ladder, policy, _options(cfg))

    def node(fn):
        return {
            "stages_uA": [[rank_to_current(ladder, x), rank_to_current(ladder, y)] for x, y in fn.chain.stages],
            "sinks": list(fn.sinks),
            "children": [node(c) for c in fn.children],
        }

    doc = {
        "netlist": n.name,
        "cells": {c: {"rank": r, "current_uA": rank_to_current(ladder, r)} for c, r in sorted(a.per_cell_rank.items())},
        "data_chains": {net: node(fn) for net, fn in sorted(a.inserted_chains.items())},
    }
    if a.clock_plan:
        cp = a.clock_plan
        doc["clock"] = {
            "root_current_uA": rank_to_current(ladder, cp.root_rank),
            "distribution": export_tree_netlist(cp.distribution, ladder) if cp.distribution else None,
            "lines": [{"stages_uA": [[rank_to_current(ladder, x), rank_to_current(ladder, y)] for x, y in ln.chain.stages],
                       "cells": list(ln.cells)} for ln in cp.lines],
        }
    return json.dumps(doc, indent=2) + "\n", EXIT_OK


COMMANDS = {"table": cmd_table, "tree": cmd_tree, "analyze": cmd_analyze, "assign": cmd_assign,
            "bench": cmd_bench, "export": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        text, code = COMMANDS[args.cmd](cfg, args)
    except (ConfigError, UsageError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NetlistSyntaxError, NetlistError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (InfeasibleAssignment, InfeasibleFanout, RankConflict) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RankError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
