"""Conventional vs ranked trees for one large fan-out, across modes and stage orders."""
import argparse

from sfqrank.synth import ranked_tree, savings, splitter_tree


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("n", nargs="?", type=int, default=1024)
    args = ap.parse_args()

    conv = splitter_tree(args.n)
    print(f"FO{args.n}: {conv.node_count} splitters, {conv.jj_cost} JJs, depth {conv.depth}")
    for mode in ("modular_uniform", "right_sized"):
        for order in ("paper_balanced", "min_cost", "root_max"):
            t = ranked_tree(args.n, mode=mode, stage_order=order)
            fo = "x".join(map(str, t.stage_fanouts)) or "greedy"
            print(f"  {mode:<16}{order:<15}{fo:<10}{t.block_count:>5} blocks {t.jj_cost:>6} JJs "
                  f"depth {t.depth:>2}  {savings(conv.jj_cost, t.jj_cost):5.1f}%")


if __name__ == "__main__":
    main()
