"""Regenerate the ISCAS'85 savings table and compare it with the published values.

    python3 scripts/benchmark_table.py [--chain-model eq2] [--no-taps]
"""
import argparse

from sfqrank.cli import BUNDLED_CORPUS
from sfqrank.config import RunConfig
from sfqrank.report import averages, benchmark_row, load_corpus
from sfqrank.synth import default_library

PUBLISHED = {
    "c17": (33.3, 33.3), "c432": (42.5, 50.3), "c499": (45.9, 65.3), "c880": (48.7, 60.5),
    "c1355": (47.6, 55.1), "c1908": (39.6, 47.6), "c2670": (43.0, 51.9), "c3540": (46.7, 56.5),
    "c5315": (48.1, 58.7), "c6288": (36.0, 53.9), "c7552": (44.9, 56.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", default=str(BUNDLED_CORPUS))
    ap.add_argument("--chain-model", choices=["gap", "eq2"], default="gap")
    ap.add_argument("--no-taps", action="store_true", help="do not count primary-output reads as fan-out")
    ap.add_argument("--clock-mode", choices=["right_sized", "modular_uniform"], default="right_sized")
    args = ap.parse_args()

    cfg = RunConfig(chain_model=args.chain_model, count_output_taps=not args.no_taps, clock_mode=args.clock_mode)
    nets, bad = load_corpus(args.corpus)
    for f, e in bad:
        print(f"skipped {f.name}: {e}")
    lib = default_library()
    rows = sorted((benchmark_row(n, cfg, lib) for n in nets), key=lambda r: int(r.name[1:]))

    print(f"{'bench':<8}{'sqrt2':>8}{'pub':>7}{'step2':>8}{'pub':>7}{'clock':>8}{'total':>8}")
    for r in rows:
        p1, p2 = PUBLISHED.get(r.name, (float("nan"),) * 2)
        print(f"{r.name:<8}{r.data_savings_sqrt2:8.1f}{p1:7.1f}{r.data_savings_2:8.1f}{p2:7.1f}"
              f"{r.clock_savings:8.1f}{r.total_savings:8.1f}")
    a = averages(rows)
    print(f"{'Average':<8}{a['data_sqrt2']:8.1f}{43.3:7.1f}{a['data_2']:8.1f}{53.6:7.1f}"
          f"{a['clock']:8.1f}{a['total']:8.1f}")
    print(f"\npublished clock 32.3, total 10.0; totals use {lib.provenance}")


if __name__ == "__main__":
    main()
