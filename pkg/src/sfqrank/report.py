"""Benchmark rows and CSV / markdown / JSON renderings."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from statistics import mean

from .netlist import Netlist, fanout_profile, levelize, load_netlist
from .ranks import ConnectionRule, FanoutPositive, RankLadder
from .synth import CellLibrary, clock_tree_cost, data_split_cost, savings, total_cost

LIBRARY_NOTE = "cell library: calibration data, reconstructed (JJ totals are library-dependent)"


def fmt_pct(x: float) -> str:
    return f"{x:.1f}"


def _md(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    def line(r):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(r, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep] + [line(r) for r in rows]) + "\n"


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# ----------------------------------------------------------- rule table


def render_rule_table(table: list[list[ConnectionRule]], ladder: RankLadder, fmt: str = "md") -> str:
    n = len(table)
    if fmt == "json":
        return _json({
            "currents_uA": list(ladder.currents),
            "rules": [[{"fanout": r.max_fanout} if isinstance(r, FanoutPositive) else {"jtls": r.num_jtls}
                       for r in row] for row in table],
        })
    header = ["source\\target"] + [f"R{t} ({ladder.currents[t - 1]})" for t in range(1, n + 1)]
    rows = [[f"R{s} ({ladder.currents[s - 1]})"] + [str(r) for r in table[s - 1]] for s in range(1, n + 1)]
    return _csv(header, rows) if fmt == "csv" else _md(header, rows)


# ------------------------------------------------------------ benchmarks


@dataclass(frozen=True)
class BenchmarkRow:
    name: str
    data_conv: int
    data_ranked_sqrt2: int
    data_ranked_2: int
    clock_conv: int
    clock_ranked: int
    total_conv: int
    total_ranked: int

    @property
    def data_savings_sqrt2(self) -> float:
        return savings(self.data_conv, self.data_ranked_sqrt2)

    @property
    def data_savings_2(self) -> float:
        return savings(self.data_conv, self.data_ranked_2)

    @property
    def clock_savings(self) -> float:
        return savings(self.clock_conv, self.clock_ranked)

    @property
    def total_savings(self) -> float:
        return savings(self.total_conv, self.total_ranked)

    def long_rows(self) -> list[list]:
        return [
            [self.name, self.data_conv, self.data_ranked_sqrt2, fmt_pct(self.data_savings_sqrt2), "data_sqrt2"],
            [self.name, self.data_conv, self.data_ranked_2, fmt_pct(self.data_savings_2), "data_2"],
            [self.name, self.clock_conv, self.clock_ranked, fmt_pct(self.clock_savings), "clock"],
            [self.name, self.total_conv, self.total_ranked, fmt_pct(self.total_savings), "total"],
        ]


def benchmark_row(n: Netlist, cfg, lib: CellLibrary) -> BenchmarkRow:
    ladder = cfg.ladder()
    taps = cfg.count_output_taps
    d1 = data_split_cost(n, ladder, cfg.policy(cfg.p_r), taps)
    d2 = data_split_cost(n, ladder, cfg.policy(cfg.p_r ** 2), taps)
    clock = clock_tree_cost(levelize(n), ladder, cfg.policy(), cfg.clock_mode, cfg.stage_order).report
    tot = total_cost(n, lib, ladder, cfg.policy(), taps, cfg.clock_mode)
    return BenchmarkRow(n.name, d1.jj_conventional, d1.jj_ranked, d2.jj_ranked,
                        clock.jj_conventional, clock.jj_ranked, tot.jj_conventional, tot.jj_ranked)


def averages(rows: list[BenchmarkRow]) -> dict[str, float]:
    if not rows:
        return {}
    return {
        "data_sqrt2": mean(r.data_savings_sqrt2 for r in rows),
        "data_2": mean(r.data_savings_2 for r in rows),
        "clock": mean(r.clock_savings for r in rows),
        "total": mean(r.total_savings for r in rows),
    }


def render_bench(rows: list[BenchmarkRow], fmt: str = "md", note: str = LIBRARY_NOTE) -> str:
    if fmt == "csv":
        out = [x for r in rows for x in r.long_rows()]
        return _csv(["benchmark", "conv_jj", "ranked_jj", "savings_pct", "category"], out)
    avg = averages(rows)
    if fmt == "json":
        return _json({
            "note": note,
            "rows": [{
                "benchmark": r.name,
                "data": {"conv_jj": r.data_conv, "ranked_sqrt2_jj": r.data_ranked_sqrt2,
                         "ranked_2_jj": r.data_ranked_2},
                "clock": {"conv_jj": r.clock_conv, "ranked_jj": r.clock_ranked},
                "total": {"conv_jj": r.total_conv, "ranked_jj": r.total_ranked},
                "savings_pct": {"data_sqrt2": round(r.data_savings_sqrt2, 1), "data_2": round(r.data_savings_2, 1),
                                "clock": round(r.clock_savings, 1), "total": round(r.total_savings, 1)},
            } for r in rows],
            "average_pct": {k: round(v, 1) for k, v in avg.items()},
        })
    header = ["Benchmark", "Data, step √2", "Data, step 2", "Clock", "Total"]
    body = [[r.name, fmt_pct(r.data_savings_sqrt2) + "%", fmt_pct(r.data_savings_2) + "%",
             fmt_pct(r.clock_savings) + "%", fmt_pct(r.total_savings) + "%"] for r in rows]
    if rows:
        body.append(["Average"] + [fmt_pct(avg[k]) + "%" for k in ("data_sqrt2", "data_2", "clock", "total")])
    return _md(header, body) + f"\n{note}\n"


def discover(corpus: str | Path) -> list[Path]:
    p = Path(corpus)
    return sorted((f for f in p.iterdir() if f.suffix.lower() in (".bench", ".v")), key=lambda f: f.name)


# --------------------------------------------------------------- analyze


def analyze_dict(n: Netlist, cfg, lib: CellLibrary) -> dict:
    prof = fanout_profile(n, cfg.count_output_taps)
    stages = levelize(n)
    row = benchmark_row(n, cfg, lib)
    ck = clock_tree_cost(stages, cfg.ladder(), cfg.policy(), cfg.clock_mode, cfg.stage_order)
    return {
        "netlist": n.name,
        "cells": len(n.logic_cells),
        "primary_inputs": len(n.primary_inputs),
        "primary_outputs": len(n.primary_outputs),
        "max_fanout": prof.max_fanout,
        "fanout_histogram": {str(k): v for k, v in prof.histogram.items()},
        "stage_sizes": {str(k): v for k, v in stages.stage_sizes.items()},
        "data_splitting": {
            "conv_jj": row.data_conv,
            "ranked_sqrt2_jj": row.data_ranked_sqrt2, "savings_sqrt2_pct": round(row.data_savings_sqrt2, 1),
            "ranked_2_jj": row.data_ranked_2, "savings_2_pct": round(row.data_savings_2, 1),
        },
        "clock": {"sinks": ck.sinks, "conv_jj": row.clock_conv, "ranked_jj": row.clock_ranked,
                  "savings_pct": round(row.clock_savings, 1), "mode": cfg.clock_mode,
                  "modes_jj": dict(ck.modes)},
        "total": {"conv_jj": row.total_conv, "ranked_jj": row.total_ranked,
                  "savings_pct": round(row.total_savings, 1), "note": LIBRARY_NOTE},
    }


def render_analyze(d: dict, fmt: str = "md") -> str:
    if fmt == "json":
        return _json(d)
    ds, ck, tot = d["data_splitting"], d["clock"], d["total"]
    rows = [
        ["data splitting, step √2", ds["conv_jj"], ds["ranked_sqrt2_jj"], fmt_pct(ds["savings_sqrt2_pct"])],
        ["data splitting, step 2", ds["conv_jj"], ds["ranked_2_jj"], fmt_pct(ds["savings_2_pct"])],
        ["clock", ck["conv_jj"], ck["ranked_jj"], fmt_pct(ck["savings_pct"])],
        ["total", tot["conv_jj"], tot["ranked_jj"], fmt_pct(tot["savings_pct"])],
    ]
    if fmt == "csv":
        return _csv(["category", "conv_jj", "ranked_jj", "savings_pct"], rows)
    hist = ", ".join(f"FO{k}: {v}" for k, v in d["fanout_histogram"].items())
    st = ", ".join(f"{k}: {v}" for k, v in d["stage_sizes"].items())
    head = (f"{d['netlist']}: {d['cells']} cells, {d['primary_inputs']} inputs, "
            f"{d['primary_outputs']} outputs, max fan-out {d['max_fanout']}\n"
            f"fan-out histogram: {hist}\nstage sizes: {st}\n\n")
    return head + _md(["category", "conventional JJs", "ranked JJs", "savings %"],
                      [[str(c) for c in r] for r in rows]) + f"\n{LIBRARY_NOTE}\n"


def load_corpus(corpus) -> tuple[list[Netlist], list[tuple[Path, Exception]]]:
    good, bad = [], []
    for f in discover(corpus):
        try:
            good.append(load_netlist(f))
        except ValueError as e:
            bad.append((f, e))
    return good, bad
