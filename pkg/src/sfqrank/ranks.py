"""Rank algebra for discretized SFQ critical currents.

A rank is a 1-based index into a geometric ladder of baseline critical
currents.  A cell of rank ``s`` can drive ``s - t + 1`` cells of rank ``t``
directly; reaching a higher rank requires a chain of amplifying JTLs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

SQRT2 = math.sqrt(2.0)

# Rounded nominal currents (uA) commonly used for the sqrt(2) ladder between
# 46 and 500 uA.  Geometric rungs are snapped onto these when close enough,
# the same way preferred-number series are used for component values.
NOMINAL_CURRENTS_UA = (46, 66, 88, 125, 180, 250, 353, 500)
DEFAULT_REFERENCE_UA = 250.0


class RankError(ValueError):
    pass


class InfeasibleFanout(RankError):
    def __init__(self, fanout: int, target_rank: int, required: int, top: int):
        self.fanout = fanout
        self.target_rank = target_rank
        self.required = required
        self.top = top
        super().__init__(
            f"FO{fanout} into rank-{target_rank} cells needs a rank-{required} "
            f"source but the ladder stops at rank {top}; stage the fan-out"
        )


def rank_count(i_min: float, i_max: float, p_r: float) -> int:
    """Smallest integer N with N >= log(i_max/i_min)/log(p_r) + 1."""
    if not (0 < i_min <= i_max) or p_r <= 1:
        raise RankError(f"bad ladder bounds ({i_min}, {i_max}, {p_r})")
    x = math.log(i_max / i_min) / math.log(p_r) + 1
    return math.ceil(x - 1e-9)


@dataclass(frozen=True)
class RankLadder:
    currents: tuple[int, ...]
    step_ratio: float = SQRT2
    i_min: float = 46.0
    i_max: float = 500.0
    rounding_tolerance: float = 0.02
    # nominal snapping makes adjacent ratios deviate by up to ~6%
    ratio_tolerance: float = 0.08

    def __post_init__(self):
        if not self.currents:
            raise RankError("ladder has no rungs")
        tol = self.rounding_tolerance
        prev = None
        for c in self.currents:
            if prev is not None:
                if c <= prev:
                    raise RankError(f"currents not strictly increasing at {c}")
                ratio = c / prev
                if abs(ratio / self.step_ratio - 1) > self.ratio_tolerance:
                    raise RankError(
                        f"ratio {prev}->{c} = {ratio:.3f} is not {self.step_ratio:.3f}"
                    )
            prev = c
        if self.currents[0] < self.i_min * (1 - tol) or self.currents[-1] > self.i_max * (1 + tol):
            raise RankError("rungs fall outside the ladder bounds")

    @property
    def top(self) -> int:
        return len(self.currents)

    def __len__(self) -> int:
        return len(self.currents)

    def check(self, r: int) -> int:
        if not isinstance(r, int) or not 1 <= r <= self.top:
            raise RankError(f"rank {r!r} outside 1..{self.top}")
        return r

    def ranks(self) -> range:
        return range(1, self.top + 1)


def build_ladder(
    i_min: float = 46.0,
    i_max: float = 500.0,
    p_r: float = SQRT2,
    rounding: float = 0.02,
    reference: float | None = None,
    nominals: Sequence[float] | None = None,
    snap: float = 0.06,
) -> RankLadder:
    """Discretize ``[i_min, i_max]`` into geometric rungs anchored at ``reference``.

    Each ideal rung ``reference * p_r**k`` is snapped onto the closest entry
    of ``nominals`` when within ``snap`` (relative), otherwise rounded to an
    integer uA.  Rungs outside the bounds (after rounding, with ``rounding``
    slack) are dropped.  ``nominals`` defaults to the common sqrt(2) series
    when ``p_r`` is sqrt(2) and to plain rounding otherwise.
    """
    if nominals is None:
        nominals = NOMINAL_CURRENTS_UA if math.isclose(p_r, SQRT2, rel_tol=1e-6) else ()
    if not (0 < i_min <= i_max):
        raise RankError(f"need 0 < i_min <= i_max, got {i_min}, {i_max}")
    if p_r <= 1:
        raise RankError(f"step ratio must exceed 1, got {p_r}")
    if reference is None:
        reference = DEFAULT_REFERENCE_UA if i_min <= DEFAULT_REFERENCE_UA <= i_max else i_min
    lo, hi = i_min * (1 - rounding), i_max * (1 + rounding)
    k_lo = math.floor(math.log(lo / reference) / math.log(p_r)) - 1
    k_hi = math.ceil(math.log(hi / reference) / math.log(p_r)) + 1
    rungs = []
    for k in range(k_lo, k_hi + 1):
        ideal = reference * p_r**k
        value = _snap(ideal, nominals, snap)
        if lo <= value <= hi:
            rungs.append(value)
    if not rungs:
        raise RankError(f"no rung of ratio {p_r} fits in [{i_min}, {i_max}]")
    return RankLadder(tuple(rungs), p_r, i_min, i_max, rounding)


def _snap(ideal: float, nominals: Iterable[float], snap: float) -> int:
    best = None
    for n in nominals:
        gap = abs(n / ideal - 1)
        if gap <= snap and (best is None or gap < best[0]):
            best = (gap, n)
    return int(best[1]) if best else int(round(ideal))


DEFAULT_LADDER = build_ladder()


def current_to_rank(ladder: RankLadder, i: float) -> int:
    nearest = min(ladder.ranks(), key=lambda r: abs(math.log(ladder.currents[r - 1] / i)))
    rung = ladder.currents[nearest - 1]
    gap = abs(rung - i) / i
    if gap > ladder.rounding_tolerance:
        raise RankError(
            f"{i} uA matches no rung: nearest is rank {nearest} ({rung} uA), gap {100 * gap:.1f}%"
        )
    return nearest


def rank_to_current(ladder: RankLadder, r: int) -> int:
    return ladder.currents[ladder.check(r) - 1]


def fanout_capacity(s: int, t: int) -> int | None:
    """Direct fan-out from rank ``s`` into rank ``t``; None when amplification is needed."""
    if s < t:
        return None
    return s - t + 1


def required_source_rank(n: int, t: int, ladder: RankLadder | None = None) -> int:
    if n < 1:
        raise RankError(f"fan-out must be >= 1, got {n}")
    s = t + n - 1
    if ladder is not None and s > ladder.top:
        raise InfeasibleFanout(n, t, s, ladder.top)
    return s


class ChainModel(str, Enum):
    GAP = "gap"
    EQ2 = "eq2"


@dataclass(frozen=True)
class AmplifierPolicy:
    """How much rank a chain of amplifying JTLs gains.

    ``gap`` model: each JTL gains ``intra_step_ranks`` and the wire between two
    consecutive JTLs gains ``inter_gap_ranks``; nothing is gained after the
    last JTL.  ``eq2`` model: the closed-form count
    ``ceil(log(I_T/I_S) / (2 log p_a))``, i.e. each JTL is worth two steps of
    ``p_a`` and the trailing step into the target is counted.
    """

    intra_step_ranks: int = 1
    inter_gap_ranks: int = 1
    jjs_per_jtl: int = 2
    chain_model: ChainModel = ChainModel.GAP

    def __post_init__(self):
        object.__setattr__(self, "chain_model", ChainModel(self.chain_model))
        if self.intra_step_ranks < 1:
            raise RankError("intra_step_ranks must be >= 1")
        if self.inter_gap_ranks < 0:
            raise RankError("inter_gap_ranks must be >= 0")
        if self.jjs_per_jtl != 2:
            raise RankError("a JTL has exactly two JJs")

    @classmethod
    def from_step(cls, p_a: float, p_r: float = SQRT2, chain_model="gap") -> "AmplifierPolicy":
        j = math.log(p_a) / math.log(p_r)
        if abs(j - round(j)) > 1e-6 or round(j) < 1:
            raise RankError(f"p_a={p_a} is not an integer power of p_r={p_r}")
        return cls(intra_step_ranks=int(round(j)), chain_model=chain_model)

    @property
    def between_gain(self) -> int:
        if self.chain_model is ChainModel.EQ2:
            return self.intra_step_ranks
        return self.inter_gap_ranks

    @property
    def terminal_gain(self) -> int:
        """Ranks the last JTL may leave for the wire into the target."""
        return self.intra_step_ranks if self.chain_model is ChainModel.EQ2 else 0

    def jtl_count(self, d: int) -> int:
        if d <= 0:
            return 0
        j = self.intra_step_ranks
        if self.chain_model is ChainModel.EQ2:
            return -(-d // (2 * j))
        g = self.inter_gap_ranks
        # smallest N with N*j + (N-1)*g >= d
        return max(1, -(-(d + g) // (j + g)))


DEFAULT_POLICY = AmplifierPolicy()
STEP2_POLICY = AmplifierPolicy(intra_step_ranks=2)


@dataclass(frozen=True)
class JtlChainPlan:
    source_rank: int
    target_rank: int
    stages: tuple[tuple[int, int], ...] = field(default=())

    @property
    def jtls(self) -> int:
        return len(self.stages)

    @property
    def jj_count(self) -> int:
        return 2 * len(self.stages)

    def __len__(self) -> int:
        return len(self.stages)


def plan_chain(s: int, t: int, policy: AmplifierPolicy = DEFAULT_POLICY) -> JtlChainPlan:
    if s > t:
        raise RankError(f"chains only amplify: {s} > {t}")
    n = policy.jtl_count(t - s)
    stages = []
    cur = s
    for k in range(n):
        out = t if k == n - 1 else cur + policy.intra_step_ranks
        stages.append((cur, out))
        # every JTL must still gain at least one rank
        cur = min(out + policy.between_gain, t - 1)
    return JtlChainPlan(s, t, tuple(stages))


def chain_violations(chain: JtlChainPlan, policy: AmplifierPolicy = DEFAULT_POLICY) -> list[str]:
    """Well-formedness of a chain under ``policy``; empty when valid."""
    out = []
    s, t, st = chain.source_rank, chain.target_rank, chain.stages
    if t < s:
        out.append(f"chain descends {s}->{t}")
        return out
    if not st:
        if t > s:
            out.append(f"rank {s}->{t} needs amplification but the chain is empty")
        return out
    if t == s:
        out.append("non-empty chain between equal ranks")
    if st[0][0] != s:
        out.append(f"first JTL starts at rank {st[0][0]}, not {s}")
    if st[-1][1] != t:
        out.append(f"last JTL ends at rank {st[-1][1]}, not {t}")
    j = policy.intra_step_ranks
    for k, (a, b) in enumerate(st):
        limit = j + (policy.terminal_gain if k == len(st) - 1 else 0)
        if b < a or b - a > limit:
            out.append(f"JTL {k} spans {a}->{b}, limit {limit}")
    for k in range(1, len(st)):
        jump = st[k][0] - st[k - 1][1]
        if jump < 0 or jump > policy.between_gain:
            out.append(f"gap before JTL {k} jumps {jump} ranks, limit {policy.between_gain}")
    return out


@dataclass(frozen=True)
class FanoutPositive:
    max_fanout: int

    def __str__(self):
        return f"FO{self.max_fanout}"


@dataclass(frozen=True)
class NeedsAmplification:
    num_jtls: int

    def __str__(self):
        return f"{self.num_jtls} JTL" + ("s" if self.num_jtls != 1 else "")


ConnectionRule = FanoutPositive | NeedsAmplification


def connection_rule(s: int, t: int, policy: AmplifierPolicy = DEFAULT_POLICY) -> ConnectionRule:
    cap = fanout_capacity(s, t)
    if cap is not None:
        return FanoutPositive(cap)
    return NeedsAmplification(plan_chain(s, t, policy).jtls)


def connection_rule_table(
    ladder: RankLadder = DEFAULT_LADDER, policy: AmplifierPolicy = DEFAULT_POLICY
) -> list[list[ConnectionRule]]:
    """``table[s-1][t-1]`` is the rule for a rank-``s`` source into rank-``t`` targets."""
    return [[connection_rule(s, t, policy) for t in ladder.ranks()] for s in ladder.ranks()]
