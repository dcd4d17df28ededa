"""Run configuration loaded from a YAML file and overridden by CLI flags."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .ranks import SQRT2, AmplifierPolicy, ChainModel, RankError, RankLadder, build_ladder


class ConfigError(ValueError):
    pass


def parse_step(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("sqrt2", "sqrt(2)", "√2"):
            return SQRT2
        try:
            return float(s)
        except ValueError:
            raise ConfigError(f"bad step size {v!r}; use sqrt2 or a number") from None
    return float(v)


@dataclass(frozen=True)
class RunConfig:
    i_min_uA: float = 46.0
    i_max_uA: float = 500.0
    p_r: float = SQRT2
    p_a: float = SQRT2
    chain_model: str = "gap"
    rounding_pct: float = 2.0
    inter_gap_ranks: int = 1
    cell_lib: str | None = None
    count_output_taps: bool = True
    clock_mode: str = "right_sized"
    stage_order: str = "paper_balanced"
    clock_root_rank: int | None = None
    stage_policy: str = "highest_rank"
    forward_tap: bool = True
    format: str = "md"
    corpus: str | None = None

    def __post_init__(self):
        for name in ("p_r", "p_a"):
            object.__setattr__(self, name, parse_step(getattr(self, name)))
        if self.chain_model not in {m.value for m in ChainModel}:
            raise ConfigError(f"chain_model: expected gap or eq2, got {self.chain_model!r}")
        if self.format not in ("csv", "md", "json"):
            raise ConfigError(f"format: expected csv, md or json, got {self.format!r}")
        if self.clock_mode not in ("right_sized", "modular_uniform"):
            raise ConfigError(f"clock_mode: expected right_sized or modular_uniform, got {self.clock_mode!r}")
        if self.stage_order not in ("paper_balanced", "min_cost"):
            raise ConfigError(f"stage_order: expected paper_balanced or min_cost, got {self.stage_order!r}")
        if self.stage_policy not in ("highest_rank", "lowest_rank"):
            raise ConfigError(f"stage_policy: expected highest_rank or lowest_rank, got {self.stage_policy!r}")
        if not self.rounding_pct > 0:
            raise ConfigError("rounding_pct: must be positive")
        for name in ("cell_lib", "corpus"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name}: path {p!r} does not exist")
        try:
            self.ladder()
            self.policy()
        except RankError as e:
            raise ConfigError(str(e)) from None
        if self.clock_root_rank is not None and not 1 <= self.clock_root_rank <= self.ladder().top:
            raise ConfigError(f"clock_root_rank: {self.clock_root_rank} is not on the ladder")

    def ladder(self) -> RankLadder:
        return build_ladder(self.i_min_uA, self.i_max_uA, self.p_r, self.rounding_pct / 100)

    def policy(self, p_a: float | None = None) -> AmplifierPolicy:
        p_a = self.p_a if p_a is None else p_a
        j = math.log(p_a) / math.log(self.p_r)
        if abs(j - round(j)) > 1e-6 or round(j) < 1:
            raise ConfigError(f"p_a: {p_a:g} is not an integer power of p_r={self.p_r:g}")
        return AmplifierPolicy(int(round(j)), self.inter_gap_ranks, 2, self.chain_model)

    def replace(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path) as fh:
                d = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(d)
