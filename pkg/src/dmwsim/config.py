"""Experiment files (YAML) and built-in presets.

Keys are validated strictly: unknown keys anywhere are rejected, and a
preset is merged underneath the file's own keys.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .model import INFINITE_BUFFER, ArrivalSpec, ChannelSpec
from .policies import AbConfig, RsConfig
from .sim import SimConfig

GROUP1_PMF = [0.15, 0.2, 0.2, 0.15, 0.3]
GROUP2_PMF = [0.25, 0.25, 0.15, 0.1, 0.25]

PRESETS = {
    "paper-sec5": {
        "users": 20,
        "slots": 200_000,
        "buffer": 200,
        "rates": [1, 2, 3, 4, 5],
        "pmf_groups": [GROUP1_PMF, GROUP2_PMF],
        "arrival_total": 4.0,
        "ab": {"b": 2.0},
        "rs": {"b_ladder": [1.1, 1.2, 2.0], "delta": 2.0, "collthr": 7, "idlethr": 7},
        "sweep": {
            "arrival_grid": [1, 2, 3, 4, 4.5, 5, 5.5, 6],
            "policies": ["mw", "ab", "rs"],
        },
    },
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AbSection(_Strict):
    b: float = 2.0


class RsSection(_Strict):
    b_ladder: list[float] = [1.1, 1.2, 2.0]
    delta: float = 2.0
    collthr: int = 7
    idlethr: int = 7
    minislot_cap: int = 10_000
    carry: Literal["alpha", "tau"] = "alpha"


class SweepSection(_Strict):
    arrival_grid: list[float] = Field(default_factory=list)
    policies: list[Literal["mw", "ab", "rs"]] = ["mw", "ab", "rs"]
    delta_grid: list[float] = Field(default_factory=list)
    users_grid: list[int] = Field(default_factory=list)
    jobs: int = 1


class ExperimentFile(_Strict):
    preset: Optional[str] = None
    users: int = 20
    slots: int = 200_000
    warmup: Optional[int] = None
    seed: int = 1
    buffer: Union[int, Literal["inf"]] = 200
    rates: list[int] = [1, 2, 3, 4, 5]
    pmf_groups: list[list[float]] = [GROUP1_PMF, GROUP2_PMF]
    arrival_total: float = 4.0
    arrival_per_user: Optional[list[float]] = None
    policy: Literal["mw", "ab", "rs"] = "mw"
    ab: AbSection = Field(default_factory=AbSection)
    rs: RsSection = Field(default_factory=RsSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output_dir: Optional[str] = None
    series: bool = False

    @field_validator("users")
    @classmethod
    def _users(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("slots")
    @classmethod
    def _slots(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @model_validator(mode="after")
    def _cross(self):
        if self.warmup is not None and not 0 <= self.warmup < self.slots:
            raise ValueError("warmup: must satisfy 0 <= warmup < slots")
        if self.arrival_per_user is not None and len(self.arrival_per_user) != self.users:
            raise ValueError("arrival_per_user: length must equal users")
        if self.arrival_total < 0:
            raise ValueError("arrival_total: must be >= 0")
        return self

    def buffer_size(self) -> int:
        return INFINITE_BUFFER if self.buffer == "inf" else int(self.buffer)

    def sim_config(self, *, users: Optional[int] = None, **changes) -> SimConfig:
        """Build a :class:`SimConfig`; ``users`` rescales the channel groups
        and the uniform arrival split."""
        n = self.users if users is None else users
        channel = ChannelSpec.grouped(self.rates, self.pmf_groups, n)
        if self.arrival_per_user is not None and users is None:
            arrivals = ArrivalSpec(tuple(self.arrival_per_user))
        else:
            arrivals = ArrivalSpec.uniform(self.arrival_total, n)
        kwargs = dict(
            channel=channel,
            arrivals=arrivals,
            slots=self.slots,
            buffer=self.buffer_size(),
            policy=self.policy,
            ab=AbConfig(self.ab.b),
            rs=RsConfig(
                b_ladder=tuple(self.rs.b_ladder),
                delta=self.rs.delta,
                collthr=self.rs.collthr,
                idlethr=self.rs.idlethr,
                minislot_cap=self.rs.minislot_cap,
                carry=self.rs.carry,
            ),
            seed=self.seed,
            warmup=self.warmup,
            record_series=True,
        )
        kwargs.update(changes)
        return SimConfig(**kwargs)


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve(raw: dict) -> ExperimentFile:
    """Validate a raw mapping, merging its preset (if any) underneath."""
    raw = dict(raw or {})
    name = raw.get("preset")
    if name is not None:
        if name not in PRESETS:
            raise ValueError(f"preset: unknown preset {name!r}; known: {sorted(PRESETS)}")
        raw = _merge(PRESETS[name], raw)
    return ExperimentFile.model_validate(raw)


def load(path: Union[str, Path, None], overrides: Optional[dict] = None) -> ExperimentFile:
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    return resolve(_merge(raw, overrides or {}))
