"""``key = value`` run configuration and seed fan-out."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

# Fixed order: appending is fine, reordering changes every derived seed.
SEED_COMPONENTS = ("init", "disc", "masks", "shuffle", "classifier")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # optimizer
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # losses
    w_l1: float = 1.0
    w_var: float = 0.1
    w_gan: float = 0.1
    disc_channels: str = "64,128,256"
    # network
    arch: str = ""
    gate: str = "sigmoid"
    leaky_slope: float = 0.2
    image_size: int = 256
    # masks / decompression
    mask_fraction: float = 0.30
    threshold: float = 0.15
    mode: str = "selection"
    # training loop
    data_dir: str = ""
    checkpoint: str = "checkpoint.cdn"
    resume: str = ""
    log: str = "train.log"
    steps: int = 1000
    batch_size: int = 8
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.gate not in ("sigmoid", "identity"):
            raise ValueError(f"gate must be 'sigmoid' or 'identity', got {self.gate!r}")
        if self.mode not in ("selection", "baseline"):
            raise ValueError(f"mode must be 'selection' or 'baseline', got {self.mode!r}")
        if self.image_size % 8:
            raise ValueError(f"image_size must be divisible by 8, got {self.image_size}")
        if min(self.steps, self.batch_size, self.checkpoint_every) < 1:
            raise ValueError("steps, batch_size and checkpoint_every must be positive")

    @property
    def disc_channel_tuple(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.disc_channels.split(",") if c.strip())

    def seed_for(self, component: str) -> int:
        return component_seed(self.seed, component)

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        return replace(self, **_convert(overrides))

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def component_seed(seed: int, component: str) -> int:
    index = SEED_COMPONENTS.index(component)
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _convert(values: dict[str, str]) -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, raw in values.items():
        if key not in types:
            raise KeyError(f"unknown config key {key!r}")
        kind = types[key]
        try:
            if kind == "int":
                out[key] = int(raw)
            elif kind == "float":
                out[key] = float(raw)
            else:
                out[key] = str(raw)
        except ValueError:
            raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None
    return out


def parse_config(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """File values first, then ``overrides`` (e.g. command-line flags) on top."""
    values = parse_config(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update(overrides or {})
    return RunConfig(**_convert(values))
