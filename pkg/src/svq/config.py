"""Run configuration shared by every stage."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Tuple

CONFIG_ENV = "SVQ_CONFIG"


@dataclass(frozen=True)
class VoxelConfig:
    """Voxel geometry and layer widths.

    ``base_size`` is a guess (0.2 m per axis); the remaining defaults are the
    usual operating point: scales 1/2/4, all widths 64, two history frames,
    activation threshold 0.1.
    """

    base_size: Tuple[float, float, float] = (0.2, 0.2, 0.2)
    scales: Tuple[int, ...] = (1, 2, 4)
    feature_dim: int = 64  # d, inheritance feature width
    channel_dim: int = 64  # N_C
    key_dim: int = 64  # d_k
    history_frames: int = 2
    threshold: float = 0.1
    norm_eps: float = 1e-5
    attention_mode: str = "dense"  # or "paired"
    neighbor_pool: bool = False

    def __post_init__(self):
        base = tuple(float(b) for b in self.base_size)
        scales = tuple(int(s) for s in self.scales)
        object.__setattr__(self, "base_size", base)
        object.__setattr__(self, "scales", scales)
        if len(base) != 3 or min(base) <= 0:
            raise ValueError(f"base_size must be three positive lengths, got {base}")
        if not scales or scales[0] != 1:
            raise ValueError(f"scales must start at 1, got {scales}")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError(f"scales must be strictly increasing, got {scales}")
        for name in ("feature_dim", "channel_dim", "key_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.history_frames < 0:
            raise ValueError("history_frames must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.attention_mode not in ("dense", "paired"):
            raise ValueError(f"unknown attention_mode {self.attention_mode!r}")

    @property
    def current_width(self) -> int:
        return 5

    @property
    def history_width(self) -> int:
        return 5 + self.feature_dim

    def replace(self, **kw) -> "VoxelConfig":
        d = asdict(self)
        d.update(kw)
        return VoxelConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base_size"] = list(d["base_size"])
        d["scales"] = list(d["scales"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VoxelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path=None) -> "VoxelConfig":
        """Load from ``path``, else from ``$SVQ_CONFIG``, else defaults."""
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls()
        with open(path) as f:
            return cls.from_dict(json.load(f))
