"""Deterministic parameters for every learned layer.

All "sparse convolution" layers are pointwise linear maps here (a kernel-1
sparse convolution is exactly that). Weights are drawn from numpy's PCG64
generator, ``uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`` for both weight and
bias, and rounded to float32 so that the binary weight format round-trips
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import VoxelConfig
from .errors import DimensionError


@dataclass(frozen=True)
class LinearLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DimensionError(f"layer {self.name}: weight {w.shape} / bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError(f"layer {self.name}: non-finite parameters")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(
                f"layer {self.name} expects width {self.in_dim}, got {x.shape[-1]}"
            )
        return x @ self.weight.T + self.bias


@dataclass(frozen=True)
class NormLayer:
    """Batch norm in inference mode with fixed statistics."""

    mean: np.ndarray
    var: np.ndarray
    gain: np.ndarray
    bias: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=np.float64).reshape(-1)
                for a in (self.mean, self.var, self.gain, self.bias)]
        if len({a.shape for a in arrs}) != 1:
            raise DimensionError("norm statistics must share one length")
        if np.any(arrs[1] < 0):
            raise ValueError("norm variance must be non-negative")
        for name, a in zip(("mean", "var", "gain", "bias"), arrs):
            object.__setattr__(self, name, a)

    @classmethod
    def default(cls, channels: int, eps: float = 1e-5):
        return cls(np.zeros(channels), np.ones(channels), np.ones(channels),
                   np.zeros(channels), eps)

    def __call__(self, x):
        return (x - self.mean) / np.sqrt(self.var + self.eps) * self.gain + self.bias


def relu(x):
    return np.maximum(x, 0.0)


def apply_stack(layers: Sequence[LinearLayer], x: np.ndarray) -> np.ndarray:
    """Linear layers with ReLU between them (none after the last)."""
    for i, layer in enumerate(layers):
        if i:
            x = relu(x)
        x = layer(x)
    return x


def layer_specs(config: VoxelConfig) -> List[Tuple[str, int, int]]:
    """``(name, out_dim, in_dim)`` for every linear layer, in generation order."""
    c_in, h_in = config.current_width, config.history_width
    dk, nc = config.key_dim, config.channel_dim
    specs = []
    for s in config.scales:
        specs += [(f"svaq.s{s}.q", dk, c_in), (f"svaq.s{s}.k", dk, h_in),
                  (f"svaq.s{s}.v", dk, h_in)]
    specs += _stack("svaq.fuse", len(config.scales) * dk, nc)
    specs += _stack("svaq.skip", c_in, nc)
    specs += _stack("ca.score", h_in, nc, out=1)
    specs += _stack("ca.mlp", h_in, nc)
    specs += _stack("ca.spc", h_in, nc)
    return specs


def _stack(prefix, in_dim, hidden, out=None):
    out = hidden if out is None else out
    return [(f"{prefix}.0", hidden, in_dim), (f"{prefix}.1", hidden, hidden),
            (f"{prefix}.2", out, hidden)]


@dataclass(frozen=True)
class WeightBundle:
    config: VoxelConfig
    layers: Dict[str, LinearLayer]
    norm: NormLayer
    seed: int = 0

    @classmethod
    def generate(cls, config: VoxelConfig = None, seed: int = 0) -> "WeightBundle":
        config = config or VoxelConfig()
        rng = np.random.default_rng(seed)
        layers = {}
        for name, out_dim, in_dim in layer_specs(config):
            a = 1.0 / np.sqrt(in_dim)
            w = rng.uniform(-a, a, (out_dim, in_dim)).astype(np.float32)
            b = rng.uniform(-a, a, out_dim).astype(np.float32)
            layers[name] = LinearLayer(w, b, name)
        norm = NormLayer.default(config.channel_dim, config.norm_eps)
        return cls(config, layers, norm, seed)

    def __getitem__(self, name) -> LinearLayer:
        return self.layers[name]

    def stack(self, prefix) -> List[LinearLayer]:
        return [self.layers[f"{prefix}.{i}"] for i in range(3)]

    def check(self):
        """Raise if layer shapes disagree with the bundle's config."""
        for name, out_dim, in_dim in layer_specs(self.config):
            if name not in self.layers:
                raise DimensionError(f"missing layer {name}")
            if self.layers[name].weight.shape != (out_dim, in_dim):
                raise DimensionError(
                    f"layer {name} has shape {self.layers[name].weight.shape}, "
                    f"expected {(out_dim, in_dim)}"
                )
        if len(self.norm.mean) != self.config.channel_dim:
            raise DimensionError("norm width differs from channel_dim")
