"""Layer specifications and the two built-in network profiles."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from ..errors import InvalidConfig


@dataclass(frozen=True)
class Conv:
    maps: int
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    dropout: float = 0.0


@dataclass(frozen=True)
class BatchNorm:
    pass


@dataclass(frozen=True)
class MaxPool:
    window: int = 2
    stride: int = 2


@dataclass(frozen=True)
class Dense:
    units: int
    dropout: float = 0.0


@dataclass(frozen=True)
class Softmax:
    classes: int


LAYER_TYPES = {cls.__name__.lower(): cls for cls in (Conv, BatchNorm, MaxPool, Dense, Softmax)}


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple = field(default_factory=tuple)
    input_channels: int = 1
    input_size: int = 32
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise InvalidConfig("the last layer must be a softmax")
        if any(isinstance(l, Softmax) for l in self.layers[:-1]):
            raise InvalidConfig("softmax may only appear as the last layer")
        for l in self.layers:
            if isinstance(l, (Conv, Dense)) and not 0.0 <= l.dropout < 1.0:
                raise InvalidConfig(f"dropout {l.dropout} outside [0, 1)")
        if self.input_channels < 1 or self.input_size < 1:
            raise InvalidConfig("input channels and size must be positive")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfig(f"unsupported dtype {self.dtype}")

    @property
    def num_classes(self) -> int:
        return self.layers[-1].classes

    def to_dict(self) -> dict:
        return {
            "layers": [{"type": type(l).__name__.lower(), **asdict(l)} for l in self.layers],
            "input_channels": self.input_channels,
            "input_size": self.input_size,
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        layers = []
        for spec in d["layers"]:
            spec = dict(spec)
            kind = spec.pop("type")
            if kind not in LAYER_TYPES:
                raise InvalidConfig(f"unknown layer type {kind!r}")
            layers.append(LAYER_TYPES[kind](**spec))
        return cls(tuple(layers), d["input_channels"], d["input_size"], d["seed"], d.get("dtype", "float32"))

    def digest(self) -> bytes:
        """8-byte fingerprint of the architecture and seed."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()[:8]


def paper_profile(num_classes: int = 37, input_channels: int = 1, seed: int = 0, dtype: str = "float32") -> NetworkConfig:
    """Twelve 3x3 convolutions in four pooled stages, FC 900 and 200, softmax."""
    layers = []
    stages = [(50, 100, 0.0, 0.1), (150, 200, 0.2, 0.2), (250, 300, 0.3, 0.3), (350, 400, 0.4, 0.4)]
    for first, second, drop_first, drop_rest in stages:
        layers += [
            Conv(first, dropout=drop_first),
            BatchNorm(),
            Conv(second, dropout=drop_rest),
            Conv(second, dropout=drop_rest),
            BatchNorm(),
            MaxPool(2, 2),
        ]
    layers += [Dense(900, dropout=0.5), Dense(200, dropout=0.0), Softmax(num_classes)]
    return NetworkConfig(tuple(layers), input_channels, 32, seed, dtype)


def desk_profile(num_classes: int, input_channels: int = 1, seed: int = 0, dtype: str = "float32") -> NetworkConfig:
    layers = (
        Conv(16),
        BatchNorm(),
        Conv(16),
        MaxPool(2, 2),
        Conv(32),
        BatchNorm(),
        Conv(32),
        MaxPool(2, 2),
        Dense(64),
        Softmax(num_classes),
    )
    return NetworkConfig(layers, input_channels, 32, seed, dtype)


PROFILES = {"paper": paper_profile, "desk": desk_profile}
