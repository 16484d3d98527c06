"""The sliding-window character classifier: build, forward, backward, SGD."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..ctc import EmissionMatrix, log_softmax, softmax
from ..errors import InvalidConfig, InvalidInput, TrainingDiverged
from .config import BatchNorm, Conv, Dense, MaxPool, NetworkConfig, Softmax
from .layers import BatchNormOp, ConvOp, DenseOp, DropoutOp, MaxPoolOp, ReluOp

OUTPUT_INIT_GAIN = 0.1
EMISSION_CHUNK = 64


@dataclass(frozen=True)
class TrainSchedule:
    initial_lr: float = 0.1
    decay_factor: float = 0.3
    decay_epochs: tuple[int, ...] = (40, 60)
    momentum: float = 0.0
    epoch_fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(sorted(int(e) for e in self.decay_epochs)))
        if self.initial_lr <= 0:
            raise InvalidConfig("initial_lr must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise InvalidConfig("decay_factor must lie in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise InvalidConfig("momentum must lie in [0, 1)")
        if not 0 < self.epoch_fraction <= 1:
            raise InvalidConfig("epoch_fraction must lie in (0, 1]")

    def lr(self, epoch: int) -> float:
        drops = sum(1 for e in self.decay_epochs if epoch >= e)
        return self.initial_lr * self.decay_factor**drops


def _compile(cfg: NetworkConfig):
    """Turn layer specs into primitive ops; also returns the flatten width."""
    ops = []
    size, channels = cfg.input_size, cfg.input_channels
    features = None  # set once the activations are flat
    flatten_dim = None
    specs = list(cfg.layers)
    i = 0
    while i < len(specs):
        spec = specs[i]
        name = f"{i:02d}"
        if isinstance(spec, Conv):
            if features is not None:
                raise InvalidConfig("convolution after a fully-connected layer")
            op = ConvOp(f"{name}.conv", channels, spec.maps, spec.kernel, spec.stride, spec.pad)
            size, channels = op.out_size(size), spec.maps
            if size < 1:
                raise InvalidConfig(f"layer {i}: convolution shrinks the map below 1x1")
            ops.append(op)
        elif isinstance(spec, MaxPool):
            if features is not None:
                raise InvalidConfig("pooling after a fully-connected layer")
            op = MaxPoolOp(spec.window, spec.stride)
            size = op.out_size(size)
            if size < 1:
                raise InvalidConfig(f"layer {i}: pooling below 1x1 spatial size")
            ops.append(op)
        elif isinstance(spec, BatchNorm):
            ops.append(BatchNormOp(f"{name}.bn", channels if features is None else features))
        elif isinstance(spec, (Dense, Softmax)):
            if features is None:
                features = flatten_dim = size * size * channels
            units = spec.units if isinstance(spec, Dense) else spec.classes
            ops.append(DenseOp(f"{name}.{'fc' if isinstance(spec, Dense) else 'out'}", features, units))
            features = units
        # the nonlinearity follows a directly attached batch-norm
        if isinstance(spec, (Conv, Dense)):
            if i + 1 < len(specs) and isinstance(specs[i + 1], BatchNorm):
                i += 1
                ops.append(BatchNormOp(f"{i:02d}.bn", spec.maps if isinstance(spec, Conv) else spec.units))
            ops.append(ReluOp())
            if spec.dropout > 0:
                ops.append(DropoutOp(spec.dropout))
        i += 1
    return ops, flatten_dim


class Network:
    """Parameters, batch-norm statistics and step counter of one classifier."""

    def __init__(self, config: NetworkConfig, tensors: dict[str, np.ndarray] | None = None, step: int = 0):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.ops, self.flatten_dim = _compile(config)
        self.param_names: list[str] = []
        self.buffer_names: list[str] = []
        for op in self.ops:
            self.param_names += list(getattr(op, "param_shapes", dict)())
            self.buffer_names += list(getattr(op, "buffer_shapes", dict)())
        if isinstance(self.ops[0], ConvOp):
            self.ops[0].needs_input_grad = False
        self.tensors = tensors if tensors is not None else self._init_tensors()
        self.step = step
        self._train_input = None

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def _init_tensors(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.config.seed)
        out = {}
        last = max(i for i, op in enumerate(self.ops) if isinstance(op, DenseOp))
        for i, op in enumerate(self.ops):
            for name, shape in getattr(op, "param_shapes", dict)().items():
                if name.endswith(".weight"):
                    std = math.sqrt(2.0 / op.fan_in())
                    if i == last:
                        std *= OUTPUT_INIT_GAIN
                    out[name] = rng.normal(0.0, std, size=shape)
                elif name.endswith(".gamma"):
                    out[name] = np.ones(shape)
                else:
                    out[name] = np.zeros(shape)
            for name, shape in getattr(op, "buffer_shapes", dict)().items():
                out[name] = np.ones(shape) if name.endswith("running_var") else np.zeros(shape)
        return {k: v.astype(self.dtype) for k, v in out.items()}

    def state_names(self) -> list[str]:
        return self.param_names + self.buffer_names + sorted(k for k in self.tensors if k.startswith("momentum:"))

    # --- forward / backward ------------------------------------------------

    def _check_patches(self, patches) -> np.ndarray:
        patches = np.asarray(patches)
        c, s = self.config.input_channels, self.config.input_size
        if patches.ndim != 4 or patches.shape[1:] != (c, s, s):
            raise InvalidInput(f"expected patches of shape [B, {c}, {s}, {s}], got {patches.shape}")
        return patches

    def forward_logits(self, patches, train: bool = False) -> np.ndarray:
        patches = self._check_patches(patches)
        x = np.ascontiguousarray(patches.transpose(0, 2, 3, 1), dtype=self.dtype)
        rng = np.random.default_rng([self.config.seed, self.step]) if train else None
        for op in self.ops:
            x = op.forward(x, self.tensors, train, rng)
        self._train_input = patches if train else None
        return x

    def forward_batch(self, patches, mode: str = "infer") -> np.ndarray:
        """Class probabilities, one row per patch."""
        if mode not in ("train", "infer"):
            raise InvalidInput(f"mode must be 'train' or 'infer', got {mode!r}")
        logits = self.forward_logits(patches, train=(mode == "train"))
        return softmax(logits.astype(np.float64))

    def backward(self, dlogits) -> dict[str, np.ndarray]:
        if self._train_input is None:
            raise InvalidInput("backward() requires a preceding train-mode forward pass")
        grads: dict[str, np.ndarray] = {}
        dy = np.asarray(dlogits, dtype=self.dtype)
        for op in reversed(self.ops):
            dy = op.backward(dy, self.tensors, grads)
            if dy is None:
                break
        self._train_input = None
        return grads

    def train_step(self, patches, dlogits, schedule: TrainSchedule, epoch: int) -> float:
        """One SGD update from loss gradients w.r.t. the logits of ``patches``.

        Reuses the activations of the last train-mode forward pass when it was
        run on this same ``patches`` object; otherwise runs one first.
        """
        if self._train_input is not patches:
            self.forward_logits(patches, train=True)
        dlogits = np.asarray(dlogits)
        if dlogits.shape != (np.asarray(patches).shape[0], self.num_classes):
            raise InvalidInput(f"gradient shape {dlogits.shape} does not match the batch")
        grads = self.backward(dlogits)
        norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
        if not math.isfinite(norm):
            raise TrainingDiverged(f"non-finite gradient at step {self.step}")
        lr = schedule.lr(epoch)
        for name in self.param_names:
            g = grads[name]
            if schedule.momentum > 0:
                key = f"momentum:{name}"
                v = self.tensors.get(key)
                g = g if v is None else schedule.momentum * v + g
                self.tensors[key] = g
            self.tensors[name] = (self.tensors[name] - lr * g).astype(self.dtype)
        self.step += 1
        return norm

    # --- inference over a line ---------------------------------------------

    def emissions_for_line(self, windows, workers: int = 1) -> EmissionMatrix:
        """Log-probability emissions for every window of a line.

        Windows are evaluated in fixed chunks so that the result does not
        depend on ``workers``.
        """
        patches = self._check_patches(getattr(windows, "patches", windows))
        chunks = [patches[i:i + EMISSION_CHUNK] for i in range(0, len(patches), EMISSION_CHUNK)]
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(self.forward_logits, chunks))
        else:
            parts = [self.forward_logits(c) for c in chunks]
        logits = np.concatenate(parts).astype(np.float64)
        return EmissionMatrix(log_softmax(logits))


def build_network(config: NetworkConfig) -> Network:
    return Network(config)
