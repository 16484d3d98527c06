"""Text-line normalization, sliding-window extraction and raster I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, InvalidInput, IoError

DEFAULT_BACKGROUND = 1.0


@dataclass
class TextLineImage:
    """Height-normalized gray raster, values in [0, 1]."""

    pixels: np.ndarray
    background: float = DEFAULT_BACKGROUND

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class WindowConfig:
    window_widths: tuple[int, ...] = (32,)
    stride: int = 4
    patch_size: int = 32
    pad_width: int = 256
    target_height: int = 32
    # background columns added on both sides so edge characters can sit at a window center
    margin: int = 0
    pad: bool = True

    def __post_init__(self):
        object.__setattr__(self, "window_widths", tuple(int(w) for w in self.window_widths))
        if not self.window_widths:
            raise InvalidConfig("at least one window width is required")
        if self.stride < 1:
            raise InvalidConfig("stride must be >= 1")
        if any(w < self.stride for w in self.window_widths):
            raise InvalidConfig("every window width must be >= stride")
        if self.patch_size < 8:
            raise InvalidConfig("patch_size must be >= 8")
        if self.target_height < 8:
            raise InvalidConfig("target_height must be >= 8")
        if self.margin < 0:
            raise InvalidConfig("margin must be >= 0")

    @property
    def max_window(self) -> int:
        return max(self.window_widths)

    @property
    def channels(self) -> int:
        return len(self.window_widths)

    def to_dict(self) -> dict:
        return {
            "window_widths": list(self.window_widths),
            "stride": self.stride,
            "patch_size": self.patch_size,
            "pad_width": self.pad_width,
            "target_height": self.target_height,
            "margin": self.margin,
            "pad": self.pad,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WindowConfig":
        return cls(**{**d, "window_widths": tuple(d["window_widths"])})


@dataclass
class WindowSequence:
    patches: np.ndarray  # [T, scales, patch, patch]
    source_offsets: list[int] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.patches.shape[0]


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic [n_out, n_in] matrix of half-pixel-centred bilinear weights."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    m[rows, i0] += 1.0 - frac
    m[rows, i1] += frac
    return m


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize the last two axes of ``img`` to ``(height, width)``."""
    h, w = img.shape[-2:]
    out = img
    if h != height:
        out = _bilinear_matrix(h, height) @ out
    if w != width:
        out = out @ _bilinear_matrix(w, width).T
    return np.clip(out, 0.0, 1.0)


def border_median(img: np.ndarray) -> float:
    border = np.concatenate([img[0], img[-1], img[:, 0], img[:, -1]])
    value = float(np.median(border))
    return value if np.isfinite(value) else DEFAULT_BACKGROUND


def _check_raster(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty 2-D raster, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise InvalidInput("raster contains non-finite pixels")
    return np.clip(raw, 0.0, 1.0)


def normalize_line(raw, target_height: int = 32, max_width: int = 256, pad: bool = True) -> TextLineImage:
    """Scale a raw line to ``target_height`` keeping its aspect ratio.

    With ``pad`` set the result is exactly ``max_width`` wide: narrower lines are
    padded on the right with the border-median background, wider lines are
    squeezed down to ``max_width``.
    """
    if target_height < 8:
        raise InvalidInput("target_height must be >= 8")
    raw = _check_raster(raw)
    background = border_median(raw)
    h, w = raw.shape
    width = max(1, int(np.floor(w * target_height / h + 0.5)))
    if pad and width > max_width:
        width = max_width
    pixels = resize_bilinear(raw, target_height, width)
    if pad and width < max_width:
        filler = np.full((target_height, max_width - width), background)
        pixels = np.concatenate([pixels, filler], axis=1)
    return TextLineImage(pixels, background)


def window_count(width: int, window: int, stride: int) -> int:
    if stride < 1:
        raise InvalidInput("stride must be >= 1")
    if window > width:
        raise InvalidInput(f"window {window} is wider than the line ({width})")
    return (width - window) // stride + 1


def extract_windows(line: TextLineImage, cfg: WindowConfig) -> WindowSequence:
    img = np.asarray(line.pixels, dtype=np.float64)
    if img.shape[0] != cfg.target_height:
        raise InvalidInput(f"line height {img.shape[0]} != configured height {cfg.target_height}")
    if cfg.margin:
        side = np.full((img.shape[0], cfg.margin), line.background)
        img = np.concatenate([side, img, side], axis=1)
    maxw = cfg.max_window
    if img.shape[1] < maxw:
        img = np.pad(img, ((0, 0), (0, maxw - img.shape[1])), mode="edge")
    H, W = img.shape
    T = window_count(W, maxw, cfg.stride)
    starts = np.arange(T) * cfg.stride
    P = cfg.patch_size
    row_weights = _bilinear_matrix(H, P) if H != P else None
    patches = np.empty((T, cfg.channels, P, P))
    for s, w in enumerate(cfg.window_widths):
        cols = starts[:, None] + (maxw - w) // 2 + np.arange(w)
        crops = img[:, np.clip(cols, 0, W - 1)].transpose(1, 0, 2)  # [T, H, w]
        if row_weights is not None:
            crops = row_weights @ crops
        if w != P:
            crops = crops @ _bilinear_matrix(w, P).T
        patches[:, s] = np.clip(crops, 0.0, 1.0)
    offsets = [int(x) - cfg.margin for x in starts]
    return WindowSequence(patches, offsets)


def line_windows(raw, cfg: WindowConfig) -> WindowSequence:
    line = normalize_line(raw, cfg.target_height, cfg.pad_width, cfg.pad)
    return extract_windows(line, cfg)


# --- raster and manifest files ---------------------------------------------

def _pgm_header(data: bytes) -> tuple[list[int], int]:
    """Parse the three header integers of a P5 file; returns them and the body offset."""
    if not data.startswith(b"P5"):
        return [], 0
    values, pos = [], 2
    while len(values) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.find(b"\n", pos) + 1 or len(data)
            continue
        token = re.match(rb"\d+", data[pos:pos + 16])
        if not token:
            return [], 0
        values.append(int(token.group()))
        pos += token.end()
    return values, pos + 1  # single whitespace byte before the raster


def read_pgm(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    header, body_start = _pgm_header(data)
    if not header:
        raise InvalidInput(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = header
    if maxval != 255:
        raise InvalidInput(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    body = data[body_start:body_start + w * h]
    if len(body) != w * h:
        raise InvalidInput(f"{path}: truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w) / 255.0


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    h, w = pixels.shape
    body = np.clip(np.floor(pixels * 255.0 + 0.5), 0, 255).astype(np.uint8).tobytes()
    try:
        Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + body)
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc


def read_manifest(path) -> list[tuple[Path, str]]:
    """Records of ``(image_path, transcript)``; relative paths resolve against the manifest's folder."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InvalidInput(f"{path}:{lineno}: expected 'image_path<TAB>transcript'")
        image = Path(parts[0])
        if not image.is_absolute():
            image = path.parent / image
        records.append((image, parts[1]))
    return records


def write_manifest(path, records) -> None:
    lines = [f"{image}\t{text}\n" for image, text in records]
    try:
        Path(path).write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc
