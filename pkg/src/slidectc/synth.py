"""Procedural glyphs and seeded synthetic text lines.

Glyphs are random polylines on a coarse lattice inside a 24x16 cell, so no
font files are involved and every dataset is reproducible from its seed.
Ink is dark (0.0) on a white (1.0) background.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInput, IoError, UnknownSymbol
from .textline import write_manifest, write_pgm

GLYPH_HEIGHT = 24
GLYPH_WIDTH = 16
LINE_HEIGHT = 32
MIN_GLYPH_DISTANCE = 30

_LATTICE_X = (2.0, 7.0, 12.0)
_LATTICE_Y = (2.0, 7.0, 11.0, 16.0, 20.0)


def _draw_segment(canvas: np.ndarray, p0, p1) -> None:
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1])) * 2) + 1
    for a in np.linspace(0.0, 1.0, n):
        y = int(round(p0[0] + a * (p1[0] - p0[0])))
        x = int(round(p0[1] + a * (p1[1] - p0[1])))
        canvas[y:y + 2, x:x + 2] = True


def _random_glyph(rng: np.random.Generator) -> np.ndarray:
    nodes = [(y, x) for y in _LATTICE_Y for x in _LATTICE_X]
    canvas = np.zeros((GLYPH_HEIGHT, GLYPH_WIDTH), dtype=bool)
    current = nodes[rng.integers(len(nodes))]
    for _ in range(rng.integers(3, 6)):
        nxt = nodes[rng.integers(len(nodes))]
        while nxt == current:
            nxt = nodes[rng.integers(len(nodes))]
        _draw_segment(canvas, current, nxt)
        # occasionally lift the pen
        current = nxt if rng.random() < 0.7 else nodes[rng.integers(len(nodes))]
    return canvas


@dataclass
class GlyphSet:
    alphabet: str
    bitmaps: dict[str, np.ndarray]
    spacing: tuple[int, int] = (1, 4)
    v_jitter: int = 2
    noise: float = 0.02
    seed: int = 0
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {c: i for i, c in enumerate(self.alphabet)}

    @classmethod
    def generate(cls, alphabet: str, seed: int = 0, spacing=(1, 4), v_jitter: int = 2,
                 noise: float = 0.02, min_distance: int = MIN_GLYPH_DISTANCE) -> "GlyphSet":
        alphabet = "".join(alphabet)
        if not alphabet or len(set(alphabet)) != len(alphabet):
            raise InvalidInput("glyph alphabet must be non-empty and unique")
        if spacing[0] < 0 or spacing[1] < spacing[0]:
            raise InvalidInput(f"invalid spacing range {spacing}")
        if not 0 <= v_jitter <= (LINE_HEIGHT - GLYPH_HEIGHT) // 2:
            raise InvalidInput(f"vertical jitter must lie in [0, {(LINE_HEIGHT - GLYPH_HEIGHT) // 2}]")
        rng = np.random.default_rng(seed)
        bitmaps: dict[str, np.ndarray] = {}
        for c in alphabet:
            for _ in range(10_000):
                g = _random_glyph(rng)
                if all(np.count_nonzero(g != other) >= min_distance for other in bitmaps.values()):
                    break
            else:
                raise InvalidInput(f"could not find {len(alphabet)} glyphs {min_distance} pixels apart")
            bitmaps[c] = g
        return cls(alphabet, bitmaps, tuple(spacing), v_jitter, noise, seed)


def render_line(glyphs: GlyphSet, text: str, seed) -> tuple[np.ndarray, str]:
    """Raw 32-pixel-high gray line for ``text`` and the transcript itself."""
    for c in text:
        if c not in glyphs.index:
            raise UnknownSymbol(f"character {c!r} has no glyph")
    rng = np.random.default_rng(seed)
    lo, hi = glyphs.spacing
    gaps = rng.integers(lo, hi + 1, size=len(text))
    shifts = rng.integers(-glyphs.v_jitter, glyphs.v_jitter + 1, size=len(text))
    width = int(np.sum(gaps)) + GLYPH_WIDTH * len(text)
    ink = np.zeros((LINE_HEIGHT, max(width, 1)), dtype=bool)
    x = 0
    top0 = (LINE_HEIGHT - GLYPH_HEIGHT) // 2
    for c, gap, dy in zip(text, gaps, shifts):
        x += int(gap)
        top = top0 + int(dy)
        ink[top:top + GLYPH_HEIGHT, x:x + GLYPH_WIDTH] |= glyphs.bitmaps[c]
        x += GLYPH_WIDTH
    image = np.where(ink, 0.0, 1.0)
    if glyphs.noise > 0:
        flip = rng.random(image.shape) < glyphs.noise
        salt = rng.random(image.shape) < 0.5
        image = np.where(flip, salt.astype(float), image)
    return image, text


def sample_transcripts(alphabet: str, count: int, length_range: tuple[int, int], seed,
                       vocabulary: Sequence[str] | None = None) -> list[str]:
    lo, hi = length_range
    if vocabulary is None and not 1 <= lo <= hi:
        raise InvalidInput(f"invalid length range {length_range}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        if vocabulary is not None:
            out.append(vocabulary[rng.integers(len(vocabulary))])
        else:
            idx = rng.integers(0, len(alphabet), size=rng.integers(lo, hi + 1))
            out.append("".join(alphabet[i] for i in idx))
    return out


def generate_dataset(glyphs: GlyphSet, count: int, length_range: tuple[int, int], seed, out_dir,
                     vocabulary: Sequence[str] | None = None, name: str = "manifest.tsv") -> Path:
    """Render ``count`` lines as PGM files plus a TSV manifest; returns the manifest path.

    With ``vocabulary`` set, transcripts are drawn uniformly from it instead of
    being random strings.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    texts = sample_transcripts(glyphs.alphabet, count, length_range, seed, vocabulary)
    stem = Path(name).stem
    records = []
    for i, text in enumerate(texts):
        image, _ = render_line(glyphs, text, [int(seed), i])
        filename = f"{stem}_{i:05d}.pgm"
        write_pgm(out_dir / filename, image)
        records.append((filename, text))
    manifest = out_dir / name
    write_manifest(manifest, records)
    return manifest
