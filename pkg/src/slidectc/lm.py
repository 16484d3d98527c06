"""Character n-gram language model with fixed-weight recursive interpolation.

    P(k | h) = lam * P_ml(k | h) + (1 - lam) * P(k | h[1:])

down to a uniform distribution over the alphabet. Contexts that never occur
in training are skipped, so every level stays normalized. Counts are taken
inside whitespace-delimited words only.
"""

from __future__ import annotations

import math
from collections import defaultdict
from functools import lru_cache
from pathlib import Path
from typing import Iterable

from .errors import EmptyCorpus, IncompatibleModel, InvalidInput, IoError, UnknownSymbol

MAGIC = "CHARLM"
VERSION = "v1"


class NGramModel:
    def __init__(self, order: int, alphabet: str, lam: float = 0.9, counts=None):
        if order < 1:
            raise InvalidInput("order must be >= 1")
        if not 0.0 <= lam < 1.0 and lam != 1.0:
            raise InvalidInput("lambda must lie in [0, 1]")
        alphabet = "".join(alphabet)
        if not alphabet or len(set(alphabet)) != len(alphabet) or any(c.isspace() for c in alphabet):
            raise InvalidInput("LM alphabet must be non-empty, unique, whitespace-free characters")
        self.order = order
        self.alphabet = alphabet
        self.lam = float(lam)
        # counts[n][context][symbol] for context length n = 0 .. order-1
        self.counts: list[dict[str, dict[str, int]]] = counts or [defaultdict(dict) for _ in range(order)]
        self.totals = [{h: sum(c.values()) for h, c in level.items()} for level in self.counts]
        self.skipped = 0
        self._symbols = set(alphabet)
        self.prob = lru_cache(maxsize=1 << 16)(self._prob)

    def _prob(self, k: str, context: str) -> float:
        p = 1.0 / len(self.alphabet)
        for n in range(len(context) + 1):
            h = context[len(context) - n:]
            total = self.totals[n].get(h)
            if not total:
                continue
            ml = self.counts[n][h].get(k, 0) / total
            p = self.lam * ml + (1.0 - self.lam) * p
        return p

    def context(self, history: str) -> str:
        return history[len(history) - (self.order - 1):] if self.order > 1 else ""

    def log_prob(self, k: str, history: str = "") -> float:
        if k not in self._symbols:
            raise UnknownSymbol(f"{k!r} is not in the LM alphabet")
        p = self.prob(k, self.context(history))
        return math.log(p) if p > 0 else -math.inf

    def distribution(self, history: str = "") -> dict[str, float]:
        ctx = self.context(history)
        return {k: self.prob(k, ctx) for k in self.alphabet}

    def ngram_count(self, gram: str) -> int:
        return self.counts[len(gram) - 1].get(gram[:-1], {}).get(gram[-1], 0)

    # --- persistence -------------------------------------------------------

    def save(self, path) -> None:
        lines = [f"{MAGIC} {VERSION} {self.order} {self.lam!r} {len(self.alphabet)}", self.alphabet]
        for level in self.counts:
            for h in sorted(level):
                for k in sorted(level[h]):
                    lines.append(f"{h}\t{k}\t{level[h][k]}")
        try:
            Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write LM file {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "NGramModel":
        try:
            lines = Path(path).read_text(encoding="utf-8").split("\n")
        except OSError as exc:
            raise IoError(f"cannot read LM file {path}: {exc}") from exc
        head = lines[0].split(" ")
        if len(head) != 5 or head[0] != MAGIC or head[1] != VERSION:
            raise IncompatibleModel(f"{path}: expected a '{MAGIC} {VERSION}' header")
        order, lam, size = int(head[2]), float(head[3]), int(head[4])
        alphabet = lines[1] if len(lines) > 1 else ""
        if len(alphabet) != size:
            raise IncompatibleModel(f"{path}: alphabet line does not match declared size {size}")
        counts = [defaultdict(dict) for _ in range(order)]
        for line in lines[2:]:
            if not line:
                continue
            h, k, c = line.split("\t")
            if len(h) >= order:
                raise IncompatibleModel(f"{path}: context {h!r} too long for order {order}")
            counts[len(h)][h][k] = int(c)
        return cls(order, alphabet, lam, counts)


def _words(corpus) -> Iterable[str]:
    if isinstance(corpus, str):
        corpus = [corpus]
    for chunk in corpus:
        yield from chunk.split()


def train_ngram(corpus, order: int = 5, alphabet: str | None = None, lam: float = 0.9) -> NGramModel:
    """Count n-grams of every order up to ``order`` inside each word of ``corpus``.

    Characters outside ``alphabet`` are dropped and split the word they occur in;
    ``model.skipped`` records how many were dropped.
    """
    words = list(_words(corpus))
    if alphabet is None:
        alphabet = "".join(sorted({c for w in words for c in w}))
        if not alphabet:
            raise EmptyCorpus("corpus contains no characters")
    model = NGramModel(order, alphabet, lam)
    allowed = set(model.alphabet)
    counts = model.counts
    pieces, skipped = [], 0
    for w in words:
        piece = []
        for c in w:
            if c in allowed:
                piece.append(c)
            else:
                skipped += 1
                if piece:
                    pieces.append("".join(piece))
                piece = []
        if piece:
            pieces.append("".join(piece))
    if not pieces:
        raise EmptyCorpus("no in-alphabet characters in corpus")
    for w in pieces:
        for i, k in enumerate(w):
            for n in range(min(order - 1, i) + 1):
                h = w[i - n:i]
                level = counts[n][h]
                level[k] = level.get(k, 0) + 1
    model = NGramModel(order, model.alphabet, lam, counts)
    model.skipped = skipped
    return model
