"""Turning an emission matrix into a transcription.

* ``best_path_decode``: collapse of the per-frame argmax.
* ``token_passing_decode``: best lexicon word by Viterbi over blank-augmented
  word models, optionally allowing word sequences.
* ``beam_search_decode``: prefix beam search with a character LM weighted by
  ``alpha`` and per-frame candidate pruning.
* ``exhaustive_decode_oracle``: enumeration, for testing the beam.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .alphabet import BLANK, Alphabet
from .ctc import as_log_probs, collapse, label_distribution_bruteforce
from .errors import InvalidInput, IoError, NoFeasibleWord, TooLargeForOracle
from .lm import NGramModel

NEG_INF = -math.inf
EXHAUSTIVE_LIMIT = 10**6


def _log_add(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def _rank_key(score: float, labels: tuple[int, ...]):
    """Sort key: higher score first, then shorter, then lexicographically smaller."""
    return (-score, len(labels), labels)


@dataclass
class DecodeResult:
    labels: tuple[int, ...]
    log_score: float
    words: tuple[tuple[int, ...], ...] = ()


# --- naive ------------------------------------------------------------------

def best_path_decode(E) -> DecodeResult:
    lp = as_log_probs(E)
    path = np.argmax(lp, axis=1)  # first maximum, i.e. the lowest class index
    score = float(np.sum(lp[np.arange(lp.shape[0]), path]))
    return DecodeResult(collapse(path), score)


# --- lexicon ----------------------------------------------------------------

class Lexicon:
    """Deduplicated words as label tuples, kept in (length, labels) order."""

    def __init__(self, words: Iterable[Sequence[int]]):
        unique = {tuple(int(k) for k in w) for w in words}
        if not unique:
            raise InvalidInput("lexicon is empty")
        for w in unique:
            if not w:
                raise InvalidInput("lexicon contains an empty word")
            if BLANK in w:
                raise InvalidInput("lexicon words must not contain blank")
        self.words = sorted(unique, key=lambda w: (len(w), w))

    @classmethod
    def from_strings(cls, words: Iterable[str], alphabet: Alphabet) -> "Lexicon":
        return cls(alphabet.encode(w) for w in words)

    @classmethod
    def load(cls, path, alphabet: Alphabet) -> "Lexicon":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read lexicon {path}: {exc}") from exc
        return cls.from_strings((w.strip() for w in text.splitlines() if w.strip()), alphabet)

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self):
        return iter(self.words)


def _chain(word: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    ext = np.zeros(2 * len(word) + 1, dtype=int)
    ext[1::2] = word
    skip = np.zeros(ext.size, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return ext, skip


def token_passing_decode(E, lexicon: Lexicon, single_word: bool = True) -> DecodeResult:
    """Best-scoring token through the lexicon's word models.

    Every state of every word keeps the best token (log path score plus word
    history) reaching it. Without ``single_word`` a word-final token may enter
    any word at the next frame; with it such multi-word tokens score -inf.
    """
    lp = as_log_probs(E)
    T, K = lp.shape
    for w in lexicon:
        if max(w) >= K:
            raise InvalidInput(f"lexicon label {max(w)} outside the {K}-class emission matrix")
    chains = [_chain(w) for w in lexicon]
    scores = [np.full(ext.size, NEG_INF) for ext, _ in chains]
    hists: list[list[tuple[int, ...]]] = [[()] * ext.size for ext, _ in chains]

    for t in range(T):
        if t == 0:
            entry_score, entry_hist = 0.0, ()
        else:
            entry_score, entry_hist = NEG_INF, ()
            if not single_word:
                for wi, (ext, _) in enumerate(chains):
                    for s in (ext.size - 1, ext.size - 2):
                        if scores[wi][s] > entry_score:
                            entry_score, entry_hist = scores[wi][s], hists[wi][s]
        for wi, (ext, skip) in enumerate(chains):
            prev, prev_hist = scores[wi], hists[wi]
            S = ext.size
            best = prev.copy()
            src = np.arange(S)
            if t > 0:
                step = np.full(S, NEG_INF)
                step[1:] = prev[:-1]
                better = step > best
                best = np.where(better, step, best)
                src = np.where(better, src - 1, src)
                jump = np.full(S, NEG_INF)
                jump[2:] = np.where(skip[2:], prev[:-2], NEG_INF)
                better = jump > best
                best = np.where(better, jump, best)
                src = np.where(better, np.arange(S) - 2, src)
            else:
                best = np.full(S, NEG_INF)
            new_hist = [prev_hist[j] for j in src]
            for s in (0, 1):
                if entry_score > best[s]:
                    best[s] = entry_score
                    new_hist[s] = entry_hist + (wi,)
            scores[wi] = best + lp[t, ext]
            hists[wi] = new_hist

    final_score, final_hist = NEG_INF, ()
    for wi, (ext, _) in enumerate(chains):
        for s in (ext.size - 1, ext.size - 2):
            if scores[wi][s] > final_score:
                final_score, final_hist = float(scores[wi][s]), hists[wi][s]
    if final_score == NEG_INF:
        raise NoFeasibleWord(f"no lexicon word can be aligned to {T} frames")
    words = tuple(lexicon.words[i] for i in final_hist)
    labels = tuple(k for w in words for k in w)
    return DecodeResult(labels, final_score, words)


# --- LM beam search ---------------------------------------------------------

@dataclass
class DecodeOptions:
    beam_width: int = 32
    candidate_count: int = 10
    alpha: float = 1.0
    lm: NGramModel | None = None
    # characters of classes 1..K-1, used to query the LM; defaults to the LM's alphabet
    alphabet: str | None = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise InvalidInput("beam width must be >= 1")
        if self.candidate_count < 1:
            raise InvalidInput("candidate count must be >= 1")
        if self.alpha < 0:
            raise InvalidInput("alpha must be >= 0")
        if self.alpha > 0 and self.lm is None:
            raise InvalidInput("alpha > 0 requires a language model")
        if isinstance(self.alphabet, Alphabet):
            self.alphabet = self.alphabet.chars


class _LMScorer:
    """alpha * log P(k | prefix) with per-call memoization."""

    def __init__(self, opts: DecodeOptions):
        self.alpha = opts.alpha
        self.lm = opts.lm if opts.alpha > 0 else None
        self.chars = opts.alphabet or (self.lm.alphabet if self.lm else "")
        self.cache: dict = {}

    def __call__(self, k: int, prefix: tuple[int, ...]) -> float:
        if self.lm is None:
            return 0.0
        key = (prefix, k)
        value = self.cache.get(key)
        if value is None:
            if k - 1 >= len(self.chars):
                raise InvalidInput(f"class {k} has no character for the LM")
            history = "".join(self.chars[j - 1] for j in prefix)
            value = self.alpha * self.lm.log_prob(self.chars[k - 1], history)
            self.cache[key] = value
        return value


@dataclass
class Beam:
    """Log path mass of a prefix split by whether the last frame was blank."""

    blank: float = NEG_INF
    nonblank: float = NEG_INF

    @property
    def total(self) -> float:
        return _log_add(self.blank, self.nonblank)


def prefix_beam_search(E, opts: DecodeOptions) -> dict[tuple[int, ...], Beam]:
    """Run the beam over all frames; returns every prefix alive after the last one."""
    lp = as_log_probs(E)
    T, K = lp.shape
    lm_score = _LMScorer(opts)
    cn = min(opts.candidate_count, K - 1)
    beam: dict[tuple[int, ...], Beam] = {(): Beam(blank=0.0)}
    for t in range(T):
        row = lp[t]
        ranked = sorted(beam.items(), key=lambda kv: _rank_key(kv[1].total, kv[0]))
        kept = dict(ranked[:opts.beam_width])
        # candidate pruning happens once per frame; order ties by lowest index
        top = [int(k) + 1 for k in np.argsort(-row[1:], kind="stable")[:cn]]
        nxt: dict[tuple[int, ...], Beam] = {}
        for y, b in kept.items():
            total = b.total
            cur = nxt.setdefault(y, Beam())
            cur.blank = _log_add(cur.blank, total + row[BLANK])
            if y:
                cur.nonblank = _log_add(cur.nonblank, b.nonblank + row[y[-1]])
            extensions = set(top)
            # the repeat correction applies to surviving children even if pruned here
            extensions.update(k for k in range(1, K) if y + (k,) in kept)
            for k in sorted(extensions):
                if row[k] == NEG_INF:
                    continue
                base = b.blank if y and y[-1] == k else total
                if base == NEG_INF:
                    continue
                child = nxt.setdefault(y + (k,), Beam())
                child.nonblank = _log_add(child.nonblank, row[k] + lm_score(k, y) + base)
        beam = nxt
    return beam


def _final_score(total: float, labels: tuple[int, ...]) -> float:
    return total / len(labels) if labels else total


def beam_search_decode(E, opts: DecodeOptions | None = None) -> DecodeResult:
    opts = opts or DecodeOptions(alpha=0.0)
    beam = prefix_beam_search(E, opts)
    best = min(
        ((_final_score(b.total, y), y) for y, b in beam.items() if b.total > NEG_INF),
        key=lambda sy: _rank_key(sy[0], sy[1]),
        default=None,
    )
    if best is None:
        raise AssertionError("beam search lost every hypothesis")
    return DecodeResult(best[1], float(best[0]))


def lm_log_product(labels: tuple[int, ...], opts: DecodeOptions) -> float:
    scorer = _LMScorer(opts)
    return sum(scorer(k, labels[:i]) for i, k in enumerate(labels))


def exhaustive_decode_oracle(E, lm: NGramModel | None = None, alpha: float = 0.0,
                             alphabet: str | None = None) -> DecodeResult:
    """Scores every transcription reachable in T frames by exact CTC mass times the LM product."""
    lp = as_log_probs(E)
    T, K = lp.shape
    if K**T > EXHAUSTIVE_LIMIT:
        raise TooLargeForOracle(f"K^T = {K}^{T} exceeds {EXHAUSTIVE_LIMIT}")
    opts = DecodeOptions(alpha=alpha, lm=lm, alphabet=alphabet)
    scored = []
    for y, log_p in label_distribution_bruteforce(lp, limit=EXHAUSTIVE_LIMIT).items():
        total = log_p + lm_log_product(y, opts)
        if total > NEG_INF:
            scored.append((_final_score(total, y), y))
    score, labels = min(scored, key=lambda sy: _rank_key(sy[0], sy[1]))
    return DecodeResult(labels, float(score))


def all_label_sequences(num_labels: int, max_len: int):
    for n in range(max_len + 1):
        yield from itertools.product(range(1, num_labels + 1), repeat=n)
