"""CTC in the log domain: the collapse map, path and label probabilities,
forward-backward posteriors and the fused softmax + CTC logit gradient.

Class 0 is blank throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .alphabet import BLANK
from .errors import InfeasibleTarget, InvalidInput, IoError, TooLargeForOracle

ORACLE_LIMIT = 10**7
NEG_INF = -np.inf


@dataclass
class EmissionMatrix:
    """Per-window natural-log class probabilities, shape [T, K]."""

    log_probs: np.ndarray

    def __post_init__(self):
        self.log_probs = np.asarray(self.log_probs, dtype=np.float64)
        if self.log_probs.ndim != 2 or self.log_probs.shape[0] < 1 or self.log_probs.shape[1] < 2:
            raise InvalidInput(f"emission matrix must be [T>=1, K>=2], got {self.log_probs.shape}")
        if np.any(np.isnan(self.log_probs)) or np.any(self.log_probs == np.inf):
            raise InvalidInput("emission matrix contains NaN or +inf")

    @classmethod
    def from_probs(cls, probs) -> "EmissionMatrix":
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(probs, dtype=np.float64)))

    @classmethod
    def from_logits(cls, logits) -> "EmissionMatrix":
        return cls(log_softmax(np.asarray(logits, dtype=np.float64)))

    @property
    def T(self) -> int:
        return self.log_probs.shape[0]

    @property
    def K(self) -> int:
        return self.log_probs.shape[1]

    def row_normalization_error(self) -> float:
        return float(np.max(np.abs(_logsumexp_rows(self.log_probs))))


def as_log_probs(E) -> np.ndarray:
    if isinstance(E, EmissionMatrix):
        return E.log_probs
    return EmissionMatrix(E).log_probs


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return (m + np.log(np.sum(np.exp(x - m), axis=-1, keepdims=True)))[..., 0]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def collapse(path: Sequence[int]) -> tuple[int, ...]:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for k in path:
        k = int(k)
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return tuple(out)


def min_frames(labels: Sequence[int]) -> int:
    """Shortest path length that collapses to ``labels``."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _check_labels(labels: Sequence[int], K: int) -> tuple[int, ...]:
    labels = tuple(int(k) for k in labels)
    for k in labels:
        if k == BLANK:
            raise InvalidInput("label sequence must not contain blank")
        if not 0 < k < K:
            raise InvalidInput(f"label {k} outside 1..{K - 1}")
    return labels


def path_log_prob(E, path: Sequence[int]) -> float:
    lp = as_log_probs(E)
    path = np.asarray(path, dtype=int)
    if path.shape != (lp.shape[0],):
        raise InvalidInput(f"path length {path.size} != T={lp.shape[0]}")
    if np.any(path < 0) or np.any(path >= lp.shape[1]):
        raise InvalidInput("path contains an out-of-range class")
    return float(np.sum(lp[np.arange(lp.shape[0]), path]))


def _enumerate_paths(lp: np.ndarray, limit: int):
    T, K = lp.shape
    if K**T > limit:
        raise TooLargeForOracle(f"K^T = {K}^{T} exceeds the enumeration limit {limit}")
    rows = np.arange(T)
    for path in itertools.product(range(K), repeat=T):
        yield path, float(np.sum(lp[rows, path]))


def label_log_prob_bruteforce(E, labels: Sequence[int], limit: int = ORACLE_LIMIT) -> float:
    """log P(labels | X) by summing every length-T path that collapses to ``labels``."""
    lp = as_log_probs(E)
    target = _check_labels(labels, lp.shape[1])
    terms = [score for path, score in _enumerate_paths(lp, limit) if collapse(path) == target]
    if not terms:
        return NEG_INF
    return float(np.logaddexp.reduce(terms))


def label_distribution_bruteforce(E, limit: int = ORACLE_LIMIT) -> dict[tuple[int, ...], float]:
    """log P(y | X) for every transcription y reachable in T frames."""
    lp = as_log_probs(E)
    acc: dict[tuple[int, ...], float] = {}
    for path, score in _enumerate_paths(lp, limit):
        y = collapse(path)
        acc[y] = float(np.logaddexp(acc.get(y, NEG_INF), score))
    return acc


@dataclass
class CTCResult:
    loss: float  # -log P(y|X); +inf when no alignment fits in T frames
    posteriors: np.ndarray  # [T, K] occupation probabilities gamma

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.loss))


def _shift(x: np.ndarray, n: int) -> np.ndarray:
    out = np.full_like(x, NEG_INF)
    out[n:] = x[:-n]
    return out


def forward_backward(E, labels: Sequence[int]) -> CTCResult:
    lp = as_log_probs(E)
    T, K = lp.shape
    y = _check_labels(labels, K)
    if min_frames(y) > T:
        return CTCResult(np.inf, np.zeros((T, K)))

    ext = np.zeros(2 * len(y) + 1, dtype=int)
    ext[1::2] = y
    S = ext.size
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    emit = lp[:, ext]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, :2] = emit[0, :2]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = np.logaddexp(prev, _shift(prev, 1))
        acc = np.where(skip, np.logaddexp(acc, _shift(prev, 2)), acc)
        alpha[t] = acc + emit[t]

    # beta[t, s]: log mass of completing the alignment from state s after frame t
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, -2:] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = np.logaddexp(nxt, _shift(nxt[::-1], 1)[::-1])
        from_skip = np.where(skip, nxt, NEG_INF)
        acc = np.logaddexp(acc, _shift(from_skip[::-1], 2)[::-1])
        beta[t] = acc

    log_p = float(np.logaddexp.reduce(alpha[T - 1, -2:]))
    if not np.isfinite(log_p):
        return CTCResult(np.inf, np.zeros((T, K)))
    occupancy = np.exp(alpha + beta - log_p)
    posteriors = np.zeros((T, K))
    for s in range(S):
        posteriors[:, ext[s]] += occupancy[:, s]
    return CTCResult(-log_p, posteriors)


def ctc_loss_and_gradient(logits, labels: Sequence[int]) -> tuple[float, np.ndarray]:
    """Loss and d loss / d logits for pre-softmax scores; the gradient is softmax - gamma."""
    logits = np.asarray(logits, dtype=np.float64)
    res = forward_backward(EmissionMatrix(log_softmax(logits)), labels)
    if not res.feasible:
        raise InfeasibleTarget(
            f"target of length {len(labels)} needs {min_frames(tuple(labels))} frames, have {logits.shape[0]}"
        )
    return res.loss, softmax(logits) - res.posteriors


def ctc_logit_gradient(logits, labels: Sequence[int]) -> np.ndarray:
    return ctc_loss_and_gradient(logits, labels)[1]


def write_emissions(path, E) -> None:
    lp = as_log_probs(E)
    lines = [f"CTC-EMIT v1 {lp.shape[0]} {lp.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in lp]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write emission file {path}: {exc}") from exc


def read_emissions(path) -> EmissionMatrix:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read emission file {path}: {exc}") from exc
    head = lines[0].split() if lines else []
    if len(head) != 4 or head[:2] != ["CTC-EMIT", "v1"]:
        raise InvalidInput(f"{path}: missing 'CTC-EMIT v1 T K' header")
    try:
        T, K = int(head[2]), int(head[3])
        rows = [line.split() for line in lines[1:1 + T]]
        if len(rows) != T or any(len(r) != K for r in rows):
            raise InvalidInput(f"{path}: expected {T} rows of {K} values")
        values = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise InvalidInput(f"{path}: malformed emission file: {exc}") from exc
    return EmissionMatrix(values.reshape(T, K))
