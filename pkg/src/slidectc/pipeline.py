"""End-to-end training and evaluation over manifests."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alphabet import Alphabet
from .charnet import Network, TrainSchedule, build_network, load_checkpoint, save_checkpoint
from .charnet.config import PROFILES
from .ctc import EmissionMatrix, ctc_loss_and_gradient, min_frames
from .decode import DecodeOptions, DecodeResult, Lexicon, beam_search_decode, best_path_decode, token_passing_decode
from .errors import IncompatibleCheckpoint, InvalidInput, IoError
from .metrics import EvalReport, LineRecord
from .textline import WindowConfig, line_windows, read_manifest, read_pgm

log = logging.getLogger(__name__)

METHODS = ("naive", "lexicon", "beam")


@dataclass
class Recognizer:
    """A trained network together with the alphabet and window geometry it expects."""

    net: Network
    alphabet: Alphabet
    windows: WindowConfig

    def __post_init__(self):
        if self.alphabet.num_classes != self.net.num_classes:
            raise IncompatibleCheckpoint(
                f"alphabet has {len(self.alphabet)} characters but the network has {self.net.num_classes} classes"
            )
        if self.windows.channels != self.net.config.input_channels:
            raise IncompatibleCheckpoint("window scales do not match the network's input channels")
        if self.windows.patch_size != self.net.config.input_size:
            raise IncompatibleCheckpoint("patch size does not match the network's input size")

    def save(self, path) -> None:
        save_checkpoint(self.net, path, {"alphabet": self.alphabet.chars, "windows": self.windows.to_dict()})

    @classmethod
    def load(cls, path) -> "Recognizer":
        net, extra = load_checkpoint(path)
        if "alphabet" not in extra or "windows" not in extra:
            raise IncompatibleCheckpoint(f"{path}: checkpoint carries no alphabet/window metadata")
        return cls(net, Alphabet(extra["alphabet"]), WindowConfig.from_dict(extra["windows"]))

    def emissions(self, raw, workers: int = 1) -> EmissionMatrix:
        return self.net.emissions_for_line(line_windows(raw, self.windows), workers=workers)


@dataclass
class DecoderSpec:
    method: str = "naive"
    lexicon: Lexicon | None = None
    options: DecodeOptions = field(default_factory=lambda: DecodeOptions(alpha=0.0))
    single_word: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInput(f"unknown decoding method {self.method!r}")
        if self.method == "lexicon" and self.lexicon is None:
            raise InvalidInput("lexicon decoding needs a lexicon")

    def decode(self, E) -> DecodeResult:
        if self.method == "naive":
            return best_path_decode(E)
        if self.method == "lexicon":
            return token_passing_decode(E, self.lexicon, self.single_word)
        return beam_search_decode(E, self.options)


# --- training ---------------------------------------------------------------

@dataclass
class TrainStats:
    epochs: list[float] = field(default_factory=list)  # mean loss per line
    skipped_infeasible: int = 0
    steps: int = 0


def load_training_set(records, alphabet: Alphabet, windows: WindowConfig):
    """Window every manifest line; lines too short for their transcript are dropped."""
    data, skipped = [], 0
    for image, text in records:
        seq = line_windows(read_pgm(image), windows)
        labels = alphabet.encode(text)
        if min_frames(labels) > seq.T:
            skipped += 1
            continue
        data.append((seq.patches.astype(np.float32), labels))
    return data, skipped


def train(recognizer: Recognizer, records, schedule: TrainSchedule, epochs: int, seed: int = 0,
          batch_lines: int = 8, start_epoch: int = 0) -> TrainStats:
    """SGD over the manifest with the CTC loss; updates ``recognizer.net`` in place."""
    net = recognizer.net
    data, skipped = load_training_set(records, recognizer.alphabet, recognizer.windows)
    if not data:
        raise InvalidInput("no trainable lines (all transcripts longer than their window sequences)")
    stats = TrainStats(skipped_infeasible=skipped)
    if skipped:
        log.warning("skipped %d lines whose transcripts cannot fit their window count", skipped)
    per_epoch = max(1, math.ceil(schedule.epoch_fraction * len(data)))
    for epoch in range(start_epoch, start_epoch + epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(data))[:per_epoch]
        total = 0.0
        for start in range(0, len(order), batch_lines):
            batch = [data[i] for i in order[start:start + batch_lines]]
            patches = np.concatenate([p for p, _ in batch])
            logits = net.forward_logits(patches, train=True).astype(np.float64)
            grad = np.empty_like(logits)
            row = 0
            for p, labels in batch:
                loss, g = ctc_loss_and_gradient(logits[row:row + len(p)], labels)
                # mean over windows, so the learning rate has per-window scale
                grad[row:row + len(p)] = g / len(patches)
                total += loss
                row += len(p)
            net.train_step(patches, grad, schedule, epoch)
            stats.steps += 1
        stats.epochs.append(total / len(order))
        log.info("epoch %d: lr %.4g, mean loss %.4f", epoch, schedule.lr(epoch), stats.epochs[-1])
    return stats


def new_recognizer(alphabet: Alphabet, windows: WindowConfig, profile: str = "desk", seed: int = 0,
                   dtype: str = "float32") -> Recognizer:
    if profile not in PROFILES:
        raise InvalidInput(f"unknown network profile {profile!r}")
    cfg = PROFILES[profile](alphabet.num_classes, windows.channels, seed=seed, dtype=dtype)
    if cfg.input_size != windows.patch_size:
        raise InvalidInput(f"profile {profile} expects {cfg.input_size}-pixel patches")
    return Recognizer(build_network(cfg), alphabet, windows)


# --- evaluation -------------------------------------------------------------

def decode_record(r: DecodeResult, alphabet: Alphabet) -> str:
    if r.words:
        return " ".join(alphabet.decode(w) for w in r.words)
    return alphabet.decode(r.labels)


def format_line_record(rec: LineRecord) -> str:
    return f"{rec.line_id}\t{rec.hypothesis}\t{rec.log_score!r}\t{rec.decoder}\n"


def run_pipeline(recognizer: Recognizer, manifest, decoder: DecoderSpec, workers: int = 1,
                 report_path=None, case_insensitive: bool | None = None) -> EvalReport:
    """Normalize, window, classify, decode and score every manifest line.

    The per-line TSV (``line_id, transcript, log_score, decoder``) is written
    to ``report_path`` in manifest order and the aggregate summary next to it
    as JSON.
    """
    records = read_manifest(manifest)
    for image, _ in records:
        if not Path(image).is_file():
            raise IoError(f"missing image {image}")
    if case_insensitive is None:
        case_insensitive = len(recognizer.alphabet) == 36

    def work(item):
        image, truth = item
        result = decoder.decode(recognizer.emissions(read_pgm(image)))
        hyp = decode_record(result, recognizer.alphabet)
        return LineRecord(Path(image).stem, truth, hyp, result.log_score, decoder.method)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lines = list(pool.map(work, records))
    else:
        lines = [work(item) for item in records]
    report = EvalReport.from_records(lines, case_insensitive)
    if report_path is not None:
        write_report(report, report_path)
    return report


def write_report(report: EvalReport, path) -> None:
    path = Path(path)
    try:
        path.write_text("".join(format_line_record(r) for r in report.lines), encoding="utf-8")
        path.with_suffix(".json").write_text(json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc
