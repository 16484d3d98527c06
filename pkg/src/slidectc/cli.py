"""Command-line entry point: ``slidectc <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 incompatible model
or checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .alphabet import Alphabet
from .charnet import TrainSchedule
from .ctc import read_emissions, write_emissions
from .decode import DecodeOptions, Lexicon
from .errors import Incompatible, IncompatibleCheckpoint, IncompatibleModel, InvalidInput, IoError
from .lm import NGramModel, train_ngram
from .metrics import LineRecord
from .pipeline import METHODS, DecoderSpec, Recognizer, decode_record, format_line_record, new_recognizer, run_pipeline, train
from .synth import GlyphSet, generate_dataset
from .textline import WindowConfig, read_manifest, read_pgm

log = logging.getLogger("slidectc")

EXIT_INVALID = 2
EXIT_IO = 3
EXIT_INCOMPATIBLE = 4


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# --- commands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    alphabet = Alphabet.load(args.alphabet)
    glyphs = GlyphSet.generate(alphabet.chars, seed=args.glyph_seed, spacing=(args.min_gap, args.max_gap),
                               v_jitter=args.jitter, noise=args.noise)
    vocab = [w for w in _read_lines(args.vocabulary) if w] if args.vocabulary else None
    manifest = generate_dataset(glyphs, args.count, (args.min_len, args.max_len), args.seed, args.out, vocab)
    print(manifest)
    return 0


def cmd_train(args) -> int:
    alphabet = Alphabet.load(args.alphabet)
    records = read_manifest(args.manifest)
    if args.resume:
        rec = Recognizer.load(args.resume)
        if rec.alphabet != alphabet:
            raise IncompatibleCheckpoint(f"{args.resume} was trained on a different alphabet")
    else:
        windows = WindowConfig(window_widths=args.scales, stride=args.stride, pad_width=args.pad_width,
                               margin=args.margin, pad=not args.no_pad)
        rec = new_recognizer(alphabet, windows, args.net, seed=args.seed)
    schedule = TrainSchedule(args.lr, args.decay, args.decay_epochs, args.momentum, args.epoch_fraction)
    stats = train(rec, records, schedule, args.epochs, seed=args.seed, batch_lines=args.batch_lines,
                  start_epoch=args.start_epoch)
    rec.save(args.out)
    print(json.dumps({"epochs": stats.epochs, "steps": stats.steps, "skipped": stats.skipped_infeasible}))
    return 0


def cmd_emit(args) -> int:
    rec = Recognizer.load(args.ckpt)
    write_emissions(args.out, rec.emissions(read_pgm(args.image), workers=args.workers))
    return 0


def _decoder(args, alphabet: Alphabet) -> DecoderSpec:
    lexicon = Lexicon.load(args.lexicon, alphabet) if args.lexicon else None
    lm = NGramModel.load(args.lm) if args.lm else None
    alpha = args.alpha if args.alpha is not None else (1.0 if lm is not None else 0.0)
    options = DecodeOptions(beam_width=args.beam, candidate_count=args.cn, alpha=alpha, lm=lm,
                            alphabet=alphabet.chars)
    return DecoderSpec(args.method, lexicon, options, single_word=not args.multi_word)


def cmd_decode(args) -> int:
    if args.emit:
        if not args.alphabet:
            raise InvalidInput("decoding an emission file needs --alphabet")
        alphabet = Alphabet.load(args.alphabet)
        E = read_emissions(args.emit)
        if E.K != alphabet.num_classes:
            raise IncompatibleModel(f"emissions have {E.K} classes, alphabet implies {alphabet.num_classes}")
    else:
        if not (args.ckpt and args.image):
            raise InvalidInput("decode needs --emit or both --ckpt and --image")
        rec = Recognizer.load(args.ckpt)
        alphabet = rec.alphabet
        E = rec.emissions(read_pgm(args.image), workers=args.workers)
    spec = _decoder(args, alphabet)
    result = spec.decode(E)
    line_id = Path(args.image or args.emit).stem
    sys.stdout.write(format_line_record(
        LineRecord(line_id, "", decode_record(result, alphabet), result.log_score, args.method)))
    return 0


def cmd_lm_train(args) -> int:
    alphabet = Alphabet.load(args.alphabet).chars if args.alphabet else None
    model = train_ngram(_read_lines(args.corpus), order=args.order, alphabet=alphabet, lam=args.lam)
    model.save(args.out)
    if model.skipped:
        log.warning("%d out-of-alphabet characters split words", model.skipped)
    return 0


def cmd_eval(args) -> int:
    rec = Recognizer.load(args.ckpt)
    spec = _decoder(args, rec.alphabet)
    case = {"auto": None, "on": True, "off": False}[args.case_insensitive]
    report = run_pipeline(rec, args.manifest, spec, workers=args.workers, report_path=args.report,
                          case_insensitive=case)
    print(json.dumps(report.summary()))
    return 0


# --- parser -----------------------------------------------------------------

def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="naive")
    p.add_argument("--lexicon", help="one word per line")
    p.add_argument("--lm", help="character n-gram model written by lm-train")
    p.add_argument("--alpha", type=float, help="LM weight (default 1 with --lm, else 0)")
    p.add_argument("--beam", type=int, default=32, help="beam width N")
    p.add_argument("--cn", type=int, default=10, help="candidates kept per time step")
    p.add_argument("--multi-word", action="store_true", help="let token passing chain several lexicon words")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slidectc", description="Sliding-window CTC text-line recognition")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic text-line dataset")
    p.add_argument("--alphabet", required=True, help="alphabet file, one character per line")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--glyph-seed", type=int, default=0, help="seed of the glyph shapes, shared across splits")
    p.add_argument("--min-gap", type=int, default=1)
    p.add_argument("--max-gap", type=int, default=4)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--vocabulary", help="draw transcripts from this word list instead")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a character model with the CTC loss")
    p.add_argument("--manifest", required=True)
    p.add_argument("--alphabet", required=True)
    p.add_argument("--net", choices=("paper", "desk"), default="desk")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--decay", type=float, default=0.3)
    p.add_argument("--decay-epochs", type=_int_list, default=(40, 60))
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--epoch-fraction", type=float, default=1.0)
    p.add_argument("--batch-lines", type=int, default=8)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--scales", type=_int_list, default=(32,))
    p.add_argument("--margin", type=int, default=0)
    p.add_argument("--pad-width", type=int, default=256)
    p.add_argument("--no-pad", action="store_true", help="keep the natural width instead of padding to --pad-width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", help="continue from this checkpoint (window flags are then ignored)")
    p.add_argument("--start-epoch", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("emit", help="write the emission matrix of one line")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("decode", help="transcribe one line or emission file")
    p.add_argument("--emit")
    p.add_argument("--ckpt")
    p.add_argument("--image")
    p.add_argument("--alphabet", help="required with --emit")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("lm-train", help="train a character n-gram model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=0.9)
    p.add_argument("--alphabet")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("eval", help="decode and score a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--case-insensitive", choices=("auto", "on", "off"), default="auto")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Incompatible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
