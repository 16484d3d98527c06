"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
The end-to-end criteria (7, 8) train a desk model on 2,000 synthetic lines and
take several CPU-minutes.
"""

import itertools
import math
import sys
import time

import numpy as np
import pytest

from conftest import random_emissions, random_instance
from slidectc.alphabet import Alphabet
from slidectc.charnet import BatchNorm, Conv, Dense, MaxPool, NetworkConfig, Softmax, TrainSchedule
from slidectc.charnet import build_network, desk_profile
from slidectc.cli import main as cli_main
from slidectc.ctc import (
    collapse,
    ctc_logit_gradient,
    ctc_loss_and_gradient,
    forward_backward,
    label_log_prob_bruteforce,
    min_frames,
    path_log_prob,
)
from slidectc.decode import (
    DecodeOptions,
    Lexicon,
    all_label_sequences,
    beam_search_decode,
    exhaustive_decode_oracle,
    token_passing_decode,
)
from slidectc.lm import train_ngram
from slidectc.metrics import EvalReport, LineRecord, accurate_rate
from slidectc.pipeline import DecoderSpec, new_recognizer, run_pipeline, train
from slidectc.synth import GlyphSet, generate_dataset, sample_transcripts
from slidectc.textline import TextLineImage, WindowConfig, extract_windows, read_manifest, window_count


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return emit


# --- 1. CTC oracle equivalence ----------------------------------------------

def test_criterion_1_ctc_oracle_equivalence(verdict):
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    worst = 0.0
    mismatched_support = 0
    for _ in range(100):
        E, y = random_instance(rng, max_T=6, max_K=4)
        truth = label_log_prob_bruteforce(E, y)
        loss = forward_backward(E, y).loss
        if truth == -math.inf or loss == math.inf:
            mismatched_support += not (truth == -math.inf and loss == math.inf)
            continue
        worst = max(worst, abs(loss + truth))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and mismatched_support == 0 and elapsed < 5.0
    verdict(1, ok, f"max |loss + log P_brute| = {worst:.2e} (<= 1e-9), runtime {elapsed:.2f}s (< 5s)")


# --- 2. CTC normalization ---------------------------------------------------

def test_criterion_2_ctc_normalization(verdict):
    rng = np.random.default_rng(1002)
    worst = 0.0
    for _ in range(20):
        T, K = int(rng.integers(1, 6)), int(rng.integers(2, 4))
        E = random_emissions(rng, T, K)
        total = 0.0
        for y in all_label_sequences(K - 1, T):
            res = forward_backward(E, y)
            if res.feasible:
                total += math.exp(-res.loss)
        worst = max(worst, abs(total - 1.0))
    verdict(2, worst <= 1e-9, f"max |sum_y P(y|X) - 1| = {worst:.2e} over 20 instances (<= 1e-9)")


# --- 3. gradient correctness ------------------------------------------------

def _logit_fd_worst(rng, instances=50, h=1e-6):
    worst = 0.0
    done = 0
    while done < instances:
        T, K = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        x = rng.normal(size=(T, K))
        y = tuple(int(k) for k in rng.integers(1, K, size=rng.integers(0, T + 1)))
        if min_frames(y) > T:
            continue
        analytic = ctc_logit_gradient(x, y)
        numeric = np.zeros_like(x)
        for idx in np.ndindex(*x.shape):
            up, down = x.copy(), x.copy()
            up[idx] += h
            down[idx] -= h
            numeric[idx] = (ctc_loss_and_gradient(up, y)[0] - ctc_loss_and_gradient(down, y)[0]) / (2 * h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-300)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
        done += 1
    return worst


def _param_fd_worst(net, x, labels, rng, per_tensor=None, h=1e-5):
    """Central differences of the CTC loss w.r.t. network parameters.

    Returns the worst relative error and the largest finite difference seen
    where the analytic gradient is exactly zero (conv biases feeding batch
    norm), where a relative error would only measure round-off.
    """
    def loss():
        return ctc_loss_and_gradient(net.forward_logits(x, train=True), labels)[0]

    _, dlogits = ctc_loss_and_gradient(net.forward_logits(x, train=True), labels)
    grads = net.backward(dlogits)
    worst = zero_worst = 0.0
    for name in net.param_names:
        w = net.tensors[name]
        indices = list(np.ndindex(*w.shape))
        if per_tensor is not None and len(indices) > per_tensor:
            pick = rng.choice(len(indices), size=per_tensor, replace=False)
            indices = [indices[i] for i in pick]
        for idx in indices:
            orig = w[idx]
            w[idx] = orig + h
            up = loss()
            w[idx] = orig - h
            down = loss()
            w[idx] = orig
            numeric = (up - down) / (2 * h)
            a = grads[name][idx]
            if abs(a) < 1e-12:
                zero_worst = max(zero_worst, abs(numeric))
            else:
                worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric)))
    return worst, zero_worst


def test_criterion_3_gradient_correctness(verdict):
    rng = np.random.default_rng(1003)
    logit_worst = _logit_fd_worst(rng)

    # two-conv desk-style net, every parameter
    layers = (Conv(4), BatchNorm(), Conv(4), MaxPool(2, 2), Dense(8), Softmax(4))
    small = build_network(NetworkConfig(layers, input_channels=1, input_size=8, seed=3, dtype="float64"))
    small_worst, small_zero = _param_fd_worst(small, rng.random((6, 1, 8, 8)), (1, 3, 2), rng)

    # the desk profile itself, 12 sampled entries per tensor
    desk = build_network(desk_profile(7, seed=3, dtype="float64"))
    desk_worst, desk_zero = _param_fd_worst(desk, rng.random((8, 1, 32, 32)), (2, 5, 5), rng, per_tensor=12)

    param_worst = max(small_worst, desk_worst)
    zero_worst = max(small_zero, desk_zero)
    ok = logit_worst <= 1e-6 and param_worst <= 1e-4 and zero_worst <= 1e-8
    verdict(3, ok, f"logit FD max rel err {logit_worst:.2e} (<= 1e-6); parameter FD max rel err "
                   f"{param_worst:.2e} (<= 1e-4; 2-conv net {small_worst:.1e}, desk profile {desk_worst:.1e}); "
                   f"zero-gradient entries |FD| <= {zero_worst:.1e}")


# --- 4. beam search equals the exhaustive oracle ----------------------------

def _scored_transcriptions(E, lm, alpha, chars):
    """Independent enumeration of length-normalized scores for the top-two gap."""
    T, K = E.log_probs.shape
    out = []
    for y in all_label_sequences(K - 1, T):
        lp = label_log_prob_bruteforce(E, y)
        if lp == -math.inf:
            continue
        if alpha:
            text = "".join(chars[k - 1] for k in y)
            lp += alpha * sum(lm.log_prob(text[i], text[:i]) for i in range(len(text)))
        out.append(lp / len(y) if y else lp)
    return sorted(out, reverse=True)


def test_criterion_4_beam_equals_oracle(verdict):
    rng = np.random.default_rng(1004)
    lms = {
        2: (train_ngram("a aa aaa", order=2, alphabet="a"), "a"),
        3: (train_ngram("ab ba aab bba abab", order=3, alphabet="ab"), "ab"),
    }
    start = time.perf_counter()
    compared = excluded = mismatches = 0
    for i in range(200):
        T, K = int(rng.integers(1, 6)), int(rng.integers(2, 4))
        E = random_emissions(rng, T, K)
        alpha = float(i % 2)
        lm, chars = lms[K]
        scores = _scored_transcriptions(E, lm, alpha, chars)
        if len(scores) > 1 and scores[0] - scores[1] < 1e-12:
            excluded += 1
            continue
        kwargs = dict(lm=lm, alphabet=chars) if alpha else {}
        oracle = exhaustive_decode_oracle(E, alpha=alpha, **kwargs)
        beam = beam_search_decode(E, DecodeOptions(beam_width=10**6, candidate_count=K, alpha=alpha, **kwargs))
        compared += 1
        if beam.labels != oracle.labels or abs(beam.log_score - oracle.log_score) > 1e-9:
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30.0 and compared > 0
    verdict(4, ok, f"{compared} compared, {excluded} near-ties excluded, {mismatches} mismatches; "
                   f"runtime {elapsed:.1f}s (< 30s)")


# --- 5. token passing equals per-word Viterbi -------------------------------

def _viterbi_bruteforce(E, word):
    T, K = E.log_probs.shape
    best = -math.inf
    for path in itertools.product(range(K), repeat=T):
        if collapse(path) == word:
            best = max(best, path_log_prob(E, path))
    return best


def test_criterion_5_token_passing_equals_viterbi(verdict):
    rng = np.random.default_rng(1005)
    done = mismatches = 0
    worst = 0.0
    while done < 100:
        T, K = int(rng.integers(1, 7)), int(rng.integers(2, 5))
        E = random_emissions(rng, T, K)
        size = int(rng.integers(1, 21))
        words = {tuple(int(k) for k in rng.integers(1, K, size=rng.integers(1, 4))) for _ in range(size)}
        oracle = {w: _viterbi_bruteforce(E, w) for w in words}
        best = max(oracle.values())
        if best == -math.inf:
            continue
        # the oracle's choice among exact ties follows the lexicon order
        winners = [w for w in Lexicon(words) if oracle[w] == best]
        r = token_passing_decode(E, Lexicon(words))
        worst = max(worst, abs(r.log_score - best))
        mismatches += r.labels != winners[0] or abs(r.log_score - best) > 1e-9
        done += 1
    verdict(5, mismatches == 0, f"100 instances, {mismatches} word mismatches, max score diff {worst:.2e} (<= 1e-9)")


# --- 6. LM correctness ------------------------------------------------------

def test_criterion_6_lm(verdict):
    m = train_ngram("abab", order=2, alphabet="ab", lam=0.9)
    p_ba, p_aa = m.prob("b", "a"), m.prob("a", "a")
    fixture_ok = abs(p_ba - 0.95) <= 1e-15 and abs(p_aa - 0.05) <= 1e-15
    rng = np.random.default_rng(1006)
    words = ["".join(rng.choice(list("abcde"), size=rng.integers(1, 8))) for _ in range(300)]
    big = train_ngram(words, order=5, alphabet="abcdef", lam=0.9)
    worst = 0.0
    for _ in range(100):
        h = "".join(rng.choice(list("abcdef"), size=rng.integers(0, 8)))
        worst = max(worst, abs(sum(math.exp(big.log_prob(k, h)) for k in big.alphabet) - 1.0))
    ok = fixture_ok and worst <= 1e-9
    verdict(6, ok, f"P(b|a) = {p_ba!r}, P(a|a) = {p_aa!r}; max |sum_k P(k|h) - 1| = {worst:.2e} over 100 contexts")


# --- 7 and 8. end-to-end desk run -------------------------------------------

E2E_ALPHABET = "abcdef"
E2E_WINDOWS = WindowConfig((32,), stride=4, margin=16, pad=False)
E2E_SCHEDULE = TrainSchedule(initial_lr=0.1, decay_factor=0.3, decay_epochs=(2,))
E2E_EPOCHS = 3


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    glyphs = GlyphSet.generate(E2E_ALPHABET, seed=7)
    train_manifest = generate_dataset(glyphs, 2000, (1, 5), seed=101, out_dir=root / "train")
    test_manifest = generate_dataset(glyphs, 200, (1, 5), seed=202, out_dir=root / "test")
    lexicon_words, seen = [], set()
    for w in sample_transcripts(E2E_ALPHABET, 1000, (1, 5), seed=303):
        if w not in seen:
            seen.add(w)
            lexicon_words.append(w)
        if len(lexicon_words) == 20:
            break
    lex_manifest = generate_dataset(glyphs, 200, (1, 5), seed=404, out_dir=root / "lex", vocabulary=lexicon_words)

    alphabet = Alphabet(E2E_ALPHABET)
    rec = new_recognizer(alphabet, E2E_WINDOWS, "desk", seed=0)
    cpu0 = time.process_time()
    stats = train(rec, read_manifest(train_manifest), E2E_SCHEDULE, E2E_EPOCHS, seed=0, batch_lines=8)
    cpu_minutes = (time.process_time() - cpu0) / 60
    return dict(root=root, rec=rec, stats=stats, cpu_minutes=cpu_minutes, test=test_manifest,
                lex=lex_manifest, lexicon=Lexicon.from_strings(lexicon_words, alphabet))


def test_criterion_7_end_to_end_desk_run(e2e, verdict):
    rec = e2e["rec"]
    naive = run_pipeline(rec, e2e["test"], DecoderSpec("naive"))
    lexicon = run_pipeline(rec, e2e["lex"], DecoderSpec("lexicon", e2e["lexicon"]))
    ok = e2e["cpu_minutes"] <= 30 and naive.word_accuracy >= 0.95 and lexicon.word_accuracy >= 0.99
    verdict(7, ok, f"training {e2e['cpu_minutes']:.1f} CPU-min (<= 30), epoch losses "
                   f"{[round(x, 3) for x in e2e['stats'].epochs]}; naive word accuracy "
                   f"{naive.word_accuracy:.3f} (>= 0.95, AR {naive.accurate_rate:.4f}); "
                   f"20-word lexicon token passing {lexicon.word_accuracy:.3f} (>= 0.99)")


def _cli_run(root, alphabet_file):
    """synth -> train -> eval through the command line; returns checkpoint and report bytes."""
    root.mkdir()
    data = root / "data"
    codes = [
        cli_main(["synth", "--alphabet", str(alphabet_file), "--count", "40", "--min-len", "1", "--max-len", "5",
                  "--seed", "9", "--glyph-seed", "7", "--out", str(data)]),
        cli_main(["train", "--manifest", str(data / "manifest.tsv"), "--alphabet", str(alphabet_file),
                  "--net", "desk", "--epochs", "2", "--lr", "0.1", "--decay", "0.3", "--decay-epochs", "1",
                  "--stride", "4", "--scales", "32", "--margin", "16", "--no-pad", "--seed", "5",
                  "--out", str(root / "m.ckpt")]),
        cli_main(["eval", "--ckpt", str(root / "m.ckpt"), "--manifest", str(data / "manifest.tsv"),
                  "--method", "beam", "--beam", "8", "--cn", "4", "--report", str(root / "r.tsv")]),
    ]
    return codes, (root / "m.ckpt").read_bytes(), (root / "r.tsv").read_bytes() + (root / "r.json").read_bytes()


def test_criterion_8_determinism(e2e, verdict, tmp_path, capsys):
    alphabet_file = tmp_path / "alphabet.txt"
    Alphabet(E2E_ALPHABET).save(alphabet_file)
    codes_a, ckpt_a, report_a = _cli_run(tmp_path / "a", alphabet_file)
    codes_b, ckpt_b, report_b = _cli_run(tmp_path / "b", alphabet_file)
    capsys.readouterr()
    runs_identical = codes_a == codes_b == [0, 0, 0] and ckpt_a == ckpt_b and report_a == report_b

    rec = e2e["rec"]
    outputs = []
    for workers in (1, 8):
        path = tmp_path / f"workers{workers}.tsv"
        run_pipeline(rec, e2e["test"], DecoderSpec("naive"), workers=workers, report_path=path)
        outputs.append(path.read_bytes() + path.with_suffix(".json").read_bytes())
    windows = extract_windows(TextLineImage(np.random.default_rng(8).random((32, 400))), E2E_WINDOWS)
    emissions_equal = np.array_equal(rec.net.emissions_for_line(windows, workers=1).log_probs,
                                     rec.net.emissions_for_line(windows, workers=8).log_probs)
    ok = runs_identical and outputs[0] == outputs[1] and emissions_equal
    verdict(8, ok, f"two seeded synth/train/eval runs bitwise identical: {runs_identical}; "
                   f"1 vs 8 workers byte-identical report: {outputs[0] == outputs[1]}, "
                   f"emissions: {emissions_equal}")


# --- 9. geometry ------------------------------------------------------------

def test_criterion_9_geometry(verdict):
    counts = {(256, 32, 4): 57, (512, 40, 8): 60}
    formula_ok = all(window_count(W, w, s) == expected for (W, w, s), expected in counts.items())
    line = TextLineImage(np.random.default_rng(9).random((32, 256)))
    T = extract_windows(line, WindowConfig((32,), stride=4)).T
    line512 = TextLineImage(np.random.default_rng(9).random((32, 512)))
    T40 = extract_windows(line512, WindowConfig((40,), stride=8, pad_width=512)).T
    ok = formula_ok and T == 57 and T40 == 60
    verdict(9, ok, f"256/32/4 -> {window_count(256, 32, 4)} (extracted {T}); "
                   f"512/40/8 -> {window_count(512, 40, 8)} (extracted {T40})")


# --- 10. metrics ------------------------------------------------------------

def test_criterion_10_metrics(verdict):
    fixtures = [(("abc", "abc"), 1.0), (("abc", "ab"), 2 / 3), (("ab", "abcd"), 0.0)]
    got = [accurate_rate([pair]) for pair, _ in fixtures]
    exact = all(g == e for g, (_, e) in zip(got, fixtures))
    negative = EvalReport.from_records([LineRecord("x", "a", "bbbb", 0.0, "naive")]).accurate_rate
    ok = exact and negative == -3.0
    verdict(10, ok, f"AR fixtures {got} == [1.0, 2/3, 0.0]; ('a','bbbb') AR {negative} reported unclamped")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
