import numpy as np
import pytest

from slidectc.ctc import EmissionMatrix


def random_emissions(rng: np.random.Generator, T: int, K: int, scale: float = 2.0) -> EmissionMatrix:
    return EmissionMatrix.from_logits(rng.normal(size=(T, K)) * scale)


def random_instance(rng, max_T=6, max_K=4, min_K=2):
    T = int(rng.integers(1, max_T + 1))
    K = int(rng.integers(min_K, max_K + 1))
    E = random_emissions(rng, T, K)
    y = tuple(int(k) for k in rng.integers(1, K, size=rng.integers(0, T + 1)))
    return E, y


@pytest.fixture
def f1():
    """T=2, K=2 with P(a)=0.6, P(blank)=0.4 at both frames."""
    return EmissionMatrix.from_probs([[0.4, 0.6], [0.4, 0.6]])


@pytest.fixture(scope="session")
def desk_setup(tmp_path_factory):
    """A desk recognizer overfit on a 50-line synthetic manifest.

    Returns (recognizer, manifest path, checkpoint path, alphabet path).
    """
    from slidectc.alphabet import Alphabet
    from slidectc.charnet import TrainSchedule
    from slidectc.pipeline import new_recognizer, train
    from slidectc.synth import GlyphSet, generate_dataset
    from slidectc.textline import WindowConfig, read_manifest

    root = tmp_path_factory.mktemp("desk")
    alphabet = Alphabet("abcdef")
    alphabet.save(root / "alphabet.txt")
    glyphs = GlyphSet.generate(alphabet.chars, seed=0)
    manifest = generate_dataset(glyphs, 50, (1, 5), seed=21, out_dir=root / "lines")
    windows = WindowConfig((32,), stride=4, margin=16, pad=False)
    rec = new_recognizer(alphabet, windows, "desk", seed=0)
    train(rec, read_manifest(manifest), TrainSchedule(0.1, 0.3, (12,), momentum=0.9), 16, seed=0, batch_lines=4)
    ckpt = root / "desk.ckpt"
    rec.save(ckpt)
    return rec, manifest, ckpt, root / "alphabet.txt"
