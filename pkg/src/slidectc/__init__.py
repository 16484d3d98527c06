"""Text-line recognition with sliding-window convolutional character models and CTC decoding."""

from .alphabet import BLANK, Alphabet
from .ctc import EmissionMatrix, collapse, forward_backward
from .decode import DecodeOptions, Lexicon, beam_search_decode, best_path_decode, token_passing_decode
from .lm import NGramModel, train_ngram
from .textline import WindowConfig, extract_windows, normalize_line, window_count

__version__ = "0.1.0"
