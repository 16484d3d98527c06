"""Character <-> class-index mapping. Blank is always class 0."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInput, IoError, UnknownSymbol

BLANK = 0


class Alphabet:
    """Ordered character set; character ``chars[i]`` is class ``i + 1``."""

    def __init__(self, chars: Iterable[str]):
        chars = list(chars)
        if not chars:
            raise InvalidInput("alphabet is empty")
        for c in chars:
            if len(c) != 1:
                raise InvalidInput(f"alphabet entries must be single characters, got {c!r}")
        if len(set(chars)) != len(chars):
            raise InvalidInput("alphabet contains duplicate characters")
        self.chars = "".join(chars)
        self._index = {c: i + 1 for i, c in enumerate(chars)}

    @classmethod
    def load(cls, path) -> "Alphabet":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read alphabet file {path}: {exc}") from exc
        return cls(line for line in text.split("\n") if line != "")

    def save(self, path) -> None:
        Path(path).write_text("".join(c + "\n" for c in self.chars), encoding="utf-8")

    @property
    def num_classes(self) -> int:
        return len(self.chars) + 1

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, c: str) -> bool:
        return c in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and other.chars == self.chars

    def __repr__(self) -> str:
        return f"Alphabet({self.chars!r})"

    def encode(self, text: str) -> tuple[int, ...]:
        try:
            return tuple(self._index[c] for c in text)
        except KeyError as exc:
            raise UnknownSymbol(f"character {exc.args[0]!r} is not in the alphabet") from None

    def decode(self, labels: Sequence[int]) -> str:
        out = []
        for k in labels:
            if not 1 <= k <= len(self.chars):
                raise InvalidInput(f"class index {k} is not a character label")
            out.append(self.chars[k - 1])
        return "".join(out)
