"""Token/id mapping with fixed reserved ids."""

from __future__ import annotations

from ..errors import DataError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocabulary:
    """Bidirectional token/id map; ids 0-3 are PAD, BOS, EOS, UNK.

    Unknown tokens encode to UNK; corpus tokens may never collide with the
    reserved surface forms.
    """

    def __init__(self, tokens):
        self._tokens = list(tokens)
        self._index = {}
        for i, tok in enumerate(self._tokens):
            if tok in RESERVED:
                raise DataError(f"token {tok!r} collides with a reserved symbol")
            if tok in self._index:
                raise DataError(f"duplicate token {tok!r} in vocabulary")
            self._index[tok] = i + len(RESERVED)

    @classmethod
    def from_corpus(cls, sequences) -> "Vocabulary":
        """Collect every distinct token, in sorted order (no frequency cutoff)."""
        seen = set()
        for seq in sequences:
            seen.update(seq)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(RESERVED) + len(self._tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __contains__(self, token) -> bool:
        return token in self._index

    @property
    def tokens(self):
        return tuple(self._tokens)

    def id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def token(self, idx: int) -> str:
        if 0 <= idx < len(RESERVED):
            return RESERVED[idx]
        if len(RESERVED) <= idx < len(self):
            return self._tokens[idx - len(RESERVED)]
        raise DataError(f"id {idx} out of range for vocabulary of size {len(self)}")

    def encode(self, tokens) -> list:
        return [self.id(t) for t in tokens]

    def decode(self, ids) -> list:
        return [self.token(i) for i in ids]

    def save(self, path) -> None:
        """One token per line; the token on (0-based) line i has id i + 4."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])
