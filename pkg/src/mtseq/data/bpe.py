"""Byte-pair encoding: iterative most-frequent-pair merging.

Learning counts every adjacent symbol pair (overlaps included) over word
types weighted by corpus frequency, merges the most frequent pair (ties
break to the lexicographically smallest pair), rewrites the affected words
by a single left-to-right non-overlapping sweep and repeats.  Application
replays the merges in learned order within each word; the continuation
marker ``@@`` decorates every non-final piece, so reverting a segmented
stream is a plain concatenation and round-trips exactly.
"""

from __future__ import annotations

from collections import Counter

from ..errors import DataError

MARKER = "@@"


def _merge_once(symbols, pair):
    """One left-to-right sweep merging non-overlapping occurrences of pair."""
    merged = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return tuple(merged)


class BPEModel:
    """An ordered merge list plus the ``@@`` continuation convention."""

    def __init__(self, merges):
        self.merges = [tuple(m) for m in merges]
        self._rank = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}

    @classmethod
    def learn(cls, tokens, n_merges: int) -> "BPEModel":
        """Learn up to ``n_merges`` merges from a token stream.

        Stops early once no adjacent pair is left.  Pair statistics are
        recounted from scratch each round; corpora here are small enough
        that clarity wins over the incremental bookkeeping.
        """
        if n_merges < 0:
            raise DataError("n_merges must be >= 0")
        word_counts = Counter(tokens)
        if not word_counts:
            raise DataError("cannot learn byte-pair merges from an empty corpus")
        seqs = {word: tuple(word) for word in word_counts}
        merges = []
        for _ in range(n_merges):
            pair_counts = Counter()
            for word, count in word_counts.items():
                symbols = seqs[word]
                for i in range(len(symbols) - 1):
                    pair_counts[symbols[i], symbols[i + 1]] += count
            if not pair_counts:
                break
            best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
            merges.append(best)
            for word, symbols in seqs.items():
                if len(symbols) > 1:
                    seqs[word] = _merge_once(symbols, best)
        return cls(merges)

    def segment_word(self, word: str) -> list:
        """Split one word into subword pieces (markers not yet attached)."""
        cached = self._cache.get(word)
        if cached is not None:
            return list(cached)
        symbols = tuple(word)
        while len(symbols) > 1:
            ranked = [
                self._rank[p]
                for p in zip(symbols, symbols[1:])
                if p in self._rank
            ]
            if not ranked:
                break
            symbols = _merge_once(symbols, self.merges[min(ranked)])
        self._cache[word] = symbols
        return list(symbols)

    def apply(self, tokens) -> list:
        out = []
        for word in tokens:
            pieces = self.segment_word(word)
            out.extend(p + MARKER for p in pieces[:-1])
            out.append(pieces[-1])
        return out

    def save(self, path) -> None:
        """Header line with the merge count, then one pair per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.merges)}\n")
            for a, b in self.merges:
                fh.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "BPEModel":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise DataError(f"{path}: empty byte-pair model file")
        try:
            count = int(lines[0])
        except ValueError:
            raise DataError(f"{path}: malformed header {lines[0]!r}") from None
        merges = []
        for line in lines[1:]:
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise DataError(f"{path}: malformed merge line {line!r}")
            merges.append((parts[0], parts[1]))
        if len(merges) != count:
            raise DataError(
                f"{path}: header says {count} merges, found {len(merges)}"
            )
        return cls(merges)


def revert(subwords) -> list:
    """Undo segmentation: glue every marked piece onto its successor."""
    words = []
    pending = ""
    for piece in subwords:
        if piece.endswith(MARKER):
            pending += piece[: -len(MARKER)]
        else:
            words.append(pending + piece)
            pending = ""
    if pending:
        words.append(pending)
    return words


def word_count(subwords) -> int:
    """Number of original words in a segmented sequence."""
    return len(revert(subwords))
