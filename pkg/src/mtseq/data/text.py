"""Tokenization and truecasing.

The tokenizer rule set is frozen: split on whitespace, peel punctuation
characters off both edges of each chunk as separate tokens, then start a new
token at every interior apostrophe ("it's" -> "it", "'s").  ``detokenize``
inverts this up to whitespace normalization; straight double quotes are the
one ambiguous case (they stay space-separated).
"""

from __future__ import annotations

import string
from collections import Counter

PUNCTUATION = set(string.punctuation) | set("«»„“”‘’—–…¡¿")
APOSTROPHES = ("'", "’")
_ATTACH_LEFT = set(".,;:!?…%)]}»”") | set(APOSTROPHES)
_ATTACH_RIGHT = set("([{«„“¿¡")


def tokenize(line: str) -> list:
    """Split a line into tokens; empty input gives an empty list."""
    tokens = []
    for chunk in line.split():
        head = []
        tail = []
        while chunk and chunk[0] in PUNCTUATION:
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in PUNCTUATION:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        if chunk:
            piece = chunk[0]
            for ch in chunk[1:]:
                if ch in APOSTROPHES:
                    tokens.append(piece)
                    piece = ch
                else:
                    piece += ch
            tokens.append(piece)
        tokens.extend(reversed(tail))
    return tokens


def detokenize(tokens) -> str:
    out = []
    glue_next = False
    for tok in tokens:
        if out and not glue_next and tok[0] not in _ATTACH_LEFT:
            out.append(" ")
        out.append(tok)
        glue_next = tok in _ATTACH_RIGHT
    return "".join(out)


class Truecaser:
    """Recases sentence-initial tokens to their dominant non-initial form.

    The model maps a lowercased form to the surface form seen most often
    away from sentence starts; ties break to the lexicographically smallest
    form and unseen tokens pass through unchanged.
    """

    def __init__(self, forms: dict):
        self.forms = dict(forms)

    @classmethod
    def learn(cls, sentences) -> "Truecaser":
        counts = {}
        for sent in sentences:
            for tok in sent[1:]:
                counts.setdefault(tok.lower(), Counter())[tok] += 1
        forms = {
            low: min(surface, key=lambda f: (-surface[f], f))
            for low, surface in counts.items()
        }
        return cls(forms)

    def apply(self, tokens) -> list:
        if not tokens:
            return []
        best = self.forms.get(tokens[0].lower())
        if best is None:
            return list(tokens)
        return [best] + list(tokens[1:])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for form in sorted(self.forms.values()):
                fh.write(form + "\n")

    @classmethod
    def load(cls, path) -> "Truecaser":
        with open(path, encoding="utf-8") as fh:
            forms = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls({form.lower(): form for form in forms})
