"""Hate-term lexicon: loading, token matching and multi-hot encoding.

A lexicon file holds one term per line (UTF-8). A term may span several
words; a trailing '*' makes the final word a prefix pattern. Lines
starting with '#' are comments. Entry order in the file fixes the index
layout of the multi-hot vector, so loading must be stable.
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError

_TERM_CLEAN_RE = re.compile(r"[^a-z0-9 ]+")


class LexiconError(DataError):
    """Unreadable or empty lexicon file."""


@dataclass(frozen=True)
class LexiconEntry:
    words: tuple[str, ...]
    wildcard: bool  # prefix match on the last word
    index: int


@dataclass
class Lexicon:
    entries: list[LexiconEntry]
    duplicates_dropped: int = 0

    @property
    def dimension(self) -> int:
        return len(self.entries)


def _normalize_term(text: str) -> str:
    # Lowercase and strip punctuation, but never drop whole words the way
    # tweet normalization does: lexicon lines are curated terms.
    cleaned = _TERM_CLEAN_RE.sub("", text.casefold().replace("\t", " "))
    return " ".join(cleaned.split())


def load_lexicon(path) -> Lexicon:
    """Load a lexicon file; duplicate (pattern, wildcard) lines keep the first index."""
    entries: list[LexiconEntry] = []
    seen: set[tuple[tuple[str, ...], bool]] = set()
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            wildcard = line.endswith("*")
            words = tuple(_normalize_term(line[:-1] if wildcard else line).split())
            if not words:
                continue
            key = (words, wildcard)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            entries.append(LexiconEntry(words, wildcard, len(entries)))
    if not entries:
        raise LexiconError(f"no usable entries in lexicon file {path}")
    return Lexicon(entries, duplicates)


def _window_matches(window: list[str], entry: LexiconEntry) -> bool:
    for word, token in zip(entry.words[:-1], window):
        if word != token:
            return False
    last = window[-1]
    if entry.wildcard:
        return last.startswith(entry.words[-1])
    return last == entry.words[-1]


def match_spans(tokens, lexicon: Lexicon) -> list[tuple[int, int, int]]:
    """All occurrences of all entries as (entry index, start token, end token).

    An n-word entry matches n consecutive tokens; overlaps across entries
    are all reported. Sorted by start position, then entry index.
    """
    hits = []
    for entry in lexicon.entries:
        n = len(entry.words)
        for start in range(len(tokens) - n + 1):
            if _window_matches(list(tokens[start:start + n]), entry):
                hits.append((entry.index, start, start + n - 1))
    hits.sort(key=lambda h: (h[1], h[0]))
    return hits


def encode_hate_words(tokens, lexicon: Lexicon) -> np.ndarray:
    """Multi-hot vector over lexicon entries: 1 where the entry occurs at all."""
    bits = np.zeros(lexicon.dimension, dtype=np.float32)
    for entry_index, _, _ in match_spans(tokens, lexicon):
        bits[entry_index] = 1.0
    return bits
