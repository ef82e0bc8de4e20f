"""Tweet text normalization and tokenization.

Normalization drops hashtag / user-mention / URL tokens and the leading
retweet marker, deletes every character outside lowercase a-z, digits and
spaces, and collapses whitespace. The output alphabet is the contract all
downstream encoders rely on, so the rules here are the single source of
truth for token identity.
"""

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_NON_ALPHABET_RE = re.compile(r"[^a-z0-9]+")
_URL_PREFIXES = ("http://", "https://", "www.")


def normalize_text(raw: str) -> str:
    """Normalize a raw tweet into space-joined lowercase a-z / 0-9 tokens.

    Idempotent; may return the empty string. Hashtag, mention and URL
    tokens are dropped whole, all other punctuation (and any non-ASCII
    character, emoji included) is deleted in place.
    """
    kept = []
    for token in raw.casefold().split():
        if token.startswith(("#", "@")) or token.startswith(_URL_PREFIXES):
            continue
        cleaned = _NON_ALPHABET_RE.sub("", token)
        # "http" survivors are URL debris (bare scheme, glued fragments);
        # dropping them keeps the output free of URL residue.
        if not cleaned or "http" in cleaned:
            continue
        kept.append(cleaned)
    # Retweet markers are only meaningful at the very front. Checked on the
    # cleaned list (and repeatedly) so the result renormalizes to itself.
    while kept and kept[0] == "rt":
        kept.pop(0)
    return " ".join(kept)


def tokenize(normalized: str) -> list[str]:
    """Split normalized text into tokens.

    Raises ValueError when the input violates the normalized alphabet,
    which signals the caller skipped normalize_text.
    """
    if normalized == "":
        return []
    tokens = normalized.split(" ")
    if any(_TOKEN_RE.fullmatch(t) is None for t in tokens):
        raise ValueError(f"text is not normalized: {normalized!r}")
    return tokens
