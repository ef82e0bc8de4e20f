"""Per-sample feature encoders and the EMB1 embedding file format.

Three features per tweet: a contextual embedding matrix (one row per
token, supplied by a provider), a character one-hot matrix (a-z only,
tokens concatenated into one flat sequence) and the lexicon multi-hot
vector. Contextual embeddings never come from a live transformer here;
they are either looked up in an EMB1 file or fabricated deterministically
by the mock provider.

EMB1 layout (little-endian, bit-exact):
    b"EMB1" | u32 dim D | u32 record count R |
    R * ( u16 id length | id UTF-8 bytes | u32 token count T | T*D float32 )
"""

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .lexicon import Lexicon, encode_hate_words

CHAR_DIM = 26
DEFAULT_TOKEN_CAP = 64
DEFAULT_CHAR_CAP = 280
EMB_MAGIC = b"EMB1"


class EmbeddingFormatError(DataError):
    """Malformed EMB1 file."""


class MissingEmbeddingError(DataError):
    """A file-backed provider has no record for the requested sample."""


@dataclass
class FeatureBundle:
    embeddings: np.ndarray  # [L_tok, D] float32
    chars: np.ndarray       # [L_char, 26] float32 one-hot rows
    hate: np.ndarray        # [lexicon dim] float32 in {0, 1}


def encode_chars(tokens, char_cap: int = DEFAULT_CHAR_CAP) -> np.ndarray:
    """One-hot rows for the concatenated characters of all tokens.

    Only a-z is encoded ('a' -> 0 ... 'z' -> 25); digits are skipped. The
    flat sequence is truncated at char_cap. Raises ValueError when not a
    single encodable character exists.
    """
    indices = [ord(c) - 97 for token in tokens for c in token if "a" <= c <= "z"]
    if not indices:
        raise ValueError("no a-z characters to encode")
    indices = indices[:char_cap]
    rows = np.zeros((len(indices), CHAR_DIM), dtype=np.float32)
    rows[np.arange(len(indices)), indices] = 1.0
    return rows


def _row_key(seed: int, position: int, token: str) -> int:
    payload = f"{seed}\x1f{position}\x1f{token}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


def mock_embed(tokens, dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in for a contextual embedding provider.

    Each row depends only on (seed, token text, position): the triple is
    hashed and the digest keys a counter-based Philox stream emitting dim
    uniform values in [-1, 1].
    """
    if dim < 1:
        raise ValueError("embedding dim must be >= 1")
    rows = np.empty((len(tokens), dim), dtype=np.float32)
    for t, token in enumerate(tokens):
        gen = np.random.Generator(np.random.Philox(key=_row_key(seed, t, token)))
        rows[t] = gen.uniform(-1.0, 1.0, dim)
    return rows


def write_embeddings(records, path, dim: int | None = None) -> None:
    """Write (sample id, matrix) records to an EMB1 file.

    All matrices must share one dimension D; pass dim explicitly when the
    record list is empty.
    """
    mats = []
    for sample_id, matrix in records:
        mat = np.ascontiguousarray(matrix, dtype=np.float32)
        if mat.ndim != 2:
            raise ValueError(f"record {sample_id!r}: matrix must be 2-d, got shape {mat.shape}")
        if dim is None:
            dim = mat.shape[1]
        elif mat.shape[1] != dim:
            raise ValueError(
                f"record {sample_id!r}: dimension {mat.shape[1]} != {dim}"
            )
        mats.append((sample_id, mat))
    if dim is None:
        raise ValueError("dim is required when writing zero records")
    out = bytearray()
    out += EMB_MAGIC
    out += struct.pack("<II", dim, len(mats))
    for sample_id, mat in mats:
        id_bytes = sample_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"sample id too long: {sample_id!r}")
        out += struct.pack("<H", len(id_bytes))
        out += id_bytes
        out += struct.pack("<I", mat.shape[0])
        out += mat.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(bytes(out))


def read_embeddings(path) -> dict[str, np.ndarray]:
    """Read an EMB1 file into {sample id: float32 matrix}."""
    _, records = _read_embeddings_with_dim(path)
    return records


def _read_embeddings_with_dim(path) -> tuple[int, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    offset = 0

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise EmbeddingFormatError(
                f"{path}: truncated while reading {what} at byte {offset}"
            )
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    if take(4, "magic") != EMB_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic bytes, not an EMB1 file")
    dim, count = struct.unpack("<II", take(8, "header"))
    if dim == 0:
        raise EmbeddingFormatError(f"{path}: zero embedding dimension in header")
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2, "id length"))
        sample_id = take(id_len, "sample id").decode("utf-8")
        (token_count,) = struct.unpack("<I", take(4, f"token count of {sample_id!r}"))
        data = take(4 * token_count * dim, f"values of {sample_id!r}")
        matrix = np.frombuffer(data, dtype="<f4").reshape(token_count, dim).copy()
        if not np.isfinite(matrix).all():
            raise EmbeddingFormatError(f"{path}: non-finite value in record {sample_id!r}")
        if sample_id in records:
            raise EmbeddingFormatError(f"{path}: duplicate sample id {sample_id!r}")
        records[sample_id] = matrix
    if offset != len(blob):
        raise EmbeddingFormatError(
            f"{path}: {len(blob) - offset} trailing bytes after last record"
        )
    return dim, records


class MockEmbeddingProvider:
    """Provider wrapper around mock_embed; embeds any token sequence."""

    def __init__(self, dim: int, seed: int):
        if dim < 1:
            raise ValueError("embedding dim must be >= 1")
        self.dim = dim
        self.seed = seed

    @property
    def spec(self) -> str:
        return f"mock:{self.dim}:{self.seed}"

    def embed(self, tokens, sample_id=None) -> np.ndarray:
        return mock_embed(tokens, self.dim, self.seed)


class FileEmbeddingProvider:
    """Provider backed by a precomputed EMB1 file, keyed by sample id."""

    def __init__(self, path):
        self.path = str(path)
        self.dim, self._records = _read_embeddings_with_dim(path)

    @property
    def spec(self) -> str:
        return f"emb1:{self.path}"

    def ids(self):
        return self._records.keys()

    def embed(self, tokens, sample_id=None) -> np.ndarray:
        if sample_id is None:
            raise MissingEmbeddingError(
                f"{self.path}: file-backed provider needs a sample id"
            )
        try:
            return self._records[sample_id]
        except KeyError:
            raise MissingEmbeddingError(
                f"{self.path}: no embedding record for sample {sample_id!r}"
            ) from None


def build_bundle(
    tokens,
    provider,
    lexicon: Lexicon,
    sample_id: str | None = None,
    token_cap: int = DEFAULT_TOKEN_CAP,
    char_cap: int = DEFAULT_CHAR_CAP,
) -> FeatureBundle:
    """Assemble all three features from one normalized token sequence.

    The sequence is truncated at token_cap before any encoder runs, so
    training and prediction see identical inputs.
    """
    if not tokens:
        raise ValueError("cannot build features from an empty token sequence")
    toks = list(tokens)[:token_cap]
    embeddings = np.asarray(provider.embed(toks, sample_id), dtype=np.float32)
    if embeddings.ndim != 2:
        raise ValueError(f"provider returned shape {embeddings.shape}, expected 2-d")
    embeddings = embeddings[:token_cap]
    chars = encode_chars(toks, char_cap)
    hate = encode_hate_words(toks, lexicon)
    return FeatureBundle(embeddings=embeddings, chars=chars, hate=hate)
