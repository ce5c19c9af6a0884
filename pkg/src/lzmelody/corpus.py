"""Binary token-corpus files (``LZTK``) and plain-text token dumps."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CORPUS_MAGIC = b"LZTK"
CORPUS_VERSION = 1
_HEADER = struct.Struct("<4sBHIQ")


class CorpusFormatError(Exception):
    pass


class CorpusBadMagicError(CorpusFormatError):
    pass


class CorpusVersionError(CorpusFormatError):
    pass


class CorpusTruncatedError(CorpusFormatError):
    pass


class CorpusLengthError(CorpusFormatError):
    pass


@dataclass(eq=False)
class TokenCorpus:
    """``tokens`` is an (n_sequences, seq_len) uint8 matrix."""

    alphabet_size: int
    seq_len: int
    tokens: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.uint8).reshape(-1, self.seq_len) \
            if np.asarray(self.tokens).size else np.zeros((0, self.seq_len), dtype=np.uint8)
        if not (2 <= self.alphabet_size <= 256):
            raise CorpusFormatError(f"alphabet size {self.alphabet_size} not in [2, 256]")
        if self.tokens.size and int(self.tokens.max()) >= self.alphabet_size:
            raise CorpusFormatError("token outside alphabet")

    @classmethod
    def from_sequences(cls, sequences, alphabet_size: int = 90, seq_len: int | None = None):
        rows = [np.asarray(s) for s in sequences]
        if seq_len is None:
            if not rows:
                raise CorpusFormatError("cannot infer the sequence length of an empty corpus")
            seq_len = len(rows[0])
        for r in rows:
            if len(r) != seq_len:
                raise CorpusLengthError(f"sequence of length {len(r)} in a corpus of length {seq_len}")
            if r.size and (r.min() < 0 or r.max() >= alphabet_size):
                raise CorpusFormatError("token outside alphabet")
        toks = np.array(rows, dtype=np.uint8).reshape(len(rows), seq_len)
        return cls(alphabet_size, seq_len, toks)

    def __len__(self):
        return self.tokens.shape[0]

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __eq__(self, other):
        if not isinstance(other, TokenCorpus):
            return NotImplemented
        return (self.alphabet_size == other.alphabet_size and self.seq_len == other.seq_len
                and np.array_equal(self.tokens, other.tokens))

    def head(self, n: int) -> "TokenCorpus":
        return TokenCorpus(self.alphabet_size, self.seq_len, self.tokens[:n])


def write_corpus(corpus: TokenCorpus) -> bytes:
    header = _HEADER.pack(CORPUS_MAGIC, CORPUS_VERSION, corpus.alphabet_size,
                          corpus.seq_len, len(corpus))
    return header + np.ascontiguousarray(corpus.tokens, dtype=np.uint8).tobytes()


def read_corpus(data: bytes) -> TokenCorpus:
    if len(data) < 4 or data[:4] != CORPUS_MAGIC:
        raise CorpusBadMagicError("not a token corpus (bad magic)")
    if len(data) < _HEADER.size:
        raise CorpusTruncatedError("corpus header truncated")
    _, version, A, n, count = _HEADER.unpack_from(data, 0)
    if version != CORPUS_VERSION:
        raise CorpusVersionError(f"unsupported corpus version {version}")
    need = n * count
    body = len(data) - _HEADER.size
    if body < need:
        raise CorpusTruncatedError(f"corpus declares {count}x{n} tokens but holds {body} bytes")
    if body > need:
        raise CorpusLengthError(f"{body - need} trailing bytes after the declared tokens")
    toks = np.frombuffer(data, dtype=np.uint8, count=need, offset=_HEADER.size)
    return TokenCorpus(A, n, toks.reshape(count, n).copy())


def format_text(corpus: TokenCorpus) -> str:
    """One space-separated sequence per line."""
    return "".join(" ".join(map(str, row.tolist())) + "\n" for row in corpus.tokens)
