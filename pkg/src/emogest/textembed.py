"""Tokenization, word-embedding storage, and sentence matrix construction.

Embeddings are 300-dim word vectors in the usual text format (token followed
by 300 reals per line).  Two vocabulary slots are reserved inside the store
rather than read from file: the start-of-sentence vector (+1 in dimension 0)
and the end-of-sentence vector (-1 in dimension 1).  Out-of-vocabulary
tokens fall back to a deterministic hash-seeded pseudo-vector, so the engine
runs (reproducibly) without any embedding file at all; a real pre-trained
file is a drop-in.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

EMBED_DIM = 300
OOV_SCALE = 0.1

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


class TokenizeError(ValueError):
    pass


class EmbeddingParseError(ValueError):
    pass


def tokenize(text: str) -> list:
    """Lowercase, strip punctuation (keeping intra-word apostrophes), split."""
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise TokenizeError(f"no tokens left after cleaning {text!r}")
    return tokens


def _oov_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(token.encode()).digest()[:8], "little")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim) * OOV_SCALE


class EmbeddingStore:
    """Token -> vector map with reserved SoS/EoS vectors and an OOV fallback."""

    def __init__(self, vectors: dict | None = None, dim: int = EMBED_DIM):
        self.dim = dim
        self.vectors = {}
        for tok, vec in (vectors or {}).items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise EmbeddingParseError(f"vector for {tok!r} has shape {vec.shape}, want ({dim},)")
            self.vectors[tok] = vec
        self.sos = np.zeros(dim)
        self.sos[0] = 1.0
        self.eos = np.zeros(dim)
        self.eos[1] = -1.0

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, token):
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        return vec if vec is not None else _oov_vector(token, self.dim)


def load_embeddings(path, dim: int = EMBED_DIM) -> EmbeddingStore:
    vectors = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) <= 1:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingParseError(
                    f"{path}:{line_no}: expected token + {dim} values, got {len(parts) - 1}"
                )
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError as e:
                raise EmbeddingParseError(f"{path}:{line_no}: bad value: {e}") from None
    return EmbeddingStore(vectors, dim=dim)


def dump_embeddings(store: EmbeddingStore, path):
    with open(path, "w") as fh:
        for tok, vec in store.vectors.items():
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass
class SentenceEmbedding:
    """T_sen x dim matrix: SoS row, token rows, one EoS, then EoS padding."""

    matrix: np.ndarray
    true_length: int
    truncated: bool = False

    def __post_init__(self):
        if self.true_length < 2:
            raise ValueError("true_length must cover at least SoS and EoS")


def embed_sentence(tokens, store: EmbeddingStore, t_sen: int) -> SentenceEmbedding:
    """Build the padded sentence matrix; overlong token lists are truncated."""
    if t_sen < 2:
        raise ValueError(f"t_sen must be >= 2, got {t_sen}")
    truncated = len(tokens) > t_sen - 2
    kept = list(tokens[: t_sen - 2])
    matrix = np.empty((t_sen, store.dim))
    matrix[0] = store.sos
    for i, tok in enumerate(kept):
        matrix[1 + i] = store.lookup(tok)
    matrix[1 + len(kept) :] = store.eos
    return SentenceEmbedding(matrix=matrix, true_length=len(kept) + 2, truncated=truncated)
