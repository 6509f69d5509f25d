"""Question side: tokenizer, frequency vocabulary, bidirectional GRU encoder.

Questions are lowercased, stripped of punctuation and encoded to a fixed
budget of MAX_QUESTION_LENGTH token slots. The recurrence only visits
real tokens, so the summary vector is identical with or without padding:
the forward pass freezes once a row runs out of tokens and the backward
pass stays at its zero initial state until it enters the real region.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import GRUCell, Module

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1
MAX_QUESTION_LENGTH = 12


def tokenize(text):
    """Lowercase and split on whitespace, dropping punctuation.

    Digits survive as tokens ("2 cats?" becomes ["2", "cats"]).
    """
    if not text or not text.strip():
        raise ValueError("tokenize: empty or whitespace-only text")
    tokens = []
    for piece in text.lower().split():
        cleaned = "".join(ch for ch in piece if ch.isalnum())
        if cleaned:
            tokens.append(cleaned)
    return tokens


class Vocabulary:
    """Token-to-index map with reserved pad (0) and unknown (1) slots."""

    def __init__(self, index_to_token, capacity):
        self.index_to_token = list(index_to_token)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        self.capacity = capacity
        if self.index_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the pad and unknown tokens")
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.index_to_token)

    def lookup(self, token):
        return self.token_to_index.get(token, UNK_INDEX)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.index_to_token:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        if len(tokens) < 2:
            raise ValueError(f"vocabulary file {path} has fewer than 2 entries")
        return cls(tokens, capacity=len(tokens))


def build_vocabulary(corpus, capacity):
    """Keep the (capacity - 2) most frequent tokens from token lists.

    Order is by descending frequency, ties broken lexicographically, so
    the same corpus always yields the same index assignment.
    """
    if capacity < 3:
        raise ValueError(f"vocabulary capacity must be at least 3, got {capacity}")
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [token for token, _ in ranked[: capacity - 2]]
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + kept, capacity)


@dataclass
class EncodedQuestion:
    token_ids: list
    true_length: int
    q: T.Tensor


def ids_and_length(tokens, vocab):
    """Map tokens to index list padded/truncated to the fixed budget."""
    if not tokens:
        raise ValueError("cannot encode an empty token list")
    clipped = tokens[:MAX_QUESTION_LENGTH]
    ids = [vocab.lookup(t) for t in clipped]
    length = len(ids)
    ids = ids + [PAD_INDEX] * (MAX_QUESTION_LENGTH - length)
    return ids, length


class QuestionEncoder(Module):
    """Embedding lookup followed by a bidirectional GRU over real tokens.

    Returns q = [forward state at the last real token ; backward state at
    the first token], one row per question.
    """

    def __init__(self, rng, vocab_size, embedding_dim, hidden_size):
        super().__init__()
        self.hidden_size = hidden_size
        bound = 1.0 / np.sqrt(embedding_dim)
        self.embedding = T.parameter(
            rng.uniform(-bound, bound, size=(vocab_size, embedding_dim))
        )
        self.fwd = GRUCell(rng, embedding_dim, hidden_size)
        self.bwd = GRUCell(rng, embedding_dim, hidden_size)

    def __call__(self, ids, lengths):
        """ids: (N, T) int array; lengths: (N,) int array of real-token counts."""
        ids = np.asarray(ids)
        lengths = np.asarray(lengths)
        if ids.ndim != 2 or ids.shape[1] != MAX_QUESTION_LENGTH:
            raise T.ShapeError(
                f"expected ids of shape (N, {MAX_QUESTION_LENGTH}), got {ids.shape}"
            )
        if np.any(lengths < 1):
            raise ValueError("every question must contain at least one real token")
        n, steps = ids.shape
        dtype = self.embedding.data.dtype
        h_fwd = T.zeros((n, self.hidden_size), dtype=dtype)
        for t in range(steps):
            x_t = T.embedding(self.embedding, ids[:, t])
            h_new = self.fwd(x_t, h_fwd)
            m = T.Tensor((t < lengths).astype(dtype)[:, None])
            h_fwd = T.add(T.mul(m, h_new), T.mul(dtype.type(1) - m, h_fwd))
        h_bwd = T.zeros((n, self.hidden_size), dtype=dtype)
        for t in range(steps - 1, -1, -1):
            x_t = T.embedding(self.embedding, ids[:, t])
            h_new = self.bwd(x_t, h_bwd)
            m = T.Tensor((t < lengths).astype(dtype)[:, None])
            h_bwd = T.add(T.mul(m, h_new), T.mul(dtype.type(1) - m, h_bwd))
        return T.concat([h_fwd, h_bwd], axis=1)

    def encode_one(self, tokens, vocab):
        """Single-question convenience wrapper used by tests and the CLI."""
        ids, length = ids_and_length(tokens, vocab)
        q = self(np.asarray([ids]), np.asarray([length]))
        return EncodedQuestion(token_ids=ids, true_length=length, q=q)
