"""Skip-gram word embeddings with negative sampling, trained from scratch.

Single-threaded and fully deterministic for a fixed seed, which matters more
here than raw speed: expansion candidates must be reproducible run to run.
Training follows the standard recipe: dynamic context windows, a unigram^0.75
noise distribution, sigmoid gradients on (center, context) pairs, and a
linearly decaying learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .textnorm import normalize_tokens


class EmbeddingError(Exception):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    min_count: int = 5
    seed: int = 0
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    noise_power: float = 0.75


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple
    counts: tuple
    min_count: int

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise EmbeddingError("vocabulary tokens must be unique")
        if any(c < self.min_count for c in self.counts):
            raise EmbeddingError("all vocabulary counts must meet min_count")

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        return self._index()[token]

    def __contains__(self, token: str) -> bool:
        return token in self._index()

    def _index(self) -> dict:
        cached = getattr(self, "_idx_cache", None)
        if cached is None:
            cached = {t: i for i, t in enumerate(self.tokens)}
            object.__setattr__(self, "_idx_cache", cached)
        return cached


class EmbeddingSet:
    """A vocabulary plus one unit-normalizable vector per token."""

    def __init__(self, vocab: Vocabulary, vectors: np.ndarray):
        if vectors.shape[0] != len(vocab):
            raise EmbeddingError("one vector per vocabulary token required")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingError("vectors must be finite")
        self.vocab = vocab
        self.vectors = vectors.astype(np.float64)
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(norms == 0.0):
            raise EmbeddingError("zero vector in trained embeddings")
        self._unit = self.vectors / norms[:, None]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def vector(self, token: str) -> np.ndarray:
        if token not in self.vocab:
            raise EmbeddingError(f"token not in vocabulary: {token!r}")
        return self.vectors[self.vocab.index(token)]

    def cosine(self, a: str, b: str) -> float:
        va = self._unit[self.vocab.index(a)] if a in self.vocab else None
        vb = self._unit[self.vocab.index(b)] if b in self.vocab else None
        if va is None or vb is None:
            missing = a if va is None else b
            raise EmbeddingError(f"token not in vocabulary: {missing!r}")
        return float(np.dot(va, vb))

    def phrase_vector(self, phrase: str) -> np.ndarray:
        """Unweighted mean of the phrase's token vectors."""
        tokens = normalize_tokens(phrase)
        if not tokens:
            raise EmbeddingError(f"phrase normalizes to no tokens: {phrase!r}")
        vecs = []
        for token in tokens:
            if token not in self.vocab:
                raise EmbeddingError(f"token not in vocabulary: {token!r}")
            vecs.append(self.vectors[self.vocab.index(token)])
        return np.mean(vecs, axis=0)


@dataclass(frozen=True)
class ExpansionCandidate:
    token: str
    similarity: float
    source_phrase: str


def build_vocabulary(sentences: Sequence[Sequence[str]], min_count: int) -> Vocabulary:
    counts: dict = {}
    for sent in sentences:
        for token in sent:
            counts[token] = counts.get(token, 0) + 1
    kept = [(t, c) for t, c in counts.items() if c >= min_count]
    # frequency-descending, then lexicographic: stable across runs
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    if not kept:
        raise EmbeddingError(
            f"empty vocabulary: no token occurs at least min_count={min_count} times"
        )
    return Vocabulary(
        tokens=tuple(t for t, _ in kept),
        counts=tuple(c for _, c in kept),
        min_count=min_count,
    )


def _noise_cdf(vocab: Vocabulary, power: float) -> np.ndarray:
    weights = np.asarray(vocab.counts, dtype=np.float64) ** power
    return np.cumsum(weights / weights.sum())


def train_embeddings(
    sentences: Sequence[Sequence[str]],
    config: EmbeddingConfig = EmbeddingConfig(),
    vocab: Optional[Vocabulary] = None,
) -> EmbeddingSet:
    """Train skip-gram-with-negative-sampling vectors on tokenized sentences.

    `sentences` is a sequence of token lists (already normalized). Raises
    EmbeddingError when nothing survives min_count pruning.
    """
    if vocab is None:
        vocab = build_vocabulary(sentences, config.min_count)
    size = len(vocab)
    rng = np.random.default_rng(config.seed)

    index = {t: i for i, t in enumerate(vocab.tokens)}
    encoded = []
    for sent in sentences:
        ids = [index[t] for t in sent if t in index]
        if len(ids) >= 2:
            encoded.append(np.asarray(ids, dtype=np.int64))
    if not encoded:
        raise EmbeddingError("no sentence retains two or more in-vocabulary tokens")

    dim = config.dimension
    inputs = (rng.random((size, dim)) - 0.5) / dim
    outputs = np.zeros((size, dim))
    noise_cdf = _noise_cdf(vocab, config.noise_power)

    total_tokens = sum(len(s) for s in encoded) * config.epochs
    processed = 0
    lr_span = config.learning_rate - config.min_learning_rate

    for _epoch in range(config.epochs):
        for ids in encoded:
            n = len(ids)
            # draw the per-position reduced window sizes up front
            reductions = rng.integers(1, config.window + 1, size=n)
            for pos in range(n):
                center = ids[pos]
                lr = config.learning_rate - lr_span * (processed / max(1, total_tokens))
                processed += 1
                w = int(reductions[pos])
                lo = max(0, pos - w)
                hi = min(n, pos + w + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    context = ids[ctx_pos]
                    negatives = np.searchsorted(
                        noise_cdf, rng.random(config.negatives)
                    )
                    targets = np.empty(config.negatives + 1, dtype=np.int64)
                    targets[0] = context
                    targets[1:] = negatives
                    labels = np.zeros(config.negatives + 1)
                    labels[0] = 1.0
                    v = inputs[center]
                    out = outputs[targets]
                    scores = 1.0 / (1.0 + np.exp(-out @ v))
                    grad = (labels - scores) * lr
                    inputs[center] = v + grad @ out
                    outputs[targets] = out + grad[:, None] * v

    # guard the "no all-zero vector" invariant for tokens never drawn as context
    norms = np.linalg.norm(inputs, axis=1)
    dead = norms == 0.0
    if np.any(dead):
        inputs[dead] = (rng.random((int(dead.sum()), dim)) - 0.5) / dim
    return EmbeddingSet(vocab, inputs)


def most_similar(embeddings: EmbeddingSet, phrase: str, k: int) -> list:
    """Top-k vocabulary tokens by cosine similarity to the phrase vector.

    The phrase's own tokens are excluded; ties break by vocabulary order.
    """
    if k < 0:
        raise EmbeddingError("k must be >= 0")
    if k == 0:
        return []
    query_tokens = set(normalize_tokens(phrase))
    qvec = embeddings.phrase_vector(phrase)
    qnorm = np.linalg.norm(qvec)
    if qnorm == 0.0:
        raise EmbeddingError(f"phrase vector is zero: {phrase!r}")
    sims = embeddings._unit @ (qvec / qnorm)
    order = sorted(
        range(len(embeddings.vocab)),
        key=lambda i: (-sims[i], i),
    )
    out = []
    for i in order:
        token = embeddings.vocab.tokens[i]
        if token in query_tokens:
            continue
        out.append(ExpansionCandidate(token=token, similarity=float(sims[i]), source_phrase=phrase))
        if len(out) == k:
            break
    return out
