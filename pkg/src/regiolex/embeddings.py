"""Static word-embedding store with exact cosine-neighborhood queries.

Embeddings are loaded once from a text file (optional ``vocab_size dim``
header, then one ``token v1 ... vd`` line per word) and held immutable.
Neighbor search is a full scan against precomputed norms, so results are
exact and checkable against a brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericError

NORM_TOL = 1e-9


@dataclass
class EmbeddingTable:
    """Fixed vocabulary of dense word vectors.

    ``frequency_rank`` maps token -> 1-based rank (1 = most frequent).
    When the source file carries no explicit rank, line order is used,
    which matches the convention of frequency-sorted embedding dumps.
    """

    vocab: list[str]
    dim: int
    vectors: np.ndarray            # (len(vocab), dim) float64
    norms: np.ndarray              # per-row Euclidean norm
    frequency_rank: dict[str, int] = field(default_factory=dict)
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {tok: i for i, tok in enumerate(self.vocab)}

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.vectors[self.index[token]]
        except KeyError:
            raise InputError(f"token not in vocabulary: {token!r}") from None


def load_embeddings(path, expected_dim: int | None = None) -> EmbeddingTable:
    """Parse a word-embedding text file into an EmbeddingTable.

    The file may start with a ``vocab_size dim`` header line. Malformed
    lines, dimension mismatches, and duplicate tokens are hard errors
    (silent skips would corrupt frequency ranks).
    """
    vocab: list[str] = []
    rows: list[np.ndarray] = []
    seen: dict[str, int] = {}
    dim: int | None = expected_dim

    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read embedding file {path}: {exc}") from exc

    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\r\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    declared_vocab, declared_dim = int(parts[0]), int(parts[1])
                except ValueError:
                    pass
                else:
                    if dim is not None and declared_dim != dim:
                        raise InputError(
                            f"{path}: header declares dim {declared_dim}, "
                            f"expected {dim}"
                        )
                    dim = declared_dim
                    del declared_vocab
                    continue
            token, values = parts[0], parts[1:]
            if not values:
                raise InputError(f"{path}:{lineno}: no vector components")
            if token in seen:
                raise InputError(
                    f"{path}:{lineno}: duplicate token {token!r} "
                    f"(first seen on line {seen[token]})"
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad float: {exc}") from exc
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise InputError(
                    f"{path}:{lineno}: vector has {vec.size} components, "
                    f"expected {dim}"
                )
            seen[token] = lineno
            vocab.append(token)
            rows.append(vec)

    if not rows:
        raise InputError(f"{path}: no embedding rows found")
    vectors = np.vstack(rows)
    ranks = {tok: i + 1 for i, tok in enumerate(vocab)}
    return EmbeddingTable(
        vocab=vocab,
        dim=int(dim),
        vectors=vectors,
        norms=np.linalg.norm(vectors, axis=1),
        frequency_rank=ranks,
    )


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors; raises on zero norm or dim mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise NumericError("cosine undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def neighbors_at_least(
    table: EmbeddingTable,
    query: np.ndarray,
    threshold: float,
    exclude: set[str] = frozenset(),
) -> list[tuple[str, float]]:
    """All vocabulary tokens with cosine(query) >= threshold.

    Sorted by descending similarity; exact ties break by ascending token.
    Exact full scan -- a ~10^6-word vocabulary is one matrix-vector
    product against precomputed norms.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (table.dim,):
        raise InputError(
            f"query has shape {query.shape}, table dim is {table.dim}"
        )
    qnorm = np.linalg.norm(query)
    if qnorm == 0.0:
        raise NumericError("zero-norm query")
    # zero-norm rows get sim = nan and fail the >= filter below
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (table.vectors @ query) / (table.norms * qnorm)
    hits = [
        (table.vocab[i], float(sims[i]))
        for i in np.flatnonzero(sims >= threshold)
        if table.vocab[i] not in exclude
    ]
    hits.sort(key=lambda ts: (-ts[1], ts[0]))
    return hits


def phrase_vector(table: EmbeddingTable, entry: str) -> np.ndarray:
    """Vector for a token or multi-word phrase (see resolve_phrase)."""
    vec, _ = resolve_phrase(table, entry)
    return vec


def resolve_phrase(table: EmbeddingTable, entry: str) -> tuple[np.ndarray, str]:
    """Resolve a token-or-phrase to a vector, reporting the strategy used.

    Single tokens resolve directly ("token"). Phrases first try the
    underscore-joined vocabulary form ("joined"), then fall back to the
    mean of the constituent word vectors ("mean"). Any missing
    constituent is an error naming the word.
    """
    entry = entry.strip()
    if not entry:
        raise InputError("empty phrase entry")
    if " " not in entry:
        return table.vector(entry), "token"
    joined = entry.replace(" ", "_")
    if joined in table:
        return table.vector(joined), "joined"
    parts = entry.split()
    missing = [w for w in parts if w not in table]
    if missing:
        raise InputError(
            f"unresolvable phrase {entry!r}: word {missing[0]!r} "
            f"not in vocabulary"
        )
    return np.mean([table.vector(w) for w in parts], axis=0), "mean"


def centroid(table: EmbeddingTable, tokens: list[str]) -> np.ndarray:
    """Component-wise mean of the resolved vectors for ``tokens``."""
    if not tokens:
        raise InputError("centroid of empty token list")
    return np.mean([phrase_vector(table, t) for t in tokens], axis=0)
