"""Generated corpora with known structure, used as oracles."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Document
from .numkernel import RngState


def _split(docs: list[Document], fractions: tuple[float, float, float]) -> Corpus:
    n = len(docs)
    n_train = int(round(fractions[0] * n))
    n_dev = int(round(fractions[1] * n))
    return Corpus(docs[:n_train], docs[n_train : n_train + n_dev], docs[n_train + n_dev :])


def xor_stopwords(n_stop: int = 30) -> list[str]:
    return [f"s{j}" for j in range(n_stop)]


def xor_corpus(n_docs: int = 2000, content_len: int = 126, n_filler: int = 20, n_stop: int = 30,
               content_rate: float = 0.1, marker_repeats: int = 1, seed: int = 0,
               fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> Corpus:
    """Label = A xor B, where A in {a0, a1} sits in the first half and B in {b0, b1} in the second.

    Each document has ``content_len`` tokens; with a CLS slot and
    ``content_len = 2 * 63`` a 128-position model splits it into two full
    64-length partitions, one marker in each (repeated ``marker_repeats``
    times at distinct positions of its half).  Filler is mostly function
    words ``s0..`` (see :func:`xor_stopwords`) with a ``content_rate`` share
    of content words ``w0..``; neither carries label information.
    """
    if content_len < 4 or content_len % 2:
        raise ValueError("content_len must be an even number >= 4")
    rng = RngState(seed)
    half = content_len // 2
    docs = []
    for i in range(n_docs):
        a, b = (int(v) for v in rng.integers(0, 2, (2,)))
        is_content = rng.uniform((content_len,)) < content_rate
        content = rng.integers(0, n_filler, (content_len,))
        stop = rng.integers(0, n_stop, (content_len,))
        tokens = [f"w{c}" if f else f"s{s}" for f, c, s in zip(is_content, content, stop)]
        for j in rng.permutation(half)[:marker_repeats]:
            tokens[int(j)] = f"a{a}"
        for j in rng.permutation(half)[:marker_repeats]:
            tokens[half + int(j)] = f"b{b}"
        docs.append(Document(f"x{i}", a ^ b, " ".join(tokens)))
    return _split(docs, fractions)


def two_cluster_corpus(n_docs: int = 400, cluster_size: int = 10, doc_len: int = 30, seed: int = 0,
                       fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> Corpus:
    """Documents drawn from one of two disjoint word clusters; the label is the cluster."""
    rng = RngState(seed)
    docs = []
    for i in range(n_docs):
        c = int(rng.integers(0, 2, (1,))[0])
        ids = rng.integers(0, cluster_size, (doc_len,))
        docs.append(Document(f"c{i}", c, " ".join(f"{'ab'[c]}{j}" for j in ids)))
    return _split(docs, fractions)


def cluster_of(word: str) -> int | None:
    """Cluster index of a two-cluster corpus word, None for anything else."""
    if len(word) > 1 and word[0] in "ab" and word[1:].isdigit():
        return "ab".index(word[0])
    return None


def marker_counts(corpus: Corpus) -> np.ndarray:
    """Occurrences of (a0, a1, b0, b1) across all splits; a sanity helper for tests."""
    out = np.zeros(4, dtype=np.int64)
    for split in (corpus.train, corpus.dev, corpus.test):
        for d in split:
            toks = d.text.split()
            for k, w in enumerate(("a0", "a1", "b0", "b1")):
                out[k] += toks.count(w)
    return out
