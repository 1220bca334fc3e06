"""Document ingestion, vocabularies, bag-of-words and sequence views, partitioning."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ContractError, CorpusError

PAD_ID = 0
CLS_ID = 1
UNK_ID = 2
N_RESERVED = 3
MAX_LEN = 512
VALID_P = (1, 2, 4, 8)

_WORD = re.compile(r"\w+", re.UNICODE)


def words(text: str) -> list[str]:
    """Lowercased word tokens of ``text``."""
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    label: int
    text: str


def read_tsv(path: str | Path) -> list[Document]:
    """Read ``id<TAB>label<TAB>text`` lines (UTF-8)."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t", 2)
            if len(parts) < 2:
                raise CorpusError(f"{path}:{lineno}: expected id<TAB>label<TAB>text")
            try:
                label = int(parts[1])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: label {parts[1]!r} is not an integer") from None
            if label < 0:
                raise CorpusError(f"{path}:{lineno}: negative label")
            docs.append(Document(parts[0], label, parts[2] if len(parts) > 2 else ""))
    return docs


def write_tsv(path: str | Path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(f"{d.id}\t{d.label}\t{d.text}\n")


def read_stopwords(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


# ---- topic-model vocabulary ---------------------------------------------------


@dataclass
class Vocabulary:
    """Bijection between word ids ``[0, Z)`` and words, with training counts."""

    words: list[str]
    counts: list[int]
    f_min: int
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.id_of = {w: i for i, w in enumerate(self.words)}
        if len(self.id_of) != len(self.words):
            raise CorpusError("vocabulary words are not unique")

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    def word_of(self, index: int) -> str:
        return self.words[index]

    def dumps(self) -> str:
        lines = [f"Z={self.size} F_MIN={self.f_min}"]
        lines += [f"{i}\t{w}\t{c}" for i, (w, c) in enumerate(zip(self.words, self.counts))]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.splitlines()
        m = re.fullmatch(r"Z=(\d+) F_MIN=(\d+)", lines[0].strip()) if lines else None
        if m is None:
            raise CorpusError("vocabulary header must be 'Z=<int> F_MIN=<int>'")
        z, f_min = int(m.group(1)), int(m.group(2))
        ws, cs = [], []
        for expected, line in enumerate(lines[1:]):
            idx, w, c = line.split("\t")
            if int(idx) != expected:
                raise CorpusError(f"vocabulary index {idx} out of order")
            ws.append(w)
            cs.append(int(c))
        if len(ws) != z:
            raise CorpusError(f"vocabulary declares Z={z} but lists {len(ws)} words")
        return cls(ws, cs, f_min)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def build_vocabulary(
    train_docs: Sequence[Document], f_min: int, stopwords: Iterable[str] = ()
) -> Vocabulary:
    """Words occurring at least ``f_min`` times in the training split, stopwords removed.

    Ordered by descending count, then lexicographically.
    """
    if f_min < 1:
        raise ContractError("f_min must be a positive integer")
    stop = frozenset(w.lower() for w in stopwords)
    freq: Counter[str] = Counter()
    for doc in train_docs:
        freq.update(w for w in words(doc.text) if w not in stop)
    kept = sorted(((w, c) for w, c in freq.items() if c >= f_min), key=lambda wc: (-wc[1], wc[0]))
    if not kept:
        raise CorpusError(f"no word survives F_min={f_min} and stopword removal")
    return Vocabulary([w for w, _ in kept], [c for _, c in kept], f_min)


@dataclass(frozen=True)
class BowVector:
    """Sparse word counts over a :class:`Vocabulary`.

    An all-out-of-vocabulary document yields ``total == 0``; callers test
    :attr:`is_empty` rather than catching an exception.
    """

    counts: dict[int, int]
    total: int

    @property
    def is_empty(self) -> bool:
        return self.total == 0

    def dense(self, z: int) -> np.ndarray:
        v = np.zeros(z)
        for i, c in self.counts.items():
            v[i] = c
        return v


def to_bow(doc: Document | str, vocab: Vocabulary) -> BowVector:
    text = doc.text if isinstance(doc, Document) else doc
    c = Counter(vocab.id_of[w] for w in words(text) if w in vocab.id_of)
    counts = dict(sorted(c.items()))
    return BowVector(counts, sum(counts.values()))


def bow_matrix(bows: Sequence[BowVector], z: int) -> np.ndarray:
    out = np.zeros((len(bows), z))
    for r, b in enumerate(bows):
        for i, c in b.counts.items():
            out[r, i] = c
    return out


# ---- sequence-model vocabulary and tokens ---------------------------------------


@dataclass
class SequenceVocabulary:
    """Word-level token inventory; ids 0..2 are PAD, CLS, UNK."""

    words: list[str]
    min_count: int = 5
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.id_of = {w: i + N_RESERVED for i, w in enumerate(self.words)}

    @property
    def size(self) -> int:
        return len(self.words) + N_RESERVED

    def __len__(self) -> int:
        return self.size

    def lookup(self, word: str) -> int:
        return self.id_of.get(word, UNK_ID)


def build_sequence_vocabulary(train_docs: Sequence[Document], min_count: int = 5) -> SequenceVocabulary:
    freq: Counter[str] = Counter()
    for doc in train_docs:
        freq.update(words(doc.text))
    kept = sorted((w for w, c in freq.items() if c >= min_count), key=lambda w: (-freq[w], w))
    return SequenceVocabulary(kept, min_count)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def tokenize_sequence(doc: Document | str, seq_vocab: SequenceVocabulary, max_len: int = MAX_LEN) -> TokenSequence:
    """Content token ids, truncated to ``max_len - 1`` positions (one is reserved for CLS)."""
    text = doc.text if isinstance(doc, Document) else doc
    ids = [seq_vocab.lookup(w) for w in words(text)][: max_len - 1]
    return TokenSequence(np.asarray(ids, dtype=np.int64))


@dataclass(frozen=True)
class PartitionSet:
    """``p``-way split of one document.

    ``windows`` holds the half-open content ranges each partition covers; the
    final range may overlap its predecessor.
    """

    p: int
    x: int
    partitions: list[np.ndarray]
    windows: list[tuple[int, int]]
    doc_id: str = ""

    @property
    def masks(self) -> list[np.ndarray]:
        return [part != PAD_ID for part in self.partitions]

    @property
    def overlap(self) -> int:
        """Content tokens covered by more than one window."""
        return sum(max(0, prev[1] - cur[0]) for prev, cur in zip(self.windows, self.windows[1:]))


def partition(seq: TokenSequence | np.ndarray, p: int, max_len: int = MAX_LEN, doc_id: str = "") -> PartitionSet:
    """Split content tokens into CLS-prefixed partitions of length ``max_len // p``.

    Full windows hold ``x - 1`` consecutive content tokens.  A trailing
    partial window is replaced by the last ``x - 1`` tokens of the document so
    no partition beyond a lone short one needs padding.
    """
    if p not in VALID_P:
        raise ContractError(f"p must be one of {VALID_P}, got {p}")
    if max_len % p:
        raise ContractError(f"max_len {max_len} is not divisible by p={p}")
    x = max_len // p
    w = x - 1
    if w < 1:
        raise ContractError(f"partition length {x} leaves no room for content")
    ids = np.asarray(seq.ids if isinstance(seq, TokenSequence) else seq, dtype=np.int64)
    n = len(ids)
    if n <= w:
        windows = [(0, n)]
    else:
        windows = [(s, s + w) for s in range(0, n - w + 1, w)]
        if windows[-1][1] < n:
            windows.append((n - w, n))
    parts = []
    for s, e in windows:
        row = np.full(x, PAD_ID, dtype=np.int64)
        row[0] = CLS_ID
        row[1 : 1 + e - s] = ids[s:e]
        parts.append(row)
    return PartitionSet(p, x, parts, windows, doc_id)


def reassemble(pset: PartitionSet) -> np.ndarray:
    """Content tokens recovered from partitions, dropping CLS, pads and overlap."""
    out: list[np.ndarray] = []
    covered = 0
    for part, (s, e) in zip(pset.partitions, pset.windows):
        content = part[1 : 1 + e - s]
        out.append(content[covered - s :] if covered > s else content)
        covered = e
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


# ---- corpus bundle ----------------------------------------------------------------


@dataclass
class Corpus:
    train: list[Document]
    dev: list[Document]
    test: list[Document]

    @property
    def n_labels(self) -> int:
        labels = [d.label for split in (self.train, self.dev, self.test) for d in split]
        return max(labels) + 1 if labels else 0


def load_corpus(train: str | Path, dev: str | Path, test: str | Path) -> Corpus:
    return Corpus(read_tsv(train), read_tsv(dev), read_tsv(test))
