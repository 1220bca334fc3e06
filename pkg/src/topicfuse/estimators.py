"""scikit-learn style wrappers over the training protocol.

Inputs are sequences of raw document strings; labels may be any hashable
values and are mapped to ``0..L-1`` internally.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import nvdm, trainer
from .corpus import Corpus, Document, bow_matrix, build_vocabulary, to_bow
from .numkernel import no_grad


def check_texts(X, name: str = "X") -> list[str]:
    """Validate a non-empty 1-D collection of strings."""
    if isinstance(X, str):
        raise TypeError(f"{name} must be a sequence of documents, not a single string")
    if isinstance(X, np.ndarray):
        if X.ndim != 1:
            raise ValueError(f"{name} must be 1-D, got shape {X.shape}")
        X = X.tolist()
    if not isinstance(X, Sequence):
        X = list(X)
    if len(X) == 0:
        raise ValueError(f"{name} is empty")
    bad = next((i for i, x in enumerate(X) if not isinstance(x, str)), None)
    if bad is not None:
        raise TypeError(f"{name}[{bad}] is {type(X[bad]).__name__}, expected str")
    return list(X)


def check_labels(y, n: int, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if len(y) != n:
        raise ValueError(f"{name} has {len(y)} entries for {n} documents")
    return y


def _docs(texts: list[str], labels=None) -> list[Document]:
    labels = [0] * len(texts) if labels is None else labels
    return [Document(str(i), int(lab), t) for i, (t, lab) in enumerate(zip(texts, labels))]


class NvdmTransformer(TransformerMixin, BaseEstimator):
    """Fit an NVDM on raw texts; ``transform`` returns posterior means (n_docs x K).

    Documents with no in-vocabulary word map to the zero vector.
    """

    def __init__(self, n_topics=50, hidden=256, lr=1e-3, epochs=15, batch_size=32, samples=10, f_min=1,
                 stopwords=(), random_state=1):
        self.n_topics = n_topics
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.samples = samples
        self.f_min = f_min
        self.stopwords = stopwords
        self.random_state = random_state

    def fit(self, X, y=None):
        texts = check_texts(X)
        docs = _docs(texts)
        cfg = trainer.TrainConfig(n_topics=self.n_topics, nvdm_hidden=self.hidden, nvdm_lr=self.lr,
                                  nvdm_epochs=self.epochs, nvdm_batch=self.batch_size, samples=self.samples,
                                  f_min=self.f_min, seq_min_count=1, mode="nvdm_pretrain", seeds=(self.random_state,))
        vocab = build_vocabulary(docs, self.f_min, self.stopwords)
        data = trainer.prepare_corpus(Corpus(docs, [], []), cfg, vocab=vocab)
        result = trainer.pretrain_nvdm(data, cfg, self.random_state)
        self.vocab_ = vocab
        self.params_ = result.params
        self.best_epoch_ = result.best_epoch
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        texts = check_texts(X)
        counts = bow_matrix([to_bow(t, self.vocab_) for t in texts], self.vocab_.size)
        with no_grad():
            mu, *_ = nvdm.encode_batch(counts, self.params_, None)
        return mu.data * (counts.sum(axis=1) > 0)[:, None]

    def topic_terms(self, k: int, m: int = 10) -> list[str]:
        check_is_fitted(self, "params_")
        return [w for w, _ in nvdm.topic_terms(self.params_, k, m, self.vocab_)]


class _TextClassifier(ClassifierMixin, BaseEstimator):
    """Shared label handling and prediction for the text classifiers below."""

    def _split(self, texts: list[str], labels=None) -> trainer.EncodedSplit:
        return trainer.encode_split(_docs(texts, labels), self.model_.vocab, self.model_.seq_vocab,
                                    self.model_.config.p, self.model_.config.max_len)

    def _encode_labels(self, y) -> np.ndarray:
        return np.searchsorted(self.classes_, y)

    def _corpus(self, X, y, X_dev, y_dev) -> Corpus:
        texts = check_texts(X)
        y = check_labels(y, len(texts))
        self.classes_ = np.unique(y)
        train = _docs(texts, self._encode_labels(y))
        dev = []
        if X_dev is not None:
            dev_texts = check_texts(X_dev, "X_dev")
            y_dev = check_labels(y_dev, len(dev_texts), "y_dev")
            unknown = np.setdiff1d(y_dev, self.classes_)
            if unknown.size:
                raise ValueError(f"y_dev has labels not seen in y: {unknown.tolist()}")
            dev = _docs(dev_texts, self._encode_labels(y_dev))
        corpus = Corpus(train, dev, [])
        return corpus

    def predict_log_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.predict_log_proba(self._split(check_texts(X)))

    def predict_proba(self, X) -> np.ndarray:
        lp = self.predict_log_proba(X)
        p = np.exp(lp - lp.max(axis=1, keepdims=True))
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        lp = self.predict_log_proba(X)
        return self.classes_[np.argmax(lp, axis=1)]


class TopicFusedClassifier(_TextClassifier):
    """Joint topic-model + encoder classifier (``mode="encoder_only"`` drops the topic model)."""

    def __init__(self, mode="topicfused", p=1, max_len=128, n_topics=8, nvdm_hidden=64, nvdm_lr=1e-3,
                 nvdm_epochs=5, enc_lr=2e-4, hidden=32, layers=2, heads=2, epochs=15, batch_size=4,
                 alpha=0.9, samples=5, dropout=0.1, f_min=1, min_count=1, stopwords=(), random_state=1):
        self.mode = mode
        self.p = p
        self.max_len = max_len
        self.n_topics = n_topics
        self.nvdm_hidden = nvdm_hidden
        self.nvdm_lr = nvdm_lr
        self.nvdm_epochs = nvdm_epochs
        self.enc_lr = enc_lr
        self.hidden = hidden
        self.layers = layers
        self.heads = heads
        self.epochs = epochs
        self.batch_size = batch_size
        self.alpha = alpha
        self.samples = samples
        self.dropout = dropout
        self.f_min = f_min
        self.min_count = min_count
        self.stopwords = stopwords
        self.random_state = random_state

    def train_config(self) -> trainer.TrainConfig:
        if self.mode not in ("topicfused", "encoder_only"):
            raise ValueError(f"mode must be 'topicfused' or 'encoder_only', got {self.mode!r}")
        return trainer.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, nvdm_lr=self.nvdm_lr, enc_lr=self.enc_lr,
            alpha=self.alpha, p=self.p, seeds=(self.random_state,), mode=self.mode, max_len=self.max_len,
            n_topics=self.n_topics, nvdm_hidden=self.nvdm_hidden, samples=self.samples,
            nvdm_epochs=self.nvdm_epochs, enc_layers=self.layers, enc_hidden=self.hidden, enc_heads=self.heads,
            dropout=self.dropout, f_min=self.f_min, seq_min_count=self.min_count,
        )

    def fit(self, X, y, X_dev=None, y_dev=None):
        cfg = self.train_config()
        corpus = self._corpus(X, y, X_dev, y_dev)
        data = trainer.prepare_corpus(corpus, cfg, self.stopwords)
        nv = trainer.pretrain_nvdm(data, cfg, self.random_state).params if self.mode == "topicfused" else None
        self.model_, self.metrics_ = trainer.finetune_joint(data, nv, cfg, self.random_state)
        return self


class MeanPooledClassifier(_TextClassifier):
    """Softmax regression over frozen mean-pooled encoder states, optionally with topic features."""

    def __init__(self, with_topics=False, max_len=128, n_topics=8, nvdm_hidden=64, nvdm_lr=1e-3, nvdm_epochs=5,
                 hidden=32, layers=2, heads=2, lr=0.01, steps=300, samples=5, f_min=1, min_count=1, stopwords=(),
                 random_state=1):
        self.with_topics = with_topics
        self.max_len = max_len
        self.n_topics = n_topics
        self.nvdm_hidden = nvdm_hidden
        self.nvdm_lr = nvdm_lr
        self.nvdm_epochs = nvdm_epochs
        self.hidden = hidden
        self.layers = layers
        self.heads = heads
        self.lr = lr
        self.steps = steps
        self.samples = samples
        self.f_min = f_min
        self.min_count = min_count
        self.stopwords = stopwords
        self.random_state = random_state

    def fit(self, X, y, X_dev=None, y_dev=None):
        cfg = trainer.TrainConfig(
            mode="bert_avg_dtr" if self.with_topics else "bert_avg", p=1, max_len=self.max_len,
            seeds=(self.random_state,), n_topics=self.n_topics, nvdm_hidden=self.nvdm_hidden, nvdm_lr=self.nvdm_lr,
            nvdm_epochs=self.nvdm_epochs, samples=self.samples, enc_layers=self.layers, enc_hidden=self.hidden,
            enc_heads=self.heads, baseline_lr=self.lr, baseline_steps=self.steps, f_min=self.f_min,
            seq_min_count=self.min_count,
        )
        corpus = self._corpus(X, y, X_dev, y_dev)
        data = trainer.prepare_corpus(corpus, cfg, self.stopwords)
        nv = trainer.pretrain_nvdm(data, cfg, self.random_state).params if self.with_topics else None
        self.model_, self.metrics_ = trainer.run_baseline(data, cfg, nv, self.random_state)
        return self
