"""Neural variational document model over bag-of-words counts.

Encoder: ``pi = sigmoid(V W + b)``, ``mu = pi W_mu + b_mu``,
``log_var = pi W_lv + b_lv``; a reparameterised draw
``h = mu + eps * exp(log_var / 2)`` feeds a softmax decoder over the
vocabulary with weights ``U`` (K x Z) and bias ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .corpus import BowVector, Vocabulary
from .exceptions import ContractError, DimensionError
from .numkernel import RngState, Tensor

# checkpoint names, in storage order
PARAM_NAMES = ("enc.mlp.w", "enc.mlp.b", "l1.w", "l1.b", "l2.w", "l2.b", "dec.u", "dec.c")


@dataclass
class NvdmParams:
    mlp_w: Tensor  # Z x H
    mlp_b: Tensor  # H
    mu_w: Tensor  # H x K
    mu_b: Tensor  # K
    lv_w: Tensor  # H x K
    lv_b: Tensor  # K
    dec_u: Tensor  # K x Z
    dec_c: Tensor  # Z

    @property
    def vocab_size(self) -> int:
        return self.mlp_w.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.mlp_w.shape[1]

    @property
    def n_topics(self) -> int:
        return self.mu_w.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.mlp_w, self.mlp_b, self.mu_w, self.mu_b, self.lv_w, self.lv_b, self.dec_u, self.dec_c]

    def named(self) -> dict[str, Tensor]:
        return dict(zip(PARAM_NAMES, self.tensors()))

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], requires_grad: bool = True) -> "NvdmParams":
        return cls(*(Tensor(np.array(arrays[n], dtype=np.float64), requires_grad) for n in PARAM_NAMES))

    def copy(self) -> "NvdmParams":
        return NvdmParams(*(Tensor(t.data.copy(), t.requires_grad) for t in self.tensors()))

    def validate(self) -> None:
        z, h, k = self.vocab_size, self.hidden_size, self.n_topics
        expected = [(z, h), (h,), (h, k), (k,), (h, k), (k,), (k, z), (z,)]
        for name, t, shape in zip(PARAM_NAMES, self.tensors(), expected):
            if t.shape != shape:
                raise DimensionError(f"{name}: shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t.data)):
                raise ContractError(f"{name}: non-finite entries")


def init_params(vocab_size: int, hidden: int, n_topics: int, rng: RngState, std: float | None = None) -> NvdmParams:
    """Glorot-uniform weights (or N(0, std^2) when ``std`` is given), zero biases.

    Small-normal initialisation leaves the sigmoid layer in its linear
    regime, where interactions between words (XOR-like structure) give no
    first-order gradient signal.
    """

    def w(*shape):
        if std is not None:
            return Tensor(rng.normal(shape) * std, requires_grad=True)
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        return Tensor((rng.uniform(shape) * 2.0 - 1.0) * limit, requires_grad=True)

    def zero(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    return NvdmParams(
        w(vocab_size, hidden), zero(hidden),
        w(hidden, n_topics), zero(n_topics),
        w(hidden, n_topics), zero(n_topics),
        w(n_topics, vocab_size), zero(vocab_size),
    )


@dataclass
class TopicState:
    """Posterior summary for one document (the document-topic representation)."""

    mu: np.ndarray
    log_var: np.ndarray
    h_tm: np.ndarray
    kld: float


# ---- batched tensor path --------------------------------------------------------


def encode_batch(counts, params: NvdmParams, rng: RngState | None):
    """Posterior of a batch of count rows.

    Returns ``(mu, log_var, h, kld)`` as tensors; ``h`` is ``mu`` itself when
    ``rng`` is None (deterministic mode), and ``kld`` has one entry per row.
    """
    v = counts if isinstance(counts, Tensor) else Tensor(counts)
    if v.shape[-1] != params.vocab_size:
        raise DimensionError(f"BoW width {v.shape[-1]} != vocabulary size {params.vocab_size}")
    pi = nk.sigmoid(nk.matmul(v, params.mlp_w) + params.mlp_b)
    mu = nk.matmul(pi, params.mu_w) + params.mu_b
    log_var = nk.matmul(pi, params.lv_w) + params.lv_b
    h = mu if rng is None else reparameterize(mu, log_var, rng)
    return mu, log_var, h, kl_batch(mu, log_var)


def reparameterize(mu: Tensor, log_var: Tensor, rng: RngState) -> Tensor:
    eps = nk.sample_standard_normal(rng, mu.shape)
    return mu + eps * nk.exp(log_var * 0.5)


def kl_batch(mu: Tensor, log_var: Tensor) -> Tensor:
    inner = 1.0 + log_var - mu * mu - nk.exp(log_var)
    return nk.sum(inner, axis=-1) * -0.5


def log_likelihood_batch(counts, h: Tensor, params: NvdmParams) -> Tensor:
    """Per-row sum over tokens of log softmax(h U + c) at each token's word."""
    v = counts if isinstance(counts, Tensor) else Tensor(counts)
    logp = nk.log_softmax(nk.matmul(h, params.dec_u) + params.dec_c, axis=-1)
    return nk.sum(logp * v, axis=-1)


def elbo_batch(counts, params: NvdmParams, rng: RngState, samples: int = 10):
    """Monte-Carlo ELBO per row; returns ``(elbo, kld, mu, last_h)``."""
    if samples < 1:
        raise ContractError("samples must be >= 1")
    v = counts if isinstance(counts, Tensor) else Tensor(counts)
    mu, log_var, _, kld = encode_batch(v, params, None)
    total = None
    h = mu
    for _ in range(samples):
        h = reparameterize(mu, log_var, rng)
        ll = log_likelihood_batch(v, h, params)
        total = ll if total is None else total + ll
    rec = total * (1.0 / samples)
    return rec - kld, kld, mu, h


# ---- single-document API ---------------------------------------------------------


def _row(bow: BowVector, params: NvdmParams) -> np.ndarray:
    if bow.is_empty:
        raise ContractError("cannot encode an empty bag of words")
    return bow.dense(params.vocab_size)[None, :]


def encode(bow: BowVector, params: NvdmParams, rng: RngState | None = None, mode: str = "sampled") -> TopicState:
    if mode not in ("sampled", "deterministic"):
        raise ContractError(f"unknown encode mode {mode!r}")
    if mode == "sampled" and rng is None:
        raise ContractError("sampled mode needs an RngState")
    with nk.no_grad():
        mu, log_var, h, kld = encode_batch(_row(bow, params), params, rng if mode == "sampled" else None)
    return TopicState(mu.data[0].copy(), log_var.data[0].copy(), h.data[0].copy(), float(kld.data[0]))


def kl_divergence(mu, log_var) -> float:
    """KL(N(mu, exp(log_var)) || N(0, I)) in closed form."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    return float(-0.5 * np.sum(1.0 + log_var - mu * mu - np.exp(log_var)))


def log_likelihood(bow: BowVector, h_tm, params: NvdmParams) -> float:
    with nk.no_grad():
        h = Tensor(np.asarray(h_tm, dtype=np.float64).reshape(1, -1))
        return float(log_likelihood_batch(bow.dense(params.vocab_size)[None, :], h, params).data[0])


def elbo(bow: BowVector, params: NvdmParams, rng: RngState, samples: int = 10) -> tuple[float, TopicState]:
    row = _row(bow, params)
    with nk.no_grad():
        mu, log_var, _, _ = encode_batch(row, params, None)
        value, kld, _, h = elbo_batch(row, params, rng, samples)
    state = TopicState(mu.data[0].copy(), log_var.data[0].copy(), h.data[0].copy(), float(kld.data[0]))
    return float(value.data[0]), state


def topic_terms(params: NvdmParams, k: int, m: int, vocab: Vocabulary | None = None) -> list[tuple[str | int, float]]:
    """Top ``m`` words of topic ``k`` by decoder weight, descending; ties by word index."""
    u = params.dec_u.data
    if not 0 <= k < u.shape[0]:
        raise ContractError(f"topic index {k} outside [0, {u.shape[0]})")
    if not 0 <= m <= u.shape[1]:
        raise ContractError(f"m={m} outside [0, {u.shape[1]}]")
    row = u[k]
    order = np.lexsort((np.arange(row.size), -row))[:m]
    return [((vocab.word_of(int(i)) if vocab is not None else int(i)), float(row[i])) for i in order]


def dominant_topic(state: TopicState | np.ndarray) -> int:
    h = state.h_tm if isinstance(state, TopicState) else np.asarray(state)
    return int(np.argmax(h))


def topic_report(params: NvdmParams, vocab: Vocabulary, m: int = 10) -> str:
    lines = []
    for k in range(params.n_topics):
        terms = " ".join(str(w) for w, _ in topic_terms(params, k, min(m, vocab.size), vocab))
        lines.append(f"topic {k}: {terms}")
    return "\n".join(lines) + "\n"
