"""Topic-aware classification head and the joint objective.

``h_p = concat(h_TM, o_CLS) @ P`` followed by ``softmax(h_p @ Q + b)``;
the training objective is ``alpha * log p(y) + (1 - alpha) * ELBO``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from . import numkernel as nk
from . import nvdm
from .corpus import BowVector, TokenSequence
from .exceptions import ContractError, DimensionError
from .numkernel import RngState, Tensor


@dataclass
class FusionParams:
    proj: Tensor  # (K + H_B) x H_B; H_B x H_B when no topic input
    cls_w: Tensor  # H_B x L
    cls_b: Tensor  # L
    alpha: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")

    @property
    def n_labels(self) -> int:
        return self.cls_w.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.proj, self.cls_w, self.cls_b]

    def named(self) -> dict[str, Tensor]:
        return {"fuse.p": self.proj, "cls.q": self.cls_w, "cls.b": self.cls_b}

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], alpha: float, requires_grad: bool = True) -> "FusionParams":
        return cls(*(Tensor(np.array(arrays[n], dtype=np.float64), requires_grad)
                     for n in ("fuse.p", "cls.q", "cls.b")), alpha=alpha)

    def copy(self) -> "FusionParams":
        return FusionParams(*(Tensor(t.data.copy(), t.requires_grad) for t in self.tensors()), alpha=self.alpha)


def init_params(topic_dim: int, hidden: int, n_labels: int, rng: RngState, alpha: float = 0.9,
                std: float = 0.02) -> FusionParams:
    return FusionParams(
        Tensor(rng.normal((topic_dim + hidden, hidden)) * std, requires_grad=True),
        Tensor(rng.normal((hidden, n_labels)) * std, requires_grad=True),
        Tensor(np.zeros(n_labels), requires_grad=True),
        alpha=alpha,
    )


def fuse(h_tm, o_cls, params: FusionParams) -> Tensor:
    """Concatenate then project; either input may be a batch of rows."""
    o = o_cls if isinstance(o_cls, Tensor) else Tensor(o_cls)
    parts = [o] if h_tm is None else [h_tm if isinstance(h_tm, Tensor) else Tensor(h_tm), o]
    width = sum(p.shape[-1] for p in parts)
    if width != params.proj.shape[0]:
        raise DimensionError(f"fused width {width} != projection rows {params.proj.shape[0]}")
    return nk.matmul(_as_rows(nk.concat(parts, axis=-1)), params.proj)


def _as_rows(t: Tensor) -> Tensor:
    return nk.reshape(t, (1, t.shape[0])) if t.ndim == 1 else t


def logits(h_p: Tensor, params: FusionParams) -> Tensor:
    return nk.matmul(_as_rows(h_p), params.cls_w) + params.cls_b


def classify(h_p, params: FusionParams) -> np.ndarray:
    """Label distribution(s); a 1-D ``h_p`` gives a 1-D result."""
    h = h_p if isinstance(h_p, Tensor) else Tensor(h_p)
    with nk.no_grad():
        probs = nk.softmax(logits(h, params), axis=-1).data
    return probs[0] if h.ndim == 1 else probs


def predict_label(probs: np.ndarray) -> int:
    """Argmax with ties going to the smallest label index."""
    return int(np.argmax(probs))


def aggregate_partitions(log_probs: np.ndarray, doc_index: np.ndarray, n_docs: int) -> np.ndarray:
    """Mean per-partition label log-probabilities for each document."""
    out = np.zeros((n_docs, log_probs.shape[1]))
    counts = np.bincount(doc_index, minlength=n_docs).astype(np.float64)
    np.add.at(out, doc_index, log_probs)
    return out / np.maximum(counts, 1.0)[:, None]


@dataclass
class JointLossBreakdown:
    log_p_y: float
    elbo: float
    kld: float
    joint: float
    alpha: float


def combine(log_p_y, elbo_value, alpha: float):
    """alpha * log p(y) + (1 - alpha) * ELBO (tensors or floats)."""
    return log_p_y * alpha + elbo_value * (1.0 - alpha)


@dataclass
class BatchObjective:
    """Tensors from one forward pass over a batch of partition instances."""

    loss: Tensor  # scalar to minimise: -mean(joint)
    log_p_y: Tensor
    elbo: Tensor
    kld: Tensor
    log_probs: Tensor


def batch_objective(
    counts: np.ndarray | None,
    ids: np.ndarray,
    mask: np.ndarray,
    labels: np.ndarray,
    enc_params: enc.EncoderParams,
    fusion_params: FusionParams,
    nvdm_params: nvdm.NvdmParams | None,
    rng: RngState | None,
    samples: int = 10,
    drop_rng: RngState | None = None,
) -> BatchObjective:
    """Joint objective over a batch; ``nvdm_params=None`` gives the encoder-only model.

    Rows of ``counts`` that are all zero (empty bag of words) use ``h_TM = 0``
    and contribute no ELBO term.  With ``rng=None`` the topic vector is the
    posterior mean and the ELBO uses a single mean draw.
    """
    n = len(labels)
    hidden = enc.forward(ids, mask, enc_params, drop_rng=drop_rng)
    o_cls = hidden[:, 0, :]
    if nvdm_params is None:
        h_p = fuse(None, o_cls, fusion_params)
        elbo_t = kld_t = Tensor(np.zeros(n))
    else:
        nonempty = counts.sum(axis=1) > 0
        keep = Tensor(nonempty.astype(np.float64))
        if rng is None:
            mu, log_var, h, kld_t = nvdm.encode_batch(counts, nvdm_params, None)
            elbo_t = nvdm.log_likelihood_batch(counts, h, nvdm_params) - kld_t
        else:
            elbo_t, kld_t, _, h = nvdm.elbo_batch(counts, nvdm_params, rng, samples)
        h = h * nk.reshape(keep, (n, 1))
        elbo_t = elbo_t * keep
        kld_t = kld_t * keep
        h_p = fuse(h, o_cls, fusion_params)
    log_probs = nk.log_softmax(logits(h_p, fusion_params), axis=-1)
    log_p_y = log_probs[np.arange(n), np.asarray(labels, dtype=np.int64)]
    joint = combine(log_p_y, elbo_t, fusion_params.alpha)
    loss = nk.mean(joint) * -1.0
    return BatchObjective(loss, log_p_y, elbo_t, kld_t, log_probs)


def joint_loss(
    bow: BowVector,
    partition: TokenSequence | np.ndarray,
    label: int,
    enc_params: enc.EncoderParams,
    fusion_params: FusionParams,
    nvdm_params: nvdm.NvdmParams,
    rng: RngState,
    alpha: float | None = None,
    samples: int = 10,
) -> JointLossBreakdown:
    """Objective for one (document, partition, label) instance.

    The bag of words covers the full document; ``partition`` is one
    CLS-prefixed window of it.
    """
    if not 0 <= label < fusion_params.n_labels:
        raise ContractError(f"label {label} outside [0, {fusion_params.n_labels})")
    if alpha is not None and alpha != fusion_params.alpha:
        fusion_params = FusionParams(fusion_params.proj, fusion_params.cls_w, fusion_params.cls_b, alpha)
    ids = np.asarray(getattr(partition, "ids", partition), dtype=np.int64)[None, :]
    counts = bow.dense(nvdm_params.vocab_size)[None, :]
    with nk.no_grad():
        out = batch_objective(counts, ids, ids != 0, np.array([label]), enc_params, fusion_params,
                              nvdm_params, rng, samples)
    lp, el = float(out.log_p_y.data[0]), float(out.elbo.data[0])
    return JointLossBreakdown(lp, el, float(out.kld.data[0]), float(combine(lp, el, fusion_params.alpha)),
                              fusion_params.alpha)
