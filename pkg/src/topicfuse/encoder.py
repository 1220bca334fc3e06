"""Compact pre-norm bidirectional transformer encoder with attention-op accounting.

The attention counter charges ``x * x * H_B`` multiply-accumulates per layer
per sequence of (padded) length ``x``: the score and context products that
dominate the quadratic cost.  Projections and the feed-forward block are
counted separately in :attr:`EncoderOutput.dense_ops`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .corpus import PAD_ID
from .exceptions import ContractError, DimensionError
from .numkernel import RngState, Tensor

_MASKED = -1e9
_LAYER_FIELDS = (
    "ln1_g", "ln1_b", "wq", "bq", "wk", "wv", "bv", "wo", "bo",
    "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
)


@dataclass
class LayerParams:
    ln1_g: Tensor
    ln1_b: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor  # no key bias: softmax over keys cancels it exactly
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f) for f in _LAYER_FIELDS]


@dataclass
class EncoderParams:
    tok_emb: Tensor  # vocab x H_B
    pos_emb: Tensor  # max_len x H_B
    layers: list[LayerParams]
    lnf_g: Tensor
    lnf_b: Tensor
    n_heads: int
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.hidden % self.n_heads:
            raise ContractError(f"hidden size {self.hidden} not divisible by {self.n_heads} heads")

    @property
    def hidden(self) -> int:
        return self.tok_emb.shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def max_len(self) -> int:
        return self.pos_emb.shape[0]

    def tensors(self) -> list[Tensor]:
        out = [self.tok_emb, self.pos_emb]
        for layer in self.layers:
            out += layer.tensors()
        return out + [self.lnf_g, self.lnf_b]

    def named(self) -> dict[str, Tensor]:
        out = {"lm.tok_emb": self.tok_emb, "lm.pos_emb": self.pos_emb}
        for i, layer in enumerate(self.layers):
            for f in _LAYER_FIELDS:
                out[f"lm.layer{i}.{f}"] = getattr(layer, f)
        out["lm.lnf.g"] = self.lnf_g
        out["lm.lnf.b"] = self.lnf_b
        return out

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], n_heads: int, dropout: float = 0.1,
                   requires_grad: bool = True) -> "EncoderParams":
        def t(name):
            return Tensor(np.array(arrays[name], dtype=np.float64), requires_grad)

        n_layers = len({k.split(".")[1] for k in arrays if k.startswith("lm.layer")})
        layers = [LayerParams(*(t(f"lm.layer{i}.{f}") for f in _LAYER_FIELDS)) for i in range(n_layers)]
        return cls(t("lm.tok_emb"), t("lm.pos_emb"), layers, t("lm.lnf.g"), t("lm.lnf.b"), n_heads, dropout)

    def copy(self) -> "EncoderParams":
        named = {k: v.data.copy() for k, v in self.named().items()}
        return EncoderParams.from_named(named, self.n_heads, self.dropout,
                                        requires_grad=self.tok_emb.requires_grad)


def init_params(vocab_size: int, max_len: int, hidden: int = 64, n_layers: int = 2, n_heads: int = 4,
                rng: RngState | None = None, std: float = 0.02, dropout: float = 0.1) -> EncoderParams:
    rng = rng or RngState(0)

    def w(*shape):
        return Tensor(rng.normal(shape) * std, requires_grad=True)

    def const(value, *shape):
        return Tensor(np.full(shape, value, dtype=np.float64), requires_grad=True)

    h, f = hidden, 4 * hidden
    layers = [
        LayerParams(
            const(1.0, h), const(0.0, h),
            w(h, h), const(0.0, h), w(h, h), w(h, h), const(0.0, h), w(h, h), const(0.0, h),
            const(1.0, h), const(0.0, h),
            w(h, f), const(0.0, f), w(f, h), const(0.0, h),
        )
        for _ in range(n_layers)
    ]
    return EncoderParams(w(vocab_size, h), w(max_len, h), layers, const(1.0, h), const(0.0, h), n_heads, dropout)


@dataclass
class EncoderOutput:
    o_cls: np.ndarray
    ops_per_layer: int
    attn_ops: int
    dense_ops: int = 0
    hidden: np.ndarray | None = field(default=None, repr=False)


def attention_ops(x: int, hidden: int, n_layers: int) -> int:
    """Score plus context multiply-accumulates for one sequence of length ``x``."""
    return n_layers * x * x * hidden


def dense_ops(x: int, hidden: int, n_layers: int) -> int:
    """Projection (4 H^2) and feed-forward (8 H^2) multiply-accumulates per token."""
    return n_layers * x * 12 * hidden * hidden


def _attention(h: Tensor, layer: LayerParams, key_bias: np.ndarray, n_heads: int,
               drop_rng: RngState | None, rate: float, keep_probs: list | None) -> Tensor:
    b, x, d = h.shape
    hd = d // n_heads

    def heads(t):
        return nk.transpose(nk.reshape(t, (b, x, n_heads, hd)), (0, 2, 1, 3))

    q = heads(nk.matmul(h, layer.wq) + layer.bq)
    k = heads(nk.matmul(h, layer.wk))
    v = heads(nk.matmul(h, layer.wv) + layer.bv)
    scores = nk.matmul(q, nk.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(hd))
    probs = nk.softmax(scores + Tensor(key_bias), axis=-1)
    if keep_probs is not None:
        keep_probs.append(probs.data)
    probs = nk.dropout(probs, rate, drop_rng)
    ctx = nk.reshape(nk.transpose(nk.matmul(probs, v), (0, 2, 1, 3)), (b, x, d))
    return nk.matmul(ctx, layer.wo) + layer.bo


def forward(ids: np.ndarray, mask: np.ndarray, params: EncoderParams, positions: np.ndarray | None = None,
            drop_rng: RngState | None = None, keep_probs: list | None = None) -> Tensor:
    """Final-layer hidden states, shape ``(B, x, H_B)``.

    ``mask`` is True at real tokens; keys at masked positions get a large
    negative logit.  Dropout runs only when ``drop_rng`` is given.
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise DimensionError(f"ids {ids.shape} and mask {mask.shape} must be equal 2-D shapes")
    b, x = ids.shape
    if positions is None:
        if x > params.max_len:
            raise ContractError(f"sequence length {x} exceeds max length {params.max_len}")
        h = nk.embedding(params.tok_emb, ids) + params.pos_emb[:x]
    else:
        h = nk.embedding(params.tok_emb, ids) + nk.embedding(params.pos_emb, positions)
    rate = params.dropout
    h = nk.dropout(h, rate, drop_rng)
    key_bias = np.where(mask, 0.0, _MASKED)[:, None, None, :]
    for layer in params.layers:
        a = _attention(nk.layer_norm(h, layer.ln1_g, layer.ln1_b), layer, key_bias, params.n_heads,
                       drop_rng, rate, keep_probs)
        h = h + nk.dropout(a, rate, drop_rng)
        f = nk.layer_norm(h, layer.ln2_g, layer.ln2_b)
        f = nk.matmul(nk.gelu(nk.matmul(f, layer.w1) + layer.b1), layer.w2) + layer.b2
        h = h + nk.dropout(f, rate, drop_rng)
    return nk.layer_norm(h, params.lnf_g, params.lnf_b)


def _single(seq, mask, x: int | None):
    ids = np.asarray(getattr(seq, "ids", seq), dtype=np.int64)
    mask = ids != PAD_ID if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != ids.shape:
        raise ContractError(f"mask length {mask.shape} != sequence length {ids.shape}")
    if x is not None and len(ids) != x:
        raise ContractError(f"sequence length {len(ids)} != partition length {x}")
    return ids, mask


def encode_sequence(seq, mask, params: EncoderParams, x: int | None = None) -> EncoderOutput:
    """o_CLS for one sequence (evaluation mode, no dropout).

    Masked positions are removed before the stack runs, keeping each real
    token's original position id; attention over the remaining tokens is
    then identical to masked attention, and trailing pads cannot perturb
    the result.  The op counter still charges the full padded length.
    """
    ids, mask = _single(seq, mask, x)
    if not mask[0]:
        raise ContractError("position 0 (CLS) must be unmasked")
    keep = np.flatnonzero(mask)
    with nk.no_grad():
        hidden = forward(ids[keep][None, :], np.ones((1, keep.size), dtype=bool), params,
                         positions=keep[None, :]).data[0]
    n = len(ids)
    return EncoderOutput(
        hidden[0].copy(),
        ops_per_layer=n * n * params.hidden,
        attn_ops=attention_ops(n, params.hidden, params.n_layers),
        dense_ops=dense_ops(n, params.hidden, params.n_layers),
        hidden=hidden,
    )


def mean_pooled_embedding(seq, mask, params: EncoderParams) -> np.ndarray:
    """Average final hidden state over unmasked positions."""
    ids, mask = _single(seq, mask, None)
    keep = np.flatnonzero(mask)
    if keep.size == 0:
        raise ContractError("cannot mean-pool an all-pad sequence")
    with nk.no_grad():
        hidden = forward(ids[keep][None, :], np.ones((1, keep.size), dtype=bool), params,
                         positions=keep[None, :]).data[0]
    return hidden.mean(axis=0)


def mean_pool_batch(ids: np.ndarray, mask: np.ndarray, params: EncoderParams) -> np.ndarray:
    with nk.no_grad():
        hidden = forward(ids, mask, params).data
    m = mask[:, :, None].astype(np.float64)
    denom = m.sum(axis=1)
    if np.any(denom == 0):
        raise ContractError("cannot mean-pool an all-pad sequence")
    return (hidden * m).sum(axis=1) / denom
