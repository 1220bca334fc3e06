"""Seeded gradient-check instances shared by the unit and acceptance suites.

Every builder takes an integer seed and returns ``(f, leaves)`` where ``f``
maps a list of tensors (same order as ``leaves``) to a scalar tensor.
Random draws inside ``f`` come from freshly built RngStates so repeated
evaluations see identical noise.
"""

from __future__ import annotations

import numpy as np

from topicfuse import encoder as enc
from topicfuse import fusion, nvdm
from topicfuse import numkernel as nk
from topicfuse.numkernel import RngState, Tensor


def bounded(rng: RngState, shape, scale: float = 1.0) -> np.ndarray:
    """Entries with magnitude in [0.5, 1.5] * scale and random sign."""
    mag = 0.5 + rng.uniform(shape)
    sign = np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)
    return sign * mag * scale


def _contract(out: Tensor, weights: np.ndarray) -> Tensor:
    return nk.sum(out * Tensor(weights))


def _unary(op, domain="any"):
    def build(seed):
        r = RngState(seed)
        shape = (2, 3)
        if domain == "positive":
            x = 0.5 + 1.5 * r.uniform(shape)
        elif domain == "away_from_zero":
            x = bounded(r, shape, 1.0)
        else:
            x = r.normal(shape)
        w = r.normal(shape)
        return (lambda ts: _contract(op(ts[0]), w)), [Tensor(x)]

    return build


def _binary(op, b_shape=(3,), b_domain="any"):
    def build(seed):
        r = RngState(seed)
        a = r.normal((2, 3))
        b = bounded(r, b_shape) if b_domain == "away_from_zero" else r.normal(b_shape)
        w = r.normal((2, 3))
        return (lambda ts: _contract(op(ts[0], ts[1]), w)), [Tensor(a), Tensor(b)]

    return build


def _matmul(seed):
    r = RngState(seed)
    a, b, w = r.normal((2, 3)), r.normal((3, 4)), r.normal((2, 4))
    return (lambda ts: _contract(nk.matmul(ts[0], ts[1]), w)), [Tensor(a), Tensor(b)]


def _matmul_batched(seed):
    r = RngState(seed)
    a, b, w = r.normal((2, 2, 3)), r.normal((2, 3, 2)), r.normal((2, 2, 2))
    return (lambda ts: _contract(nk.matmul(ts[0], ts[1]), w)), [Tensor(a), Tensor(b)]


def _matmul_broadcast(seed):
    r = RngState(seed)
    a, b, w = r.normal((2, 2, 3)), r.normal((3, 2)), r.normal((2, 2, 2))
    return (lambda ts: _contract(nk.matmul(ts[0], ts[1]), w)), [Tensor(a), Tensor(b)]


def _softmax(axis):
    def build(seed):
        r = RngState(seed)
        x, w = r.normal((3, 4)), r.normal((3, 4))
        return (lambda ts: _contract(nk.softmax(ts[0], axis=axis), w)), [Tensor(x)]

    return build


def _log_softmax(seed):
    r = RngState(seed)
    x, w = r.normal((3, 4)), r.normal((3, 4))
    return (lambda ts: _contract(nk.log_softmax(ts[0], axis=-1), w)), [Tensor(x)]


def _layer_norm(seed):
    r = RngState(seed)
    x, g, b, w = r.normal((2, 5)), r.normal((5,)), r.normal((5,)), r.normal((2, 5))
    return (lambda ts: _contract(nk.layer_norm(ts[0], ts[1], ts[2]), w)), [Tensor(x), Tensor(g), Tensor(b)]


def _concat(seed):
    r = RngState(seed)
    a, b, w = r.normal((2, 2)), r.normal((2, 3)), r.normal((2, 5))
    return (lambda ts: _contract(nk.concat([ts[0], ts[1]], axis=-1), w)), [Tensor(a), Tensor(b)]


def _reshape(seed):
    r = RngState(seed)
    x, w = r.normal((2, 6)), r.normal((3, 4))
    return (lambda ts: _contract(nk.reshape(ts[0], (3, 4)), w)), [Tensor(x)]


def _transpose(seed):
    r = RngState(seed)
    x, w = r.normal((2, 3, 4)), r.normal((4, 2, 3))
    return (lambda ts: _contract(nk.transpose(ts[0], (2, 0, 1)), w)), [Tensor(x)]


def _index(seed):
    r = RngState(seed)
    x, w = r.normal((3, 4)), r.normal((3,))
    rows, cols = np.array([0, 2, 0]), np.array([1, 3, 1])  # repeated entry accumulates
    return (lambda ts: _contract(ts[0][rows, cols], w)), [Tensor(x)]


def _slice(seed):
    r = RngState(seed)
    x, w = r.normal((3, 4)), r.normal((2, 4))
    return (lambda ts: _contract(ts[0][1:], w)), [Tensor(x)]


def _sum_axis(seed):
    r = RngState(seed)
    x, w = r.normal((3, 4)), r.normal((4,))
    return (lambda ts: _contract(nk.sum(ts[0], axis=0), w)), [Tensor(x)]


def _mean_axis(seed):
    r = RngState(seed)
    x, w = r.normal((3, 4)), r.normal((3, 1))
    return (lambda ts: _contract(nk.mean(ts[0], axis=1, keepdims=True), w)), [Tensor(x)]


def _embedding(seed):
    r = RngState(seed)
    table, w = r.normal((5, 3)), r.normal((2, 3, 3))
    ids = r.integers(0, 5, (2, 3))
    return (lambda ts: _contract(nk.embedding(ts[0], ids), w)), [Tensor(table)]


def _dropout(seed):
    r = RngState(seed)
    x, w = r.normal((3, 4)), r.normal((3, 4))
    return (lambda ts: _contract(nk.dropout(ts[0], 0.3, RngState(seed + 1)), w)), [Tensor(x)]


KERNEL_CASES = {
    "matmul": _matmul,
    "matmul_batched": _matmul_batched,
    "matmul_broadcast": _matmul_broadcast,
    "add": _binary(nk.add),
    "sub": _binary(nk.sub),
    "mul": _binary(nk.mul, (2, 3)),
    "div": _binary(nk.div, (2, 3), "away_from_zero"),
    "neg": _unary(nk.neg),
    "exp": _unary(nk.exp),
    "log": _unary(nk.log, "positive"),
    "tanh": _unary(nk.tanh),
    "sigmoid": _unary(nk.sigmoid),
    "gelu": _unary(nk.gelu),
    "relu": _unary(nk.relu, "away_from_zero"),
    "softmax_last": _softmax(-1),
    "softmax_first": _softmax(0),
    "log_softmax": _log_softmax,
    "layer_norm": _layer_norm,
    "concat": _concat,
    "reshape": _reshape,
    "transpose": _transpose,
    "index": _index,
    "slice": _slice,
    "sum": _sum_axis,
    "mean": _mean_axis,
    "embedding": _embedding,
    "dropout": _dropout,
}


# ---- composites --------------------------------------------------------------------


def nvdm_elbo_case(seed: int):
    """Mean ELBO of two small documents, differentiated w.r.t. every NVDM tensor."""
    r = RngState(seed)
    z, h, k = 5, 3, 2
    params = nvdm.init_params(z, h, k, r.spawn(1))
    for t in params.tensors():
        t.data[...] = bounded(r, t.shape, 0.5)
    counts = np.floor(r.uniform((2, z)) * 3)
    counts[:, 0] += 1

    def f(ts):
        value, *_ = nvdm.elbo_batch(counts, nvdm.NvdmParams(*ts), RngState(seed + 100), samples=2)
        return nk.mean(value)

    return f, [Tensor(t.data) for t in params.tensors()]


def rebuild_encoder(names, tensors, n_layers: int, n_heads: int) -> enc.EncoderParams:
    d = dict(zip(names, tensors))
    layers = [enc.LayerParams(*(d[f"lm.layer{i}.{f}"] for f in enc._LAYER_FIELDS)) for i in range(n_layers)]
    return enc.EncoderParams(d["lm.tok_emb"], d["lm.pos_emb"], layers, d["lm.lnf.g"], d["lm.lnf.b"], n_heads, 0.0)


def joint_loss_case(seed: int):
    """Negative joint objective of one partition instance w.r.t. NVDM, head and encoder tensors.

    Dimensions are tiny (Z=5, K=2, H_B=3, x=3, one layer, one head) so 100
    extended-precision checks fit well inside the runtime budget.  H_B=3 is
    the smallest non-degenerate width: layer norm over two features always
    returns +-1, leaving upstream gradients at the finite-difference noise floor.
    """
    r = RngState(seed)
    z, hn, k, hb, x, v, n_labels = 5, 3, 2, 3, 3, 5, 2
    e = enc.init_params(v, x, hb, 1, 1, r.spawn(1))
    for t in e.tensors():
        # larger scales saturate the attention softmax and shrink gradients to the noise floor
        t.data[...] = bounded(r, t.shape, 0.5)
    nv = nvdm.init_params(z, hn, k, r.spawn(2))
    for t in nv.tensors():
        t.data[...] = bounded(r, t.shape, 0.5)
    head = fusion.init_params(k, hb, n_labels, r.spawn(3))
    for t in head.tensors():
        t.data[...] = bounded(r, t.shape, 0.7)
    names = list(e.named())
    ids = np.array([[1] + list(3 + r.integers(0, v - 3, (x - 2,))) + [0]])
    counts = np.floor(r.uniform((1, z)) * 3)
    counts[0, 0] += 1
    labels = np.array([seed % n_labels])

    def f(ts):
        obj = fusion.batch_objective(counts, ids, ids != 0, labels, rebuild_encoder(names, ts[11:], 1, 1),
                                     fusion.FusionParams(*ts[8:11]), nvdm.NvdmParams(*ts[:8]),
                                     RngState(seed + 100), samples=2)
        return obj.loss

    leaves = nv.tensors() + head.tensors() + list(e.named().values())
    return f, [Tensor(t.data) for t in leaves]


def worst_error(builder, seeds) -> float:
    worst = 0.0
    for s in seeds:
        f, leaves = builder(s)
        worst = max(worst, nk.gradient_check(f, leaves))
    return worst
