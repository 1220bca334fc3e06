"""Training protocol: NVDM pretraining, joint fine-tuning, baselines, evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import encoder as enc
from . import fusion
from . import numkernel as nk
from . import nvdm
from .corpus import (
    PAD_ID,
    VALID_P,
    Corpus,
    Document,
    SequenceVocabulary,
    Vocabulary,
    bow_matrix,
    build_sequence_vocabulary,
    build_vocabulary,
    partition,
    to_bow,
    tokenize_sequence,
)
from .costing import ComplexityInputs, CostReport, estimate_co2
from .exceptions import ContractError, CorpusError
from .numkernel import RngState, Tensor

logger = logging.getLogger(__name__)

MODES = ("topicfused", "encoder_only", "bert_avg", "bert_avg_dtr", "nvdm_pretrain")


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 4
    nvdm_lr: float = 1e-3
    enc_lr: float = 2e-4  # 2e-5 scaled x10: no pretrained initialisation
    alpha: float = 0.9
    p: int = 1
    seeds: tuple[int, ...] = (1, 2, 3)
    mode: str = "topicfused"
    max_len: int = 512
    n_topics: int = 100
    nvdm_hidden: int = 256
    samples: int = 10
    nvdm_epochs: int | None = None
    nvdm_batch: int = 32
    enc_layers: int = 2
    enc_hidden: int = 64
    enc_heads: int = 4
    dropout: float = 0.1
    f_min: int = 10
    seq_min_count: int = 5
    baseline_lr: float = 0.01
    baseline_steps: int = 300
    eval_batch: int = 64

    def __post_init__(self) -> None:
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.nvdm_epochs is not None and self.nvdm_epochs < 0:
            raise ContractError("nvdm epochs must be >= 0")
        if self.batch_size < 1:
            raise ContractError("batch size must be >= 1")
        if self.p not in VALID_P:
            raise ContractError(f"p must be one of {VALID_P}")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}")
        if self.max_len % self.p:
            raise ContractError(f"max_len {self.max_len} not divisible by p={self.p}")

    @property
    def x(self) -> int:
        return self.max_len // self.p

    @property
    def label(self) -> str:
        return f"{self.mode}-{self.x}"


# ---- data preparation -----------------------------------------------------------


@dataclass
class EncodedSplit:
    """One split as arrays: dense BoW per document, partition instances."""

    doc_ids: list[str]
    counts: np.ndarray  # n_docs x Z
    labels: np.ndarray  # n_docs
    ids: np.ndarray  # n_inst x x
    doc_index: np.ndarray  # n_inst
    overlap_tokens: int = 0
    partial_docs: int = 0

    @property
    def n_docs(self) -> int:
        return len(self.labels)

    @property
    def n_instances(self) -> int:
        return len(self.doc_index)


@dataclass
class PreparedCorpus:
    vocab: Vocabulary
    seq_vocab: SequenceVocabulary
    train: EncodedSplit
    dev: EncodedSplit
    test: EncodedSplit
    n_labels: int
    p: int
    max_len: int


def encode_split(docs: Sequence[Document], vocab: Vocabulary, seq_vocab: SequenceVocabulary,
                 p: int, max_len: int) -> EncodedSplit:
    bows = [to_bow(d, vocab) for d in docs]
    rows, index = [], []
    overlap = partial = 0
    for i, d in enumerate(docs):
        pset = partition(tokenize_sequence(d, seq_vocab, max_len), p, max_len, d.id)
        rows.extend(pset.partitions)
        index.extend([i] * len(pset.partitions))
        overlap += pset.overlap
        partial += pset.overlap > 0
    x = max_len // p
    return EncodedSplit(
        [d.id for d in docs],
        bow_matrix(bows, vocab.size),
        np.array([d.label for d in docs], dtype=np.int64),
        np.array(rows, dtype=np.int64).reshape(-1, x),
        np.array(index, dtype=np.int64),
        overlap,
        partial,
    )


def prepare_corpus(corpus: Corpus, config: TrainConfig, stopwords: Iterable[str] = (),
                   vocab: Vocabulary | None = None, seq_vocab: SequenceVocabulary | None = None) -> PreparedCorpus:
    """Vocabularies from the training split only, then every split encoded."""
    if not corpus.train:
        raise CorpusError("training split is empty")
    vocab = vocab or build_vocabulary(corpus.train, config.f_min, stopwords)
    seq_vocab = seq_vocab or build_sequence_vocabulary(corpus.train, config.seq_min_count)
    splits = [encode_split(s, vocab, seq_vocab, config.p, config.max_len)
              for s in (corpus.train, corpus.dev, corpus.test)]
    return PreparedCorpus(vocab, seq_vocab, *splits, n_labels=corpus.n_labels, p=config.p, max_len=config.max_len)


# ---- optimiser -------------------------------------------------------------------


class Adam:
    """Adaptive moment estimation over a list of leaf tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        if self.lr == 0.0:
            return
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# ---- metrics ----------------------------------------------------------------------


@dataclass
class ClassificationReport:
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    predictions: np.ndarray


def classification_report(gold: Sequence[int], pred: Sequence[int], n_labels: int) -> ClassificationReport:
    """Per-class precision/recall/F1 and their unweighted mean F1.

    Undefined ratios (no predictions or no gold for a class) count as 0.
    """
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.size == 0:
        raise ContractError("cannot evaluate an empty split")
    conf = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(conf, (gold, pred), 1)
    tp = np.diag(conf).astype(np.float64)
    pred_n = conf.sum(axis=0).astype(np.float64)
    gold_n = conf.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred_n, out=np.zeros(n_labels), where=pred_n > 0)
    recall = np.divide(tp, gold_n, out=np.zeros(n_labels), where=gold_n > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_labels), where=denom > 0)
    return ClassificationReport(float(f1.mean()), precision, recall, f1, pred)


def macro_f1(gold: Sequence[int], pred: Sequence[int], n_labels: int) -> float:
    return classification_report(gold, pred, n_labels).macro_f1


@dataclass
class EpochRecord:
    epoch: int
    loss_joint: float
    loss_ce: float
    elbo: float
    kld: float
    dev_f1: float
    wall_s: float
    attn_ops: int


@dataclass
class RunMetrics:
    run_id: str
    seed: int
    mode: str
    p: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    dev_f1: float = 0.0
    test_f1: float = float("nan")
    test_report: ClassificationReport | None = None
    wall_s: float = 0.0
    attn_ops: int = 0
    dense_ops: int = 0
    topic_ops: int = 0
    overlap_tokens: int = 0
    rtn: float | None = None
    cost: CostReport | None = None

    @property
    def attn_ops_per_epoch(self) -> int:
        return self.epochs[0].attn_ops if self.epochs else 0

    def epoch_records(self) -> list[dict]:
        out = []
        for e in self.epochs:
            out.append(metrics_record(self.run_id, self.seed, self.mode, self.p, e.epoch, e.loss_joint,
                                      e.loss_ce, e.elbo, e.kld, e.dev_f1, None, e.wall_s, e.attn_ops))
        return out

    def final_record(self) -> dict:
        rec = metrics_record(self.run_id, self.seed, self.mode, self.p, "final", None, None, None, None,
                             self.dev_f1, self.test_f1, self.wall_s, self.attn_ops)
        rec["best_epoch"] = self.best_epoch
        rec["overlap_tokens"] = self.overlap_tokens
        if self.rtn is not None:
            rec["rtn"] = round(self.rtn, 3)
        return rec


def metrics_record(run_id, seed, mode, p, epoch, loss_joint, loss_ce, elbo, kld, dev_f1, test_f1,
                   wall_s, attn_ops) -> dict:
    """One metrics line; hours and grams use the reporting granularity."""
    co2 = estimate_co2(wall_s / 3600.0) if wall_s is not None else None
    return {
        "run_id": run_id, "seed": seed, "mode": mode, "p": p, "epoch": epoch,
        "loss_joint": loss_joint, "loss_ce": loss_ce, "elbo": elbo, "kld": kld,
        "dev_f1": dev_f1, "test_f1": test_f1,
        "wall_s": None if wall_s is None else round(wall_s, 3),
        "attn_ops": attn_ops,
        "co2_g": None if co2 is None else round(co2, 2),
    }


def retention(f1: float, reference_f1: float) -> float:
    """F1 retained relative to a reference run, in percent."""
    if reference_f1 <= 0:
        raise ContractError("reference F1 must be positive")
    return 100.0 * f1 / reference_f1


def summarize(runs: Sequence[RunMetrics], reference_f1: float | None = None) -> dict:
    """Mean and population std of test F1 over seeds."""
    f1s = np.array([r.test_f1 for r in runs], dtype=np.float64)
    mean = float(f1s.mean())
    std = float(f1s.std()) if len(runs) >= 2 else 0.0
    wall = float(np.mean([r.wall_s for r in runs]))
    first = runs[0]
    rec = metrics_record(first.run_id, None, first.mode, first.p, "summary", None, None, None, None,
                         float(np.mean([r.dev_f1 for r in runs])), mean, wall, first.attn_ops)
    rec["test_f1_std"] = std
    rec["std_kind"] = "population" if len(runs) >= 2 else "single-seed"
    rec["seeds"] = [r.seed for r in runs]
    if reference_f1 is not None:
        rec["rtn"] = round(retention(mean, reference_f1), 3)
    return rec


# ---- models ------------------------------------------------------------------------


@dataclass
class TopicFusedModel:
    """Encoder + fusion head, with an optional NVDM (absent in encoder-only mode)."""

    config: TrainConfig
    vocab: Vocabulary | None
    seq_vocab: SequenceVocabulary
    encoder: enc.EncoderParams
    fusion: fusion.FusionParams
    nvdm: nvdm.NvdmParams | None
    n_labels: int

    def instance_log_probs(self, split: EncodedSplit) -> np.ndarray:
        out = []
        bs = self.config.eval_batch
        with nk.no_grad():
            for s in range(0, split.n_instances, bs):
                rows = slice(s, s + bs)
                ids = split.ids[rows]
                counts = split.counts[split.doc_index[rows]] if self.nvdm is not None else None
                obj = fusion.batch_objective(counts, ids, ids != PAD_ID, split.labels[split.doc_index[rows]],
                                             self.encoder, self.fusion, self.nvdm, None)
                out.append(obj.log_probs.data)
        return np.concatenate(out) if out else np.zeros((0, self.n_labels))

    def predict_log_proba(self, split: EncodedSplit) -> np.ndarray:
        """Per-document label log-probabilities averaged over its partitions."""
        return fusion.aggregate_partitions(self.instance_log_probs(split), split.doc_index, split.n_docs)

    def predict(self, split: EncodedSplit) -> np.ndarray:
        return np.argmax(self.predict_log_proba(split), axis=1)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        if self.nvdm is not None:
            out.update(self.nvdm.named())
        out.update(self.encoder.named())
        out.update(self.fusion.named())
        return out


@dataclass
class BaselineModel:
    """Softmax regression over frozen mean-pooled encoder features (+ DTR)."""

    config: TrainConfig
    vocab: Vocabulary | None
    seq_vocab: SequenceVocabulary
    encoder: enc.EncoderParams
    nvdm: nvdm.NvdmParams | None
    weight: Tensor
    bias: Tensor
    n_labels: int

    def features(self, split: EncodedSplit) -> np.ndarray:
        return baseline_features(split, self.encoder, self.nvdm, self.config.eval_batch)

    def predict_log_proba(self, split: EncodedSplit) -> np.ndarray:
        with nk.no_grad():
            z = nk.matmul(Tensor(self.features(split)), self.weight) + self.bias
            return nk.log_softmax(z, axis=-1).data

    def predict(self, split: EncodedSplit) -> np.ndarray:
        return np.argmax(self.predict_log_proba(split), axis=1)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        if self.nvdm is not None:
            out.update(self.nvdm.named())
        out.update(self.encoder.named())
        out.update({"logit.w": self.weight, "logit.b": self.bias})
        return out


def evaluate(model, split: EncodedSplit) -> ClassificationReport:
    if split.n_docs == 0:
        raise ContractError("cannot evaluate an empty split")
    return classification_report(split.labels, model.predict(split), model.n_labels)


# ---- NVDM pretraining -------------------------------------------------------------


@dataclass
class PretrainResult:
    params: nvdm.NvdmParams
    best_epoch: int
    dev_elbo: list[float]
    train_elbo: list[float]


def mean_elbo(counts: np.ndarray, params: nvdm.NvdmParams, rng: RngState, samples: int, batch: int = 256) -> float:
    rows = counts[counts.sum(axis=1) > 0]
    if len(rows) == 0:
        return float("nan")
    total = 0.0
    with nk.no_grad():
        for s in range(0, len(rows), batch):
            value, *_ = nvdm.elbo_batch(rows[s : s + batch], params, rng, samples)
            total += float(value.data.sum())
    return total / len(rows)


def pretrain_nvdm(data: PreparedCorpus, config: TrainConfig, seed: int | None = None,
                  init: nvdm.NvdmParams | None = None) -> PretrainResult:
    """Maximise mean ELBO with Adam; keep the parameters of the best dev-ELBO epoch.

    Empty bags of words are skipped.  Dev ELBO uses the same noise every
    epoch so epochs are compared on equal terms.
    """
    seed = config.seeds[0] if seed is None else seed
    root = RngState(seed)
    counts = data.train.counts[data.train.counts.sum(axis=1) > 0]
    if len(counts) == 0:
        raise CorpusError("every training document has an empty bag of words")
    params = init.copy() if init is not None else nvdm.init_params(
        data.vocab.size, config.nvdm_hidden, config.n_topics, root.spawn(11))
    dev_counts = data.dev.counts if data.dev.n_docs and data.dev.counts.sum() > 0 else counts
    epochs = config.epochs if config.nvdm_epochs is None else config.nvdm_epochs
    opt = Adam(params.tensors(), config.nvdm_lr)
    shuffle, noise = root.spawn(12), root.spawn(13)
    best = params.copy()
    best_elbo, best_epoch = -math.inf, 0
    dev_hist, train_hist = [], []
    for epoch in range(1, epochs + 1):
        order = shuffle.permutation(len(counts))
        run_total = 0.0
        for s in range(0, len(order), config.nvdm_batch):
            batch = counts[order[s : s + config.nvdm_batch]]
            value, *_ = nvdm.elbo_batch(batch, params, noise, config.samples)
            loss = nk.mean(value) * -1.0
            nk.backward(loss)
            opt.step()
            opt.zero_grad()
            run_total += float(value.data.sum())
        train_hist.append(run_total / len(counts))
        dev = mean_elbo(dev_counts, params, root.spawn(14), config.samples)
        dev_hist.append(dev)
        logger.info("nvdm epoch %d train_elbo=%.3f dev_elbo=%.3f", epoch, train_hist[-1], dev)
        if dev > best_elbo:
            best_elbo, best_epoch, best = dev, epoch, params.copy()
    return PretrainResult(best, best_epoch, dev_hist, train_hist)


# ---- joint fine-tuning --------------------------------------------------------------


def _complexity(config: TrainConfig, data: PreparedCorpus, n_docs_batches: int) -> ComplexityInputs:
    return ComplexityInputs(b=config.batch_size, N=config.max_len, p=config.p, H_B=config.enc_hidden,
                            n_l=config.enc_layers, n_b=max(1, n_docs_batches),
                            K=config.n_topics if config.mode == "topicfused" else 0, Z=data.vocab.size)


def init_model(data: PreparedCorpus, config: TrainConfig, nvdm_params: nvdm.NvdmParams | None,
               seed: int) -> TopicFusedModel:
    root = RngState(seed)
    encoder = enc.init_params(data.seq_vocab.size, config.max_len, config.enc_hidden, config.enc_layers,
                              config.enc_heads, root.spawn(1), dropout=config.dropout)
    topic_dim = nvdm_params.n_topics if nvdm_params is not None else 0
    head = fusion.init_params(topic_dim, config.enc_hidden, data.n_labels, root.spawn(2), config.alpha)
    return TopicFusedModel(config, data.vocab, data.seq_vocab, encoder, head,
                           nvdm_params.copy() if nvdm_params is not None else None, data.n_labels)


def finetune_joint(
    data: PreparedCorpus,
    nvdm_params: nvdm.NvdmParams | None,
    config: TrainConfig,
    seed: int | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[TopicFusedModel, RunMetrics]:
    """Minimise the negative joint objective over shuffled partition instances.

    ``nvdm_params=None`` (or mode ``encoder_only``) trains the encoder and head
    alone.  Returns the best-dev-epoch model and its metrics.
    """
    seed = config.seeds[0] if seed is None else seed
    if config.mode == "encoder_only":
        nvdm_params = None
    elif config.mode == "topicfused" and nvdm_params is None:
        raise ContractError("topicfused mode needs pretrained NVDM parameters")
    if data.p != config.p or data.max_len != config.max_len:
        raise ContractError("prepared corpus was partitioned with a different p / max_len")
    model = init_model(data, config, nvdm_params, seed)
    root = RngState(seed)
    shuffle, noise, drop = root.spawn(3), root.spawn(4), root.spawn(5)
    enc_opt = Adam(model.encoder.tensors() + model.fusion.tensors(), config.enc_lr)
    nvdm_opt = Adam(model.nvdm.tensors(), config.nvdm_lr) if model.nvdm is not None else None
    train = data.train
    x, hidden, layers = config.x, config.enc_hidden, config.enc_layers
    k_z = model.nvdm.n_topics * model.nvdm.vocab_size if model.nvdm is not None else 0
    metrics = RunMetrics(config.label, seed, config.mode, config.p, overlap_tokens=train.overlap_tokens)
    best = None
    best_f1 = -1.0
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(train.n_instances)
        sums = np.zeros(4)
        epoch_attn = 0
        t0 = time.perf_counter()
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            docs = train.doc_index[idx]
            ids = train.ids[idx]
            counts = train.counts[docs] if model.nvdm is not None else None
            obj = fusion.batch_objective(counts, ids, ids != PAD_ID, train.labels[docs], model.encoder,
                                         model.fusion, model.nvdm, noise, config.samples,
                                         drop_rng=drop if config.dropout > 0 else None)
            nk.backward(obj.loss)
            enc_opt.step()
            enc_opt.zero_grad()
            if nvdm_opt is not None:
                nvdm_opt.step()
                nvdm_opt.zero_grad()
            n = len(idx)
            joint = fusion.combine(obj.log_p_y.data, obj.elbo.data, config.alpha)
            sums += [-joint.sum(), -obj.log_p_y.data.sum(), obj.elbo.data.sum(), obj.kld.data.sum()]
            epoch_attn += n * enc.attention_ops(x, hidden, layers)
            metrics.dense_ops += n * enc.dense_ops(x, hidden, layers)
            metrics.topic_ops += n * k_z
        wall = time.perf_counter() - t0
        metrics.wall_s += wall
        metrics.attn_ops += epoch_attn
        dev_f1 = evaluate(model, data.dev).macro_f1 if data.dev.n_docs else float("nan")
        mean = sums / max(train.n_instances, 1)
        rec = EpochRecord(epoch, float(mean[0]), float(mean[1]), float(mean[2]), float(mean[3]),
                          dev_f1, wall, epoch_attn)
        metrics.epochs.append(rec)
        logger.info("%s seed=%d epoch %d loss=%.4f ce=%.4f dev_f1=%.4f", config.label, seed, epoch,
                    rec.loss_joint, rec.loss_ce, dev_f1)
        if on_epoch is not None:
            on_epoch(rec)
        score = dev_f1 if not math.isnan(dev_f1) else -rec.loss_ce
        if best is None or score > best_f1:
            best_f1, metrics.best_epoch = score, epoch
            best = (model.encoder.copy(), model.fusion.copy(), model.nvdm.copy() if model.nvdm else None)
    if best is not None:
        model.encoder, model.fusion, model.nvdm = best
        metrics.dev_f1 = best_f1
    if data.test.n_docs:
        metrics.test_report = evaluate(model, data.test)
        metrics.test_f1 = metrics.test_report.macro_f1
    n_b = math.ceil(train.n_docs / config.batch_size)
    metrics.cost = CostReport.build(_complexity(config, data, n_b), metrics.attn_ops, metrics.wall_s / 3600.0,
                                    measured_dense_ops=metrics.dense_ops, measured_topic_ops=metrics.topic_ops)
    return model, metrics


# ---- frozen-feature baselines -------------------------------------------------------


def baseline_features(split: EncodedSplit, encoder: enc.EncoderParams, nvdm_params: nvdm.NvdmParams | None,
                      batch: int = 64) -> np.ndarray:
    """Mean-pooled encoder states of each document's first partition, plus the DTR if given."""
    first = np.flatnonzero(np.r_[True, np.diff(split.doc_index) != 0])
    ids = split.ids[first]
    pooled = np.concatenate([enc.mean_pool_batch(ids[s : s + batch], ids[s : s + batch] != PAD_ID, encoder)
                             for s in range(0, len(ids), batch)]) if len(ids) else np.zeros((0, encoder.hidden))
    if nvdm_params is None:
        return pooled
    with nk.no_grad():
        mu, *_ = nvdm.encode_batch(split.counts, nvdm_params, None)
    dtr = mu.data * (split.counts.sum(axis=1) > 0)[:, None]
    return np.concatenate([pooled, dtr], axis=1)


def run_baseline(data: PreparedCorpus, config: TrainConfig, nvdm_params: nvdm.NvdmParams | None = None,
                 seed: int | None = None) -> tuple[BaselineModel, RunMetrics]:
    """Softmax regression over frozen, randomly initialised encoder features.

    Weights start at zero and are fitted by full-batch Adam.  Requires a
    partition-free (p=1) preparation so each document has one sequence.
    """
    seed = config.seeds[0] if seed is None else seed
    if config.mode not in ("bert_avg", "bert_avg_dtr"):
        raise ContractError(f"run_baseline does not handle mode {config.mode!r}")
    if config.mode == "bert_avg_dtr" and nvdm_params is None:
        raise ContractError("bert_avg_dtr needs pretrained NVDM parameters")
    root = RngState(seed)
    encoder = enc.init_params(data.seq_vocab.size, config.max_len, config.enc_hidden, config.enc_layers,
                              config.enc_heads, root.spawn(1), dropout=0.0)
    topics = nvdm_params if config.mode == "bert_avg_dtr" else None
    t0 = time.perf_counter()
    feats = baseline_features(data.train, encoder, topics, config.eval_batch)
    w = Tensor(np.zeros((feats.shape[1], data.n_labels)), requires_grad=True)
    b = Tensor(np.zeros(data.n_labels), requires_grad=True)
    opt = Adam([w, b], config.baseline_lr)
    history = []
    x_t = Tensor(feats)
    for _ in range(config.baseline_steps):
        logp = nk.log_softmax(nk.matmul(x_t, w) + b, axis=-1)
        loss = nk.mean(logp[np.arange(len(feats)), data.train.labels]) * -1.0
        history.append(float(loss.data))
        nk.backward(loss)
        opt.step()
        opt.zero_grad()
    wall = time.perf_counter() - t0
    model = BaselineModel(config, data.vocab, data.seq_vocab, encoder, topics, w, b, data.n_labels)
    metrics = RunMetrics(config.label, seed, config.mode, config.p, wall_s=wall)
    metrics.epochs.append(EpochRecord(1, history[0] if history else float("nan"),
                                      history[-1] if history else float("nan"), 0.0, 0.0,
                                      evaluate(model, data.dev).macro_f1 if data.dev.n_docs else float("nan"),
                                      wall, 0))
    metrics.dev_f1 = metrics.epochs[0].dev_f1
    if data.test.n_docs:
        metrics.test_report = evaluate(model, data.test)
        metrics.test_f1 = metrics.test_report.macro_f1
    return model, metrics


def as_dict(obj) -> dict:
    return asdict(obj)
