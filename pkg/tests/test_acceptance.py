"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible even
without ``-s``) and then asserts, so the line is emitted on failure too.
"""

import json
import math
import time

import numpy as np
import pytest

import gradcases
from conftest import REUTERS8_ROWS, brute_force_frontier, random_point_sets, small_config
from topicfuse import checkpoint, costing, nvdm, synthetic, trainer
from topicfuse.corpus import BowVector, Corpus, Document
from topicfuse.numkernel import RngState, no_grad


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


# ---- 1: gradient suite ------------------------------------------------------------


def test_criterion_1_gradient_suite(report):
    seeds = range(100)
    t0 = time.perf_counter()
    kernel = {name: gradcases.worst_error(build, seeds) for name, build in gradcases.KERNEL_CASES.items()}
    elbo = gradcases.worst_error(gradcases.nvdm_elbo_case, seeds)
    joint = gradcases.worst_error(gradcases.joint_loss_case, seeds)
    elapsed = time.perf_counter() - t0
    worst_op = max(kernel, key=kernel.get)
    ok = max(kernel.values()) < 1e-6 and elbo < 1e-5 and joint < 1e-5 and elapsed < 120
    report(1, ok, f"{len(kernel)} ops x 100 seeds worst {kernel[worst_op]:.2e} ({worst_op}); "
                  f"elbo {elbo:.2e}; joint {joint:.2e}; {elapsed:.1f}s")
    assert ok


# ---- 2: complexity oracle ---------------------------------------------------------


def exact_fit_corpus(n_docs, content_len, z):
    """Documents of exactly ``content_len`` tokens cycling through ``z`` words."""
    docs = []
    for d in range(n_docs):
        toks = [f"w{(d * content_len + j) % z}" for j in range(content_len)]
        docs.append(Document(f"d{d}", d % 2, " ".join(toks)))
    return Corpus(docs, [], [])


def measure(corpus, c, p, mode, nv):
    cfg = small_config(epochs=1, batch_size=c.b, p=p, max_len=c.N, n_topics=max(c.K, 1), enc_hidden=c.H_B,
                       enc_layers=c.n_l, enc_heads=1, mode=mode, samples=1)
    data = trainer.prepare_corpus(corpus, cfg)
    assert data.vocab.size == c.Z and data.train.overlap_tokens == 0
    _, m = trainer.finetune_joint(data, nv, cfg, 1)
    return m


def test_criterion_2_complexity_oracle(report):
    r = np.random.default_rng(2)
    failures = []
    for trial in range(50):
        p = int(r.choice([1, 2, 4]))
        x = int(r.integers(3, 17))
        b, n_b = int(r.integers(1, 4)), int(r.integers(1, 4))
        n, h, n_l, k = p * x, int(r.integers(1, 9)), int(r.integers(1, 3)), int(r.integers(1, 5))
        z = int(r.integers(2, min(30, b * n_b * (n - p)) + 1))
        c = costing.ComplexityInputs(b=b, N=n, p=p, H_B=h, n_l=n_l, n_b=n_b, K=k, Z=z)
        corpus = exact_fit_corpus(b * n_b, n - p, z)
        nv = nvdm.init_params(z, 4, k, RngState(trial))
        part = measure(corpus, c, p, "topicfused", nv)
        full = measure(corpus, c, 1, "topicfused", nv)
        enc_only = measure(corpus, c, p, "encoder_only", None)
        batches = p * n_b
        per_batch_attn = part.attn_ops // batches
        checks = {
            "epoch attention (partitioned)": part.attn_ops == costing.attention_ops_epoch(c, True),
            "epoch attention (reference)": full.attn_ops == costing.attention_ops_epoch(c, False),
            "epoch ratio p": full.attn_ops == p * part.attn_ops,
            "batch ratio p^2": full.attn_ops // n_b == p**2 * per_batch_attn,
            "batch attention + bKZ": per_batch_attn + part.topic_ops // batches == costing.predict_ops_batch(c, True),
            "epoch formula, K=0": enc_only.attn_ops == costing.predict_ops_epoch(
                costing.ComplexityInputs(b, n, p, h, n_l, n_b), True),
            "no partial windows": part.attn_ops == batches * costing.attention_ops_batch(c, True),
        }
        failures += [f"trial {trial} {c}: {name}" for name, ok in checks.items() if not ok]
    ok = not failures
    report(2, ok, "50 configs, integer equality on every count" if ok else "; ".join(failures[:3]))
    assert ok


# ---- 3: CO2 -------------------------------------------------------------------------


def test_criterion_3_co2(report):
    grams = costing.estimate_co2(3.123)
    lbs = costing.finetuning_footprint_lbs()
    rel = abs(lbs - 124_985) / 124_985
    ok = round(grams, 2) == 133.35 and abs(grams - 133.34) <= 0.02 and rel < 1e-3
    report(3, ok, f"3.123 h -> {grams:.2f} g (table 133.34); footprint {lbs:,.0f} lbs (rel err {rel:.1e})")
    assert ok


# ---- 4: Pareto ----------------------------------------------------------------------


def test_criterion_4_pareto(report):
    pts = [costing.ParetoPoint(name, f1, hours) for name, f1, hours in REUTERS8_ROWS]
    front = {p.label for p in costing.pareto_frontier(pts)}
    by_name = {p.label: p for p in pts}
    table_ok = ({"TopicBERT-512", "TopicBERT-256"} <= front and "BERT-512" not in front
                and costing.dominates(by_name["TopicBERT-256"], by_name["BERT-512"]))
    mismatches = 0
    for s in random_point_sets(1000, seed=4):
        if {id(p) for p in costing.pareto_frontier(s)} != {id(p) for p in brute_force_frontier(s)}:
            mismatches += 1
    ok = table_ok and mismatches == 0
    report(4, ok, f"frontier {sorted(front)}; oracle mismatches {mismatches}/1000")
    assert ok


# ---- 5 and 6: cross-partition synthetic experiment ---------------------------------


def xor_config(mode, p=2, epochs=6):
    return trainer.TrainConfig(epochs=epochs, batch_size=16, p=p, max_len=128, n_topics=8, nvdm_hidden=64,
                               nvdm_lr=0.05, nvdm_epochs=5, samples=1, enc_hidden=32, enc_heads=2, f_min=1,
                               mode=mode, seeds=(1,))


@pytest.fixture(scope="module")
def xor_setup():
    corpus = synthetic.xor_corpus(n_docs=2000, marker_repeats=5, seed=0)
    stop = synthetic.xor_stopwords()
    data = trainer.prepare_corpus(corpus, xor_config("topicfused"), stop)
    nv = trainer.pretrain_nvdm(data, xor_config("topicfused"), 1).params
    return corpus, stop, data, nv


def test_criterion_5_cross_partition(report, xor_setup):
    t0 = time.perf_counter()
    _, _, data, nv = xor_setup
    _, fused = trainer.finetune_joint(data, nv, xor_config("topicfused"), 1)
    _, plain = trainer.finetune_joint(data, None, xor_config("encoder_only"), 1)
    elapsed = time.perf_counter() - t0
    ok = plain.dev_f1 <= 0.65 and fused.dev_f1 >= 0.95 and elapsed < 15 * 60
    report(5, ok, f"dev macro-F1 encoder_only {plain.dev_f1:.3f} (<= 0.65), topicfused {fused.dev_f1:.3f} "
                  f"(>= 0.95); {elapsed:.0f}s")
    assert ok


def test_criterion_6_efficiency(report, xor_setup):
    corpus, stop, _, nv = xor_setup
    runs = {}
    for p in (1, 2):
        cfg = xor_config("topicfused", p=p, epochs=1)
        data = trainer.prepare_corpus(corpus, cfg, stop)
        _, m = trainer.finetune_joint(data, nv, cfg, 1)
        runs[p] = m
    half = runs[2].attn_ops_per_epoch * 2 == runs[1].attn_ops_per_epoch
    faster = runs[2].epochs[0].wall_s < runs[1].epochs[0].wall_s
    ok = half and faster
    report(6, ok, f"attention ops/epoch p=1 {runs[1].attn_ops_per_epoch:,} p=2 {runs[2].attn_ops_per_epoch:,}; "
                  f"wall/epoch p=1 {runs[1].epochs[0].wall_s:.1f}s p=2 {runs[2].epochs[0].wall_s:.1f}s")
    assert ok


# ---- 7: NVDM behaviour --------------------------------------------------------------


def topic_purity(params, data, n_terms=10):
    """Majority-cluster share of the top terms of the two most used topics."""
    with no_grad():
        mu, *_ = nvdm.encode_batch(data.train.counts, params, None)
    use = np.bincount(np.argmax(mu.data, axis=1), minlength=params.n_topics)
    shares, clusters = [], []
    for k in np.argsort(-use, kind="stable")[:2]:
        terms = [w for w, _ in nvdm.topic_terms(params, int(k), n_terms, data.vocab)]
        owners = [synthetic.cluster_of(w) for w in terms]
        major = max(set(owners), key=owners.count)
        shares.append(owners.count(major) / n_terms)
        clusters.append(major)
    return min(shares), len(set(clusters)) == 2


def test_criterion_7_nvdm(report):
    kl = [nvdm.kl_divergence([0.0], [0.0]), nvdm.kl_divergence([1.0], [0.0]), nvdm.kl_divergence([0.0], [1.0])]
    kl_ok = abs(kl[0]) <= 1e-12 and abs(kl[1] - 0.5) <= 1e-12 and abs(kl[2] - (math.e - 2) / 2) <= 1e-12
    worst_norm = 0.0
    for z in (1, 2, 5, 13, 20):
        params = nvdm.init_params(z, 4, 3, RngState(z))
        params.dec_u.data *= 3
        h = RngState(z + 50).normal((3,))
        total = sum(math.exp(nvdm.log_likelihood(BowVector({w: 1}, 1), h, params)) for w in range(z))
        worst_norm = max(worst_norm, abs(total - 1.0))
    cfg = trainer.TrainConfig(mode="nvdm_pretrain", n_topics=5, nvdm_hidden=32, nvdm_lr=0.05, nvdm_epochs=15,
                              nvdm_batch=32, samples=5, f_min=1, max_len=64, seeds=(1,))
    data = trainer.prepare_corpus(synthetic.two_cluster_corpus(), cfg)
    purity, separated = topic_purity(trainer.pretrain_nvdm(data, cfg, 1).params, data)
    ok = kl_ok and worst_norm <= 1e-12 and purity >= 0.9 and separated
    report(7, ok, f"KL {abs(kl[0]):.1f}/{kl[1]:.12f}/{kl[2]:.12f}; normalisation err {worst_norm:.1e}; "
                  f"purity {purity:.0%} (two distinct clusters: {separated})")
    assert ok


# ---- 8: determinism and persistence --------------------------------------------------


def test_criterion_8_determinism(report, tmp_path, cluster_data, cluster_nvdm):
    cfg = small_config(epochs=2)
    blobs, streams, models = [], [], []
    for i in range(2):
        model, m = trainer.finetune_joint(cluster_data, cluster_nvdm.params, cfg, 1)
        recs = [{k: v for k, v in r.items() if k not in ("wall_s", "co2_g")}
                for r in m.epoch_records() + [m.final_record()]]
        streams.append("\n".join(json.dumps(r, sort_keys=True) for r in recs).encode())
        blobs.append(checkpoint.save_model(tmp_path / f"m{i}.ckpt", model))
        models.append(model)
    reloaded = checkpoint.load_model(tmp_path / "m0.ckpt")
    diff = np.abs(models[0].predict_log_proba(cluster_data.dev) - reloaded.predict_log_proba(cluster_data.dev)).max()
    ok = streams[0] == streams[1] and blobs[0] == blobs[1] and diff < 1e-5
    report(8, ok, f"metrics identical: {streams[0] == streams[1]}; checkpoints identical: {blobs[0] == blobs[1]}; "
                  f"round-trip dev logit diff {diff:.1e}")
    assert ok
