import numpy as np
import pytest

from topicfuse import costing, synthetic, trainer
from topicfuse.corpus import write_tsv


# Reuters8 rows of the main results table: (model, macro-F1, total fine-tuning hours)
REUTERS8_ROWS = [
    ("CNN", 0.852, 0.340),
    ("BERT-Avg", 0.882, 0.010),
    ("BERT-Avg+DTR", 0.867, 0.015),
    ("DistilBERT", 0.934, 1.938),
    ("BERT-512", 0.935, 3.123),
    ("TopicBERT-512", 0.950, 3.183),
    ("TopicBERT-256", 0.942, 1.870),
    ("TopicBERT-128", 0.928, 1.610),
    ("TopicBERT-64", 0.921, 1.956),
]


def brute_force_frontier(points):
    return [a for a in points if not any(costing.dominates(b, a) for b in points)]


def random_point_sets(n_sets, seed=0, max_points=30):
    """Point sets on a coarse grid so ties in F1 and cost are common."""
    r = np.random.default_rng(seed)
    for _ in range(n_sets):
        n = int(r.integers(1, max_points + 1))
        f1 = r.integers(0, 8, n) / 8
        cost = r.integers(0, 8, n) / 2
        yield [costing.ParetoPoint(f"r{i}", float(f1[i]), float(cost[i])) for i in range(n)]


def small_config(**overrides) -> trainer.TrainConfig:
    """A configuration small enough for unit tests to train in seconds."""
    base = dict(epochs=2, batch_size=8, p=1, max_len=32, n_topics=4, nvdm_hidden=16, nvdm_lr=0.05,
                nvdm_epochs=3, samples=2, enc_layers=1, enc_hidden=8, enc_heads=2, f_min=1, seq_min_count=1,
                dropout=0.0, seeds=(1,), baseline_steps=50)
    base.update(overrides)
    return trainer.TrainConfig(**base)


@pytest.fixture(scope="session")
def cluster_corpus():
    return synthetic.two_cluster_corpus(n_docs=120, doc_len=20, seed=3)


@pytest.fixture(scope="session")
def cluster_data(cluster_corpus):
    return trainer.prepare_corpus(cluster_corpus, small_config())


@pytest.fixture(scope="session")
def cluster_nvdm(cluster_data):
    return trainer.pretrain_nvdm(cluster_data, small_config(), 1)


@pytest.fixture(scope="session")
def trained_model(cluster_data, cluster_nvdm):
    model, metrics = trainer.finetune_joint(cluster_data, cluster_nvdm.params, small_config(), 1)
    return model, metrics


@pytest.fixture(scope="session")
def corpus_files(tmp_path_factory, cluster_corpus):
    """TSV splits, a stopword file and a matching config on disk."""
    root = tmp_path_factory.mktemp("corpus")
    for name in ("train", "dev", "test"):
        write_tsv(root / f"{name}.tsv", getattr(cluster_corpus, name))
    (root / "stop.txt").write_text("the\nof\n", encoding="utf-8")
    cfg = root / "run.cfg"
    cfg.write_text(
        "\n".join([
            f"corpus.train={root / 'train.tsv'}",
            f"corpus.dev={root / 'dev.tsv'}",
            f"corpus.test={root / 'test.tsv'}",
            f"corpus.stopwords={root / 'stop.txt'}",
            "vocab.f_min=1",
            "nvdm.k=4", "nvdm.h=16", "nvdm.samples=2", "nvdm.lr=0.05", "nvdm.epochs=3",
            "enc.layers=1", "enc.hidden=8", "enc.heads=2", "enc.max_len=32", "enc.min_count=1", "enc.dropout=0",
            "train.epochs=2", "train.batch=8", "train.p=1", "train.seeds=1",
            "mode=topicfused",
        ]) + "\n",
        encoding="utf-8",
    )
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(0)
