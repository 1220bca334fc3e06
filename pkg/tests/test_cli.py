import json
import re

import pytest

from conftest import REUTERS8_ROWS
from topicfuse import checkpoint, cli, synthetic


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus_files):
    """Pretrain once, then train a topicfused model on two seeds."""
    out = tmp_path_factory.mktemp("run")
    cfg = corpus_files / "run.cfg"
    assert cli.main(["--config", str(cfg), "--out", str(out), "pretrain"]) == 0
    two_seeds = out / "two.cfg"
    two_seeds.write_text(cfg.read_text().replace("train.seeds=1", "train.seeds=1,2"), encoding="utf-8")
    assert cli.main(["--config", str(two_seeds), "--out", str(out), "train", "--nvdm", str(out / "nvdm.ckpt")]) == 0
    return out


def records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestPretrain:
    def test_outputs(self, trained):
        ck = checkpoint.load(trained / "nvdm.ckpt")
        assert set(ck.tensors) == {"enc.mlp.w", "enc.mlp.b", "l1.w", "l1.b", "l2.w", "l2.b", "dec.u", "dec.c"}
        assert len((trained / "topics.txt").read_text().splitlines()) == 4

    def test_rerun_is_byte_identical(self, tmp_path, trained, corpus_files, capsys):
        code, out, _ = run(capsys, "--config", corpus_files / "run.cfg", "--out", tmp_path, "pretrain")
        assert code == 0 and "nvdm.ckpt" in out
        assert (tmp_path / "nvdm.ckpt").read_bytes() == (trained / "nvdm.ckpt").read_bytes()

    def test_missing_corpus_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(f"corpus.train={tmp_path / 'absent.tsv'}\ncorpus.dev=x\ncorpus.test=y\n", encoding="utf-8")
        code, _, err = run(capsys, "--config", cfg, "--out", tmp_path, "pretrain")
        assert code == 2
        assert "absent.tsv" in err

    def test_corpus_error_exit_code(self, tmp_path, corpus_files, capsys):
        bad = tmp_path / "train.tsv"
        bad.write_text("d1\tnot-a-label\tsome words\n", encoding="utf-8")
        cfg = tmp_path / "c.cfg"
        cfg.write_text((corpus_files / "run.cfg").read_text().replace(str(corpus_files / "train.tsv"), str(bad)),
                       encoding="utf-8")
        code, _, err = run(capsys, "--config", cfg, "--out", tmp_path, "pretrain")
        assert code == 4
        assert "train.tsv:1" in err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("nvdm.topics=3\n", encoding="utf-8")
        code, _, err = run(capsys, "--config", cfg, "pretrain")
        assert code == 2 and "nvdm.topics" in err


class TestTrain:
    def test_metrics_stream(self, trained):
        recs = records(trained / "metrics-topicfused-32.jsonl")
        assert [r["epoch"] for r in recs] == [1, 2, "final", 1, 2, "final", "summary"]
        summary = recs[-1]
        assert summary["seeds"] == [1, 2]
        assert summary["std_kind"] == "population"
        for r in recs:
            assert r["mode"] == "topicfused" and r["run_id"] == "topicfused-32"

    def test_one_checkpoint_per_seed(self, trained):
        for seed in (1, 2):
            assert checkpoint.load_model(trained / f"model-topicfused-32-seed{seed}.ckpt").nvdm is not None

    def test_reference_gives_retention(self, tmp_path, trained, corpus_files, capsys):
        code, _, _ = run(capsys, "--config", corpus_files / "run.cfg", "--out", tmp_path, "--seed", 1, "train",
                         "--nvdm", trained / "nvdm.ckpt", "--reference", trained / "metrics-topicfused-32.jsonl")
        assert code == 0
        summary = records(tmp_path / "metrics-topicfused-32.jsonl")[-1]
        assert "rtn" in summary

    def test_corrupt_nvdm_checkpoint(self, tmp_path, trained, corpus_files, capsys):
        blob = bytearray((trained / "nvdm.ckpt").read_bytes())
        blob[40] ^= 0xFF
        (tmp_path / "bad.ckpt").write_bytes(bytes(blob))
        code, _, err = run(capsys, "--config", corpus_files / "run.cfg", "--out", tmp_path, "train",
                           "--nvdm", tmp_path / "bad.ckpt")
        assert code == 3 and "checksum" in err

    def test_baselines_reject_partitions(self, tmp_path, corpus_files, capsys):
        cfg = tmp_path / "c.cfg"
        text = (corpus_files / "run.cfg").read_text().replace("mode=topicfused", "mode=bert_avg")
        cfg.write_text(text.replace("train.p=1", "train.p=2"), encoding="utf-8")
        code, _, err = run(capsys, "--config", cfg, "--out", tmp_path, "train")
        assert code == 2 and "train.p=1" in err

    def test_encoder_only_and_baseline(self, tmp_path, corpus_files, capsys):
        for mode in ("encoder_only", "bert_avg"):
            cfg = tmp_path / f"{mode}.cfg"
            cfg.write_text((corpus_files / "run.cfg").read_text().replace("mode=topicfused", f"mode={mode}"),
                           encoding="utf-8")
            code, out, _ = run(capsys, "--config", cfg, "--out", tmp_path, "train")
            assert code == 0
            assert f"{mode}-32 test_f1=" in out


class TestEval:
    def test_prints_three_decimals(self, trained, corpus_files, capsys):
        code, out, _ = run(capsys, "--config", corpus_files / "run.cfg", "eval",
                           trained / "model-topicfused-32-seed1.ckpt", "--split", "dev")
        assert code == 0
        assert re.match(r"macro-F1: \d\.\d{3}$", out.splitlines()[0])
        rec = json.loads(out.splitlines()[1])
        assert rec["split"] == "dev" and len(rec["f1"]) == 2

    def test_missing_model(self, tmp_path, corpus_files, capsys):
        code, _, err = run(capsys, "--config", corpus_files / "run.cfg", "eval", tmp_path / "none.ckpt")
        assert code == 2 and "none.ckpt" in err

    def test_truncated_model(self, tmp_path, trained, corpus_files, capsys):
        raw = (trained / "model-topicfused-32-seed1.ckpt").read_bytes()
        (tmp_path / "cut.ckpt").write_bytes(raw[:100])
        code, _, _ = run(capsys, "--config", corpus_files / "run.cfg", "eval", tmp_path / "cut.ckpt")
        assert code == 3


class TestExplain:
    @pytest.fixture
    def model_path(self, trained):
        return trained / "model-topicfused-32-seed1.ckpt"

    def doc(self, tmp_path, text):
        path = tmp_path / "doc.txt"
        path.write_text(text, encoding="utf-8")
        return path

    def test_label_topic_terms(self, tmp_path, model_path, capsys):
        code, out, _ = run(capsys, "explain", model_path, self.doc(tmp_path, "a1 a2 a3 a1"), "--top-m", 3)
        lines = out.splitlines()
        assert code == 0
        assert re.match(r"label: [01]$", lines[0])
        assert re.match(r"topic: \d+$", lines[1])
        assert len(lines) == 5

    def test_top_m_zero(self, tmp_path, model_path, capsys):
        _, out, _ = run(capsys, "explain", model_path, self.doc(tmp_path, "a1 a2"), "--top-m", 0)
        assert len(out.splitlines()) == 1 and out.startswith("label: ")

    def test_empty_bow(self, tmp_path, model_path, capsys):
        _, out, _ = run(capsys, "explain", model_path, self.doc(tmp_path, "the of zebra"))
        assert out.splitlines()[1] == "topic: none"

    def test_cluster_documents_report_their_cluster(self, tmp_path, model_path, capsys):
        model = checkpoint.load_model(model_path)
        for cluster, text in ((0, "a0 a1 a2 a3 a4 a5 a6"), (1, "b0 b1 b2 b3 b4 b5 b6")):
            lines = cli.explain(model, text, top_m=5)
            terms = [line.split()[0] for line in lines[2:]]
            assert sum(synthetic.cluster_of(w) == cluster for w in terms) >= 4

    def test_negative_top_m(self, tmp_path, model_path, capsys):
        code, _, _ = run(capsys, "explain", model_path, self.doc(tmp_path, "a1"), "--top-m", -1)
        assert code == 2


class TestProfile:
    def test_default_lengths(self, tmp_path, capsys):
        code, out, _ = run(capsys, "--out", tmp_path, "profile")
        rows = out.splitlines()
        assert code == 0
        assert rows[0] == "length,attn_ops,hours,co2_g,mem_entries_estimate"
        assert len(rows) == 6
        ops = {int(r.split(",")[0]): int(r.split(",")[1]) for r in rows[1:]}
        assert ops[512] == 4 * ops[256]
        assert list(ops.values()) == sorted(ops.values())
        assert (tmp_path / "profile.csv").read_text() == out

    @pytest.mark.parametrize("lengths", ["", "32,abc", "0,64", "-8"])
    def test_invalid_lengths(self, tmp_path, capsys, lengths):
        code, _, _ = run(capsys, "--out", tmp_path, "profile", f"--lengths={lengths}")
        assert code == 2


class TestPareto:
    def write(self, path, rows):
        path.write_text("".join(json.dumps({"run_id": n, "epoch": "final", "test_f1": f, "hours": t}) + "\n"
                                for n, f, t in rows), encoding="utf-8")
        return path

    def test_table_rows(self, tmp_path, capsys):
        metrics = self.write(tmp_path / "r8.jsonl", REUTERS8_ROWS)
        code, out, _ = run(capsys, "--out", tmp_path, "pareto", metrics)
        flags = {r.split(",")[0]: r.split(",")[-1] for r in out.splitlines()[1:]}
        assert code == 0
        assert flags["TopicBERT-256"] == flags["TopicBERT-512"] == "1"
        assert flags["BERT-512"] == "0"

    def test_single_point(self, tmp_path, capsys):
        metrics = self.write(tmp_path / "one.jsonl", [("only", 0.5, 1.0)])
        _, out, _ = run(capsys, "--out", tmp_path, "pareto", metrics)
        assert out.splitlines()[1].endswith(",1")

    def test_from_training_metrics(self, tmp_path, trained, capsys):
        code, out, _ = run(capsys, "--out", tmp_path, "pareto", trained / "metrics-topicfused-32.jsonl")
        assert code == 0
        assert out.splitlines()[1].startswith("topicfused-32,")

    def test_malformed_line(self, tmp_path, capsys):
        metrics = tmp_path / "bad.jsonl"
        metrics.write_text('{"run_id": "a", "test_f1": 0.5, "hours": 1}\n{not json\n', encoding="utf-8")
        code, _, err = run(capsys, "--out", tmp_path, "pareto", metrics)
        assert code == 2 and "bad.jsonl:2" in err

    def test_missing_field(self, tmp_path, capsys):
        metrics = tmp_path / "bad.jsonl"
        metrics.write_text('{"run_id": "a", "epoch": "final"}\n', encoding="utf-8")
        code, _, err = run(capsys, "--out", tmp_path, "pareto", metrics)
        assert code == 2 and ":1" in err
