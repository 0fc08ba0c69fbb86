"""Extractor tests, including the cross-component integration check against
the primary package's reader."""
import os

import numpy as np
import pytest
import yaml

from bert_extractor.cli import main
from bert_extractor.extract import ExtractorConfig, extract, read_corpus_blocks
from bert_extractor.writer import EmbeddingWriter


def make_config(tmp_path, corpus, model_dir, **overrides):
    cfg = {
        "model": model_dir,
        "corpus": corpus,
        "output": str(tmp_path / "posts.av1embed"),
        "layers": [1, 2, 3, 4],
        "max_length": 512,
        "batch_size": 4,
    }
    cfg.update(overrides)
    path = tmp_path / (os.path.basename(cfg["output"]) + ".yaml")
    path.write_text(yaml.safe_dump(cfg))
    return str(path), cfg


@pytest.fixture(scope="session")
def extracted(tmp_path_factory, tiny_bert_dir, fixture_corpus):
    corpus, blocks = fixture_corpus
    tmp = tmp_path_factory.mktemp("extract_run")
    cfg_path, cfg = make_config(tmp, corpus, tiny_bert_dir)
    stats = extract(ExtractorConfig.from_file(cfg_path))
    return cfg["output"], blocks, stats, cfg_path


class TestIntegrationWithPrimaryReader:
    def test_dim_3072_and_reader_validates(self, extracted):
        from author2vec.embedstore import read_embeddings, read_index

        output, blocks, stats, _ = extracted
        dim, index = read_index(output)
        assert dim == 3072
        assert stats["dim"] == 3072
        records = read_embeddings(output)  # full validation pass
        assert [r.author_id for r in records] == [a for a, _ in blocks]
        for record, (_, texts) in zip(records, blocks):
            assert record.rows == len(texts)
            assert np.all(np.isfinite(record.values))
        print("ACCEPTANCE extractor-integration: PASS "
              f"dim={dim}, authors={len(records)}, posts={sum(r.rows for r in records)}")

    def test_repeated_runs_identical(self, extracted, tmp_path, tiny_bert_dir,
                                     fixture_corpus):
        output, _, _, _ = extracted
        corpus, _ = fixture_corpus
        cfg_path, cfg = make_config(tmp_path, corpus, tiny_bert_dir)
        assert main(["extract", "--config", cfg_path]) == 0
        with open(output, "rb") as a, open(cfg["output"], "rb") as b:
            assert a.read() == b.read()

    def test_truncation_counted(self, extracted):
        _, _, stats, _ = extracted
        assert stats["truncated"] == 1
        assert stats["posts"] == 20


class TestRowSemantics:
    def test_identical_posts_identical_rows(self, tmp_path, tiny_bert_dir, corpus_writer):
        from author2vec.embedstore import read_embeddings

        write_corpus = corpus_writer

        corpus = tmp_path / "dup.jsonl"
        write_corpus(corpus, [("u", ["the cat post words", "dog words",
                                     "the cat post words"])])
        cfg_path, cfg = make_config(tmp_path, str(corpus), tiny_bert_dir)
        extract(ExtractorConfig.from_file(cfg_path))
        (record,) = read_embeddings(cfg["output"])
        assert record.values[0].tobytes() == record.values[2].tobytes()
        assert record.values[0].tobytes() != record.values[1].tobytes()

    def test_rows_follow_corpus_order(self, tmp_path, tiny_bert_dir, corpus_writer):
        from author2vec.embedstore import read_embeddings

        write_corpus = corpus_writer

        texts = [f"the cat {chr(97 + i)} post" for i in range(5)]
        fwd = tmp_path / "fwd.jsonl"
        rev = tmp_path / "rev.jsonl"
        write_corpus(fwd, [("u", texts)])
        write_corpus(rev, [("u", texts[::-1])])
        # batch_size 1: identical per-post tensors regardless of position
        cfg_f, cf = make_config(tmp_path, str(fwd), tiny_bert_dir, batch_size=1,
                                output=str(tmp_path / "f.av1embed"))
        cfg_r, cr = make_config(tmp_path, str(rev), tiny_bert_dir, batch_size=1,
                                output=str(tmp_path / "r.av1embed"))
        extract(ExtractorConfig.from_file(cfg_f))
        extract(ExtractorConfig.from_file(cfg_r))
        (a,) = read_embeddings(cf["output"])
        (b,) = read_embeddings(cr["output"])
        assert a.values.tobytes() == b.values[::-1].copy().tobytes()

    def test_layer_subset_changes_dim(self, tmp_path, tiny_bert_dir, corpus_writer):
        from author2vec.embedstore import read_index

        write_corpus = corpus_writer

        corpus = tmp_path / "two.jsonl"
        write_corpus(corpus, [("u", ["the cat", "dog post"])])
        cfg_path, cfg = make_config(tmp_path, str(corpus), tiny_bert_dir,
                                    layers=[3, 4])
        extract(ExtractorConfig.from_file(cfg_path))
        dim, _ = read_index(cfg["output"])
        assert dim == 2 * 768


class TestConfigValidation:
    def test_layers_exceeding_model(self, tmp_path, tiny_bert_dir, fixture_corpus):
        corpus, _ = fixture_corpus
        cfg_path, _ = make_config(tmp_path, corpus, tiny_bert_dir, layers=[9, 10, 11, 12])
        with pytest.raises(ValueError, match="exceed"):
            extract(ExtractorConfig.from_file(cfg_path))

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("model: x\ncorpus: y\noutput: z\nbogus: 1\n")
        with pytest.raises(ValueError, match="bogus"):
            ExtractorConfig.from_file(path)

    def test_cli_error_exit(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("model: x\ncorpus: y\noutput: z\nlayers: [0]\n")
        assert main(["extract", "--config", str(path)]) == 1

    def test_corpus_groups_preserve_order(self, tmp_path, corpus_writer):
        write_corpus = corpus_writer
        corpus = tmp_path / "c.jsonl"
        write_corpus(corpus, [("zed", ["a b"]), ("amy", ["c d", "e f"])])
        blocks = read_corpus_blocks(corpus)
        assert [a for a, _ in blocks] == ["zed", "amy"]
        assert blocks[1][1] == ["c d", "e f"]


class TestWriter:
    def test_duplicate_author_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="duplicate"):
            with EmbeddingWriter(tmp_path / "x", 4) as w:
                w.add_author("u", np.ones((1, 4)))
                w.add_author("u", np.ones((1, 4)))

    def test_wrong_width_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="shape"):
            with EmbeddingWriter(tmp_path / "x", 4) as w:
                w.add_author("u", np.ones((2, 5)))

    def test_nonfinite_rejected(self, tmp_path):
        bad = np.ones((2, 4))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            with EmbeddingWriter(tmp_path / "x", 4) as w:
                w.add_author("u", bad)

    def test_empty_file_valid_for_primary_reader(self, tmp_path):
        from author2vec.embedstore import read_embeddings

        path = tmp_path / "empty.av1embed"
        with EmbeddingWriter(path, 0) as w:
            pass
        assert read_embeddings(path) == []
