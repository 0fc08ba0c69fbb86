"""Shared fixtures: a tiny randomly-initialized BERT saved locally (no
network), and a 20-post corpus in the upstream JSONL layout."""
import json
import string

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_bert_dir(tmp_path_factory):
    from transformers import BertConfig, BertModel, BertTokenizerFast

    model_dir = tmp_path_factory.mktemp("tiny_bert")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += list(string.ascii_lowercase)
    vocab += ["##" + c for c in string.ascii_lowercase]
    vocab += ["the", "cat", "dog", "post", "words", "reddit", "about", "things"]
    (model_dir / "vocab.txt").write_text("\n".join(vocab) + "\n")

    tokenizer = BertTokenizerFast(vocab_file=str(model_dir / "vocab.txt"),
                                  do_lower_case=True)
    tokenizer.save_pretrained(model_dir)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=4,
        num_attention_heads=12,
        intermediate_size=1024,
        max_position_embeddings=512,
    )
    BertModel(config).save_pretrained(model_dir)
    return str(model_dir)


def write_corpus(path, blocks):
    """blocks: list of (author, [texts]); written in order, timestamps ascending."""
    with open(path, "w", encoding="utf-8") as fh:
        for author, texts in blocks:
            for i, text in enumerate(texts):
                fh.write(json.dumps({
                    "author": author,
                    "created_utc": 1_600_000_000 + i,
                    "subreddit": "r",
                    "body": text,
                }) + "\n")


@pytest.fixture(scope="session")
def corpus_writer():
    return write_corpus


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Three authors, 20 posts total, one post long enough to truncate."""
    tmp = tmp_path_factory.mktemp("corpus")
    path = tmp / "corpus.jsonl"
    long_post = " ".join(["the cat dog"] * 230)  # > 512 wordpiece tokens
    blocks = [
        ("alice", [f"the cat post words about things number {chr(97 + i)}" for i in range(7)]),
        ("bob", [f"dog reddit words {chr(97 + i)} cat" for i in range(6)] + [long_post]),
        ("carol", [f"about {chr(97 + i)} the reddit post" for i in range(6)]),
    ]
    write_corpus(path, blocks)
    return str(path), blocks
