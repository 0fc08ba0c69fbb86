"""Run a pretrained BERT over a corpus JSONL and write post embeddings.

Per post: concatenation of the [CLS] (position 0) hidden state of the
configured layers, last-to-first, e.g. the final four transformer blocks of
a 768-hidden model give a 3072-wide row. Posts keep the corpus file order
inside each author block, so rows line up with the chronological post order
the upstream filter wrote. Inference runs in eval mode with gradients off;
repeated runs over the same inputs produce identical files.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import yaml

log = logging.getLogger(__name__)


@dataclass
class ExtractorConfig:
    model: str
    corpus: str
    output: str
    layers: list = field(default_factory=lambda: [9, 10, 11, 12])
    max_length: int = 512
    batch_size: int = 16

    def __post_init__(self):
        if not self.layers:
            raise ValueError("need at least one layer to concatenate")
        if len(set(self.layers)) != len(self.layers):
            raise ValueError("duplicate layer indices")
        if any(l < 1 for l in self.layers):
            raise ValueError("layer indices are 1-based transformer block numbers")

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        unknown = set(raw) - {"model", "corpus", "output", "layers", "max_length", "batch_size"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


def read_corpus_blocks(path):
    """Group the corpus JSONL into (author_id, [texts]) blocks, preserving
    file order; posts of one author are expected contiguous and already
    chronological (the upstream filter writes them that way)."""
    blocks = {}
    order = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                author = str(raw["author"])
                text = str(raw["body"])
            except (KeyError, ValueError) as exc:
                raise ValueError(f"malformed corpus line {lineno}: {exc}") from exc
            if author not in blocks:
                blocks[author] = []
                order.append(author)
            blocks[author].append(text)
    return [(a, blocks[a]) for a in order]


def load_model(name_or_path):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    model = AutoModel.from_pretrained(name_or_path)
    model.eval()
    return tokenizer, model


def extract(config):
    """Run the extractor; returns summary stats."""
    from bert_extractor.writer import EmbeddingWriter

    torch.set_grad_enabled(False)
    tokenizer, model = load_model(config.model)
    n_layers = model.config.num_hidden_layers
    bad = [l for l in config.layers if l > n_layers]
    if bad:
        raise ValueError(f"layers {bad} exceed the model's {n_layers} blocks")
    dim = model.config.hidden_size * len(config.layers)
    # concatenate last-to-first so the final block leads
    layer_order = sorted(config.layers, reverse=True)

    blocks = read_corpus_blocks(config.corpus)
    truncated = 0
    total_posts = 0
    with EmbeddingWriter(config.output, dim) as writer:
        for author, texts in blocks:
            rows = []
            for start in range(0, len(texts), config.batch_size):
                batch = texts[start : start + config.batch_size]
                for t in batch:
                    if len(tokenizer(t, truncation=False)["input_ids"]) > config.max_length:
                        truncated += 1
                enc = tokenizer(
                    batch,
                    padding=True,
                    truncation=True,
                    max_length=config.max_length,
                    return_tensors="pt",
                )
                out = model(**enc, output_hidden_states=True)
                cls = torch.cat(
                    [out.hidden_states[l][:, 0, :] for l in layer_order], dim=-1
                )
                rows.append(cls.to(torch.float32).numpy())
            writer.add_author(author, np.vstack(rows))
            total_posts += len(texts)
    if truncated:
        log.info("truncated %d posts over %d tokens", truncated, config.max_length)
    log.info("wrote %d authors, %d posts, dim %d -> %s",
             len(blocks), total_posts, dim, config.output)
    return {"authors": len(blocks), "posts": total_posts, "dim": dim,
            "truncated": truncated}
