"""Experiment configuration: one YAML document, CLI overrides via dotted
key paths (`-O pretrain.epochs=50`)."""
from __future__ import annotations

import os

import yaml

from author2vec.errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "output": "out",
    "threads": 1,
    "corpus": {
        "posts": None,
        "labels": None,
        "vocab": None,
        "min_tokens_per_post": 20,
        "min_posts_per_author": 20,
        "max_posts_per_author": 500,
        "junk_rules": ["repetition", "url_only"],
        "exclude_subreddits": [],
        "exclude_keywords": [],
    },
    "embed": {
        "embedder": "stub",
        "dim": 3072,
        "file": None,
        "trait_attribute": None,
        "trait_strength": 0.0,
    },
    "pretrain": {
        "posts_min": 10,
        "posts_max": 40,
        "batch_size": 32,
        "epochs": 30,
        "lr": 3e-3,
        "lr_decay": 1.0,
        "authors": None,
        "hidden_size": 512,
        "code_dim": 768,
        "k_train": 32,
        "k_infer": 64,
        "head_hidden": [256],
        "pooling": "final",
        "heldout_posts": 10,
        "use_all_posts": False,
        "patience": 5,
    },
    "baseline": {
        "rank": 500,
        "min_df": 10,
        "max_df_frac": 0.30,
        "mode": "concat_doc",
        "topics": 20,
        "alpha": None,
        "beta": 0.01,
        "iterations": 500,
        "fold_in_sweeps": 50,
        "wordvec_table": None,
    },
    "eval": {
        "embeddings": {},
        "attribute": None,
        "scheme": "kfold",
        "k": 5,
        "stratify": True,
        "probe": "logreg",
        "hidden": [256],
        "l2": 1.0,
        "max_iters": 300,
    },
    "viz": {
        "embeddings": None,
        "attribute": None,
        "perplexity": 30.0,
        "iterations": 1000,
        "learning_rate": 200.0,
    },
    "synth": {
        "authors": 200,
        "posts_per_author": 60,
        "vocab_size": 400,
        "attribute": "trait",
    },
}


def _deep_merge(base, override):
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            loaded = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {path} must hold a key-value tree")
    return _deep_merge(DEFAULTS, loaded)


def apply_overrides(config, assignments):
    """Apply `a.b.c=value` assignments; values parse as YAML scalars."""
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        dotted, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = config
        keys = dotted.split(".")
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[keys[-1]] = value
    return config


def require(config, dotted):
    node = config
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node or node[key] is None:
            raise ConfigError(f"config key {dotted!r} is required")
        node = node[key]
    return node


def require_path(config, dotted):
    path = require(config, dotted)
    if not os.path.exists(path):
        raise ConfigError(f"config key {dotted!r} points to missing path {path!r}")
    return path
