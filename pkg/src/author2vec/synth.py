"""Synthetic corpus generation for end-to-end experiments.

Each author gets a private unigram distribution over a shared token
vocabulary (so word choice carries authorship signal for the count-based
baselines) and a binary attribute. The attribute is planted in embedding
space via the stub embedder's trait axis, not in the token stream, which is
what makes it invisible to bag-of-words baselines.
"""
from __future__ import annotations

import itertools

import numpy as np

from author2vec.corpus import AuthorRecord, Post


def generate_corpus(
    n_authors=200,
    posts_per_author=60,
    vocab_size=400,
    tokens_per_post=(25, 40),
    attribute="trait",
    seed=0,
    author_concentration=1.0,
):
    """Returns (records, traits) where traits maps author_id -> +1.0 / -1.0
    by attribute class. Posts are chronological with distinct timestamps."""
    rng = np.random.default_rng(seed)
    word_list = [f"w{z:04d}" for z in range(vocab_size)]
    # balanced random class assignment, fixed by the seed
    assignment = np.array(["yes", "no"])[
        rng.permutation(np.arange(n_authors) % 2)
    ]
    mbti_codes = ["".join(p) for p in itertools.product("IE", "NS", "TF", "JP")]
    records = []
    traits = {}
    for a in range(n_authors):
        author_id = f"author{a:04d}"
        label = str(assignment[a])
        traits[author_id] = 1.0 if label == "yes" else -1.0
        # extra label-only attributes so the named benchmark drivers have
        # something to run against (no signal planted for these)
        extra = {
            "gender": "m" if rng.random() < 0.7 else "f",
            "depressed": "yes" if rng.random() < 0.5 else "no",
            "mbti": mbti_codes[int(rng.integers(16))],
        }
        # sparse per-author word preferences
        weights = rng.dirichlet(np.full(vocab_size, author_concentration))
        posts = []
        for p in range(posts_per_author):
            n_tok = int(rng.integers(tokens_per_post[0], tokens_per_post[1] + 1))
            words = rng.choice(vocab_size, size=n_tok, replace=True, p=weights)
            text = " ".join(word_list[w] for w in words)
            posts.append(
                Post(
                    author_id=author_id,
                    created_at=1_500_000_000 + p * 3600,
                    subreddit="synthetic",
                    text=text,
                )
            )
        records.append(
            AuthorRecord(author_id=author_id, posts=posts,
                         labels={attribute: label, **extra})
        )
    return records, traits


def token_vocabulary(vocab_size=400, unk_token="[UNK]"):
    from author2vec.corpus import TokenizerVocab

    tokens = [unk_token] + [f"w{z:04d}" for z in range(vocab_size)]
    return TokenizerVocab(tokens=tokens, unk_token=unk_token)
