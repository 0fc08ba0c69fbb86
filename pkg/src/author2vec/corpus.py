"""Corpus ingestion, filtering, subword tokenization and partitioning.

Post dumps arrive as JSON lines ({author, created_utc, subreddit, body});
labels as a `author_id,attribute,value` CSV; vocabularies as one token per
line with line index as token id. All operations here are pure over
immutable inputs.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field, replace

import numpy as np

from author2vec.errors import ConfigError, DataError

log = logging.getLogger(__name__)

MAX_WORD_CHARS = 100
CONTINUATION = "##"

_PUNCT_SPLIT = re.compile(r"(\W)", re.UNICODE)
_URL = re.compile(r"^(https?://|www\.)\S*$", re.IGNORECASE)


@dataclass(frozen=True)
class Post:
    author_id: str
    created_at: int
    subreddit: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise DataError(f"empty post text for author {self.author_id!r}")
        if self.created_at < 0:
            raise DataError(f"negative timestamp for author {self.author_id!r}")


@dataclass
class AuthorRecord:
    author_id: str
    posts: list
    labels: dict = field(default_factory=dict)


@dataclass
class TokenizerVocab:
    """Greedy longest-match subword vocabulary. Continuation pieces carry the
    `##` prefix; unknown words collapse to unk_token."""

    tokens: list
    unk_token: str = "[UNK]"

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")
        if self.unk_token not in self.tokens:
            raise DataError(f"unk token {self.unk_token!r} missing from vocabulary")
        self._token_set = set(self.tokens)

    def __contains__(self, token):
        return token in self._token_set

    @classmethod
    def from_file(cls, path, unk_token="[UNK]"):
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens=tokens, unk_token=unk_token)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.tokens:
                fh.write(t + "\n")


@dataclass
class FilterPolicy:
    min_tokens_per_post: int = 20
    min_posts_per_author: int = 20
    max_posts_per_author: int = 500
    junk_rules: tuple = ("repetition", "url_only")
    # documented recipe for the keyword/subreddit scrub used when building
    # attribute datasets; empty by default
    exclude_subreddits: tuple = ()
    exclude_keywords: tuple = ()

    def __post_init__(self):
        if self.min_posts_per_author < 1:
            raise ConfigError("min_posts_per_author must be >= 1")
        if self.max_posts_per_author < self.min_posts_per_author:
            raise ConfigError("max_posts_per_author must be >= min_posts_per_author")
        unknown = set(self.junk_rules) - {"repetition", "url_only"}
        if unknown:
            raise ConfigError(f"unknown junk rules: {sorted(unknown)}")


def load_corpus(path, format="jsonl"):
    """Group a post dump into AuthorRecords, chronological posts, authors in
    lexicographic order. Duplicate (author, created_at, text) triples are
    dropped with a logged count; a malformed line raises naming its number."""
    if format != "jsonl":
        raise ConfigError(f"unsupported corpus format {format!r}")
    by_author = {}
    seen = set()
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                post = Post(
                    author_id=str(raw["author"]),
                    created_at=int(raw["created_utc"]),
                    subreddit=str(raw.get("subreddit", "")),
                    text=str(raw["body"]),
                )
            except (KeyError, ValueError, TypeError, DataError) as exc:
                raise DataError(f"malformed post record at line {lineno}: {exc}") from exc
            key = (post.author_id, post.created_at, post.text)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            by_author.setdefault(post.author_id, []).append(post)
    if duplicates:
        log.info("dropped %d duplicate posts while loading %s", duplicates, path)
    records = []
    for author_id in sorted(by_author):
        posts = sorted(by_author[author_id], key=lambda p: (p.created_at, p.text))
        records.append(AuthorRecord(author_id=author_id, posts=posts))
    return records


def load_labels(path):
    """Read the `author_id,attribute,value` CSV into {author: {attr: value}}."""
    labels = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["author_id", "attribute", "value"]:
            raise DataError(f"label file {path} must start with author_id,attribute,value")
        for row in reader:
            if len(row) != 3:
                raise DataError(f"bad label row {row!r} in {path}")
            labels.setdefault(row[0], {})[row[1]] = row[2]
    return labels


def attach_labels(records, labels):
    for r in records:
        r.labels = dict(labels.get(r.author_id, {}))
    return records


def tokenize(text, vocab):
    """Lowercase, split on punctuation, then greedy longest-match subword
    segmentation. Words with no covering segmentation emit vocab.unk_token.
    Total function: never raises on content."""
    out = []
    for word in _PUNCT_SPLIT.split(text.lower()):
        word = word.strip()
        if not word:
            continue
        out.extend(_wordpiece(word, vocab))
    return out


def _wordpiece(word, vocab):
    if len(word) > MAX_WORD_CHARS:
        return [vocab.unk_token]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return [vocab.unk_token]
        pieces.append(found)
        start = end
    return pieces


def _max_char_run(text):
    best = run = 1
    for prev, cur in zip(text, text[1:]):
        run = run + 1 if cur == prev else 1
        best = max(best, run)
    return best


def _is_junk(post, tokens, rules):
    if "repetition" in rules:
        stripped = post.text.strip()
        if len(stripped) > 0 and _max_char_run(stripped) / len(stripped) > 0.5:
            return "junk_repetition"
    if "url_only" in rules:
        words = post.text.split()
        if words and all(_URL.match(w) for w in words):
            return "junk_url"
    return None


def filter_posts(author, vocab, policy, stats=None):
    """Drop short and junk posts, then keep the most recent
    max_posts_per_author. Idempotent; may return an author with zero posts.
    `stats` (optional dict) accumulates drop-reason counts."""
    kept = []
    for post in author.posts:
        if policy.exclude_subreddits and post.subreddit in policy.exclude_subreddits:
            _bump(stats, "excluded_subreddit")
            continue
        tokens = tokenize(post.text, vocab)
        if policy.exclude_keywords and any(
            t in policy.exclude_keywords for t in tokens
        ):
            _bump(stats, "excluded_keyword")
            continue
        junk = _is_junk(post, tokens, policy.junk_rules)
        if junk is not None:
            _bump(stats, junk)
            continue
        if len(tokens) < policy.min_tokens_per_post:
            _bump(stats, "too_few_tokens")
            continue
        kept.append(post)
    if len(kept) > policy.max_posts_per_author:
        _bump(stats, "over_post_cap", len(kept) - policy.max_posts_per_author)
        kept = kept[-policy.max_posts_per_author :]
    return replace(author, posts=kept)


def _bump(stats, key, n=1):
    if stats is not None:
        stats[key] = stats.get(key, 0) + n


def filter_authors(corpus, policy):
    """Keep only authors with strictly more than min_posts_per_author valid
    posts (an author with exactly the threshold is dropped)."""
    return [a for a in corpus if len(a.posts) > policy.min_posts_per_author]


# pre-training keeps authors with more than 20 posts; the personality
# benchmark only drops authors with fewer than 10 (i.e. keeps >= 10,
# which the strict > rule expresses as a threshold of 9)
PRETRAIN_FILTER = FilterPolicy(min_posts_per_author=20)
MBTI_FILTER = FilterPolicy(min_posts_per_author=9)


def filter_corpus(records, vocab, policy):
    """Apply both filters; returns (records, stats) for the ingest report."""
    stats = {}
    filtered = [filter_posts(a, vocab, policy, stats=stats) for a in records]
    kept = filter_authors(filtered, policy)
    stats["authors_in"] = len(records)
    stats["authors_kept"] = len(kept)
    stats["authors_dropped"] = len(records) - len(kept)
    stats["posts_kept"] = sum(len(a.posts) for a in kept)
    return kept, stats


def split_authorship_eval(corpus, min_valid_posts=80, test_posts_per_author=40, seed=0):
    """Fixed train/test partition for authorship evaluation.

    Authors with strictly more than min_valid_posts posts are retained;
    exactly test_posts_per_author randomly chosen posts per author move to
    the test partition. Both partitions are fixed given the seed.
    """
    if min_valid_posts <= test_posts_per_author:
        raise ConfigError("min_valid_posts must exceed test_posts_per_author")
    qualified = [a for a in corpus if len(a.posts) > min_valid_posts]
    if not qualified:
        raise DataError(
            f"no authors with more than {min_valid_posts} valid posts"
        )
    rng = np.random.default_rng(seed)
    train, test = [], []
    for author in qualified:
        n = len(author.posts)
        test_idx = set(rng.choice(n, size=test_posts_per_author, replace=False).tolist())
        train.append(
            replace(author, posts=[p for i, p in enumerate(author.posts) if i not in test_idx])
        )
        test.append(
            replace(author, posts=[p for i, p in enumerate(author.posts) if i in test_idx])
        )
    return train, test


MBTI_AXES = (("EI", "IE"), ("SN", "NS"), ("TF", "TF"), ("JP", "JP"))


def mbti_axis_labels(type_string):
    """Map a 4-letter personality code to one binary label per axis,
    e.g. "INTP" -> {"EI": "I", "SN": "N", "TF": "T", "JP": "P"}."""
    code = type_string.strip().upper()
    if len(code) != 4:
        raise DataError(f"invalid personality code {type_string!r}")
    out = {}
    for (axis, allowed), letter in zip(MBTI_AXES, code):
        if letter not in allowed:
            raise DataError(f"invalid personality code {type_string!r}")
        out[axis] = letter
    return out


def vocab_from_corpus(records, max_words=8000, unk_token="[UNK]"):
    """Build a whole-word vocabulary with single-character fallback pieces, so
    every alphanumeric word segments without hitting unk."""
    from collections import Counter

    counts = Counter()
    chars = set()
    for record in records:
        for post in record.posts:
            for word in _PUNCT_SPLIT.split(post.text.lower()):
                word = word.strip()
                if word:
                    counts[word] += 1
                    chars.update(word)
    words = [w for w, _ in counts.most_common(max_words)]
    tokens = [unk_token]
    tokens.extend(sorted(chars))
    tokens.extend(CONTINUATION + c for c in sorted(chars))
    for w in sorted(words):
        if w not in tokens:
            tokens.append(w)
    # dedupe while keeping order (single chars can also be frequent words)
    seen = set()
    uniq = [t for t in tokens if not (t in seen or seen.add(t))]
    return TokenizerVocab(tokens=uniq, unk_token=unk_token)


def save_corpus(records, path):
    """Write AuthorRecords back to the JSONL post format (author blocks in
    record order, posts chronological)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            for post in record.posts:
                fh.write(
                    json.dumps(
                        {
                            "author": post.author_id,
                            "created_utc": post.created_at,
                            "subreddit": post.subreddit,
                            "body": post.text,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
