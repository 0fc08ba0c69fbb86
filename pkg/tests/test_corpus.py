"""Corpus ingestion, tokenization, filtering and partition tests."""
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from author2vec.corpus import (
    AuthorRecord,
    FilterPolicy,
    Post,
    TokenizerVocab,
    filter_authors,
    filter_posts,
    load_corpus,
    load_labels,
    mbti_axis_labels,
    split_authorship_eval,
    tokenize,
    vocab_from_corpus,
)
from author2vec.errors import ConfigError, DataError


@pytest.fixture
def vocab():
    tokens = ["[UNK]", "un", "##aff", "##able", "the", "cat", "sat", "on", "mat",
              "a", "##a", "b", "##b", "c", "##c", ".", ","]
    return TokenizerVocab(tokens=tokens)


def make_post(author="u1", t=0, text="the cat sat on the mat the cat sat on the mat",
              subreddit="r"):
    return Post(author_id=author, created_at=t, subreddit=subreddit, text=text)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestLoadCorpus:
    def test_groups_by_author(self, tmp_path):
        p = tmp_path / "posts.jsonl"
        write_jsonl(p, [
            {"author": "alice", "created_utc": 5, "subreddit": "r", "body": "second post"},
            {"author": "alice", "created_utc": 1, "subreddit": "r", "body": "first post"},
        ])
        records = load_corpus(p)
        assert len(records) == 1
        assert [x.created_at for x in records[0].posts] == [1, 5]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "posts.jsonl"
        p.write_text("")
        assert load_corpus(p) == []

    def test_malformed_line_names_index(self, tmp_path):
        p = tmp_path / "posts.jsonl"
        rows = [{"author": f"u{i}", "created_utc": i, "subreddit": "r", "body": "x y"}
                for i in range(10)]
        lines = [json.dumps(r) for r in rows]
        lines.insert(6, "{not json")
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="line 7"):
            load_corpus(p)

    def test_duplicates_removed(self, tmp_path):
        p = tmp_path / "posts.jsonl"
        row = {"author": "u", "created_utc": 3, "subreddit": "r", "body": "same text"}
        write_jsonl(p, [row, row, row])
        records = load_corpus(p)
        assert len(records[0].posts) == 1

    def test_deterministic_order(self, tmp_path):
        p = tmp_path / "posts.jsonl"
        write_jsonl(p, [
            {"author": "zed", "created_utc": 1, "subreddit": "r", "body": "hi there"},
            {"author": "amy", "created_utc": 2, "subreddit": "r", "body": "yo yo"},
        ])
        assert [r.author_id for r in load_corpus(p)] == ["amy", "zed"]


class TestTokenize:
    def test_empty_string(self, vocab):
        assert tokenize("", vocab) == []

    def test_greedy_longest_match(self, vocab):
        assert tokenize("unaffable", vocab) == ["un", "##aff", "##able"]

    def test_unk_fallback(self, vocab):
        assert tokenize("zzzqqq", vocab) == ["[UNK]"]

    def test_lowercase_and_punct_split(self, vocab):
        assert tokenize("The CAT.", vocab) == ["the", "cat", "."]

    def test_concatenation_property(self, vocab):
        # stripping continuation markers reconstructs any in-vocab word
        for word in ["unaffable", "abc", "cat", "aab"]:
            pieces = tokenize(word, vocab)
            if pieces == [vocab.unk_token]:
                continue
            rebuilt = "".join(p[2:] if p.startswith("##") else p for p in pieces)
            assert rebuilt == word

    @given(st.text(alphabet="abc", min_size=1, max_size=12))
    def test_abc_words_always_reconstruct(self, word):
        v = TokenizerVocab(tokens=["[UNK]", "a", "b", "c", "##a", "##b", "##c"])
        pieces = tokenize(word, v)
        rebuilt = "".join(p[2:] if p.startswith("##") else p for p in pieces)
        assert rebuilt == word

    def test_duplicate_vocab_rejected(self):
        with pytest.raises(DataError):
            TokenizerVocab(tokens=["[UNK]", "x", "x"])

    def test_missing_unk_rejected(self):
        with pytest.raises(DataError):
            TokenizerVocab(tokens=["a", "b"])


class TestFilterPosts:
    def test_short_post_removed(self, vocab):
        author = AuthorRecord("u", [make_post(text="the cat sat")])  # 3 tokens < 20
        policy = FilterPolicy(min_tokens_per_post=20)
        assert filter_posts(author, vocab, policy).posts == []

    def test_cap_keeps_most_recent(self, vocab):
        posts = [make_post(t=i) for i in range(600)]
        author = AuthorRecord("u", posts)
        policy = FilterPolicy(min_tokens_per_post=5, max_posts_per_author=500)
        kept = filter_posts(author, vocab, policy).posts
        assert len(kept) == 500
        assert kept[0].created_at == 100 and kept[-1].created_at == 599

    def test_repetition_junk_removed(self, vocab):
        author = AuthorRecord("u", [make_post(text="a" * 24)])
        policy = FilterPolicy(min_tokens_per_post=1)
        stats = {}
        assert filter_posts(author, vocab, policy, stats=stats).posts == []
        assert stats["junk_repetition"] == 1

    def test_url_only_removed(self, vocab):
        author = AuthorRecord("u", [make_post(text="https://x.org/v?w=1 www.y.com")])
        policy = FilterPolicy(min_tokens_per_post=1)
        stats = {}
        assert filter_posts(author, vocab, policy, stats=stats).posts == []
        assert stats["junk_url"] == 1

    def test_idempotent(self, vocab):
        posts = [make_post(t=i) for i in range(30)] + [make_post(t=99, text="a" * 30)]
        author = AuthorRecord("u", posts)
        policy = FilterPolicy(min_tokens_per_post=5, max_posts_per_author=20)
        once = filter_posts(author, vocab, policy)
        twice = filter_posts(once, vocab, policy)
        assert [p.created_at for p in once.posts] == [p.created_at for p in twice.posts]


class TestFilterAuthors:
    def _author(self, n):
        return AuthorRecord("u", [make_post(t=i) for i in range(n)])

    def test_below_threshold_dropped(self):
        policy = FilterPolicy(min_posts_per_author=20)
        assert filter_authors([self._author(19)], policy) == []

    def test_exactly_threshold_dropped(self):
        # the rule is strictly more than the minimum
        policy = FilterPolicy(min_posts_per_author=20)
        assert filter_authors([self._author(20)], policy) == []
        assert len(filter_authors([self._author(21)], policy)) == 1

    def test_empty_corpus(self):
        assert filter_authors([], FilterPolicy()) == []


class TestSplitAuthorshipEval:
    def _corpus(self, n_posts, n_authors=3):
        return [
            AuthorRecord(f"u{i}", [make_post(author=f"u{i}", t=t) for t in range(n_posts)])
            for i in range(n_authors)
        ]

    def test_default_split_sizes(self):
        train, test = split_authorship_eval(self._corpus(81), seed=1)
        assert all(len(a.posts) == 41 for a in train)
        assert all(len(a.posts) == 40 for a in test)

    def test_exactly_min_posts_not_retained(self):
        with pytest.raises(DataError):
            split_authorship_eval(self._corpus(80), seed=1)

    def test_same_seed_identical(self):
        c = self._corpus(100)
        t1 = split_authorship_eval(c, seed=9)
        t2 = split_authorship_eval(c, seed=9)
        for a, b in zip(t1[1], t2[1]):
            assert [p.created_at for p in a.posts] == [p.created_at for p in b.posts]

    def test_partition_disjoint_and_sized(self):
        train, test = split_authorship_eval(self._corpus(120), seed=3)
        for tr, te in zip(train, test):
            tr_keys = {p.created_at for p in tr.posts}
            te_keys = {p.created_at for p in te.posts}
            assert not (tr_keys & te_keys)
            assert len(te_keys) == 40
            assert len(tr_keys) + len(te_keys) == 120

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            split_authorship_eval(self._corpus(100), min_valid_posts=40,
                                  test_posts_per_author=40)


class TestMbtiAxisLabels:
    def test_intp(self):
        assert mbti_axis_labels("INTP") == {"EI": "I", "SN": "N", "TF": "T", "JP": "P"}

    def test_esfj(self):
        assert mbti_axis_labels("ESFJ") == {"EI": "E", "SN": "S", "TF": "F", "JP": "J"}

    def test_invalid_code(self):
        with pytest.raises(DataError):
            mbti_axis_labels("XXXX")

    def test_bijection_over_16_codes(self):
        import itertools

        seen = set()
        for letters in itertools.product("IE", "NS", "TF", "JP"):
            code = "".join(letters)
            labels = mbti_axis_labels(code)
            assert "".join(labels[a] for a in ("EI", "SN", "TF", "JP")) == code
            seen.add(tuple(sorted(labels.items())))
        assert len(seen) == 16


class TestLabels:
    def test_load_labels(self, tmp_path):
        p = tmp_path / "labels.csv"
        p.write_text("author_id,attribute,value\nu1,gender,f\nu1,mbti,INTP\nu2,gender,m\n")
        labels = load_labels(p)
        assert labels == {"u1": {"gender": "f", "mbti": "INTP"}, "u2": {"gender": "m"}}

    def test_bad_header(self, tmp_path):
        p = tmp_path / "labels.csv"
        p.write_text("author,attr,val\nu1,gender,f\n")
        with pytest.raises(DataError):
            load_labels(p)


def test_vocab_from_corpus_segments_all_words():
    posts = [make_post(text="hello world hello again friend")]
    vocab = vocab_from_corpus([AuthorRecord("u", posts)])
    for word in ["hello", "world", "again", "friend"]:
        assert vocab.unk_token not in tokenize(word, vocab)
