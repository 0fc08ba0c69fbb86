"""Baseline embedder tests: dictionary pruning, TF-IDF, randomized SVD
against a dense LAPACK oracle, collapsed Gibbs LDA, word-vector averaging,
and the binary model formats."""
import numpy as np
import pytest
import scipy.sparse as sp

from author2vec.baselines import (
    WordVectorTable,
    build_dictionary,
    fit_lda,
    fit_lsi,
    fit_lsi_from_posts,
    lda_user_embedding,
    load_lda,
    load_lsi,
    lsi_post_vectors,
    lsi_user_embedding,
    randomized_svd,
    save_lda,
    save_lsi,
    tfidf_matrix,
    tfidf_vector,
)
from author2vec.errors import ConfigError, DataError


def decaying_matrix(rng, m, n, rate=0.15):
    """Random matrix with an exponentially decaying spectrum, the regime
    TF-IDF matrices live in."""
    r = min(m, n)
    u, _ = np.linalg.qr(rng.standard_normal((m, r)))
    v, _ = np.linalg.qr(rng.standard_normal((n, r)))
    s = np.exp(-rate * np.arange(r)) * rng.uniform(0.5, 1.5, r)
    s = np.sort(s)[::-1]
    return (u * s) @ v.T


class TestDictionary:
    def test_min_df_excludes(self):
        posts = [["mid", f"filler{i}"] for i in range(500)]
        posts += [["mid"] for _ in range(491)]
        for i in range(9):
            posts.append(["rare9"])
        d = build_dictionary(posts, min_df=10, max_df_frac=1.0)
        assert "rare9" not in d.token_to_id
        assert "mid" in d.token_to_id

    def test_max_df_excludes(self):
        posts = []
        for i in range(100):
            if i < 20:
                posts.append(["common31", "kept"])
            elif i < 31:
                posts.append(["common31", f"filler{i}"])
            else:
                posts.append([f"filler{i}"])
        d = build_dictionary(posts, min_df=10, max_df_frac=0.30)
        assert "common31" not in d.token_to_id  # in 31% of posts
        assert "kept" in d.token_to_id

    def test_no_filtering_keeps_everything(self):
        posts = [["a", "b"], ["b", "c"]]
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        assert sorted(d.token_to_id) == ["a", "b", "c"]
        # lexicographic id assignment
        assert [d.token_to_id[t] for t in ["a", "b", "c"]] == [0, 1, 2]

    def test_everything_filtered_is_error(self):
        with pytest.raises(DataError):
            build_dictionary([["a"], ["a"]], min_df=5, max_df_frac=1.0)


class TestTfidf:
    def _dict(self):
        return build_dictionary(
            [["apple", "apple"], ["banana"], ["cherry"]], min_df=1, max_df_frac=1.0
        )

    def test_out_of_dictionary_gives_zero_vector(self):
        d = self._dict()
        vec = tfidf_vector(["durian", "elderberry"], d)
        assert vec.nnz == 0

    def test_hand_computed_weight(self):
        # term in 1 of 3 docs with count 2 -> 2 * ln(3/1)
        d = self._dict()
        vec = tfidf_vector(["apple", "apple"], d).toarray().ravel()
        assert vec[d.token_to_id["apple"]] == pytest.approx(2.0 * np.log(3.0), abs=1e-12)

    def test_deterministic(self):
        d = self._dict()
        a = tfidf_vector(["apple", "banana"], d).toarray()
        b = tfidf_vector(["apple", "banana"], d).toarray()
        np.testing.assert_array_equal(a, b)

    def test_matrix_rows_match_vectors(self):
        d = self._dict()
        posts = [["apple", "banana"], ["cherry", "cherry", "apple"]]
        m = tfidf_matrix(posts, d).toarray()
        for i, p in enumerate(posts):
            np.testing.assert_allclose(m[i], tfidf_vector(p, d).toarray().ravel())


class TestRandomizedSvd:
    def test_rank_one_outer_product(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal(30)
        v = rng.standard_normal(20)
        a = np.outer(u, v)
        U, s, Vt = randomized_svd(a, 1, seed=1)
        recon = (U * s) @ Vt
        assert np.max(np.abs(recon - a)) <= 1e-6

    def test_small_random_matrix_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        a = decaying_matrix(rng, 50, 40)
        s_hat = randomized_svd(a, 10, seed=2)[1]
        s_oracle = np.linalg.svd(a, compute_uv=False)[:10]
        assert np.max(np.abs(s_hat - s_oracle) / s_oracle) <= 1e-4

    def test_identity_all_ones(self):
        s = randomized_svd(np.eye(5), 5, seed=3)[1]
        np.testing.assert_allclose(s, np.ones(5), atol=1e-10)

    def test_rank_too_large(self):
        with pytest.raises(ConfigError):
            randomized_svd(np.eye(5), 6, seed=0)

    def test_sparse_input_matches_dense(self):
        rng = np.random.default_rng(2)
        a = decaying_matrix(rng, 40, 30)
        a[np.abs(a) < 0.01] = 0.0
        s_sparse = randomized_svd(sp.csr_matrix(a), 8, seed=4)[1]
        s_dense = randomized_svd(a, 8, seed=4)[1]
        np.testing.assert_allclose(s_sparse, s_dense, atol=1e-10)

    def test_explained_variance_close_to_exact(self):
        rng = np.random.default_rng(3)
        a = decaying_matrix(rng, 200, 200)
        s_hat = randomized_svd(a, 20, seed=5)[1]
        s_all = np.linalg.svd(a, compute_uv=False)
        ev_hat = np.sum(s_hat**2) / np.sum(s_all**2)
        ev_exact = np.sum(s_all[:20] ** 2) / np.sum(s_all**2)
        assert abs(ev_hat - ev_exact) <= 1e-3


class TestLsi:
    def _posts(self, rng, n=60, vocab=40):
        words = [f"t{i}" for i in range(vocab)]
        return [
            [words[w] for w in rng.integers(0, vocab, size=rng.integers(5, 15))]
            for _ in range(n)
        ]

    def test_projection_orthonormal(self):
        rng = np.random.default_rng(4)
        model = fit_lsi_from_posts(self._posts(rng), rank=8, seed=1,
                                   min_df=1, max_df_frac=1.0)
        gram = model.projection.T @ model.projection
        assert np.max(np.abs(gram - np.eye(8))) <= 1e-5
        assert np.all(np.diff(model.singular_values) <= 1e-12)
        assert np.all(model.singular_values >= 0)

    def test_single_post_author_modes_agree(self):
        rng = np.random.default_rng(5)
        posts = self._posts(rng)
        model = fit_lsi_from_posts(posts, rank=6, seed=1, min_df=1, max_df_frac=1.0)
        author = [posts[0]]
        concat, _ = lsi_user_embedding(author, model, mode="concat_doc")
        mean, _ = lsi_user_embedding(author, model, mode="mean_post")
        np.testing.assert_allclose(concat, mean, atol=1e-12)

    def test_duplicated_post_is_collinear(self):
        rng = np.random.default_rng(6)
        posts = self._posts(rng)
        model = fit_lsi_from_posts(posts, rank=6, seed=1, min_df=1, max_df_frac=1.0)
        single, _ = lsi_user_embedding([posts[3]], model, mode="concat_doc")
        double, _ = lsi_user_embedding([posts[3], posts[3]], model, mode="concat_doc")
        np.testing.assert_allclose(double, 2.0 * single, atol=1e-10)
        cos = single @ double / (np.linalg.norm(single) * np.linalg.norm(double))
        assert cos == pytest.approx(1.0, abs=1e-10)

    def test_empty_author_zero_vector_with_flag(self):
        rng = np.random.default_rng(7)
        model = fit_lsi_from_posts(self._posts(rng), rank=4, seed=1,
                                   min_df=1, max_df_frac=1.0)
        vec, warned = lsi_user_embedding([["zzz-not-in-dict"]], model)
        assert warned and np.all(vec == 0.0)

    def test_post_vectors_sequence_shape(self):
        rng = np.random.default_rng(8)
        posts = self._posts(rng)
        model = fit_lsi_from_posts(posts, rank=5, seed=1, min_df=1, max_df_frac=1.0)
        seq = lsi_post_vectors(posts[:7], model)
        assert seq.shape == (7, 5)


class TestLda:
    def _counts(self, posts, dictionary):
        rows = []
        for p in posts:
            v = np.zeros(dictionary.size)
            for t in p:
                if t in dictionary.token_to_id:
                    v[dictionary.token_to_id[t]] += 1
            rows.append(v)
        return sp.csr_matrix(np.asarray(rows))

    def _disjoint_corpus(self):
        a_words = ["a0", "a1", "a2"]
        b_words = ["b0", "b1", "b2"]
        rng = np.random.default_rng(9)
        posts = []
        for _ in range(50):
            posts.append([a_words[w] for w in rng.integers(0, 3, size=8)])
            posts.append([b_words[w] for w in rng.integers(0, 3, size=8)])
        return posts

    def test_k1_point_mass(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        model, _ = fit_lda(self._counts(posts, d), 1, iterations=5, seed=1, dictionary=d)
        theta, _ = lda_user_embedding([posts[0]], model)
        np.testing.assert_allclose(theta, [1.0])

    def test_disjoint_topics_recovered(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        model, _ = fit_lda(self._counts(posts, d), 2, alpha=0.5, iterations=150,
                           seed=2, dictionary=d)
        phi = model.phi()
        a_ids = [d.token_to_id[t] for t in ["a0", "a1", "a2"]]
        masses = phi[:, a_ids].sum(axis=1)
        assert max(masses) >= 0.9 and min(masses) <= 0.1

    def test_deterministic_given_seed(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        c = self._counts(posts, d)
        _, z1 = fit_lda(c, 3, iterations=30, seed=7, dictionary=d)
        _, z2 = fit_lda(c, 3, iterations=30, seed=7, dictionary=d)
        np.testing.assert_array_equal(z1, z2)

    def test_token_count_conserved(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        c = self._counts(posts, d)
        model, _ = fit_lda(c, 4, iterations=20, seed=3, dictionary=d)
        assert model.topic_word.sum() == c.sum()

    def test_phi_rows_sum_to_one(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        model, _ = fit_lda(self._counts(posts, d), 5, iterations=10, seed=4, dictionary=d)
        np.testing.assert_allclose(model.phi().sum(axis=1), np.ones(5), atol=1e-9)

    def test_empty_matrix_error(self):
        with pytest.raises(DataError):
            fit_lda(sp.csr_matrix((3, 4)), 2, iterations=5, seed=0)

    def test_fold_in_sums_to_one_and_concentrates(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        model, _ = fit_lda(self._counts(posts, d), 2, alpha=0.5, iterations=150,
                           seed=2, dictionary=d)
        doc = [["a0", "a1", "a2"] * 70]
        theta, warned = lda_user_embedding(doc, model, seed=1)
        assert not warned
        assert theta.sum() == pytest.approx(1.0, abs=1e-9)
        assert theta.max() >= 0.9

    def test_empty_author_uniform(self):
        posts = self._disjoint_corpus()
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        model, _ = fit_lda(self._counts(posts, d), 4, iterations=5, seed=0, dictionary=d)
        theta, warned = lda_user_embedding([["nope"]], model)
        assert warned
        np.testing.assert_allclose(theta, np.full(4, 0.25))


class TestWordVectors:
    def _table(self):
        return WordVectorTable(vectors={"up": np.array([1.0, 0.0]),
                                        "right": np.array([0.0, 1.0])}, dim=2)

    def test_single_word(self):
        from author2vec.baselines import wordvec_user_embedding

        vec, warned = wordvec_user_embedding([["up"]], self._table())
        np.testing.assert_array_equal(vec, [1.0, 0.0])
        assert not warned

    def test_two_words_averaged(self):
        from author2vec.baselines import wordvec_user_embedding

        vec, _ = wordvec_user_embedding([["up", "right"]], self._table())
        np.testing.assert_array_equal(vec, [0.5, 0.5])

    def test_all_out_of_table(self):
        from author2vec.baselines import wordvec_user_embedding

        vec, warned = wordvec_user_embedding([["zzz"]], self._table())
        assert warned and np.all(vec == 0.0)

    def test_table_file_round_trip(self, tmp_path):
        p = tmp_path / "vecs.txt"
        p.write_text("2 3\nfoo 1.0 2.0 3.0\nbar -1.0 0.5 0.25\n")
        table = WordVectorTable.from_file(p)
        assert table.dim == 3 and table.vocab_size == 2
        np.testing.assert_array_equal(table.vectors["bar"], [-1.0, 0.5, 0.25])

    def test_bad_header(self, tmp_path):
        p = tmp_path / "vecs.txt"
        p.write_text("foo 1.0 2.0\n")
        with pytest.raises(DataError):
            WordVectorTable.from_file(p)


class TestModelFiles:
    def test_lsi_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        posts = [[f"w{i}" for i in rng.integers(0, 20, size=6)] for _ in range(30)]
        model = fit_lsi_from_posts(posts, rank=4, seed=1, min_df=1, max_df_frac=1.0)
        path = tmp_path / "m.av1lsi"
        save_lsi(model, path)
        loaded = load_lsi(path)
        np.testing.assert_array_equal(loaded.projection, model.projection)
        np.testing.assert_array_equal(loaded.singular_values, model.singular_values)
        assert loaded.dictionary.token_to_id == model.dictionary.token_to_id
        a, _ = lsi_user_embedding([posts[0]], model)
        b, _ = lsi_user_embedding([posts[0]], loaded)
        np.testing.assert_array_equal(a, b)

    def test_lda_round_trip(self, tmp_path):
        posts = [["x", "y"], ["y", "z"], ["z", "x"]] * 5
        d = build_dictionary(posts, min_df=1, max_df_frac=1.0)
        rows = np.zeros((len(posts), d.size))
        for i, p in enumerate(posts):
            for t in p:
                rows[i, d.token_to_id[t]] += 1
        model, _ = fit_lda(sp.csr_matrix(rows), 2, iterations=10, seed=1, dictionary=d)
        path = tmp_path / "m.av1lda"
        save_lda(model, path)
        loaded = load_lda(path)
        np.testing.assert_array_equal(loaded.topic_word, model.topic_word)
        assert loaded.alpha == model.alpha and loaded.beta == model.beta
        assert loaded.dictionary.token_to_id == model.dictionary.token_to_id
