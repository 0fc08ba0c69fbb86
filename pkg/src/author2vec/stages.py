"""Pipeline stage implementations behind the CLI.

Each stage reads upstream artifacts through their manifests, writes its own
outputs plus a manifest into `<output>/<stage>/`, and never mutates another
stage's directory. With threads=1 every artifact is byte-reproducible from
its config and inputs.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import shutil

import numpy as np

from author2vec import baselines as bl
from author2vec import corpus as cp
from author2vec import model as m
from author2vec import synth
from author2vec import viz as vz
from author2vec.config import require, require_path
from author2vec.embedstore import (
    PostEmbeddingMatrix,
    read_embeddings,
    read_index,
    stub_embed_corpus,
    write_embeddings,
)
from author2vec.errors import ConfigError, DataError
from author2vec.evaluation import (
    EvalReport,
    FoldPlan,
    ProbeSpec,
    mbti_axis_benchmark,
    normalize_confusion,
    run_benchmark,
)
from author2vec.manifest import require_artifact, write_manifest

log = logging.getLogger(__name__)


def _stage_dir(cfg, name):
    path = os.path.join(cfg["output"], name)
    os.makedirs(path, exist_ok=True)
    return path


def _write_labels_csv(path, labels_by_author):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["author_id", "attribute", "value"])
        for author in sorted(labels_by_author):
            for attr in sorted(labels_by_author[author]):
                writer.writerow([author, attr, labels_by_author[author][attr]])


def _load_stage_labels(cfg):
    corpus_dir = os.path.join(cfg["output"], "corpus")
    path = require_artifact(corpus_dir, "labels")
    return cp.load_labels(path)


def _read_user_vectors(path):
    """An embeddings file whose matrices are single rows -> {author: vector}."""
    return {r.author_id: r.values[0].astype(float) for r in read_embeddings(path)}


# --- synth ---------------------------------------------------------------------


def run_synth(cfg):
    out = _stage_dir(cfg, "synth")
    s = cfg["synth"]
    records, _ = synth.generate_corpus(
        n_authors=s["authors"],
        posts_per_author=s["posts_per_author"],
        vocab_size=s["vocab_size"],
        attribute=s["attribute"],
        seed=cfg["seed"],
    )
    posts_path = os.path.join(out, "posts.jsonl")
    labels_path = os.path.join(out, "labels.csv")
    vocab_path = os.path.join(out, "vocab.txt")
    cp.save_corpus(records, posts_path)
    _write_labels_csv(labels_path, {r.author_id: r.labels for r in records})
    synth.token_vocabulary(s["vocab_size"]).to_file(vocab_path)
    write_manifest(
        out, "synth", cfg, inputs={},
        outputs={"posts": posts_path, "labels": labels_path, "vocab": vocab_path},
    )
    log.info("synth corpus: %d authors -> %s", len(records), out)
    return out


# --- ingest ----------------------------------------------------------------------


def run_ingest(cfg):
    out = _stage_dir(cfg, "corpus")
    c = cfg["corpus"]
    posts_path = require_path(cfg, "corpus.posts")
    records = cp.load_corpus(posts_path)

    inputs = {"posts": posts_path}
    if c["labels"]:
        labels_path = require_path(cfg, "corpus.labels")
        cp.attach_labels(records, cp.load_labels(labels_path))
        inputs["labels"] = labels_path

    if c["vocab"]:
        vocab_path_in = require_path(cfg, "corpus.vocab")
        vocab = cp.TokenizerVocab.from_file(vocab_path_in)
        inputs["vocab"] = vocab_path_in
    else:
        vocab = cp.vocab_from_corpus(records)

    policy = cp.FilterPolicy(
        min_tokens_per_post=c["min_tokens_per_post"],
        min_posts_per_author=c["min_posts_per_author"],
        max_posts_per_author=c["max_posts_per_author"],
        junk_rules=tuple(c["junk_rules"]),
        exclude_subreddits=tuple(c["exclude_subreddits"]),
        exclude_keywords=tuple(c["exclude_keywords"]),
    )
    kept, stats = cp.filter_corpus(records, vocab, policy)
    if not kept:
        raise DataError("no authors survive the corpus filters")

    label_hist = {}
    for record in kept:
        for attr, value in record.labels.items():
            label_hist.setdefault(attr, {}).setdefault(value, 0)
            label_hist[attr][value] += 1
    stats["labels"] = label_hist

    corpus_out = os.path.join(out, "corpus.jsonl")
    labels_out = os.path.join(out, "labels.csv")
    vocab_out = os.path.join(out, "vocab.txt")
    stats_out = os.path.join(out, "stats.json")
    cp.save_corpus(kept, corpus_out)
    _write_labels_csv(labels_out, {r.author_id: r.labels for r in kept})
    vocab.to_file(vocab_out)
    with open(stats_out, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")

    write_manifest(
        out, "ingest", cfg, inputs=inputs,
        outputs={"corpus": corpus_out, "labels": labels_out,
                 "vocab": vocab_out, "stats": stats_out},
    )
    log.info("ingest: %d/%d authors kept, %d posts",
             stats["authors_kept"], stats["authors_in"], stats["posts_kept"])
    return out


# --- post embeddings --------------------------------------------------------------


def _trait_map(cfg, records):
    attr = cfg["embed"]["trait_attribute"]
    if not attr:
        return None
    strength = float(cfg["embed"]["trait_strength"])
    values = sorted({r.labels.get(attr) for r in records if r.labels.get(attr)})
    if len(values) != 2:
        raise ConfigError(
            f"trait attribute {attr!r} must be binary over the corpus, found {values}"
        )
    signs = {values[0]: -strength, values[1]: strength}
    return {r.author_id: signs.get(r.labels.get(attr), 0.0) for r in records}


def run_embed_posts(cfg):
    out = _stage_dir(cfg, "embeddings")
    corpus_dir = os.path.join(cfg["output"], "corpus")
    corpus_path = require_artifact(corpus_dir, "corpus")
    labels_path = require_artifact(corpus_dir, "labels")
    records = cp.attach_labels(cp.load_corpus(corpus_path), cp.load_labels(labels_path))

    store_path = os.path.join(out, "posts.av1embed")
    inputs = {"corpus": corpus_path}
    embedder = cfg["embed"]["embedder"]
    if embedder == "stub":
        matrices = stub_embed_corpus(
            records,
            dim=int(cfg["embed"]["dim"]),
            seed=cfg["seed"],
            traits=_trait_map(cfg, records),
            threads=int(cfg["threads"]),
        )
        write_embeddings(matrices, store_path)
    elif embedder == "external-file":
        src = require_path(cfg, "embed.file")
        read_index(src)  # validate before adopting
        shutil.copyfile(src, store_path)
        inputs["external_embeddings"] = src
    else:
        raise ConfigError(f"unknown embedder {embedder!r}")

    dim, index = read_index(store_path)
    write_manifest(
        out, "embed-posts", cfg, inputs=inputs, outputs={"embeddings": store_path},
    )
    log.info("embed-posts: %d authors at dim %d", len(index), dim)
    return out


# --- pretraining -------------------------------------------------------------------


def run_pretrain(cfg):
    out = _stage_dir(cfg, "pretrain")
    embed_dir = os.path.join(cfg["output"], "embeddings")
    store_path = require_artifact(embed_dir, "embeddings")
    records = read_embeddings(store_path)

    p = cfg["pretrain"]
    config = m.PretrainConfig(
        posts_min=p["posts_min"],
        posts_max=p["posts_max"],
        batch_size=p["batch_size"],
        epochs=p["epochs"],
        seed=cfg["seed"],
        lr=p["lr"],
        lr_decay=p["lr_decay"],
        authors=p["authors"],
        use_all_posts=p["use_all_posts"],
        heldout_posts=p["heldout_posts"],
        hidden_size=p["hidden_size"],
        code_dim=p["code_dim"],
        k_train=p["k_train"],
        k_infer=p["k_infer"],
        head_hidden=tuple(p["head_hidden"]),
        pooling=p["pooling"],
        patience=p["patience"],
    )
    model, history = m.pretrain(
        records, config, checkpoint_dir=out,
        log_fn=lambda e: log.info("epoch %s", e),
    )

    model_path = os.path.join(out, "model.ckpt")
    log_path = os.path.join(out, "training_log.json")
    m.save_model(model, model_path, extra_meta={"final": True})
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=2, sort_keys=True)
        fh.write("\n")

    outputs = {"model": model_path, "log": log_path}
    for name in sorted(os.listdir(out)):
        if name.startswith("epoch_") and name.endswith(".ckpt"):
            outputs[name] = os.path.join(out, name)
    write_manifest(out, "pretrain", cfg, inputs={"embeddings": store_path}, outputs=outputs)
    return out


def run_embed_authors(cfg):
    out = _stage_dir(cfg, "authors")
    embed_dir = os.path.join(cfg["output"], "embeddings")
    pretrain_dir = os.path.join(cfg["output"], "pretrain")
    store_path = require_artifact(embed_dir, "embeddings")
    model_path = require_artifact(pretrain_dir, "model")

    model, _, _ = m.load_model(model_path)
    records = read_embeddings(store_path)
    embeddings = m.embed_corpus(model, records, threads=int(cfg["threads"]))

    vectors_path = os.path.join(out, "authors.av1embed")
    csv_path = os.path.join(out, "authors_sparse.csv")
    write_embeddings(
        [PostEmbeddingMatrix(e.author_id, e.vector[None, :]) for e in embeddings],
        vectors_path,
    )
    m.embeddings_to_sparse_csv(embeddings, csv_path)
    write_manifest(
        out, "embed-authors", cfg,
        inputs={"embeddings": store_path, "model": model_path},
        outputs={"vectors": vectors_path, "sparse_csv": csv_path},
    )
    log.info("embed-authors: %d author embeddings", len(embeddings))
    return out


# --- baselines ----------------------------------------------------------------------


def _corpus_tokens(cfg):
    corpus_dir = os.path.join(cfg["output"], "corpus")
    corpus_path = require_artifact(corpus_dir, "corpus")
    vocab_path = require_artifact(corpus_dir, "vocab")
    records = cp.load_corpus(corpus_path)
    vocab = cp.TokenizerVocab.from_file(vocab_path)
    tokens = {
        r.author_id: [cp.tokenize(p.text, vocab) for p in r.posts] for r in records
    }
    return records, tokens, {"corpus": corpus_path, "vocab": vocab_path}


def run_baseline(cfg, kind):
    out = _stage_dir(cfg, f"baseline_{kind}")
    b = cfg["baseline"]
    records, tokens, inputs = _corpus_tokens(cfg)
    author_ids = [r.author_id for r in records]
    all_posts = [post for a in author_ids for post in tokens[a]]

    outputs = {}
    if kind == "lsi":
        dictionary = bl.build_dictionary(all_posts, b["min_df"], b["max_df_frac"])
        matrix = bl.tfidf_matrix(all_posts, dictionary)
        model = bl.fit_lsi(matrix, b["rank"], seed=cfg["seed"], dictionary=dictionary)
        model_path = os.path.join(out, "model.av1lsi")
        bl.save_lsi(model, model_path)
        outputs["model"] = model_path
        vectors = {}
        for a in author_ids:
            vec, warned = bl.lsi_user_embedding(tokens[a], model, mode=b["mode"])
            if warned:
                log.warning("author %s has no in-dictionary tokens", a)
            vectors[a] = vec
        # per-post sequences, usable as encoder inputs via embed-posts
        # with embedder: external-file
        seq_path = os.path.join(out, "post_vectors.av1embed")
        write_embeddings(
            [PostEmbeddingMatrix(a, bl.lsi_post_vectors(tokens[a], model).astype(np.float32))
             for a in author_ids],
            seq_path,
        )
        outputs["post_vectors"] = seq_path
    elif kind == "lda":
        dictionary = bl.build_dictionary(all_posts, b["min_df"], b["max_df_frac"])
        counts = _counts_matrix(all_posts, dictionary)
        model, _ = bl.fit_lda(
            counts, b["topics"], alpha=b["alpha"], beta=b["beta"],
            iterations=b["iterations"], seed=cfg["seed"], dictionary=dictionary,
        )
        model_path = os.path.join(out, "model.av1lda")
        bl.save_lda(model, model_path)
        outputs["model"] = model_path
        vectors = {}
        for i, a in enumerate(author_ids):
            theta, warned = bl.lda_user_embedding(
                tokens[a], model, sweeps=b["fold_in_sweeps"], seed=cfg["seed"] + i
            )
            if warned:
                log.warning("author %s has no in-dictionary tokens", a)
            vectors[a] = theta
    elif kind == "wordvec":
        table_path = require_path(cfg, "baseline.wordvec_table")
        table = bl.WordVectorTable.from_file(table_path)
        inputs["wordvec_table"] = table_path
        vectors = {}
        for a in author_ids:
            vec, warned = bl.wordvec_user_embedding(tokens[a], table)
            if warned:
                log.warning("author %s has no in-table tokens", a)
            vectors[a] = vec
    else:
        raise ConfigError(f"unknown baseline kind {kind!r}")

    vectors_path = os.path.join(out, "users.av1embed")
    write_embeddings(
        [PostEmbeddingMatrix(a, np.asarray(vectors[a], dtype=np.float32)[None, :])
         for a in author_ids],
        vectors_path,
    )
    outputs["vectors"] = vectors_path
    write_manifest(out, f"baseline-{kind}", cfg, inputs=inputs, outputs=outputs)
    log.info("baseline %s: %d user vectors", kind, len(author_ids))
    return out


def _counts_matrix(posts, dictionary):
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    for r, post in enumerate(posts):
        seen = {}
        for t in post:
            i = dictionary.token_to_id.get(t)
            if i is not None:
                seen[i] = seen.get(i, 0) + 1
        for i, c in seen.items():
            rows.append(r)
            cols.append(i)
            vals.append(c)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(posts), dictionary.size))


# --- evaluation -----------------------------------------------------------------------


def _eval_embedding_sets(cfg):
    sets = require(cfg, "eval.embeddings")
    if not isinstance(sets, dict) or not sets:
        raise ConfigError("eval.embeddings must map names to embedding files")
    out = {}
    for name, path in sorted(sets.items()):
        if not os.path.exists(path):
            raise ConfigError(f"eval.embeddings[{name!r}] missing path {path!r}")
        out[name] = _read_user_vectors(path)
    return out


def _labelled_authors(labels, attribute, vectors):
    chosen = {a: attrs[attribute] for a, attrs in labels.items() if attribute in attrs}
    if not chosen:
        raise DataError(f"no authors carry attribute {attribute!r}")
    missing = sorted(a for a in chosen if a not in vectors)
    if missing:
        raise DataError(f"missing embeddings for authors: {missing[:20]}")
    return chosen


def _table(lines, path):
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def run_eval(cfg, task):
    out = _stage_dir(cfg, f"eval_{task}")
    e = cfg["eval"]
    labels = _load_stage_labels(cfg)
    embedding_sets = _eval_embedding_sets(cfg)
    seed = cfg["seed"]
    stratify_key = "value" if e["stratify"] else None

    reports = []
    outputs = {}

    def add_report(report, name_hint):
        path = os.path.join(out, f"report_{name_hint}.json")
        report.to_json(path)
        conf_path = os.path.join(out, f"confusion_{name_hint}.csv")
        report.confusion_csv(conf_path)
        outputs[f"report_{name_hint}"] = path
        outputs[f"confusion_{name_hint}"] = conf_path
        reports.append(report)

    if task == "custom":
        attribute = require(cfg, "eval.attribute")
        plan = FoldPlan(scheme=e["scheme"], k=e["k"], seed=seed, stratify_on=stratify_key)
        probe = ProbeSpec(
            kind=e["probe"],
            hidden=tuple(e["hidden"]) if e["probe"] == "mlp" else (),
            l2=e["l2"], max_iters=e["max_iters"], seed=seed,
        )
        for name, vectors in embedding_sets.items():
            chosen = _labelled_authors(labels, attribute, vectors)
            report, _ = run_benchmark(vectors, chosen, plan, probe,
                                      embedding_name=name, attribute=attribute)
            add_report(report, name)
        lines = [f"{plan.k}-fold cross validation weighted F1 ({attribute})",
                 f"{'Model':<34}{'Avg.':>8}{'Std.':>8}"]
        for r in reports:
            tag = "LR" if r.probe["kind"] == "logreg" else "MLP"
            lines.append(f"{tag + ' ' + r.embedding_name:<34}{r.avg:>8.3f}{r.std:>8.3f}")
    elif task == "gender":
        probe = ProbeSpec(kind="mlp", hidden=(256,), l2=e["l2"],
                          max_iters=e["max_iters"], seed=seed)
        lines = ["Gender classification weighted F1",
                 f"{'Model':<40}{'Min.':>8}{'Max.':>8}{'Avg.':>8}{'Std.':>8}"]
        for name, vectors in embedding_sets.items():
            chosen = _labelled_authors(labels, "gender", vectors)
            for scheme in ("kfold", "kfold_reverse"):
                plan = FoldPlan(scheme=scheme, k=10, seed=seed, stratify_on=stratify_key)
                report, _ = run_benchmark(vectors, chosen, plan, probe,
                                          embedding_name=name, attribute="gender")
                add_report(report, f"{name}_{scheme}")
                label = f"{name} {'10-fold' if scheme == 'kfold' else '10-fold reverse'}"
                lines.append(f"{label:<40}{report.min:>8.3f}{report.max:>8.3f}"
                             f"{report.avg:>8.3f}{report.std:>8.3f}")
    elif task == "depression":
        plan = FoldPlan(scheme="kfold", k=5, seed=seed, stratify_on=stratify_key)
        lines = ["5-fold cross validation F1 (depression)",
                 f"{'Model':<34}{'Avg.':>8}{'Std.':>8}"]
        for name, vectors in embedding_sets.items():
            chosen = _labelled_authors(labels, "depressed", vectors)
            for probe in (
                ProbeSpec(kind="logreg", l2=e["l2"], max_iters=e["max_iters"], seed=seed),
                ProbeSpec(kind="mlp", hidden=(256, 256), l2=e["l2"],
                          max_iters=e["max_iters"], seed=seed),
            ):
                report, _ = run_benchmark(vectors, chosen, plan, probe,
                                          embedding_name=name, attribute="depressed")
                tag = "LR" if probe.kind == "logreg" else "MLP"
                add_report(report, f"{name}_{tag.lower()}")
                lines.append(f"{tag + ' ' + name:<34}{report.avg:>8.3f}{report.std:>8.3f}")
    elif task == "mbti":
        plan = FoldPlan(scheme=e["scheme"], k=e["k"], seed=seed, stratify_on=stratify_key)
        probe = ProbeSpec(kind="logreg", l2=e["l2"], max_iters=e["max_iters"], seed=seed)
        lines = ["Personality axis F1",
                 f"{'Model':<28}{'E/I':>8}{'S/N':>8}{'T/F':>8}{'J/P':>8}"]
        for name, vectors in embedding_sets.items():
            codes = _labelled_authors(labels, "mbti", vectors)
            axis_reports, conf16, type_order = mbti_axis_benchmark(
                vectors, codes, plan, probe, embedding_name=name
            )
            row = f"{'LR ' + name:<28}"
            for axis in ("EI", "SN", "TF", "JP"):
                add_report(axis_reports[axis], f"{name}_{axis}")
                row += f"{axis_reports[axis].avg:>8.3f}"
            lines.append(row)
            conf_path = os.path.join(out, f"confusion16_{name}.csv")
            _write_conf16(conf16, type_order, conf_path)
            outputs[f"confusion16_{name}"] = conf_path
    else:
        raise ConfigError(f"unknown eval task {task!r}")

    table_path = os.path.join(out, "table.txt")
    text = _table(lines, table_path)
    outputs["table"] = table_path
    write_manifest(out, f"eval-{task}", cfg,
                   inputs={name: path for name, path in require(cfg, "eval.embeddings").items()},
                   outputs=outputs)
    log.info("eval %s:\n%s", task, text)
    return out


def _write_conf16(conf16, type_order, path):
    normalized = normalize_confusion(conf16)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("true\\pred," + ",".join(type_order) + "\n")
        for code, row in zip(type_order, normalized):
            fh.write(code + "," + ",".join(f"{v:.6f}" for v in row) + "\n")


# --- viz -------------------------------------------------------------------------------


def run_viz(cfg):
    out = _stage_dir(cfg, "viz")
    v = cfg["viz"]
    path = require_path(cfg, "viz.embeddings")
    vectors = _read_user_vectors(path)
    labels = _load_stage_labels(cfg)
    attribute = v["attribute"]

    author_ids = sorted(vectors)
    X = np.stack([vectors[a] for a in author_ids])
    config = vz.TsneConfig(
        perplexity=float(v["perplexity"]),
        iterations=int(v["iterations"]),
        learning_rate=float(v["learning_rate"]),
        seed=cfg["seed"],
    )
    result = vz.tsne_project(X, config)
    label_list = [labels.get(a, {}).get(attribute, "") if attribute else "" for a in author_ids]

    svg_path = os.path.join(out, "scatter.svg")
    csv_path = os.path.join(out, "coords.csv")
    vz.export_scatter(author_ids, result.coords, label_list, svg_path, csv_path)
    write_manifest(out, "viz", cfg, inputs={"embeddings": path},
                   outputs={"svg": svg_path, "coords": csv_path})
    return out
