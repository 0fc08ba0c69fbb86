"""Command-line entry point.

Commands mirror the pipeline stages and are composable by path: each one
reads upstream artifacts out of `<output>/<stage>/` via their manifests and
writes its own stage directory. Exit codes: 2 config error, 3 data error,
4 numeric failure, 5 I/O.
"""
from __future__ import annotations

import logging
import sys

import click

from author2vec import stages
from author2vec.config import apply_overrides, load_config
from author2vec.errors import ConfigError, DataError, NumericError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


def _common(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="experiment config YAML")(fn)
    fn = click.option("--seed", type=int, default=None, help="override global seed")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="worker cap; 1 guarantees bitwise determinism")(fn)
    fn = click.option("--output", type=click.Path(), default=None,
                      help="override output directory")(fn)
    fn = click.option("-O", "--set", "overrides", multiple=True,
                      help="override a config key, e.g. -O pretrain.epochs=50")(fn)
    return fn


def _load(config_path, seed, threads, output, overrides):
    cfg = load_config(config_path)
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    if output is not None:
        cfg["output"] = output
    return cfg


@click.group()
def main_group():
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main_group.command("synth")
@_common
def cmd_synth(config_path, seed, threads, output, overrides):
    """Generate a synthetic corpus with a planted binary attribute."""
    stages.run_synth(_load(config_path, seed, threads, output, overrides))


@main_group.command("ingest")
@_common
def cmd_ingest(config_path, seed, threads, output, overrides):
    """Load, filter and tokenize the post dump; write corpus stats."""
    stages.run_ingest(_load(config_path, seed, threads, output, overrides))


@main_group.command("embed-posts")
@_common
def cmd_embed_posts(config_path, seed, threads, output, overrides):
    """Produce the post-embedding store (stub embedder or external file)."""
    stages.run_embed_posts(_load(config_path, seed, threads, output, overrides))


@main_group.command("pretrain")
@_common
def cmd_pretrain(config_path, seed, threads, output, overrides):
    """Pre-train the author encoder on authorship classification."""
    stages.run_pretrain(_load(config_path, seed, threads, output, overrides))


@main_group.command("embed-authors")
@_common
def cmd_embed_authors(config_path, seed, threads, output, overrides):
    """Produce sparse author embeddings from a pretrained model."""
    stages.run_embed_authors(_load(config_path, seed, threads, output, overrides))


@main_group.command("baseline")
@click.argument("kind", type=click.Choice(["lsi", "lda", "wordvec"]))
@_common
def cmd_baseline(kind, config_path, seed, threads, output, overrides):
    """Fit a baseline user embedder (lsi | lda | wordvec)."""
    stages.run_baseline(_load(config_path, seed, threads, output, overrides), kind)


@main_group.command("eval")
@click.argument("task", type=click.Choice(["gender", "depression", "mbti", "custom"]))
@_common
def cmd_eval(task, config_path, seed, threads, output, overrides):
    """Cross-validated probe evaluation of embedding files."""
    stages.run_eval(_load(config_path, seed, threads, output, overrides), task)


@main_group.command("viz")
@_common
def cmd_viz(config_path, seed, threads, output, overrides):
    """Project author embeddings to 2-d and export SVG/CSV scatter."""
    stages.run_viz(_load(config_path, seed, threads, output, overrides))


def main(argv=None):
    try:
        main_group.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
