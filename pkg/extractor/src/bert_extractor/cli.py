"""Command-line interface: `bert-extractor extract --config <file>`."""
from __future__ import annotations

import argparse
import logging
import sys

from bert_extractor.extract import ExtractorConfig, extract


def main(argv=None):
    parser = argparse.ArgumentParser(prog="bert-extractor")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("extract", help="embed a corpus JSONL into an AV1EMBED file")
    run.add_argument("--config", required=True, help="extractor config YAML")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = ExtractorConfig.from_file(args.config)
        extract(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
