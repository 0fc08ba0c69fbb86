"""Provenance manifests for pipeline stages.

Every command writes `manifest.json` into its output directory: the exact
config snapshot it ran with, content hashes of its inputs and outputs, and
package version. Paths inside the manifest are relative to the output
directory's parent so reruns into a fresh directory stay byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import os

from author2vec import __version__
from author2vec.errors import DataError

MANIFEST_NAME = "manifest.json"
# keys that vary run-to-run without changing results
VOLATILE_CONFIG_KEYS = ("output", "threads")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean_config(config):
    return {k: v for k, v in config.items() if k not in VOLATILE_CONFIG_KEYS}


def write_manifest(stage_dir, command, config, inputs, outputs):
    """inputs/outputs map logical names to file paths; hashes are recorded
    with paths relative to the stage directory."""
    entry = {
        "command": command,
        "version": __version__,
        "config": _clean_config(config),
        "inputs": {
            name: {"file": os.path.basename(path), "sha256": file_sha256(path)}
            for name, path in sorted(inputs.items())
        },
        "outputs": {
            name: {"file": os.path.basename(path), "sha256": file_sha256(path)}
            for name, path in sorted(outputs.items())
        },
    }
    path = os.path.join(stage_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entry, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(stage_dir):
    path = os.path.join(stage_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DataError(f"missing manifest for upstream stage: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def require_artifact(stage_dir, name):
    """Resolve a logical output of an upstream stage, verifying the file
    still matches its recorded hash."""
    manifest = read_manifest(stage_dir)
    outputs = manifest.get("outputs", {})
    if name not in outputs:
        raise DataError(
            f"manifest in {stage_dir} has no output entry {name!r} "
            f"(has {sorted(outputs)})"
        )
    path = os.path.join(stage_dir, outputs[name]["file"])
    if not os.path.exists(path):
        raise DataError(f"artifact {name!r} missing on disk: {path}")
    actual = file_sha256(path)
    if actual != outputs[name]["sha256"]:
        raise DataError(
            f"artifact {name!r} is stale: hash {actual[:12]} does not match "
            f"manifest entry {outputs[name]['sha256'][:12]}"
        )
    return path
