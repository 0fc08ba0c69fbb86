"""Offline extractor: runs a pretrained BERT over a filtered post corpus and
writes per-author [CLS] hidden-state matrices in the AV1EMBED binary format."""

__version__ = "0.1.0"
