"""Author embedding pipeline: corpus ingestion, post-embedding storage,
Bi-GRU + k-sparse author encoder pretrained on authorship classification,
count-based baselines, and downstream attribute-probe evaluation."""

__version__ = "0.1.0"
