"""Inference sidecar exposing embeddings, parsing, landmarks and aesthetic
scores over a small versioned HTTP protocol, with a deterministic stub mode
that needs no model weights."""

__version__ = "0.1.0"
