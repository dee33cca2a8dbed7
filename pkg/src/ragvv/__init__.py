"""ragvv: retrieval-augmented harness for automated code inspection and
test generation, with deterministic offline providers and paper-style
metric reporting."""

__version__ = "0.1.0"
