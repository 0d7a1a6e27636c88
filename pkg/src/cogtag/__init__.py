"""cogtag: cognitive-inspired tag recommendation and time-aware benchmarking."""

__version__ = "0.1.0"
