"""IbM2: noise-augmented linear probes for few-shot classification on frozen features."""

__version__ = "0.1.0"
