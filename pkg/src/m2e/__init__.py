"""Linear alignment of a multilingual text-embedding space to a frozen
multimodal embedding space, with retrieval evaluation and map diagnostics.

Everything operates on precomputed embedding files; no encoder inference
happens here.
"""

__version__ = "0.1.0"
