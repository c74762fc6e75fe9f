"""hashtrace: trace fake videos to their originals via learned binary hash centers."""

from hashtrace.codes import (
    ACTIVATIONS,
    HashCode,
    RelaxedCode,
    binarize,
    hamming,
    mean_pairwise_hamming,
    vote_center,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "HashCode",
    "RelaxedCode",
    "binarize",
    "hamming",
    "mean_pairwise_hamming",
    "vote_center",
    "__version__",
]
