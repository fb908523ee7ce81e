"""facesim: human-perceptual face similarity over precomputed embeddings.

Learns a linear projection from triplet preference annotations, evaluates
pairwise similarity judgments, classifies attribute groups by confidence-
bounded group distance, and recommends attribute-consistent but dissimilar
face-swap source candidates.
"""

__version__ = "0.1.0"
