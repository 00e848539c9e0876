"""Aspect sentiment triplet extraction with a five-label table-filling scheme."""
from importlib import resources

from .tagging import (LABELS, Sentiment, Span, TagLabel, Triplet, decode_matrix,
                      encode_triplets, scheme_fidelity, validate_wellformed)

__version__ = "0.1.0"


def fixture_path():
    """Path of the bundled 32-sentence overfit fixture."""
    return resources.files(__package__) / "data" / "fixture32.txt"


__all__ = ["LABELS", "Sentiment", "Span", "TagLabel", "Triplet", "decode_matrix",
           "encode_triplets", "scheme_fidelity", "validate_wellformed", "fixture_path"]
