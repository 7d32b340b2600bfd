"""Two-party private inference over packed homomorphic ciphertexts."""

__version__ = "0.1.0"
