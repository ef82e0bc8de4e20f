"""Hate/offensive language detection toolkit.

Combines three per-tweet features (contextual word embeddings, character
one-hots, hate-term multi-hot) through small recurrent and feed-forward
blocks, trained with a hand-written numpy backprop core.
"""

__version__ = "0.1.0"
