"""Topic-interaction-graph comment generation.

Pipeline: news articles -> keyword extraction -> topic interaction graph ->
self-attention vertex encoder -> graph convolutional encoder -> attention RNN
decoder with a copy mechanism over topic words.
"""

__version__ = "0.1.0"
