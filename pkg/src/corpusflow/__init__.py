"""corpusflow: an interactive thematic-curation engine for large text corpora.

Users wire document sources, groups, notes, rank, projection, and set-operation
nodes into a provenance-preserving dataflow graph whose outputs are
ranked/clustered document lists computed from embedding similarity.
"""

__version__ = "0.1.0"
