"""conceptvec: multilingual embeddings from verse-aligned parallel corpora.

The pipeline induces bilingual dictionaries from a verse-aligned corpus,
builds a multipartite dictionary graph over ten pivot editions, derives
multilingual concepts from that graph, writes concept pseudocorpora, trains
skipgram embeddings over them and evaluates the shared space with word-level
roundtrip translation and sentiment classification.
"""

__version__ = "0.1.0"
