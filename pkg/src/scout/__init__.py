"""Semantic dataset discovery engine.

Offline: corpus ingestion, LLM-backed metadata enrichment, embedding
generation, and HNSW indexing. Online: hypothetical-schema retrieval with
mean-cosine ranking, faceted/semantic filtering, and proactive assistance
(query reformulations, column concepts, granularity filters, relevance
indicators), exposed over HTTP and a CLI.
"""

__version__ = "0.1.0"
