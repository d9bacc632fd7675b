"""Open visual knowledge extraction: relation-oriented region detection,
format-free knowledge generation, diversity-driven data enhancement, quality
evaluation, knowledge-source comparison, and downstream enrichment."""

__version__ = "0.1.0"
