"""Grammar-constrained text-to-SQL with relation-aware transformers, at desk scale."""

__version__ = "0.1.0"
