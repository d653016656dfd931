"""tglink: inductive knowledge-graph link prediction from entity and relation text."""

__version__ = "0.1.0"
