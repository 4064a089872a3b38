"""chemfuse: joint SMILES/graph molecular encoder with fragment-level pretraining."""

__version__ = "0.1.0"
