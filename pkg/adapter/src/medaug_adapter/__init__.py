"""medaug-adapter: fine-tune a transformer encoder on medaug CoNLL exports and
emit standoff predictions the medaug scorer can ingest."""

__version__ = "0.1.0"
