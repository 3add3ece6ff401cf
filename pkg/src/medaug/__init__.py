"""medaug: paraphrase augmentation and strict/lenient span evaluation for
medication-annotated clinical text."""

__version__ = "0.1.0"
