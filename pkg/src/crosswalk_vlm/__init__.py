"""Zero-shot crosswalk labeling of aerial image patches with a vision-language model."""

__version__ = "0.1.0"
