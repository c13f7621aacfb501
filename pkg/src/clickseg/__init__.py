"""Interactive click/squiggle-guided segmentation workbench for microscopy."""

__version__ = "0.1.0"
