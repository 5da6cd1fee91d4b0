"""lesionbench: deterministic evaluation harness for prompt-driven lesion segmentation."""

__version__ = "0.1.0"
