"""Active-learning scale bridging between coarse solvers and expensive fine-scale models."""

__version__ = "0.1.0"
