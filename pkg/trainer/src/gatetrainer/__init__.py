"""gatetrainer: train and serve the comment-actionability scorer."""

__version__ = "0.1.0"
