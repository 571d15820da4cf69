"""reviewflow: LLM-driven pull-request review automation and evaluation."""

__version__ = "0.1.0"
