"""Deterministic engine that turns single 2D images plus expert-model
outputs into verified spatial QA records."""

__version__ = "0.1.0"
