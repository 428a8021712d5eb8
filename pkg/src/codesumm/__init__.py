"""Desk-scale neural source code summarization with tree-structured encoders."""

__version__ = "0.1.0"
