"""Contextual type annotation for Python source files.

The pipeline: a permissive lexer feeds a rule-based labeler that harvests
(variable, type) pairs from plain source trees; token contexts around each
assignment become byte-level BPE subword sequences; a GRU encoder with
dot-product attention classifies the type; a thresholded annotator and an
evaluation harness sit on top.
"""

__version__ = "0.1.0"

from .errors import CtxTyperError

__all__ = ["CtxTyperError", "__version__"]
