"""One-shot exporters turning benchmark distributions into the training
toolkit's interchange formats."""

from .convert import (ConversionError, ConversionReport, convert_citation,
                      convert_tudataset)

__version__ = "0.1.0"

__all__ = ["ConversionError", "ConversionReport", "convert_citation",
           "convert_tudataset"]
