"""Differential conformance-fuzzing toolkit for JavaScript engines."""

__version__ = "0.1.0"

from . import (campaign, datagen, dedup, harness, jssyntax, jsvalues,  # noqa: F401
               progen, reducer, reporting, specdb)
