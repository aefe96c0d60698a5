"""Synthetic word-level QE corpus builder.

Builds (source, MT output, pseudo-PE, OK/BAD tags) datasets from monolingual
or parallel corpora and provides TER, alignment, statistics and MCC tooling.
"""

__version__ = "0.1.0"
FORMAT_VERSION = "1"
