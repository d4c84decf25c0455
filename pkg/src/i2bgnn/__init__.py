"""Blockchain account identity inference from transaction ego-subgraphs."""

__version__ = "0.1.0"
