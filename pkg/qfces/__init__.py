"""
Generation and evaluation of query-focused comparative summaries of
e-commerce products.

Opinion summaries are generated per product, then condensed into a
comparison table and a verdict per query, either from those summaries or
directly from the raw product data. Summaries are checked for format,
scored by LLM judges with probability-weighted scores, and the judges are
meta-evaluated against human ratings. All IO is expressed as Effects; see
:mod:`qfces.pipeline` for the commands and :mod:`qfces.cli` for the command
line.
"""

__version__ = "0.1.0"
