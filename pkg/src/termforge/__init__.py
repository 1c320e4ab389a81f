"""Terminology-controlled translation toolkit: constraint extraction from
parallel and monolingual data, lexically constrained beam search, and
constrained backtranslation."""

__version__ = "0.1.0"
