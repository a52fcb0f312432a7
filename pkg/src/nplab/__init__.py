"""Numerical verification lab for context-conditioned predictor
architectures: exact linear-algebra constructions of mean-pooling,
cross-attention, self-attention, and convolutional predictors, checked
against brute-force oracles at desk scale."""

__version__ = "0.1.0"
