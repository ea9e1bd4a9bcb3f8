"""Invariant-subspace estimation over embedding datasets.

Submodules:
  store      binary embedding datasets and splits
  scm        synthetic ground-truth data generator
  pairs      original/intervened pair matrix assembly
  estimator  invariant-subspace fitting and diagnostics
  predictors zero-shot, invariant, and linear-probe prediction
  evaluation domain-shift and open-class protocols
  cli        command-line front end
"""

__version__ = "0.1.0"
