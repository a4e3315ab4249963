"""Covariate-moderated causal direction discovery toolkit.

Decides the direction of a link X -> Y given covariates Z from
observational data, by comparing cross-fitted conditional entropies on
an evaluation grid, and applies the same machinery to collider
detection.  Includes a simulation lab reproducing the benchmark study
at desk scale.
"""

__version__ = "0.1.0"
