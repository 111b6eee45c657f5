"""notbary: weak optimal-transport barycenters via a max-min neural solver.

The package learns (stochastic) transport maps from K reference
distributions to their weak OT barycenter by stochastic gradient
ascent-descent over congruent potentials and maps. Everything runs on
numpy with a small built-in reverse-mode differentiation engine; closed
form Gaussian machinery provides ground truth for validation.

Usage example:
    from notbary.schemas import validate_config
    from notbary.experiments import run_experiment

    config = validate_config({"experiment": "dirac-sanity"})
    result = run_experiment(config)

The ``notbary`` console script exposes ``run``, ``eval`` and ``oracle``
sub-commands, see ``notbary.cli``.
"""

__all__ = [
    "__version__",
]

__version__ = "0.1.0"
