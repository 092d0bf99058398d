"""Langevin Monte Carlo with inexact proximal steps.

The package samples densities proportional to exp(-V) for convex potentials
V with polynomially growing gradients. The main kernel replaces the gradient
step of the unadjusted Langevin algorithm with an inexact proximal map whose
accuracy follows the schedule delta = kappa * tau**(1 + alpha); companion
kernels (ULA, tamed ULA, random-walk Metropolis-Hastings) serve as baselines.

Modules
-------
``potentials``   target potentials and their growth/convexity metadata
``prox``         certified inexact proximal solvers
``samplers``     chain kernels, traces, replica drivers
``diagnostics``  moment estimates, reference values, image quantiles
``theory``       non-asymptotic constants and step/iteration budgets
``imaging``      deconvolution problems, sampling loop, image file formats
``config``       experiment configuration (TOML + presets)
``cli``          the ``proxlmc`` command
"""

from . import config, diagnostics, imaging, potentials, prox, samplers, theory

__all__ = [
    "config",
    "diagnostics",
    "imaging",
    "potentials",
    "prox",
    "samplers",
    "theory",
]

__version__ = "0.1.0"
