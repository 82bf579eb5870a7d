"""lclab: a numerical laboratory for log-concave measures.

Submodules:
    measures   catalog of measures, potentials, tilts, exact moments
    onedim     one-dimensional laws: profiles, Cheeger, FD spectral gap
    mc         samplers, covariance/thin-shell summaries, couplings
    spectral   Rayleigh-Ritz Poincare estimation, Bochner/Brascamp-Lieb checks
    localize   Gaussian localization at fixed s
    eldansl    time-parameterized stochastic localization SDE
    matrixineq trace / exp-trace / soft-max / 3-tensor inequalities
    monge      discrete L1-cost transport: primal, dual, monotonicity
    slicing    isotropic constants, log-Laplace transform, section ratios
    cli        experiment runner and acceptance suite
"""

__version__ = "0.1.0"

from . import measures  # noqa: F401
