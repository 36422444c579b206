"""Model-order-reduction workbench for 1D transport-dominated problems.

Full-order solvers for linear and nonlinear conservation laws, a POD
baseline, and a projection ROM whose time-and-parameter-dependent basis is
produced by a pair of small trained networks. A config-driven CLI runs the
bundled experiments and writes tables, spectra, and figures.
"""

__version__ = "0.1.0"
