"""dptool: grid-based verification toolkit for double-phase elliptic
estimates -- maximal operators, Riesz potentials, weighted mean-value
polynomials, Whitney coverings, Lipschitz truncation, and Gehring
self-improvement, each with measured-constant reports."""

__version__ = "0.1.0"
