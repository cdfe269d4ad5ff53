"""Gravity-induced localization of a matter ball in a nonunitary Newtonian model.

The physical body and its hidden gravitational partner share a meta-state
Xi(X, Y) = psi_cm((X+Y)/2) phi(X-Y). The relative factor is propagated
numerically in the mutual potential of two interpenetrating balls, the
centre factor analytically; tracing out Y gives the physical density matrix.
"""

__version__ = "0.1.0"
