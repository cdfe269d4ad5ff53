"""Free Gaussian evolution of the centre of meta-mass and the gravity-free control.

The centre coordinate S = (X+Y)/2 carries mass 2M and evolves as
psi(S, t) = N(t) exp(-|S|^2 / w(t)),  w(t) = lambda0^2/2 + i hbar t / M.
With V = 0 the relative coordinate r = X - Y (reduced mass M/2) obeys the
same law in the variable r/2, so one complex width describes both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .units import HBAR, PhysicalSetup


@dataclass(frozen=True)
class CmState:
    setup: PhysicalSetup
    width: float
    t: float = 0.0

    def __post_init__(self) -> None:
        if not self.width > 0:
            raise ValueError("width must be positive")

    @classmethod
    def initial(cls, setup: PhysicalSetup, t: float = 0.0) -> "CmState":
        return cls(setup, setup.lambda0, t)

    @property
    def w(self) -> complex:
        return complex(0.5 * self.width**2, HBAR * self.t / self.setup.mass)

    @property
    def density_width(self) -> float:
        """L such that |psi|^2, seen as a function of the hidden position Y, is exp(-|X+Y|^2/L^2)."""
        c = (1.0 / self.w).real
        return math.sqrt(2.0 / c)


def gaussian_norm(w: complex) -> complex:
    """N with |N|^2 int exp(-2 Re(1/w) q^2) d^3q = 1, carrying the free-evolution phase w^(-3/2)."""
    return (2.0 * w.real / math.pi) ** 0.75 * w ** -1.5


def cm_amplitude(state: CmState, s_sq):
    """psi_cm at |S|^2 = ``s_sq`` (cm^2), normalized over d^3S."""
    if state.t < 0:
        raise ValueError("t must be >= 0")
    w = state.w
    return gaussian_norm(w) * np.exp(-np.asarray(s_sq) / w)


def width_growth(setup: PhysicalSetup, width: float, t: float) -> float:
    """Factor by which the |psi|^2 width of the centre Gaussian has grown at t."""
    return math.sqrt(1.0 + (2.0 * HBAR * t / (setup.mass * width**2)) ** 2)


@dataclass(frozen=True)
class FreeRelative:
    """Analytic relative factor phi(r) for V = 0, normalized over d^3r."""

    cm: CmState

    def __call__(self, r):
        w = self.cm.w
        # phi(r) = psi_cm-form in r/2, rescaled by 2^(-3/2) for d^3r = 8 d^3(r/2)
        return gaussian_norm(w) * 2.0**-1.5 * np.exp(-(np.asarray(r) ** 2) / (4.0 * w))

    @property
    def r_max(self) -> float:
        return math.inf


def analytic_kernel(x, xp, a_cm: complex, a_rel: complex) -> np.ndarray:
    """Unnormalized slice rho(x,0,0; x',0,0) of exp(-|X+Y|^2/a_cm) exp(-|X-Y|^2/a_rel).

    Closed-form Gaussian integral over the hidden position Y; independent of
    any quadrature.
    """
    alpha = 1.0 / a_cm + 1.0 / a_rel
    beta = 1.0 / a_cm - 1.0 / a_rel
    x = np.asarray(x, dtype=float)[:, None]
    xp = np.asarray(xp, dtype=float)[None, :]
    b = beta * x + np.conj(beta) * xp
    return np.exp(-alpha * x**2 - np.conj(alpha) * xp**2 + b**2 / (2.0 * alpha.real))


def free_kernel(cm: CmState, x) -> np.ndarray:
    """Unit-trace analytic gravity-free slice on the points ``x`` (trapezoidal trace)."""
    a = 4.0 * cm.w
    K = analytic_kernel(x, x, a, a)
    w = trapezoid_weights(np.asarray(x, dtype=float))
    return K / float(np.sum(w * np.diag(K).real))


def free_coherence_length(cm: CmState) -> float:
    """Lambda_+ (= Lambda_-) of the gravity-free slice, |K| = exp(-(u^2+v^2)/L^2)."""
    a = 4.0 * cm.w
    alpha = 2.0 / a
    return math.sqrt(2.0 / alpha.real)


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Trapezoidal weights on a uniform 1D grid."""
    n = x.shape[0]
    if n < 2:
        return np.ones(n)
    w = np.full(n, (x[-1] - x[0]) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def free_density_slice(setup: PhysicalSetup, width: float, t: float, grid_1d, quad=None, analytic: bool = False):
    """Gravity-free control slice at time t.

    By default the exact product meta-state is traced with the same
    quadrature as the gravity run; ``analytic=True`` returns the closed-form
    kernel instead.
    """
    from .densmat import DensityMatrixSlice, trace_out_slice

    cm = CmState(setup, width, t)
    if analytic:
        return DensityMatrixSlice(grid_1d, free_kernel(cm, grid_1d.x), normalized=True)
    return trace_out_slice(cm, FreeRelative(cm), grid_1d, quad)
