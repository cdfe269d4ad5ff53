"""Physical constants (CGS) and closed-form scales of a self-gravitating ball.

All quantities are CGS: grams, centimetres, seconds, ergs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

# CODATA 2018, CGS
G = 6.67430e-8            # cm^3 g^-1 s^-2
HBAR = 1.054571817e-27    # erg s
M_P = 1.67262192369e-24   # g

# Threshold criterion: lambda_g == THRESHOLD_RATIO * R
THRESHOLD_RATIO = 1.0

# Values quoted for the reference run (used as initial condition, not derived)
REFERENCE_MASS_MP = 0.38e12
REFERENCE_RADIUS_CM = 4.8e-5
REFERENCE_LAMBDA_G_CM = 1.6e-6
REFERENCE_LAMBDA_MULTIPLE = 5.6
REFERENCE_T_FINAL = 10.0
ORDINARY_DENSITY = 1e24 * M_P   # g/cm^3


class SetupError(ValueError):
    """Raised for physically inconsistent or sub-threshold parameters."""


@dataclass(frozen=True)
class Constants:
    G: float = G
    hbar: float = HBAR
    m_p: float = M_P


CONSTANTS = Constants()


def ball_volume(radius: float) -> float:
    return 4.0 / 3.0 * math.pi * radius**3


def radius_from_density(mass: float, density: float) -> float:
    return (3.0 * mass / (4.0 * math.pi * density)) ** (1.0 / 3.0)


def density_from_radius(mass: float, radius: float) -> float:
    return mass / ball_volume(radius)


def ground_width(mass: float, radius: float, c: Constants = CONSTANTS) -> float:
    """Gravitational bound-state width (8 hbar^2 R^3 / G M^3)^(1/4)."""
    return (8.0 * c.hbar**2 * radius**3 / (c.G * mass**3)) ** 0.25


def localization_time(mass: float, density: float, c: Constants = CONSTANTS) -> float:
    """tau_g = hbar / (G M^(5/3) rho^(1/3))."""
    return c.hbar / (c.G * mass ** (5.0 / 3.0) * density ** (1.0 / 3.0))


@dataclass(frozen=True)
class PhysicalSetup:
    """A uniform ball and its derived scales.

    ``lambda0`` is the width of the initial relative-motion Gaussian; it is a
    user multiple of either the closed-form ``lambda_g`` or a supplied
    reference width.
    """

    mass: float
    radius: float
    density: float
    lambda_g: float
    tau_g: float
    lambda0: float

    def __post_init__(self) -> None:
        if not (self.mass > 0 and self.radius > 0 and self.density > 0):
            raise SetupError("mass, radius and density must be positive")
        rho = density_from_radius(self.mass, self.radius)
        if abs(rho - self.density) > 1e-6 * rho:
            raise SetupError(f"density {self.density!r} inconsistent with M/V = {rho!r}")
        lg = ground_width(self.mass, self.radius)
        if abs(lg - self.lambda_g) > 1e-9 * lg:
            raise SetupError("lambda_g does not match its closed form")
        if self.lambda_g >= THRESHOLD_RATIO * self.radius:
            raise SetupError(
                f"lambda_g = {self.lambda_g:.3e} cm >= R = {self.radius:.3e} cm: "
                "below the localization threshold, harmonic treatment invalid"
            )
        if not self.lambda0 > 0:
            raise SetupError("lambda0 must be positive")

    @property
    def mass_mp(self) -> float:
        return self.mass / M_P

    def as_dict(self) -> dict[str, float]:
        return {
            "mass_g": self.mass,
            "mass_mp": self.mass_mp,
            "radius_cm": self.radius,
            "density_g_cm3": self.density,
            "lambda_g_cm": self.lambda_g,
            "tau_g_s": self.tau_g,
            "lambda0_cm": self.lambda0,
        }


def setup_from_mass_radius(mass: float, radius: float, lambda0: float) -> PhysicalSetup:
    density = density_from_radius(mass, radius)
    return PhysicalSetup(
        mass=mass,
        radius=radius,
        density=density,
        lambda_g=ground_width(mass, radius),
        tau_g=localization_time(mass, density),
        lambda0=lambda0,
    )


def make_setup(
    mass_in_proton_masses: float,
    density: float,
    lambda_multiple: float,
    reference_width: float | None = None,
) -> PhysicalSetup:
    """Build a validated setup from mass (proton masses) and density (g/cm^3).

    ``lambda0 = lambda_multiple * reference_width``; the reference defaults
    to the closed-form ``lambda_g``.
    """
    if not mass_in_proton_masses > 0:
        raise SetupError("mass must be positive")
    if not density > 0:
        raise SetupError("density must be positive")
    if not lambda_multiple >= 1:
        raise SetupError("lambda_multiple must be >= 1")
    mass = mass_in_proton_masses * M_P
    radius = radius_from_density(mass, density)
    lg = ground_width(mass, radius)
    ref = lg if reference_width is None else reference_width
    if not ref > 0:
        raise SetupError("reference width must be positive")
    return PhysicalSetup(
        mass=mass,
        radius=radius,
        density=density,
        lambda_g=lg,
        tau_g=localization_time(mass, density),
        lambda0=lambda_multiple * ref,
    )


def reference_setup() -> PhysicalSetup:
    """M = 0.38e12 m_p, R = 4.8e-5 cm, lambda0 = 5.6 x 1.6e-6 cm."""
    mass = REFERENCE_MASS_MP * M_P
    return make_setup(
        REFERENCE_MASS_MP,
        density_from_radius(mass, REFERENCE_RADIUS_CM),
        REFERENCE_LAMBDA_MULTIPLE,
        reference_width=REFERENCE_LAMBDA_G_CM,
    )


def threshold_mass(density: float, c: Constants = CONSTANTS) -> float:
    """Mass (g) at which lambda_g equals R for the given density.

    M_t = [8 hbar^2 (4 pi rho / 3)^(1/3) / G]^(3/10), so M_t ~ rho^(1/10).
    """
    if not density > 0:
        raise SetupError("density must be positive")
    k = THRESHOLD_RATIO**-4
    return (k * 8.0 * c.hbar**2 * (4.0 * math.pi * density / 3.0) ** (1.0 / 3.0) / c.G) ** 0.3


def apply_scaling(setup: PhysicalSetup, t: float, lam: float) -> tuple[PhysicalSetup, float]:
    """Map a solution onto the lambda-scaled family.

    t -> lam t, M -> lam^(-1/5) M, every length -> lam^(3/5) length.
    """
    if not lam > 0:
        raise SetupError("scaling parameter must be positive")
    length = lam**0.6
    mass = setup.mass * lam**-0.2
    radius = setup.radius * length
    scaled = setup_from_mass_radius(mass, radius, setup.lambda0 * length)
    if abs(scaled.tau_g - lam * setup.tau_g) > 1e-9 * lam * setup.tau_g:
        raise SetupError("tau_g failed to scale linearly; inconsistent setup")
    return scaled, lam * t


def with_lambda0(setup: PhysicalSetup, lambda0: float) -> PhysicalSetup:
    return replace(setup, lambda0=lambda0)
