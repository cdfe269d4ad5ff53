"""Halved mutual gravitational energy of two interpenetrating uniform balls."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .units import CONSTANTS, HBAR, PhysicalSetup


def potential(setup: PhysicalSetup, r):
    """V(r) in erg for centre separation ``r`` (cm); scalar or array.

    Interior polynomial for r <= 2R, Newtonian tail -GM^2/(2r) beyond.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("separation must be non-negative")
    R = setup.radius
    scale = 0.5 * CONSTANTS.G * setup.mass**2
    inside = r_arr <= 2.0 * R
    poly = (80 * R**3 * r_arr**2 - 30 * R**2 * r_arr**3 + r_arr**5 - 192 * R**5) / (160 * R**6)
    with np.errstate(divide="ignore"):
        tail = -1.0 / r_arr
    out = scale * np.where(inside, poly, tail)
    return float(out) if np.ndim(r) == 0 else out


def quadratic_coefficient(setup: PhysicalSetup) -> float:
    """k in V(r) ~ V(0) + k r^2, i.e. G M^2 / (4 R^3)."""
    return CONSTANTS.G * setup.mass**2 / (4.0 * setup.radius**3)


def harmonic_params(setup: PhysicalSetup) -> tuple[float, float]:
    """(omega, width) of the small-oscillation ground state.

    Reduced mass M/2 in V ~ k r^2 gives omega = sqrt(GM/R^3); the ground
    state is exp(-r^2 / (2 width^2)) with width^2 = 2 hbar / (M omega).
    """
    if setup.lambda_g >= setup.radius:
        raise ValueError("harmonic regime requires lambda_g < R")
    omega = math.sqrt(CONSTANTS.G * setup.mass / setup.radius**3)
    width = math.sqrt(2.0 * HBAR / (setup.mass * omega))
    return omega, width


@dataclass(frozen=True)
class PotentialTable:
    setup: PhysicalSetup
    r: np.ndarray
    V: np.ndarray

    @classmethod
    def tabulate(cls, setup: PhysicalSetup, r: np.ndarray) -> "PotentialTable":
        r = np.asarray(r, dtype=float)
        return cls(setup, r, potential(setup, r))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r_cm", "V_erg"])
            for ri, vi in zip(self.r, self.V):
                w.writerow([f"{ri:.17g}", f"{vi:.17g}"])
