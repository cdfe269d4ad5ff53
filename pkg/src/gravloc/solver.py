"""Crank-Nicolson propagation of the reduced radial function u(r) = r chi(r).

The relative coordinate has reduced mass M/2, so the radial Hamiltonian is
H = -(hbar^2/M) d^2/dr^2 + V(r) with Dirichlet walls at r = 0 and r_max.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .potential import potential
from .units import HBAR, PhysicalSetup, setup_from_mass_radius


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    """Interior nodes r_i = i dr, i = 1..n_points; u vanishes at 0 and r_max."""

    n_points: int
    r_max: float

    def __post_init__(self) -> None:
        if self.n_points < 3 or not self.r_max > 0:
            raise GridError("need n_points >= 3 and r_max > 0")

    @property
    def dr(self) -> float:
        return self.r_max / (self.n_points + 1)

    @property
    def r(self) -> np.ndarray:
        return self.dr * np.arange(1, self.n_points + 1)

    def scaled(self, length_factor: float) -> "RadialGrid":
        return RadialGrid(self.n_points, self.r_max * length_factor)


def default_grid(setup: PhysicalSetup, n_points: int = 10_000, r_max_fraction: float = 0.5) -> RadialGrid:
    return RadialGrid(n_points, r_max_fraction * setup.radius)


@dataclass(frozen=True)
class RadialState:
    grid: RadialGrid
    u: np.ndarray
    t: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.u) ** 2) * self.grid.dr)

    def chi(self) -> np.ndarray:
        """chi = u / r at the interior nodes."""
        return self.u / self.grid.r

    def chi_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes including both walls and chi there.

        chi(0) is extrapolated linearly from the first two nodes; chi(r_max) = 0.
        """
        chi = self.chi()
        r = np.concatenate(([0.0], self.grid.r, [self.grid.r_max]))
        c0 = 2.0 * chi[0] - chi[1]
        return r, np.concatenate(([c0], chi, [0.0]))


def truncated_tail_fraction(lambda0: float, r_max: float) -> float:
    """Probability of r^2 exp(-r^2/lambda0^2) beyond r_max (removed by renormalization)."""
    x = r_max / lambda0
    return math.erfc(x) + 2.0 / math.sqrt(math.pi) * x * math.exp(-x * x)


def gaussian_state(grid: RadialGrid, width: float, t: float = 0.0) -> RadialState:
    """u = r exp(-r^2/(2 width^2)) normalized on the grid."""
    r = grid.r
    u = (r * np.exp(-(r**2) / (2.0 * width**2))).astype(np.complex128)
    nrm = math.sqrt(float(np.sum(np.abs(u) ** 2)) * grid.dr)
    if nrm == 0:
        raise GridError("gaussian vanishes on the grid")
    return RadialState(grid, u / nrm, t)


def initial_state(setup: PhysicalSetup, grid: RadialGrid) -> RadialState:
    if not grid.dr < setup.lambda0 / 20:
        raise GridError(f"grid too coarse: dr = {grid.dr:.3e} cm, need < lambda0/20 = {setup.lambda0 / 20:.3e} cm")
    return gaussian_state(grid, setup.lambda0)


@dataclass(frozen=True)
class PropagatorWorkspace:
    """Factorized (1 + iH dt/2hbar) and banded (1 - iH dt/2hbar) on one grid."""

    grid: RadialGrid
    dt: float
    h_diag: np.ndarray
    h_off: float
    a_lower: np.ndarray = field(repr=False)
    b_diag: np.ndarray = field(repr=False)
    b_off: complex = 0j
    cprime: np.ndarray = field(repr=False, default=None)
    inv_denom: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, grid: RadialGrid, V: np.ndarray, dt: float, kinetic: float) -> "PropagatorWorkspace":
        """``kinetic`` is the coefficient of -d^2/dr^2 (hbar^2/M for the relative motion)."""
        V = np.asarray(V, dtype=float)
        if V.shape != (grid.n_points,):
            raise GridError("potential does not match grid")
        k = kinetic / grid.dr**2
        h_diag = 2.0 * k + V
        h_off = -k
        kappa = 0.5j * dt / HBAR
        n = grid.n_points
        a_diag = 1.0 + kappa * h_diag
        a_off = np.full(n, kappa * h_off, dtype=np.complex128)
        cprime, inv_denom = _kernels.thomas_factor(a_off, a_diag.astype(np.complex128), a_off)
        return cls(
            grid=grid,
            dt=dt,
            h_diag=h_diag,
            h_off=h_off,
            a_lower=a_off,
            b_diag=(1.0 - kappa * h_diag).astype(np.complex128),
            b_off=complex(-kappa * h_off),
            cprime=cprime,
            inv_denom=inv_denom,
        )

    def hamiltonian(self) -> np.ndarray:
        """Dense H (for tests and small grids only)."""
        n = self.grid.n_points
        H = np.diag(self.h_diag)
        H += np.diag(np.full(n - 1, self.h_off), 1) + np.diag(np.full(n - 1, self.h_off), -1)
        return H


def relative_workspace(setup: PhysicalSetup, grid: RadialGrid, dt: float, gravity: bool = True) -> PropagatorWorkspace:
    V = potential(setup, grid.r) if gravity else np.zeros(grid.n_points)
    return PropagatorWorkspace.build(grid, V, dt, HBAR**2 / setup.mass)


def advance(state: RadialState, ws: PropagatorWorkspace, n_steps: int) -> RadialState:
    if state.grid != ws.grid:
        raise GridError("workspace built for a different grid")
    if n_steps == 0:
        return state
    u = _kernels.cn_advance(
        np.ascontiguousarray(state.u, dtype=np.complex128),
        n_steps, ws.a_lower, ws.b_diag, ws.b_off, ws.cprime, ws.inv_denom,
    )
    return RadialState(state.grid, u, state.t + n_steps * ws.dt)


def step(state: RadialState, ws: PropagatorWorkspace) -> RadialState:
    return advance(state, ws, 1)


@dataclass
class Evolution:
    final: RadialState
    checkpoints: list[RadialState]
    norm_drift: float
    dt: float
    n_steps: int


def evolve(
    setup: PhysicalSetup,
    grid: RadialGrid,
    t_final: float,
    n_steps: int,
    checkpoint_every: int = 10_000,
    gravity: bool = True,
    state: RadialState | None = None,
    on_checkpoint: Callable[[RadialState, int], None] | None = None,
) -> Evolution:
    """Propagate from ``state`` (default: the initial Gaussian) to ``t_final``.

    ``n_steps = 0`` returns the input unchanged; otherwise dt = t_final / n_steps
    must be nonzero. Checkpoints are taken every ``checkpoint_every`` steps and
    at the final step.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if state is None:
        state = initial_state(setup, grid)
    norm0 = state.norm
    if n_steps == 0:
        return Evolution(state, [state], 0.0, 0.0, 0)
    dt = (t_final - state.t) / n_steps
    if dt == 0:
        raise ValueError("dt = 0: t_final equals the start time")
    ws = relative_workspace(setup, grid, dt, gravity)
    every = checkpoint_every if checkpoint_every > 0 else n_steps
    checkpoints = [state]
    done = 0
    while done < n_steps:
        chunk = min(every, n_steps - done)
        state = advance(state, ws, chunk)
        done += chunk
        checkpoints.append(state)
        if on_checkpoint is not None:
            on_checkpoint(state, done)
    return Evolution(state, checkpoints, state.norm - norm0, dt, n_steps)


def write_checkpoint(state: RadialState, setup: PhysicalSetup, stem: str | Path, extra: dict | None = None) -> list[Path]:
    """Write ``stem.csv`` (r, Re u, Im u) and ``stem.json``; returns both paths."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    with open(csv_path, "w") as fh:
        fh.write("r_cm,re_u,im_u\n")
        for ri, ui in zip(state.grid.r, state.u):
            fh.write(f"{ri:.17g},{ui.real:.17g},{ui.imag:.17g}\n")
    meta = {
        "setup": {
            "mass": setup.mass,
            "radius": setup.radius,
            "lambda0": setup.lambda0,
        },
        "grid": {"n_points": state.grid.n_points, "r_max": state.grid.r_max},
        "t": state.t,
        "norm": state.norm,
    }
    if extra:
        meta.update(extra)
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [csv_path, json_path]


def read_checkpoint(path: str | Path) -> tuple[RadialState, PhysicalSetup, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    grid = RadialGrid(int(meta["grid"]["n_points"]), float(meta["grid"]["r_max"]))
    if data.shape[0] != grid.n_points:
        raise GridError("checkpoint row count does not match its grid")
    s = meta["setup"]
    setup = setup_from_mass_radius(s["mass"], s["radius"], s["lambda0"])
    u = data[:, 1] + 1j * data[:, 2]
    return RadialState(grid, u, float(meta["t"])), setup, meta
