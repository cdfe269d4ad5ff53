"""Trace over the hidden body: the physical density-matrix slice rho(x,0,0; x',0,0).

For X = (x, 0, 0) the integrand depends on the hidden position Y only
through its axial coordinate y and its distance s from the x-axis, so

    K(x, x') = 2 pi int dy int s ds  F_x(y, s) conj(F_x'(y, s)),
    F_x(y, s) = psi_cm(((x+y)^2 + s^2)/4) phi(sqrt((x-y)^2 + s^2)).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .cm_evolution import CmState, cm_amplitude, trapezoid_weights
from .solver import RadialState

BOUNDARY_TOL = 1e-6


class QuadratureError(RuntimeError):
    pass


class SliceError(ValueError):
    pass


@dataclass(frozen=True)
class SliceGrid1D:
    n: int
    x_max: float

    def __post_init__(self) -> None:
        if self.n < 3 or not self.x_max > 0:
            raise SliceError("slice grid needs n >= 3 and x_max > 0")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.x_max, self.x_max, self.n)

    @property
    def dx(self) -> float:
        return 2.0 * self.x_max / (self.n - 1)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.x)


@dataclass(frozen=True)
class QuadratureSpec:
    """Uniform (y, s) trapezoidal grid; extents in units of the centre-of-mass width."""

    n_y: int = 512
    n_s: int = 256
    n_widths: float = 4.0
    block_rows: int = 16


@dataclass
class DensityMatrixSlice:
    grid: SliceGrid1D
    kernel: np.ndarray
    normalized: bool = False

    def trace(self) -> float:
        return float(np.sum(self.grid.weights * np.diag(self.kernel).real))

    def unit_trace(self) -> "DensityMatrixSlice":
        tr = self.trace()
        if not tr > 0:
            raise SliceError("non-positive trace: corrupted slice")
        return DensityMatrixSlice(self.grid, self.kernel / tr, True)

    def hermiticity_error(self) -> float:
        K = self.kernel
        return float(np.max(np.abs(K - K.conj().T)) / np.max(np.abs(K)))


class InterpolatedRelative:
    """phi(r) = chi(r)/sqrt(4 pi) from a radial state, linear in r, zero beyond r_max."""

    def __init__(self, state: RadialState):
        self.r_nodes, chi = state.chi_table()
        self.values = chi / math.sqrt(4.0 * math.pi)
        self.r_max = state.grid.r_max

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.r_nodes, self.values, right=0.0)


def relative_factor(rel) -> Callable:
    if isinstance(rel, RadialState):
        return InterpolatedRelative(rel)
    return rel


def meta_wavefunction(cm: CmState, rel, X, Y) -> complex:
    """Xi(X, Y) = psi_cm((X+Y)/2) phi(|X-Y|), normalized over d^3X d^3Y."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    phi = relative_factor(rel)
    s_sq = np.sum((X + Y) ** 2, axis=-1) / 4.0
    r = np.sqrt(np.sum((X - Y) ** 2, axis=-1))
    out = cm_amplitude(cm, s_sq) * phi(r)
    return complex(out) if np.ndim(out) == 0 else out


def quadrature_nodes(cm: CmState, rel, quad: QuadratureSpec):
    """(y, wy, s, ws): nodes and weights, ws including the 2 pi s measure."""
    phi = relative_factor(rel)
    half = quad.n_widths * cm.density_width
    y = np.linspace(-half, half, quad.n_y)
    s_max = min(half, getattr(phi, "r_max", math.inf))
    s = np.linspace(0.0, s_max, quad.n_s)
    return y, trapezoid_weights(y), s, 2.0 * math.pi * s * trapezoid_weights(s)


def trace_out_slice(
    cm: CmState,
    rel,
    grid: SliceGrid1D,
    quad: QuadratureSpec | None = None,
    normalize: bool = True,
) -> DensityMatrixSlice:
    """Reduced density-matrix slice along x by quadrature over the hidden body.

    Raises QuadratureError when the integrand at the y or s box edge exceeds
    BOUNDARY_TOL of its maximum.
    """
    quad = quad or QuadratureSpec()
    phi = relative_factor(rel)
    x = grid.x
    y, wy, s, ws = quadrature_nodes(cm, phi, quad)
    Kr = np.zeros((grid.n, grid.n))
    Ki = np.zeros((grid.n, grid.n))
    peak = 0.0
    edge = 0.0
    xc = x[:, None, None]
    ss = s[None, None, :] ** 2
    for start in range(0, quad.n_y, quad.block_rows):
        yb = y[start:start + quad.block_rows][None, :, None]
        F = cm_amplitude(cm, ((xc + yb) ** 2 + ss) / 4.0) * phi(np.sqrt((xc - yb) ** 2 + ss))
        dens = np.abs(F) ** 2
        peak = max(peak, float(dens.max()))
        edge = max(edge, float(dens[:, :, -1].max()))
        if start == 0:
            edge = max(edge, float(dens[:, 0, :].max()))
        if start + quad.block_rows >= quad.n_y:
            edge = max(edge, float(dens[:, -1, :].max()))
        w = (wy[start:start + quad.block_rows][:, None] * ws[None, :]).ravel()
        F = F.reshape(grid.n, -1)
        G = F * w
        _kernels.accumulate_gram(
            Kr, Ki,
            np.ascontiguousarray(F.real), np.ascontiguousarray(F.imag),
            np.ascontiguousarray(G.real), np.ascontiguousarray(G.imag),
        )
    if peak == 0.0:
        raise QuadratureError("integrand vanishes on the quadrature box")
    if edge > BOUNDARY_TOL * peak:
        raise QuadratureError(
            f"quadrature box too small: edge/peak = {edge / peak:.2e} > {BOUNDARY_TOL:.0e}"
        )
    K = Kr + 1j * Ki
    upper = np.triu(K)
    K = upper + np.triu(K, 1).conj().T
    np.fill_diagonal(K, np.diag(upper).real)
    out = DensityMatrixSlice(grid, K, False)
    return out.unit_trace() if normalize else out


def purity(slice_: DensityMatrixSlice) -> float:
    """Tr K^2 / (Tr K)^2 by double trapezoidal sums."""
    w = slice_.grid.weights
    K = slice_.kernel
    tr = float(np.sum(w * np.diag(K).real))
    if not tr > 0:
        raise SliceError("non-positive trace: corrupted slice")
    tr2 = float(np.real(np.einsum("i,ij,j,ji->", w, K, w, K)))
    return tr2 / tr**2


def write_kernel(slice_: DensityMatrixSlice, stem: str | Path, meta: dict | None = None) -> list[Path]:
    """Kernel dump: ``stem.csv`` (x_i, x_j, Re K, Im K) and ``stem.json``."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    x = slice_.grid.x
    K = slice_.kernel
    with open(csv_path, "w") as fh:
        fh.write("x_i,x_j,re_K,im_K\n")
        for i in range(slice_.grid.n):
            xi = f"{x[i]:.17g}"
            for j in range(slice_.grid.n):
                k = K[i, j]
                fh.write(f"{xi},{x[j]:.17g},{k.real:.17g},{k.imag:.17g}\n")
    info = {
        "grid": {"n": slice_.grid.n, "x_max": slice_.grid.x_max},
        "normalized": slice_.normalized,
        "trace": slice_.trace(),
        "hermiticity_error": slice_.hermiticity_error(),
    }
    if meta:
        info.update(meta)
    json_path.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return [csv_path, json_path]


def read_kernel(path: str | Path) -> tuple[DensityMatrixSlice, dict]:
    path = Path(path)
    info = json.loads(path.with_suffix(".json").read_text())
    n = int(info["grid"]["n"])
    grid = SliceGrid1D(n, float(info["grid"]["x_max"]))
    with open(path.with_suffix(".csv")) as fh:
        rows = list(csv.reader(fh))[1:]
    if len(rows) != n * n:
        raise SliceError(f"expected {n * n} kernel rows, found {len(rows)}")
    data = np.array(rows, dtype=float)
    K = (data[:, 2] + 1j * data[:, 3]).reshape(n, n)
    return DensityMatrixSlice(grid, K, bool(info.get("normalized", False))), info
