"""Localization observables of a density-matrix slice."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .densmat import DensityMatrixSlice, purity

EIGEN_CLIP = -1e-8
MAX_ITER = 200
XTOL = 1e-10


class FitError(RuntimeError):
    def __init__(self, message: str, fit: "GaussianFit | None" = None):
        super().__init__(message)
        self.fit = fit


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    lambda_plus: float
    lambda_minus: float
    rms_residual: float
    iterations: int = 0

    @property
    def ratio(self) -> float:
        return self.lambda_minus / self.lambda_plus


def double_gaussian(x, xp, amplitude, lambda_plus, lambda_minus):
    """A exp(-(x+x')^2/L+^2) exp(-(x-x')^2/L-^2) on the outer grid of x, x'."""
    u = np.asarray(x)[:, None] + np.asarray(xp)[None, :]
    v = np.asarray(x)[:, None] - np.asarray(xp)[None, :]
    return amplitude * np.exp(-(u**2) / lambda_plus**2 - v**2 / lambda_minus**2)


def _moment_guess(x, data):
    u = (x[:, None] + x[None, :]).ravel()
    v = (x[:, None] - x[None, :]).ravel()
    d = data.ravel()
    tot = d.sum()
    lp = math.sqrt(2.0 * float(np.sum(d * u**2)) / tot)
    lm = math.sqrt(2.0 * float(np.sum(d * v**2)) / tot)
    return np.array([float(d.max()), lp, lm])


def fit_double_gaussian(slice_: DensityMatrixSlice) -> GaussianFit:
    """Levenberg-Marquardt fit of the double Gaussian to |K|.

    Starts from second moments of |K| along u = x+x' and v = x-x'; stops when
    every relative parameter update is below 1e-10.
    """
    data = np.abs(slice_.kernel)
    scale = float(data.max())
    if scale == 0.0:
        raise FitError("degenerate slice: all zeros")
    y = (data / scale).ravel()
    x = slice_.grid.x
    u2 = ((x[:, None] + x[None, :]) ** 2).ravel()
    v2 = ((x[:, None] - x[None, :]) ** 2).ravel()

    def model(p):
        return p[0] * np.exp(-u2 / p[1] ** 2 - v2 / p[2] ** 2)

    p = _moment_guess(x, data / scale)
    m = model(p)
    cost = float(np.sum((m - y) ** 2))
    damping = 1e-3
    for it in range(1, MAX_ITER + 1):
        J = np.column_stack([m / p[0], m * 2 * u2 / p[1] ** 3, m * 2 * v2 / p[2] ** 3])
        JTJ = J.T @ J
        g = J.T @ (y - m)
        while True:
            step = np.linalg.solve(JTJ + damping * np.diag(np.diag(JTJ)), g)
            trial = p + step
            if np.all(trial > 0):
                m_trial = model(trial)
                cost_trial = float(np.sum((m_trial - y) ** 2))
                if cost_trial <= cost:
                    break
            damping *= 10.0
            if damping > 1e20:
                step = np.zeros(3)
                trial, m_trial, cost_trial = p, m, cost
                break
        p, m, cost = trial, m_trial, cost_trial
        damping = max(damping / 10.0, 1e-12)
        if np.all(np.abs(step) <= XTOL * np.abs(p)):
            rms = math.sqrt(cost / y.size)
            return GaussianFit(p[0] * scale, p[1], p[2], rms, it)
    rms = math.sqrt(cost / y.size)
    fit = GaussianFit(p[0] * scale, p[1], p[2], rms, MAX_ITER)
    raise FitError(f"no convergence after {MAX_ITER} iterations (rms residual {rms:.3e})", fit)


def ensemble_entropy(purity_value: float) -> tuple[float, float, float]:
    """(n_eff, per-axis entropy, three-axis entropy) for an equiprobable ensemble, nats."""
    if not 0.0 < purity_value <= 1.0 + 1e-12:
        raise ValueError(f"purity {purity_value!r} outside (0, 1]")
    n_eff = 1.0 / purity_value
    s_axis = max(math.log(n_eff), 0.0)
    return n_eff, s_axis, 3.0 * s_axis


def spectrum(slice_: DensityMatrixSlice) -> np.ndarray:
    """Eigenvalues (descending) of the unit-trace kernel operator on the trapezoidal grid."""
    sw = np.sqrt(slice_.grid.weights)
    tr = slice_.trace()
    if not tr > 0:
        raise SpectrumError("non-positive trace")
    A = sw[:, None] * slice_.kernel * sw[None, :] / tr
    A = 0.5 * (A + A.conj().T)
    p = np.linalg.eigvalsh(A)[::-1]
    if p.min() < EIGEN_CLIP:
        raise SpectrumError(f"negative eigenvalue {p.min():.3e}: quadrature failure")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def spectral_entropy(slice_: DensityMatrixSlice) -> tuple[np.ndarray, float]:
    p = spectrum(slice_)
    nz = p[p > 0]
    return p, float(max(-np.sum(nz * np.log(nz)), 0.0))


def naive_count(fit: GaussianFit, lambda_g: float) -> float:
    if not lambda_g > 0:
        raise ValueError("lambda_g must be positive")
    return fit.lambda_plus / lambda_g


@dataclass
class LocalizationReport:
    fit: GaussianFit
    purity: float
    n_eff: float
    s_axis: float
    s_total: float
    spectrum: np.ndarray = field(repr=False)
    s_spectral: float = 0.0
    spectral_purity: float = 1.0
    naive_counts: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        fit = asdict(self.fit)
        fit["ratio"] = self.fit.ratio
        return {
            "fit": fit,
            "purity": self.purity,
            "spectral_purity": self.spectral_purity,
            "n_eff": self.n_eff,
            "s_axis": self.s_axis,
            "s_total": self.s_total,
            "s_spectral": self.s_spectral,
            "s_spectral_total": 3.0 * self.s_spectral,
            "naive_counts": self.naive_counts,
            "n_eigenvalues": int(self.spectrum.size),
            "top_eigenvalues": [float(v) for v in self.spectrum[:10]],
        }

    def write(self, stem: str | Path) -> list[Path]:
        """``stem.json`` (report) and ``stem_spectrum.csv`` (j, p_j)."""
        stem = Path(stem)
        jpath = stem.with_suffix(".json")
        cpath = stem.with_name(stem.name + "_spectrum.csv")
        jpath.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        with open(cpath, "w") as fh:
            fh.write("j,p_j\n")
            for j, pj in enumerate(self.spectrum, start=1):
                fh.write(f"{j},{pj:.17g}\n")
        return [jpath, cpath]


def analyze(slice_: DensityMatrixSlice, lambda_refs: dict[str, float] | None = None) -> LocalizationReport:
    fit = fit_double_gaussian(slice_)
    pur = purity(slice_)
    n_eff, s_axis, s_total = ensemble_entropy(min(pur, 1.0))
    p, s_spec = spectral_entropy(slice_)
    counts = {k: naive_count(fit, v) for k, v in (lambda_refs or {}).items()}
    return LocalizationReport(
        fit=fit,
        purity=pur,
        n_eff=n_eff,
        s_axis=s_axis,
        s_total=s_total,
        spectrum=p,
        s_spectral=s_spec,
        spectral_purity=float(np.sum(p**2)),
        naive_counts=counts,
    )
