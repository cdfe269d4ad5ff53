"""End-to-end runs: derive -> evolve -> trace -> analyze, with manifests and plot data."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import GaussianFit, LocalizationReport, analyze, double_gaussian, spectral_entropy
from .cm_evolution import CmState, FreeRelative, free_coherence_length, free_kernel
from .config import RunConfig
from .densmat import DensityMatrixSlice, SliceGrid1D, trace_out_slice, write_kernel
from .potential import PotentialTable, harmonic_params
from .solver import (
    RadialState,
    default_grid,
    evolve,
    truncated_tail_fraction,
    write_checkpoint,
)
from .units import REFERENCE_LAMBDA_G_CM, M_P, PhysicalSetup, apply_scaling, threshold_mass

log = logging.getLogger(__name__)

FIG6_STEP_R = 0.08   # transverse cross-section offsets k * 0.08 R
FIG6_K = range(5)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def set_workers(n: int) -> int:
    import numba

    if n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()


def derived_quantities(setup: PhysicalSetup) -> dict[str, float]:
    omega, width = harmonic_params(setup)
    m_t = threshold_mass(setup.density)
    return {
        **setup.as_dict(),
        "lambda_g_quoted_cm": REFERENCE_LAMBDA_G_CM,
        "lambda_g_formula_over_quoted": setup.lambda_g / REFERENCE_LAMBDA_G_CM,
        "threshold_mass_g": m_t,
        "threshold_mass_mp": m_t / M_P,
        "mass_over_threshold": setup.mass / m_t,
        "harmonic_omega_per_s": omega,
        "harmonic_period_s": 2 * math.pi / omega,
        "harmonic_ground_width_cm": width,
    }


def slice_grid_for(config: RunConfig, setup: PhysicalSetup, t: float) -> SliceGrid1D:
    expected = free_coherence_length(CmState(setup, setup.lambda0, t))
    return SliceGrid1D(config.slice_n, config.slice_widths * expected)


@dataclass
class PipelineResult:
    config: RunConfig
    setup: PhysicalSetup
    slice: DensityMatrixSlice
    report: LocalizationReport
    initial: RadialState | None = None
    final: RadialState | None = None
    norm_drift: float = 0.0
    checkpoint_entropy: list[tuple[float, float]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def entropy_monotone(self) -> bool:
        s = [e for _, e in self.checkpoint_entropy]
        return all(b >= a - 1e-3 for a, b in zip(s, s[1:]))


class _Run:
    def __init__(self, out_dir: Path | None):
        self.out_dir = out_dir
        self.timings: dict[str, float] = {}
        self.files: list[Path] = []
        self.stage = "init"

    @contextmanager
    def stage_(self, name: str):
        self.stage = name
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0

    def path(self, *parts: str) -> Path | None:
        if self.out_dir is None:
            return None
        p = self.out_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def run_pipeline(config: RunConfig, out_dir: str | Path | None = None, setup: PhysicalSetup | None = None) -> PipelineResult:
    """Execute the full pipeline; writes artifacts and a manifest when ``out_dir`` is given.

    ``setup`` overrides the one derived from ``config`` (used by the scaling check).
    On failure a manifest marked incomplete is still written before re-raising.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    result: PipelineResult | None = None
    try:
        result = _execute(config, setup, run)
        return result
    finally:
        if out is not None:
            write_manifest(run, config, result)


def _execute(config: RunConfig, setup: PhysicalSetup | None, run: _Run) -> PipelineResult:
    set_workers(config.workers)
    with run.stage_("derive"):
        setup = setup or config.make_setup()
        grid = default_grid(setup, config.n_points, config.r_max_fraction)
    t = config.t_final
    cm = CmState(setup, setup.lambda0, t)
    initial = final = None
    drift = 0.0
    checkpoints: list[RadialState] = []

    with run.stage_("evolve"):
        if config.gravity:
            def dump(state: RadialState, k: int) -> None:
                p = run.path("checkpoints", f"step_{k:09d}")
                if p is not None:
                    run.files += write_checkpoint(state, setup, p, {"step": k, "dt": state.t / k})

            ev = evolve(setup, grid, t, config.n_steps, config.checkpoint_every, True, on_checkpoint=dump)
            initial, final = ev.checkpoints[0], ev.final
            checkpoints = ev.checkpoints
            drift = ev.norm_drift
            rel = final
        else:
            rel = FreeRelative(cm)

    with run.stage_("trace"):
        sgrid = slice_grid_for(config, setup, t)
        slice_ = trace_out_slice(cm, rel, sgrid, config.quadrature())
        p = run.path("kernel")
        if p is not None:
            run.files += write_kernel(slice_, p, {"t": t, "gravity": config.gravity, "quadrature": vars(config.quadrature())})

    with run.stage_("analyze"):
        refs = {"lambda_g_formula": setup.lambda_g, "lambda_g_quoted": REFERENCE_LAMBDA_G_CM}
        report = analyze(slice_, refs)
        p = run.path("report")
        if p is not None:
            run.files += report.write(p)

    entropies: list[tuple[float, float]] = []
    if config.gravity and config.checkpoint_entropy and len(checkpoints) > 1:
        with run.stage_("checkpoint_entropy"):
            for st in checkpoints:
                sl = trace_out_slice(CmState(setup, setup.lambda0, st.t), st, slice_grid_for(config, setup, st.t), config.quadrature())
                entropies.append((st.t, spectral_entropy(sl)[1]))
            p = run.path("entropy_vs_time.csv")
            if p is not None:
                with open(p, "w") as fh:
                    fh.write("t_s,s_spectral\n")
                    for tt, s in entropies:
                        fh.write(f"{tt:.17g},{s:.17g}\n")
                run.files.append(p)

    result = PipelineResult(config, setup, slice_, report, initial, final, drift, entropies)
    if run.out_dir is not None:
        with run.stage_("plots"):
            run.files += write_plot_data(run.out_dir, result, grid)
    result.timings = run.timings
    result.files = run.files
    return result


def sample_abs_kernel(slice_: DensityMatrixSlice, xs: np.ndarray, xps: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of |K| at points (xs[k], xps[k]); NaN outside the grid."""
    x = slice_.grid.x
    dx = slice_.grid.dx
    A = np.abs(slice_.kernel)
    fi = (np.asarray(xs) - x[0]) / dx
    fj = (np.asarray(xps) - x[0]) / dx
    out = np.full(fi.shape, np.nan)
    ok = (fi >= 0) & (fi <= len(x) - 1) & (fj >= 0) & (fj <= len(x) - 1)
    i0 = np.clip(np.floor(fi[ok]).astype(int), 0, len(x) - 2)
    j0 = np.clip(np.floor(fj[ok]).astype(int), 0, len(x) - 2)
    a, b = fi[ok] - i0, fj[ok] - j0
    out[ok] = (A[i0, j0] * (1 - a) * (1 - b) + A[i0 + 1, j0] * a * (1 - b)
               + A[i0, j0 + 1] * (1 - a) * b + A[i0 + 1, j0 + 1] * a * b)
    return out


def _write_rows(path: Path, header: str, rows) -> Path:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return path


def write_plot_data(out: Path, res: PipelineResult, grid) -> list[Path]:
    """CSV series and a gnuplot script for the six standard figures."""
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    R = res.setup.radius
    files = []
    r = grid.r
    if res.initial is not None:
        chi0, chi1 = np.abs(res.initial.chi()), np.abs(res.final.chi())
    else:
        cm0 = CmState(res.setup, res.setup.lambda0, 0.0)
        cm1 = CmState(res.setup, res.setup.lambda0, res.config.t_final)
        chi0 = np.abs(FreeRelative(cm0)(r)) * math.sqrt(4 * math.pi)
        chi1 = np.abs(FreeRelative(cm1)(r)) * math.sqrt(4 * math.pi)
    files.append(_write_rows(pdir / "fig1_chi_initial.csv", "r_over_R,abs_chi", zip(r / R, chi0)))
    files.append(_write_rows(pdir / "fig2_chi_final.csv", "r_over_R,abs_chi", zip(r / R, chi1)))

    sl = res.slice
    x = sl.grid.x
    cm = CmState(res.setup, res.setup.lambda0, res.config.t_final)
    Kfree = np.abs(free_kernel(cm, x))
    Kabs = np.abs(sl.kernel)

    def surface(path, K):
        rows = ((x[i] / R, x[j] / R, K[i, j]) for i in range(len(x)) for j in range(len(x)))
        return _write_rows(path, "x_over_R,xp_over_R,abs_rho", rows)

    files.append(surface(pdir / "fig3_rho_free.csv", Kfree))
    files.append(surface(pdir / "fig4_rho.csv", Kabs))

    fit: GaussianFit = res.report.fit
    model = lambda a, b: double_gaussian(np.atleast_1d(a), np.atleast_1d(b), fit.amplitude, fit.lambda_plus, fit.lambda_minus)
    diag_fit = np.array([model(xi, xi)[0, 0] for xi in x])
    files.append(_write_rows(pdir / "fig5_longitudinal.csv", "x_over_R,abs_rho_diag,fit",
                             zip(x / R, np.abs(np.diag(sl.kernel)), diag_fit)))

    rows = []
    X = np.linspace(-0.05 * R, 0.05 * R, 101)
    for k in FIG6_K:
        Xp = -X + k * FIG6_STEP_R * R
        data = sample_abs_kernel(sl, X, Xp)
        fitv = fit.amplitude * np.exp(-((X + Xp) ** 2) / fit.lambda_plus**2 - (X - Xp) ** 2 / fit.lambda_minus**2)
        rows += [(k, xv / (1e-2 * R), d, f) for xv, d, f in zip(X, data, fitv) if np.isfinite(d)]
    files.append(_write_rows(pdir / "fig6_transverse.csv", "k,x_over_1e-2R,abs_rho,fit", rows))

    pot = PotentialTable.tabulate(res.setup, r)
    pot.to_csv(pdir / "potential.csv")
    files.append(pdir / "potential.csv")

    script = pdir / "plots.gp"
    script.write_text(GNUPLOT_SCRIPT)
    files.append(script)
    return files


GNUPLOT_SCRIPT = """\
# gnuplot -c plots.gp   (run inside the plots/ directory)
set datafile separator ','
set terminal pngcairo size 800,600
set output 'fig1_chi_initial.png'
set xlabel 'r/R'; set ylabel '|chi|'
plot 'fig1_chi_initial.csv' skip 1 using 1:2 with lines title 'initial'
set output 'fig2_chi_final.png'
plot 'fig2_chi_final.csv' skip 1 using 1:2 with lines title 'final'
set output 'fig3_rho_free.png'
set xlabel 'X/R'; set ylabel "X'/R"; set pm3d map
splot 'fig3_rho_free.csv' skip 1 using 1:2:3 title '|rho| free'
set output 'fig4_rho.png'
splot 'fig4_rho.csv' skip 1 using 1:2:3 title '|rho| gravity'
unset pm3d
set output 'fig5_longitudinal.png'
set xlabel 'X/R'; set ylabel '|rho(X,X)|'
plot 'fig5_longitudinal.csv' skip 1 using 1:2 with points title 'simulation', \\
     '' skip 1 using 1:3 with lines title 'fit'
set output 'fig6_transverse.png'
set xlabel 'X / (1e-2 R)'; set ylabel "|rho(X,-X+k 0.08R)|"
plot for [k=0:4] 'fig6_transverse.csv' skip 1 using ($1==k ? $2 : 1/0):3 with points notitle, \\
     for [k=0:4] '' skip 1 using ($1==k ? $2 : 1/0):4 with lines title sprintf('k=%d', k)
"""


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run: _Run, config: RunConfig, result: PipelineResult | None) -> Path:
    """manifest.json: config echo, derived values, timings, diagnostics, hashed file list.

    The only output that varies between identical runs (it carries timings).
    """
    out = run.out_dir
    manifest: dict = {
        "tool": "gravloc",
        "version": __version__,
        "complete": result is not None,
        "failed_stage": None if result is not None else run.stage,
        "config": config.as_dict(),
        "timings_s": run.timings,
    }
    if result is not None:
        setup = result.setup
        manifest["derived"] = derived_quantities(setup)
        grid = default_grid(setup, config.n_points, config.r_max_fraction)
        manifest["diagnostics"] = {
            "norm_drift": result.norm_drift,
            "initial_tail_mass_renormalized": truncated_tail_fraction(setup.lambda0, grid.r_max),
            "kernel_hermiticity_error": result.slice.hermiticity_error(),
            "purity_integral": result.report.purity,
            "purity_spectral": result.report.spectral_purity,
            "fit_rms_residual": result.report.fit.rms_residual,
            "fit_iterations": result.report.fit.iterations,
            "entropy_vs_time": result.checkpoint_entropy,
            "entropy_monotone": result.entropy_monotone,
            "workers": set_workers(0),
        }
    manifest["files"] = [
        {"path": str(p.relative_to(out)), "sha256": sha256(p)} for p in sorted(set(run.files)) if p.exists()
    ]
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return path


@dataclass
class ScalingCheck:
    lam: float
    length_factor: float
    lambda_plus_ratio: float
    lambda_minus_ratio: float
    purity_base: float
    purity_scaled: float
    length_tol: float = 0.01
    purity_tol: float = 0.005

    @property
    def length_errors(self) -> tuple[float, float]:
        f = self.length_factor
        return abs(self.lambda_plus_ratio / f - 1), abs(self.lambda_minus_ratio / f - 1)

    @property
    def purity_error(self) -> float:
        return abs(self.purity_scaled / self.purity_base - 1)

    @property
    def passed(self) -> bool:
        return max(self.length_errors) < self.length_tol and self.purity_error < self.purity_tol

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "expected_length_factor": self.length_factor,
            "lambda_plus_ratio": self.lambda_plus_ratio,
            "lambda_minus_ratio": self.lambda_minus_ratio,
            "length_errors": list(self.length_errors),
            "purity_base": self.purity_base,
            "purity_scaled": self.purity_scaled,
            "purity_error": self.purity_error,
            "passed": self.passed,
        }


def scaling_check(config: RunConfig, lam: float, out_dir: str | Path | None = None) -> ScalingCheck:
    """Run the base and lambda-scaled pipelines and compare rescaled observables."""
    cfg = config.replace(checkpoint_entropy=False)
    base_setup = cfg.make_setup()
    out = Path(out_dir) if out_dir is not None else None
    base = run_pipeline(cfg, out / "base" if out else None, base_setup)
    scaled_setup, t_scaled = apply_scaling(base_setup, cfg.t_final, lam)
    scaled = run_pipeline(cfg.replace(t_final=t_scaled), out / "scaled" if out else None, scaled_setup)
    check = ScalingCheck(
        lam=lam,
        length_factor=lam**0.6,
        lambda_plus_ratio=scaled.report.fit.lambda_plus / base.report.fit.lambda_plus,
        lambda_minus_ratio=scaled.report.fit.lambda_minus / base.report.fit.lambda_minus,
        purity_base=base.report.purity,
        purity_scaled=scaled.report.purity,
    )
    if out is not None:
        (out / "scaling_check.json").write_text(json.dumps(check.as_dict(), indent=2, sort_keys=True) + "\n")
    return check
