import math

import numpy as np
import pytest

from gravloc.cm_evolution import CmState, analytic_kernel, free_coherence_length
from gravloc.densmat import (
    DensityMatrixSlice,
    QuadratureError,
    QuadratureSpec,
    SliceError,
    SliceGrid1D,
    meta_wavefunction,
    purity,
    read_kernel,
    trace_out_slice,
    write_kernel,
)
from gravloc.pipeline import set_workers
from gravloc.solver import RadialGrid, default_grid, evolve, initial_state

QUAD = QuadratureSpec(256, 128)


@pytest.fixture(scope="module")
def wide_initial(setup):
    """t = 0 relative state on a box wide enough that truncation is negligible."""
    grid = RadialGrid(10_000, 8 * setup.lambda0)
    return initial_state(setup, grid)


@pytest.fixture(scope="module")
def evolved(setup):
    """A visibly mixed state: 1000 s of gravitational evolution."""
    return evolve(setup, default_grid(setup, 4000), 1000.0, 1000, 0).final


def slice_grid(setup, t, n=101):
    return SliceGrid1D(n, 3 * free_coherence_length(CmState.initial(setup, t)))


def test_meta_wavefunction_matches_product_state(setup, wide_initial):
    lam = setup.lambda0
    cm = CmState.initial(setup)
    rng = np.random.default_rng(1)
    X = rng.normal(scale=lam, size=(200, 3))
    Y = rng.normal(scale=lam, size=(200, 3))
    xi = meta_wavefunction(cm, wide_initial, X, Y)
    exact = (2 / (math.pi * lam**2)) ** 1.5 * np.exp(-(np.sum(X**2, 1) + np.sum(Y**2, 1)) / lam**2)
    assert np.max(np.abs(xi - exact)) / exact.max() < 1e-4


def test_meta_wavefunction_symmetry_and_origin(setup, evolved):
    cm = CmState.initial(setup, evolved.t)
    X = np.array([1e-6, -2e-6, 3e-6])
    Y = np.array([-4e-6, 1e-6, 0.5e-6])
    assert meta_wavefunction(cm, evolved, X, Y) == pytest.approx(meta_wavefunction(cm, evolved, Y, X), rel=1e-14)
    chi = evolved.chi()
    origin = meta_wavefunction(cm, evolved, np.zeros(3), np.zeros(3))
    from gravloc.cm_evolution import cm_amplitude
    assert origin == pytest.approx(cm_amplitude(cm, 0.0) * (2 * chi[0] - chi[1]) / math.sqrt(4 * math.pi), rel=1e-14)


def test_meta_wavefunction_zero_beyond_box(setup, evolved):
    cm = CmState.initial(setup, evolved.t)
    X = np.zeros(3)
    Y = np.array([1.01 * evolved.grid.r_max, 0, 0])
    assert meta_wavefunction(cm, evolved, X, Y) == 0


def test_t0_slice_is_pure_and_analytic(setup, wide_initial):
    cm = CmState.initial(setup)
    grid = slice_grid(setup, 0.0)
    sl = trace_out_slice(cm, wide_initial, grid, QUAD)
    assert purity(sl) == pytest.approx(1.0, abs=1e-3)
    exact = analytic_kernel(grid.x, grid.x, 4 * cm.w, 4 * cm.w)
    exact /= np.sum(grid.weights * np.diag(exact).real)
    assert np.max(np.abs(sl.kernel - exact)) / np.max(np.abs(exact)) < 1e-3


def test_slice_hermitian_psd_unit_trace(setup, evolved):
    sl = trace_out_slice(CmState.initial(setup, evolved.t), evolved, slice_grid(setup, evolved.t), QUAD)
    assert sl.hermiticity_error() < 1e-10
    assert np.all(np.diag(sl.kernel).imag == 0)
    assert sl.trace() == pytest.approx(1.0, abs=1e-8)
    ev = np.linalg.eigvalsh(np.sqrt(sl.grid.weights)[:, None] * sl.kernel * np.sqrt(sl.grid.weights)[None, :])
    assert ev.min() > -1e-8 * ev.max()
    assert purity(sl) < 0.5  # visibly mixed


def test_raw_mode_keeps_normalization(setup, evolved):
    cm = CmState.initial(setup, evolved.t)
    raw = trace_out_slice(cm, evolved, slice_grid(setup, evolved.t), QUAD, normalize=False)
    assert not raw.normalized
    unit = raw.unit_trace()
    assert unit.trace() == pytest.approx(1.0, abs=1e-12)
    assert purity(raw) == pytest.approx(purity(unit), rel=1e-12)


def test_quadrature_convergence(setup, evolved):
    cm = CmState.initial(setup, evolved.t)
    grid = slice_grid(setup, evolved.t, 61)
    coarse = purity(trace_out_slice(cm, evolved, grid, QuadratureSpec(256, 128)))
    fine = purity(trace_out_slice(cm, evolved, grid, QuadratureSpec(512, 256)))
    assert abs(fine / coarse - 1) < 1e-3


def test_quadrature_box_too_small(setup, evolved):
    cm = CmState.initial(setup, evolved.t)
    with pytest.raises(QuadratureError):
        trace_out_slice(cm, evolved, slice_grid(setup, evolved.t, 31), QuadratureSpec(64, 32, n_widths=1.5))


def test_worker_count_does_not_change_bits(setup, evolved):
    import numba
    cm = CmState.initial(setup, evolved.t)
    grid = slice_grid(setup, evolved.t, 41)
    set_workers(1)
    a = trace_out_slice(cm, evolved, grid, QUAD).kernel
    set_workers(numba.config.NUMBA_NUM_THREADS)
    b = trace_out_slice(cm, evolved, grid, QUAD).kernel
    assert np.array_equal(a, b)


def test_purity_rank_one():
    grid = SliceGrid1D(201, 10.0)
    psi = np.exp(-grid.x**2 / 3) * np.exp(0.7j * grid.x)
    assert purity(DensityMatrixSlice(grid, np.outer(psi, psi.conj()))) == pytest.approx(1.0, abs=1e-6)


def test_purity_double_gaussian_closed_form():
    lp, lm = 1.0, 0.067
    grid = SliceGrid1D(401, 3.5 * lp)
    x = grid.x
    K = np.exp(-((x[:, None] + x[None, :]) ** 2) / lp**2 - (x[:, None] - x[None, :]) ** 2 / lm**2)
    assert purity(DensityMatrixSlice(grid, K)) == pytest.approx(lm / lp, rel=1e-6)


def test_purity_equal_mixture():
    grid = SliceGrid1D(401, 12.0)
    x = grid.x
    h0 = np.exp(-x**2 / 2)
    h1 = x * np.exp(-x**2 / 2)
    w = grid.weights
    h0 /= math.sqrt(np.sum(w * h0**2))
    h1 /= math.sqrt(np.sum(w * h1**2))
    K = 0.5 * (np.outer(h0, h0) + np.outer(h1, h1))
    assert purity(DensityMatrixSlice(grid, K)) == pytest.approx(0.5, abs=1e-12)


def test_purity_rejects_bad_trace():
    grid = SliceGrid1D(5, 1.0)
    with pytest.raises(SliceError):
        purity(DensityMatrixSlice(grid, -np.eye(5)))


def test_kernel_csv_roundtrip(tmp_path, setup, evolved):
    sl = trace_out_slice(CmState.initial(setup, evolved.t), evolved, slice_grid(setup, evolved.t, 21), QUAD)
    write_kernel(sl, tmp_path / "k", {"t": evolved.t})
    back, info = read_kernel(tmp_path / "k.csv")
    assert np.array_equal(back.kernel, sl.kernel)
    assert back.grid == sl.grid and back.normalized
    assert info["t"] == evolved.t
