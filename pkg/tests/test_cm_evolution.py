import math

import numpy as np
import pytest
from scipy.integrate import quad

from gravloc.analysis import fit_double_gaussian, spectrum
from gravloc.cm_evolution import (
    CmState,
    FreeRelative,
    cm_amplitude,
    free_coherence_length,
    free_density_slice,
    free_kernel,
    width_growth,
)
from gravloc.densmat import QuadratureSpec, SliceGrid1D, purity
from gravloc.solver import PropagatorWorkspace, RadialGrid, advance, gaussian_state
from gravloc.units import HBAR


def spread_time(setup, factor):
    """t at which the |psi|^2 width has grown by ``factor``."""
    return math.sqrt(factor**2 - 1) * setup.mass * setup.lambda0**2 / (2 * HBAR)


def test_w_parameter(setup):
    cm = CmState.initial(setup, 7.0)
    assert cm.w.real == pytest.approx(setup.lambda0**2 / 2)
    assert cm.w.imag == pytest.approx(HBAR * 7.0 / setup.mass)


def test_origin_modulus_at_t0(setup):
    cm = CmState.initial(setup)
    lam = setup.lambda0
    assert abs(cm_amplitude(cm, 0.0)) == pytest.approx((4 / (math.pi * lam**2)) ** 0.75, rel=1e-14)


def test_initial_profile(setup):
    cm = CmState.initial(setup)
    s = np.linspace(0, 3 * setup.lambda0, 7)
    dens = np.abs(cm_amplitude(cm, s**2)) ** 2
    np.testing.assert_allclose(dens / dens[0], np.exp(-4 * s**2 / setup.lambda0**2), rtol=1e-12)


@pytest.mark.parametrize("factor", [1.0, 1.5, 4.0])
def test_norm_preserved(setup, factor):
    cm = CmState.initial(setup, spread_time(setup, factor))
    L = setup.lambda0 * factor
    val, _ = quad(lambda s: 4 * math.pi * s * s * abs(cm_amplitude(cm, s * s)) ** 2, 0, 12 * L, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_width_growth_formula(setup):
    t = spread_time(setup, 2.0)
    cm = CmState.initial(setup, t)
    s = setup.lambda0
    ratio = abs(cm_amplitude(cm, s * s) / cm_amplitude(cm, 0.0)) ** 2
    # |psi|^2 = exp(-4 s^2 / (growth^2 lambda0^2))
    assert ratio == pytest.approx(math.exp(-4 / width_growth(setup, setup.lambda0, t) ** 2), rel=1e-12)
    assert width_growth(setup, setup.lambda0, t) == pytest.approx(2.0, rel=1e-12)


def test_width_growth_against_crank_nicolson(setup):
    """Radial CN for the free centre coordinate (mass 2M) reproduces the analytic spread."""
    t = spread_time(setup, 2.0)
    lam = setup.lambda0
    grid = RadialGrid(4000, 10 * lam)
    ws = PropagatorWorkspace.build(grid, np.zeros(grid.n_points), t / 2000, HBAR**2 / (4 * setup.mass))
    st = gaussian_state(grid, lam / 2)
    out = advance(st, ws, 2000)
    S = grid.r
    exact = 4 * math.pi * S**2 * np.abs(cm_amplitude(CmState.initial(setup, t), S**2)) ** 2
    assert np.max(np.abs(np.abs(out.u) ** 2 - exact)) / exact.max() < 1e-3
    rms = lambda d: math.sqrt(np.sum(d * S**2) / np.sum(d))
    assert rms(np.abs(out.u) ** 2) / rms(np.abs(st.u) ** 2) == pytest.approx(2.0, rel=1e-3)


def test_free_relative_normalized(setup):
    rel = FreeRelative(CmState.initial(setup, spread_time(setup, 1.7)))
    L = setup.lambda0 * 1.7
    val, _ = quad(lambda r: 4 * math.pi * r * r * abs(rel(r)) ** 2, 0, 30 * L, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.fixture(scope="module")
def quad_small():
    return QuadratureSpec(256, 128)


@pytest.mark.parametrize("factor", [1.0, 1.0 + 1e-9, 1.8])
def test_free_slice_is_pure_and_isotropic(setup, quad_small, factor):
    t = 0.0 if factor == 1.0 else spread_time(setup, factor)
    cm = CmState.initial(setup, t)
    L = free_coherence_length(cm)
    sl = free_density_slice(setup, setup.lambda0, t, SliceGrid1D(101, 3 * L), quad_small)
    fit = fit_double_gaussian(sl)
    assert fit.lambda_plus / fit.lambda_minus == pytest.approx(1.0, abs=0.02)
    assert fit.lambda_plus == pytest.approx(L, rel=1e-3)
    assert purity(sl) == pytest.approx(1.0, abs=1e-3)
    assert spectrum(sl)[0] > 0.999


def test_free_slice_quadrature_matches_closed_form(setup, quad_small):
    t = spread_time(setup, 1.5)
    cm = CmState.initial(setup, t)
    grid = SliceGrid1D(101, 3 * free_coherence_length(cm))
    num = free_density_slice(setup, setup.lambda0, t, grid, quad_small)
    exact = free_kernel(cm, grid.x)
    assert np.max(np.abs(num.kernel - exact)) / np.max(np.abs(exact)) < 1e-6


def test_reference_free_width(setup):
    cm = CmState.initial(setup, 10.0)
    L = free_coherence_length(cm)
    # reported 1.3e-5 cm for the gravity-free run; sqrt(2) lambda0 here
    assert L == pytest.approx(1.3e-5, rel=0.4)
    assert L == pytest.approx(math.sqrt(2) * setup.lambda0, rel=1e-6)
    sl = free_density_slice(setup, setup.lambda0, 10.0, SliceGrid1D(101, 3 * L), analytic=True)
    fit = fit_double_gaussian(sl)
    assert fit.lambda_plus == pytest.approx(fit.lambda_minus, rel=1e-6)
