import math

import numpy as np
import pytest
from scipy.integrate import quad

from gravloc.potential import PotentialTable, harmonic_params, potential, quadratic_coefficient
from gravloc.units import G, apply_scaling, make_setup


def overlap_energy(setup, d):
    """Independent oracle: -(1/2) G rho int_{ball 2} Phi_1 d^3x via spherical shells about ball 1."""
    M, R = setup.mass, setup.radius
    rho = M / (4 / 3 * math.pi * R**3)

    def phi1(a):  # potential of ball 1 per unit mass, a = distance from its centre
        return -G * M * (3 * R**2 - a**2) / (2 * R**3) if a < R else -G * M / a

    def shell_area(a):  # area of sphere radius a about centre 1 lying inside ball 2
        if d == 0:
            return 4 * math.pi * a**2 if a < R else 0.0
        c = (a**2 + d**2 - R**2) / (2 * a * d)
        return 2 * math.pi * a**2 * (1 - min(max(c, -1.0), 1.0))

    lo, hi = max(d - R, 0.0), d + R
    pts = [p for p in (R,) if lo < p < hi]
    val, _ = quad(lambda a: phi1(a) * shell_area(a), lo, hi, points=pts or None, epsabs=0, epsrel=1e-12, limit=200)
    return 0.5 * rho * val


@pytest.mark.parametrize("frac", [0.0, 0.3, 1.0, 1.7, 2.0, 3.0])
def test_potential_matches_overlap_integral(setup, frac):
    r = frac * setup.radius
    assert potential(setup, r) == pytest.approx(overlap_energy(setup, r), rel=1e-8)


def test_special_values(setup):
    GM2, R = G * setup.mass**2, setup.radius
    assert potential(setup, 2 * R) == pytest.approx(-GM2 / (4 * R), rel=1e-14)
    assert potential(setup, 0.0) == pytest.approx(-0.6 * GM2 / R, rel=1e-14)
    assert potential(setup, 4 * R) == pytest.approx(-GM2 / (8 * R), rel=1e-14)


def test_branch_continuity(setup):
    R, GM2 = setup.radius, G * setup.mass**2
    interior = 0.5 * GM2 * (80 * R**3 * (2 * R) ** 2 - 30 * R**2 * (2 * R) ** 3 + (2 * R) ** 5 - 192 * R**5) / (160 * R**6)
    exterior = -0.5 * GM2 / (2 * R)
    assert abs(interior - exterior) < 1e-10 * GM2 / R
    # one-sided values differ only through the slope GM^2/(8R^2)
    eps = 1e-8 * R
    jump = potential(setup, 2 * R + eps) - potential(setup, 2 * R - eps)
    assert jump == pytest.approx(2 * eps * GM2 / (8 * R**2), rel=1e-5)


def test_monotone_nondecreasing(setup):
    r = np.linspace(0, 10 * setup.radius, 20001)
    assert np.all(np.diff(potential(setup, r)) >= 0)


def test_negative_separation_rejected(setup):
    with pytest.raises(ValueError):
        potential(setup, -1e-9)


def test_quadratic_coefficient(setup):
    R = setup.radius
    k = quadratic_coefficient(setup)
    assert k == pytest.approx(G * setup.mass**2 / (4 * R**3), rel=1e-14)
    h = 1e-4 * R
    v0 = potential(setup, 0.0)
    # symmetric extension V(-r) = V(r) for the curvature at the origin
    fd0 = 2 * (potential(setup, h) - v0) / h**2
    assert abs(fd0 / (2 * k) - 1) < 1e-4


def test_curvature_at_small_r(setup):
    # d2V/dr2 = 2k (1 - (9/8) r/R + ...): at 1e-3 R compare with the exact polynomial curvature
    R, GM2 = setup.radius, G * setup.mass**2
    r0, h = 1e-3 * R, 1e-6 * R
    fd = (potential(setup, r0 + h) - 2 * potential(setup, r0) + potential(setup, r0 - h)) / h**2
    exact = 0.5 * GM2 * (160 * R**3 - 180 * R**2 * r0 + 20 * r0**3) / (160 * R**6)
    assert abs(fd / exact - 1) < 1e-4


def test_harmonic_params(setup):
    omega, width = harmonic_params(setup)
    assert omega == pytest.approx(math.sqrt(G * setup.mass / setup.radius**3), rel=1e-14)
    assert width / setup.lambda_g == pytest.approx(2**-0.25, rel=1e-12)
    other = make_setup(5e13, 7.9, 2.0)
    assert harmonic_params(other)[1] / other.lambda_g == pytest.approx(2**-0.25, rel=1e-12)


@pytest.mark.parametrize("lam", [0.1, 32.0])
def test_harmonic_omega_scaling(setup, lam):
    scaled, _ = apply_scaling(setup, 1.0, lam)
    assert harmonic_params(scaled)[0] == pytest.approx(harmonic_params(setup)[0] / lam, rel=1e-12)


@pytest.mark.parametrize("lam", [0.1, 32.0, 1000.0])
def test_potential_scaling_covariance(setup, lam):
    # energies scale as 1/lambda so that V t / hbar is invariant
    scaled, _ = apply_scaling(setup, 1.0, lam)
    r = np.linspace(0, 5 * setup.radius, 101)
    np.testing.assert_allclose(potential(scaled, lam**0.6 * r), potential(setup, r) / lam, rtol=1e-12)


def test_table_csv(tmp_path, setup):
    r = np.linspace(0, setup.radius, 5)
    tab = PotentialTable.tabulate(setup, r)
    tab.to_csv(tmp_path / "v.csv")
    data = np.loadtxt(tmp_path / "v.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 0], r)
    np.testing.assert_array_equal(data[:, 1], tab.V)
