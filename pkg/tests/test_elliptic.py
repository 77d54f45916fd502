import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodallab import DomainSpec, Field, build_grid, poisson_solve, smallest_eigenpairs
from nodallab.elliptic import (
    apply_laplacian,
    boundary_flux,
    boundary_normal_derivatives,
    gradient,
    laplacian,
)

from conftest import rng_field

BESSEL_LAM1 = 5.783185962946783  # square of the first zero of J0
SQUARE_LAM1 = 2.0 * np.pi**2


def manufactured_error(n):
    grid = build_grid(DomainSpec.rectangle(1.0, 1.0), n)
    x, y = grid.nodes[:, 0], grid.nodes[:, 1]
    exact = np.sin(np.pi * (x + 0.5)) * np.sin(np.pi * (y + 0.5))
    u = poisson_solve(Field(grid, 2.0 * np.pi**2 * exact))
    return float(np.abs(u.values - exact).max())


def test_poisson_manufactured_square():
    assert manufactured_error(65) < 4e-3


@given(seed=st.integers(0, 10**6))
def test_laplacian_symmetric_pairing(disk129, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(disk129.num_interior)
    v = rng.standard_normal(disk129.num_interior)
    A = laplacian(disk129)
    left = float(u @ (A @ v))
    right = float(v @ (A @ u))
    scale = max(abs(left), abs(right), 1.0)
    assert abs(left - right) <= 1e-12 * scale


def test_laplacian_matrix_exactly_symmetric(disk129):
    A = laplacian(disk129)
    assert abs(A - A.T).max() == 0.0


def test_poisson_with_boundary_data_harmonic(disk129):
    # harmonic polynomial x^2 - y^2 imposed through the wall data only
    grid = disk129
    u = poisson_solve(
        Field(grid, np.zeros(grid.num_interior)),
        boundary=lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2,
    )
    exact = grid.nodes[:, 0] ** 2 - grid.nodes[:, 1] ** 2
    assert np.abs(u.values - exact).max() < 2e-4


def test_eigenvalue_square_oracle():
    grid = build_grid(DomainSpec.rectangle(1.0, 1.0), 129)
    pairs = smallest_eigenpairs(grid, 3)
    assert pairs[0].value == pytest.approx(SQUARE_LAM1, rel=2e-3)
    # second eigenvalue is the double 5 pi^2
    assert pairs[1].value == pytest.approx(5.0 * np.pi**2, rel=2e-3)
    assert pairs[2].value == pytest.approx(5.0 * np.pi**2, rel=2e-3)


def test_eigenvalue_disk_oracle(disk257):
    lam = smallest_eigenpairs(disk257, 1)[0].value
    assert lam == pytest.approx(BESSEL_LAM1, rel=5e-4)


def test_eigenvector_normalization_and_sign(disk129):
    pair = smallest_eigenpairs(disk129, 1)[0]
    v = pair.vector.values
    assert disk129.h**2 * np.sum(v * v) == pytest.approx(1.0, rel=1e-10)
    assert v[np.argmax(np.abs(v))] > 0
    assert np.all(v > -1e-8)  # ground state one-signed


def test_eigen_potential_shift(disk129):
    # adding a constant potential shifts eigenvalues by exactly that constant
    base = smallest_eigenpairs(disk129, 2)
    shifted = smallest_eigenpairs(disk129, 2, potential=np.full(disk129.num_interior, 5.0))
    for b, s in zip(base, shifted):
        assert s.value - b.value == pytest.approx(-5.0, abs=1e-8)


def test_eigen_mask_restricts_to_half_disk(disk129):
    # Dirichlet half-disk eigenvalue via mask = nodes with x > 0:
    # lambda_1(half disk) is the square of the first zero of J1
    mask = disk129.nodes[:, 0] > 0
    lam = smallest_eigenpairs(disk129, 1, mask=mask)[0].value
    j11 = 3.8317059702075125
    assert lam == pytest.approx(j11**2, rel=5e-3)


def test_gradient_exact_on_affine(disk129):
    u = Field(disk129, 1.0 + 2.0 * disk129.nodes[:, 0] - 3.0 * disk129.nodes[:, 1])
    gx, gy = gradient(u)
    # interior-only: next to the wall the scheme assumes u=0 outside, which
    # an affine function violates, so check away from the boundary
    far = disk129.domain.boundary_distance(disk129.nodes) > 3 * disk129.h
    assert np.abs(gx.values[far] - 2.0).max() < 1e-10
    assert np.abs(gy.values[far] + 3.0).max() < 1e-10


def test_normal_derivative_radial_oracle(disk257):
    # u = (1 - r^2)/4 solves -Laplace u = 1 with d_nu u = -1/2 on the wall
    grid = disk257
    r2 = grid.nodes[:, 0] ** 2 + grid.nodes[:, 1] ** 2
    u = Field(grid, (1.0 - r2) / 4.0)
    dn = boundary_normal_derivatives(u)
    assert np.abs(dn + 0.5).max() < 2e-3
    # total flux equals -(source integral) = -area
    assert boundary_flux(u) == pytest.approx(-np.pi, rel=2e-3)


def test_apply_laplacian_matches_matrix(disk129):
    vals = rng_field(disk129, 11)
    u = Field(disk129, vals)
    direct = laplacian(disk129) @ vals
    assert np.array_equal(apply_laplacian(u).values, direct)
