import numpy as np
import pytest

from todacusp.cross_section import build_flat_torus, build_synthetic_surface

HEX = np.array([[1.0, 0.5], [0.0, np.sqrt(3) / 2]])
SHEAR = np.array([[2.0, 0.3], [0.0, 1.0]])
LATTICES = [np.eye(2), HEX, SHEAR]


def test_unit_torus_lambda1():
    cs = build_flat_torus(np.eye(2), grid=(16, 16))
    assert cs.lambda1 == pytest.approx(4 * np.pi**2, rel=1e-13)
    # lowest mode really is an eigenfunction of the implemented Laplacian
    f = np.cos(2 * np.pi * cs.x)
    lap = cs.laplacian(f)
    assert np.allclose(lap, -4 * np.pi**2 * f, atol=1e-10)


def test_scaling_normalization_idempotent():
    cs1 = build_flat_torus(np.eye(2))
    cs3 = build_flat_torus(3 * np.eye(2))
    assert np.allclose(cs1.basis, cs3.basis)
    assert cs1.volume == cs3.volume == 1.0


def test_hexagonal_lambda1_bruteforce():
    cs = build_flat_torus(HEX, grid=(16, 16))
    # independent brute force over dual-lattice vectors
    Ginv = np.linalg.inv(cs.basis.T @ cs.basis)
    best = np.inf
    for n1 in range(-12, 13):
        for n2 in range(-12, 13):
            if n1 == n2 == 0:
                continue
            q = (2 * np.pi) ** 2 * (Ginv[0, 0] * n1**2 + 2 * Ginv[0, 1] * n1 * n2 + Ginv[1, 1] * n2**2)
            best = min(best, q)
    assert cs.lambda1 == pytest.approx(best, rel=1e-12)


def test_degenerate_basis_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        build_flat_torus([[1.0, 2.0], [2.0, 4.0]])


@pytest.mark.parametrize("basis", LATTICES)
def test_integrate_constant_is_volume(basis):
    cs = build_flat_torus(basis, grid=(8, 8))
    assert cs.integrate(np.ones(cs.grid)) == pytest.approx(cs.volume, rel=1e-15)


def test_laplacian_of_constant_is_zero():
    cs = build_flat_torus(SHEAR, grid=(8, 8))
    assert np.allclose(cs.laplacian(np.full(cs.grid, 3.7)), 0.0, atol=1e-12)


def test_poisson_mode_division():
    cs = build_flat_torus(np.eye(2), grid=(32, 32))
    w = np.cos(2 * np.pi * cs.x)
    phi = cs.solve_poisson_meanzero(w)
    assert np.allclose(phi, w / (4 * np.pi**2), atol=1e-12)
    assert abs(cs.integrate(phi)) < 1e-14


def test_poisson_zero_and_mean_guard():
    cs = build_flat_torus(np.eye(2), grid=(8, 8))
    assert np.allclose(cs.solve_poisson_meanzero(np.zeros(cs.grid)), 0.0)
    with pytest.raises(ValueError, match="nonzero mean"):
        cs.solve_poisson_meanzero(np.ones(cs.grid))


@pytest.mark.parametrize("basis", LATTICES)
def test_self_adjoint_nonpositive_poincare(basis):
    rng = np.random.default_rng(7)
    cs = build_flat_torus(basis, grid=(16, 16))
    f = rng.standard_normal(cs.grid)
    g = rng.standard_normal(cs.grid)
    assert cs.integrate(f * cs.laplacian(g)) == pytest.approx(cs.integrate(g * cs.laplacian(f)), abs=1e-10)
    assert cs.integrate(f * cs.laplacian(f)) <= 1e-12
    f0 = f - cs.mean(f)
    assert cs.integrate(f0**2) <= cs.grad_squared(f0) / cs.lambda1 + 1e-10


@pytest.mark.parametrize("basis", LATTICES)
def test_poisson_inverts_neglap(basis):
    rng = np.random.default_rng(3)
    cs = build_flat_torus(basis, grid=(16, 16))
    f = rng.standard_normal(cs.grid)
    f -= cs.mean(f)
    lap = cs.laplacian(f)
    assert np.allclose(cs.solve_poisson_meanzero(-lap), f, atol=1e-12 * cs.sup(lap))


# -- synthetic surfaces -----------------------------------------------------

def test_synthetic_constants_only():
    cs = build_synthetic_surface(2, [0.0])
    assert cs.volume == pytest.approx(4 * np.pi)
    assert cs.dof == 1
    c = np.array([2.5])
    assert np.allclose(cs.laplacian(c), 0.0)
    assert cs.integrate(c) == pytest.approx(2.5 * 4 * np.pi)


def test_synthetic_two_mode():
    cs = build_synthetic_surface(2, [0.0, 3.83])
    assert cs.lambda1 == pytest.approx(3.83)
    c = np.array([0.0, 1.0])
    assert np.allclose(cs.laplacian(c), [0.0, -3.83])
    assert np.allclose(cs.solve_poisson_meanzero(c), c / 3.83)


def test_synthetic_repeated_eigenvalue_and_volume():
    cs = build_synthetic_surface(3, [0.0, 1.0, 1.0])
    assert cs.volume == pytest.approx(8 * np.pi)


@pytest.mark.parametrize("bad,msg", [
    ((1, [0.0]), "genus"),
    ((2, [0.0, -1.0]), "ascending|nonnegative"),
    ((2, [0.5, 1.0]), "exactly 0"),
    ((2, [0.0, 2.0, 1.0]), "ascending"),
])
def test_synthetic_invalid_inputs(bad, msg):
    with pytest.raises(ValueError, match=msg):
        build_synthetic_surface(*bad)


def test_synthetic_product_projection_orthonormal():
    cs = build_synthetic_surface(2, [0.0, 2.0, 5.0, 9.0])
    # project(values(c)) is the identity on resolved coefficients
    rng = np.random.default_rng(1)
    c = rng.standard_normal(cs.dof)
    assert np.allclose(cs.project(cs.values(c)), c, atol=1e-12)
    # average of phi_j^2 is 1 (orthonormality under the mean integral)
    for j in range(cs.dof):
        e = np.zeros(cs.dof)
        e[j] = 1.0
        assert cs.mean(cs.project(cs.values(e) ** 2)) * cs.volume / cs.volume == pytest.approx(1.0)


def test_synthetic_exp_of_constant():
    cs = build_synthetic_surface(2, [0.0, 1.7])
    c = np.array([0.3, 0.0])
    ec = cs.apply_pointwise(np.exp, c)
    assert np.allclose(ec, [np.exp(0.3), 0.0], atol=1e-14)
