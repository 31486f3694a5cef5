import numpy as np
import pytest
from scipy import integrate
from scipy.special import roots_legendre

from dgsiac.errors import AmbiguousPointError, ConfigurationError
from dgsiac.mesh import (CartesianMesh, DgField, TensorBasis, broken_norms, evaluate,
                         evaluate_points, gauss_legendre, l2_project, load_field, save_field)


def test_mesh_width_and_shape():
    for N in (1, 3, 16, 128):
        m = CartesianMesh(2, N)
        assert abs(m.h * m.N - 1.0) < 1e-14
        assert m.shape == (N, N)
        assert m.n_cells == N * N


@pytest.mark.parametrize("dim,N", [(3, 4), (2, 0)])
def test_mesh_rejects_bad_sizes(dim, N):
    with pytest.raises(ConfigurationError):
        CartesianMesh(dim, N)


def test_gauss_legendre_exactness():
    x, w = gauss_legendre(4)
    for k in range(8):
        assert abs(np.sum(w * x ** k) - 1.0 / (k + 1)) < 1e-15


@pytest.mark.parametrize("q", [1, 2, 3])
def test_basis_orthonormal(q):
    # independent quadrature rule from scipy
    z, w = roots_legendre(12)
    xi, w = 0.5 * (z + 1), 0.5 * w
    V = TensorBasis(q).values(xi)
    assert np.allclose(V.T @ (w[:, None] * V), np.eye(q + 1), atol=1e-13)


def test_basis_derivative_matches_finite_differences():
    B = TensorBasis(3)
    xi = np.array([0.17, 0.5, 0.83])
    step = 1e-6
    fd = (B.values(xi + step) - B.values(xi - step)) / (2 * step)
    assert np.allclose(B.values(xi, 1), fd, rtol=1e-7, atol=1e-7)


def test_project_constant_has_only_mean_mode():
    mesh = CartesianMesh(2, 4)
    f = l2_project(lambda X: 3.0 + 0 * X[0] * X[1], mesh, 2)
    c = f.coeffs.copy()
    assert np.allclose(c[..., 0, 0], 3.0, atol=1e-13)
    c[..., 0, 0] = 0
    assert np.max(np.abs(c)) < 1e-13
    assert np.allclose(f.mean(), 3.0)


def test_project_reproduces_q1_polynomials(rng):
    mesh = CartesianMesh(2, 5)
    g = lambda X: 0.3 + 2.0 * X[0] - 1.5 * X[1] + 0.7 * X[0] * X[1]
    f = l2_project(g, mesh, 1)
    pts = rng.uniform(0, 1, (50, 2))
    vals = evaluate_points(f, pts)[0]
    assert np.max(np.abs(vals - g((pts[:, 0], pts[:, 1])))) < 1e-13


def test_project_is_idempotent(rng):
    mesh = CartesianMesh(2, 4)
    F = DgField(mesh, 2, 2, rng.standard_normal((2, 4, 4, 3, 3)))

    def sample(X):
        x, y = np.broadcast_arrays(*X)
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        return evaluate_points(F, pts).reshape((2,) + x.shape)

    G = l2_project(sample, mesh, 2)
    assert np.max(np.abs(G.coeffs - F.coeffs)) < 1e-12


def test_projection_error_rate():
    f = lambda X: np.sin(2 * np.pi * X[0]) * np.cos(2 * np.pi * X[1])
    errs = []
    for N in (16, 32):
        mesh = CartesianMesh(2, N)
        P = l2_project(f, mesh, 1)
        xi, _ = gauss_legendre(5)
        vals = P.at_reference(xi)[0]
        ex = f(mesh.cell_coordinates(xi))
        diff = vals - ex
        errs.append(broken_norms(lambda X, d=diff: d, mesh, n_quad=5)["l2"])
    assert 3.6 <= errs[0] / errs[1] <= 4.4


def test_evaluate_constant_and_sides():
    mesh = CartesianMesh(1, 4)
    c = np.zeros((1, 4, 2))
    c[0, :, 0] = [1.0, 2.0, 3.0, 4.0]
    f = DgField(mesh, 1, 1, c)
    assert evaluate(f, [0.1])[0] == pytest.approx(1.0)
    with pytest.raises(AmbiguousPointError):
        evaluate(f, [0.25])
    minus, plus = evaluate(f, [0.25], side="-")[0], evaluate(f, [0.25], side="+")[0]
    assert minus - plus == pytest.approx(1.0 - 2.0)
    # periodic wrap: the face at 0 == 1
    assert evaluate(f, [1.0], side="-")[0] == pytest.approx(4.0)
    assert evaluate(f, [0.0], side="+")[0] == pytest.approx(1.0)


def test_evaluate_projection_of_sine():
    mesh = CartesianMesh(1, 32)
    f = l2_project(lambda X: np.sin(2 * np.pi * X[0]), mesh, 2)
    # oracle: projection onto the cell [7/32, 8/32] by adaptive quadrature,
    # evaluated at its right end x = 1/4
    a, b = 7 / 32, 8 / 32
    B = TensorBasis(2)
    coef = [integrate.quad(lambda x: np.sin(2 * np.pi * x) * B.values([(x - a) * 32])[0, k],
                           a, b, epsabs=1e-15)[0] * 32 for k in range(3)]
    oracle = B.values([1.0])[0] @ coef
    value = evaluate(f, [0.25], side="-")[0]
    assert abs(value - oracle) < 1e-12
    # the unique L2 projection misses sin(pi/2) = 1 by about 5e-6 here
    assert abs(value - 1.0) < 1e-5
    assert evaluate(f, [0.25], side="+")[0] == pytest.approx(value, abs=1e-12)


def test_evaluate_points_matches_evaluate(rng):
    mesh = CartesianMesh(2, 3)
    f = DgField(mesh, 2, 2, rng.standard_normal((2, 3, 3, 3, 3)))
    pts = rng.uniform(0, 1, (10, 2))
    many = evaluate_points(f, pts)
    for k, p in enumerate(pts):
        assert np.allclose(evaluate(f, p), many[:, k], atol=1e-13)


def test_evaluate_points_derivative(rng):
    mesh = CartesianMesh(2, 3)
    f = DgField(mesh, 2, 1, rng.standard_normal((1, 3, 3, 3, 3)))
    p = np.array([[0.41, 0.52]])
    step = 1e-6
    fd = (evaluate_points(f, p + [step, 0]) - evaluate_points(f, p - [step, 0])) / (2 * step)
    assert np.allclose(evaluate_points(f, p, (1, 0)), fd, rtol=1e-7)


def test_broken_norms_simple():
    mesh = CartesianMesh(2, 4)
    zero = broken_norms(DgField(mesh, 1, 1))
    assert zero == {"l2": 0.0, "h1_semi": 0.0, "linf": 0.0}
    c = l2_project(lambda X: -2.5 + 0 * X[0], mesh, 1)
    assert broken_norms(c)["l2"] == pytest.approx(2.5, abs=1e-13)
    s = broken_norms(lambda X: np.sin(2 * np.pi * X[0]) + 0 * X[1], mesh, n_quad=6)
    assert abs(s["l2"] - 1 / np.sqrt(2)) < 1e-12


def test_broken_norms_polynomial_against_scipy():
    mesh = CartesianMesh(2, 4)
    g = lambda x, y: 1.0 + x - 2 * y + 3 * x * y
    f = l2_project(lambda X: g(*X), mesh, 1)
    l2_ref = np.sqrt(integrate.dblquad(lambda y, x: g(x, y) ** 2, 0, 1, 0, 1)[0])
    h1_ref = np.sqrt(integrate.dblquad(
        lambda y, x: (1 + 3 * y) ** 2 + (-2 + 3 * x) ** 2, 0, 1, 0, 1)[0])
    n = broken_norms(f)
    assert abs(n["l2"] - l2_ref) < 1e-12
    assert abs(n["h1_semi"] - h1_ref) < 1e-12


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_project_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        l2_project(lambda X: np.log(X[0] - 0.5), CartesianMesh(1, 4), 1)


def test_snapshot_roundtrip(tmp_path, rng):
    mesh = CartesianMesh(2, 3)
    f = DgField(mesh, 1, 3, rng.standard_normal((3, 3, 3, 2, 2)))
    path = tmp_path / "u.bin"
    save_field(path, f, time=0.125)
    with open(path, "rb") as fh:
        header = fh.readline()
    assert b'"layout": "cell,component,mode"' in header
    g, t = load_field(path)
    assert t == 0.125
    assert np.array_equal(g.coeffs, f.coeffs)
    assert np.array_equal(f.flat[1], np.moveaxis(f.coeffs, 0, 2)[0, 1].reshape(3, 4))
