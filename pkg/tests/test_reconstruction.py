import json

import numpy as np
import pytest
from scipy import integrate

from dgsiac.bspline import scaled_kernel
from dgsiac.errors import ConfigurationError, DegenerateStencilError
from dgsiac.mesh import CartesianMesh, DgField, evaluate_points, l2_project
from dgsiac.problems import get_problem
from dgsiac.reconstruction import (TemporalReconstruction, auxiliary_reconstruction,
                                   hermite_weights, history_depth, save_filtered,
                                   siac_convolve, spacetime_reconstruction)
from dgsiac.timestepping import run_trajectory


@pytest.fixture(scope="module")
def burgers_run():
    return run_trajectory(get_problem("burgers"), 1, 8, 1e-3, T=0.05)


@pytest.fixture(scope="module")
def burgers_run_q2():
    return run_trajectory(get_problem("burgers"), 2, 4, 1e-3, T=0.05)


def smooth_field(N, q, dim=2):
    f = lambda X: np.sin(2 * np.pi * X[0]) * (np.cos(2 * np.pi * X[1]) if dim == 2 else 1.0) + 0.3
    return l2_project(f, CartesianMesh(dim, N), q)


def test_history_depth():
    assert history_depth(1) == 0
    assert history_depth(2) == 1


@pytest.mark.parametrize("p", [0, 1])
def test_hermite_reproduces_polynomials_of_its_degree(p):
    deg = 2 * p + 3
    times = np.array([0.0, 0.1, 0.25, 0.3, 0.42])
    vals = [np.array([t ** deg - 2 * t]) for t in times]
    ders = [np.array([deg * t ** (deg - 1) - 2]) for t in times]
    rec = TemporalReconstruction(times, vals, ders, p)
    for t in np.linspace(0, 0.42, 37):
        assert rec(t)[0] == pytest.approx(t ** deg - 2 * t, abs=1e-12)
        assert rec(t, 1)[0] == pytest.approx(deg * t ** (deg - 1) - 2, abs=1e-11)


def test_hermite_cubic_is_classical_two_point_form():
    a, b = hermite_weights([0.0, 1.0], 0.5)
    # H(1/2) = (u0 + u1)/2 + (w0 - w1)/8
    assert np.allclose(a, [0.5, 0.5]) and np.allclose(b, [0.125, -0.125])


def test_hermite_rejects_repeated_nodes():
    with pytest.raises(DegenerateStencilError):
        hermite_weights([0.0, 0.1, 0.1], 0.05)
    with pytest.raises(DegenerateStencilError):
        TemporalReconstruction([0.0, 0.0, 1.0], [0, 0, 0], [0, 0, 0], 0)


def test_temporal_needs_enough_steps():
    with pytest.raises(ConfigurationError):
        TemporalReconstruction([0.0, 1.0], [0, 0], [0, 0], p=1)


def test_initial_slab_uses_forward_stencil():
    rec = TemporalReconstruction(np.arange(5.0), [0.0] * 5, [0.0] * 5, p=1)
    assert rec.stencil(0).tolist() == [0, 1, 2]
    assert rec.stencil(1).tolist() == [0, 1, 2]
    assert rec.stencil(3).tolist() == [2, 3, 4]


@pytest.mark.parametrize("which", ["q1", "q2"])
def test_hermite_conditions_on_real_trajectory(which, burgers_run, burgers_run_q2):
    run = burgers_run if which == "q1" else burgers_run_q2
    rec = TemporalReconstruction.from_record(run)
    scale = max(np.abs(v).max() for v in run.values)
    dscale = max(np.abs(w).max() for w in run.derivatives)
    for n in range(rec.n_slabs):
        for j in rec.stencil(n):
            t = run.times[j]
            assert np.max(np.abs(rec(t, 0, slab=n) - run.values[j])) <= 1e-11 * scale
            assert np.max(np.abs(rec(t, 1, slab=n) - run.derivatives[j])) <= 1e-11 * dscale
    # continuity across slab ends
    for n in range(rec.n_slabs - 1):
        t = run.times[n + 1]
        assert np.max(np.abs(rec(t, slab=n) - rec(t, slab=n + 1))) <= 1e-11 * scale


def test_filter_constant_is_constant():
    mesh = CartesianMesh(2, 8)
    c = np.zeros((1, 8, 8, 3, 3))
    c[..., 0, 0] = 2.5
    ff = siac_convolve(DgField(mesh, 2, 1, c), scaled_kernel(2, mesh.h))
    pts = np.random.default_rng(1).uniform(0, 1, (20, 2))
    assert np.max(np.abs(ff(pts) - 2.5)) < 1e-12


@pytest.mark.parametrize("q", [1, 2])
def test_filter_reproduces_projected_polynomials(q, rng):
    # polynomials of degree <= q are reproduced by the projection and then by the kernel
    mesh = CartesianMesh(1, 32)
    for p in range(q + 1):
        f = l2_project(lambda X: (X[0] - 0.5) ** p, mesh, q)
        ff = siac_convolve(f, scaled_kernel(q, mesh.h))
        x = rng.uniform(0.3, 0.7, 30)
        assert np.max(np.abs(ff(x[:, None])[0] - (x - 0.5) ** p)) < 1e-10


def _nonsmooth_half_nodes(q):
    N = 8
    mesh = CartesianMesh(1, N)
    c = np.zeros((1, N, q + 1))
    c[0, 0, 0] = 1.0  # indicator of the first cell
    ff = siac_convolve(DgField(mesh, q, 1, c), scaled_kernel(q, mesh.h))
    pc = ff.pieces()[0]
    P = np.polynomial.polynomial
    out = []
    for k in range(2 * N):
        # derivatives of both neighbours at the shared node, variable (x - x_k)/h
        jump = max(abs(P.polyval(0.5, P.polyder(pc[k - 1], d)) - P.polyval(0.0, P.polyder(pc[k], d)))
                   for d in range(pc.shape[-1]))
        if jump > 1e-9:
            out.append(k)
    return out


def test_indicator_filter_kinks_on_mesh_nodes_for_q1():
    kinks = _nonsmooth_half_nodes(1)
    assert kinks and all(k % 2 == 0 for k in kinks)


def test_indicator_filter_kinks_on_midpoints_for_q2():
    kinks = _nonsmooth_half_nodes(2)
    assert kinks and all(k % 2 == 1 for k in kinks)


@pytest.mark.parametrize("q", [1, 2])
def test_filter_matches_convolution_quadrature(q, rng):
    N = 8
    mesh = CartesianMesh(1, N)
    f = DgField(mesh, q, 1, rng.standard_normal((1, N, q + 1)))
    kernel = scaled_kernel(q, mesh.h)
    ff = siac_convolve(f, kernel)

    def dg(y):
        return evaluate_points(f, np.mod(np.atleast_1d(y), 1.0)[:, None])[0]

    for x in rng.uniform(0, 1, 20):
        lo, hi = x + np.array(kernel.support)
        pts = np.unique(np.concatenate([x - kernel.piecewise.breakpoints,
                                        np.arange(-N, 2 * N + 1) * mesh.h]))
        pts = pts[(pts > lo) & (pts < hi)]
        val = integrate.quad(lambda y: kernel(x - y) * dg(y)[0], lo, hi, points=pts,
                             limit=200, epsabs=1e-13, epsrel=1e-13)[0]
        assert abs(ff(np.array([[x]]))[0, 0] - val) < 1e-10


@pytest.mark.parametrize("q", [1, 2])
def test_filtered_derivatives_match_finite_differences(q, rng):
    ff = siac_convolve(smooth_field(8, q), scaled_kernel(q, 1 / 8))
    step = 1e-5
    pts = rng.uniform(0, 1, (40, 2))
    # stay away from the half-cell grid where second derivatives jump
    far = np.all(np.abs(pts * 16 - np.round(pts * 16)) > 1e-2, axis=1)
    pts = pts[far]
    for axis, d in ((0, (1, 0)), (1, (0, 1))):
        e = np.zeros(2)
        e[axis] = step
        fd = (ff(pts + e) - ff(pts - e)) / (2 * step)
        exact = ff(pts, d)
        assert np.max(np.abs(fd - exact)) <= 1e-7 * np.max(np.abs(exact))
        fd2 = (ff(pts + e, d) - ff(pts - e, d)) / (2 * step)
        exact2 = ff(pts, tuple(2 * k for k in d))
        assert np.max(np.abs(fd2 - exact2)) <= 1e-6 * np.max(np.abs(exact2))
    with pytest.raises(ConfigurationError):
        ff(pts, (2, 1))


@pytest.mark.parametrize("q", [1, 2])
def test_degree_bound_and_mean(q, rng):
    mesh = CartesianMesh(2, 8)
    f = DgField(mesh, q, 2, rng.standard_normal((2, 8, 8, q + 1, q + 1)))
    ff = siac_convolve(f, scaled_kernel(q, mesh.h))
    pc = ff.pieces()
    # pieces are stored with at most 2q + 2 power coefficients per axis
    assert pc.shape[-2:] == (2 * q + 2, 2 * q + 2)
    assert np.max(np.abs(pc[..., -1, -1])) > 1e-12
    assert np.max(np.abs(ff.mean() - f.mean())) < 1e-12


def test_pieces_reproduce_point_values(rng):
    q, N = 2, 4
    mesh = CartesianMesh(1, N)
    f = DgField(mesh, q, 1, rng.standard_normal((1, N, q + 1)))
    ff = siac_convolve(f, scaled_kernel(q, mesh.h))
    pc = ff.pieces()[0]
    x = rng.uniform(0, 1, 25)
    k = np.floor(x * 2 * N).astype(int)
    s = (x - k * mesh.h / 2) / mesh.h
    local = np.array([np.polynomial.polynomial.polyval(si, pc[ki]) for si, ki in zip(s, k)])
    assert np.max(np.abs(local - ff(x[:, None])[0])) < 1e-11


def test_kernel_scaling_must_match_mesh():
    with pytest.raises(ConfigurationError):
        siac_convolve(smooth_field(8, 1), scaled_kernel(1, 1 / 16))


def test_spacetime_time_derivative_commutes(burgers_run):
    temporal = TemporalReconstruction.from_record(burgers_run)
    st = spacetime_reconstruction(temporal, burgers_run.mesh, 1, 1)
    pts = np.random.default_rng(3).uniform(0, 1, (15, 2))
    for t in (0.003, 0.021, 0.049):
        direct = st(t, pts, deriv_t=1)
        slopes = siac_convolve(st.field_at(t, 1), scaled_kernel(1, burgers_run.mesh.h, dim=2))
        assert np.max(np.abs(direct - slopes(pts))) < 1e-11
        step = 1e-6
        fd = (st(t + step, pts) - st(t - step, pts)) / (2 * step)
        assert np.max(np.abs(fd - direct)) <= 1e-6 * np.max(np.abs(direct))
    with pytest.raises(ConfigurationError):
        st(0.01, pts, deriv_t=2)


def test_spacetime_constant_in_time_has_zero_slope():
    mesh = CartesianMesh(2, 4)
    x = np.ones(4 * 4 * 4)
    temporal = TemporalReconstruction([0.0, 0.1, 0.2], [x] * 3, [0 * x] * 3, 0)
    st = spacetime_reconstruction(temporal, mesh, 1, 1)
    assert np.max(np.abs(st(0.15, np.array([[0.3, 0.4]]), deriv_t=1))) == 0.0


@pytest.mark.parametrize("q", [1, 2])
def test_auxiliary_reconstruction_smoother_along_beta(q, rng):
    mesh = CartesianMesh(2, 4)
    shape = (q + 1) ** 2 * 16
    x = rng.standard_normal(shape)
    temporal = TemporalReconstruction([0.0, 1.0], [x, x], [0 * x, 0 * x], 0)
    aux = auxiliary_reconstruction(temporal, mesh, q, 1, 0).filtered_at(0.5)
    main = spacetime_reconstruction(temporal, mesh, q, 1).filtered_at(0.5)
    y = rng.uniform(0, 1, 5)
    step = 1e-9
    for k in range(1, 8):
        xb = k * mesh.h / 2
        for d in range(q + 1):
            if d > 2:
                break
            L = aux(np.stack([np.full(5, xb - step), y], 1), (d, 0))
            R = aux(np.stack([np.full(5, xb + step), y], 1), (d, 0))
            assert np.max(np.abs(L - R)) <= 1e-6 * max(1.0, np.abs(L).max())
    assert abs(aux.mean()[0] - main.mean()[0]) < 1e-12
    with pytest.raises(ValueError):
        auxiliary_reconstruction(temporal, mesh, q, 1, 2)


def test_auxiliary_constant_field_is_constant():
    mesh = CartesianMesh(2, 4)
    c = np.zeros((1, 4, 4, 2, 2))
    c[..., 0, 0] = -1.25
    x = c.ravel()
    temporal = TemporalReconstruction([0.0, 1.0], [x, x], [0 * x, 0 * x], 0)
    aux = auxiliary_reconstruction(temporal, mesh, 1, 1, 1)
    pts = np.random.default_rng(5).uniform(0, 1, (10, 2))
    assert np.max(np.abs(aux(0.3, pts) + 1.25)) < 1e-12


def test_save_filtered_header(tmp_path):
    ff = siac_convolve(smooth_field(4, 1), scaled_kernel(1, 0.25))
    path = tmp_path / "f.bin"
    save_filtered(path, ff, time=0.5)
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f8")
    assert header["breakpoints"] == pytest.approx(np.arange(9) * 0.125)
    assert data.size == np.prod(header["piece_shape"])
