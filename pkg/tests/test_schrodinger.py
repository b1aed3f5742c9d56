import numpy as np
import pytest

from conflab.errors import InputError, NumericError
from conflab.manifold import Manifold, d0_many
from conflab.schrodinger import (
    GridGeometry,
    GridOperator,
    decompose_ground_state,
    discrete_grad_square,
    estimate_grad_inv_constant,
    estimate_sobolev_constant,
    gs_shift_c0,
    log_gradient_fixedpoint,
    lowest_eigenpair,
)

L = 2.2


@pytest.fixture(scope="module")
def geom():
    return GridGeometry(Manifold.torus(3, [L, L, L]), (12, 12, 12))


@pytest.fixture(scope="module")
def nodes(geom):
    return geom.nodes()


@pytest.fixture(scope="module")
def consts(geom):
    return estimate_grad_inv_constant(geom), estimate_sobolev_constant(geom)


def test_laplacian_symmetry(geom, rng):
    n = int(np.prod(geom.shape))
    a, b = rng.standard_normal((2, n))
    lhs = np.sum(geom.lap(a) * b) * geom.cell_volume
    rhs = np.sum(a * geom.lap(b)) * geom.cell_volume
    assert abs(lhs - rhs) <= 1e-12


def test_laplacian_kills_constants(geom):
    n = int(np.prod(geom.shape))
    assert np.abs(geom.lap(np.ones(n))).max() <= 1e-12


def test_grid_size_guard():
    with pytest.raises(InputError):
        GridGeometry(Manifold.torus(3, [L, L, L]), (6, 12, 12))


def test_zero_potential(geom):
    n = int(np.prod(geom.shape))
    s = lowest_eigenpair(GridOperator(geom, np.zeros(n)))
    assert abs(s.lambda0) <= 1e-10
    assert s.phi.max() - s.phi.min() <= 1e-10
    assert s.phi.min() > 0


def test_constant_potential_shift(geom):
    n = int(np.prod(geom.shape))
    s = lowest_eigenpair(GridOperator(geom, np.full(n, 0.37)))
    assert abs(s.lambda0 + 0.37) <= 1e-8


def test_shift_law(geom, nodes):
    V = 0.1 * np.cos(2 * np.pi * nodes[:, 0] / L)
    l0 = lowest_eigenpair(GridOperator(geom, V)).lambda0
    l1 = lowest_eigenpair(GridOperator(geom, V + 0.5)).lambda0
    assert abs(l1 - (l0 - 0.5)) <= 1e-9


def test_dense_oracle(geom, nodes):
    V = 0.15 * np.cos(2 * np.pi * nodes[:, 0] / L)
    op = GridOperator(geom, V)
    s = lowest_eigenpair(op)
    dense = np.linalg.eigvalsh(op.as_sparse().toarray())[0]
    assert abs(s.lambda0 - dense) <= 1e-8
    assert s.residual <= 1e-10
    assert s.phi.min() > 0


def test_dense_oracle_2d_16():
    # separable small cosine on a 16^2 periodic grid against dense LAPACK
    t2 = Manifold.torus(2)
    g2 = GridGeometry(t2, (16, 16))
    x = g2.nodes()
    op = GridOperator(g2, 0.2 * np.cos(x[:, 0]))
    s = lowest_eigenpair(op)
    dense = np.linalg.eigvalsh(op.as_sparse().toarray())[0]
    assert abs(s.lambda0 - dense) <= 1e-8


def test_operator_from_grid_field(geom, nodes):
    from conflab.weight import GridField

    grid = GridField(manifold=geom.manifold, shape=geom.shape, values=np.zeros(geom.shape))
    op = GridOperator.from_grid_field(grid, np.zeros(nodes.shape[0]))
    assert abs(lowest_eigenpair(op).lambda0) <= 1e-10


def test_box_neumann_constants():
    box = Manifold.box([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    geom = GridGeometry(box, (8, 8, 8))
    n = 512
    assert np.abs(geom.lap(np.ones(n))).max() <= 1e-12
    s = lowest_eigenpair(GridOperator(geom, np.zeros(n)))
    assert abs(s.lambda0) <= 1e-10


def test_gs_shift_signs_and_bracket(geom, nodes, consts):
    a_est, beta = consts
    c0 = np.full(3, L / 2)
    r0 = 0.8
    mask = geom.ball_mask(c0, r0)
    bump = 0.05 * np.exp(-d0_many(geom.manifold, nodes, c0) ** 2) * mask
    res = gs_shift_c0(geom, bump, c0, r0, beta_est=beta, tol=1e-8)
    assert res.c0 < 0
    assert res.bracket[0] <= res.c0 <= res.bracket[1]
    assert abs(res.lambda0) <= 1e-8
    res_neg = gs_shift_c0(geom, -bump, c0, r0, beta_est=beta, tol=1e-8)
    assert res_neg.c0 > 0
    zero = gs_shift_c0(geom, np.zeros_like(bump), c0, r0, beta_est=beta, tol=1e-8)
    assert abs(zero.c0) <= 1e-8


def test_gs_shift_support_guard(geom, nodes, consts):
    _, beta = consts
    c0 = np.full(3, L / 2)
    q = np.full(nodes.shape[0], 0.01)  # supported everywhere
    with pytest.raises(InputError):
        gs_shift_c0(geom, q, c0, 0.5, beta_est=beta)


def test_discrete_grad_square_nonnegative(geom, rng):
    v = 0.1 * rng.standard_normal(int(np.prod(geom.shape)))
    assert discrete_grad_square(geom, v).min() >= -1e-14


def test_fixed_point_zero_potential(geom):
    n = int(np.prod(geom.shape))
    fp = log_gradient_fixedpoint(GridOperator(geom, np.zeros(n)))
    assert np.abs(fp.v).max() <= 1e-12
    assert abs(fp.c) <= 1e-12


def test_fixed_point_small_cosine(geom, nodes, consts):
    a_est, _ = consts
    V = 0.02 * np.cos(2 * np.pi * nodes[:, 0] / L) * np.cos(2 * np.pi * nodes[:, 1] / L)
    op = GridOperator(geom, V)
    fp = log_gradient_fixedpoint(op, a_est=a_est)
    assert fp.residual_n2 <= 1e-6
    assert fp.dv_norm <= fp.v_norm_bound
    eig = lowest_eigenpair(op, tol=1e-12)
    assert abs(fp.c - eig.lambda0) <= 1e-9
    ratio = np.exp(fp.v) / eig.phi
    assert ratio.max() / ratio.min() - 1.0 <= 1e-6


def test_fixed_point_iterates_monotone(geom, nodes, consts):
    # contraction regime: successive gaps shrink geometrically
    a_est, _ = consts
    V = 0.02 * np.sin(2 * np.pi * nodes[:, 2] / L)
    op = GridOperator(geom, V)
    gaps = []
    v = np.zeros(V.size)
    for _ in range(6):
        rhs = op.V + discrete_grad_square(geom, v)
        v_new = geom.lap_inverse(rhs)
        gaps.append(geom.lp_norm(v_new - v, 3.0) + geom.grad_lp_norm(v_new - v, 3.0))
        v = v_new
    assert all(gaps[k + 1] <= gaps[k] for k in range(len(gaps) - 1))


def test_fixed_point_threshold_violation(geom, nodes, consts):
    a_est, _ = consts
    V = 80.0 * np.cos(2 * np.pi * nodes[:, 0] / L)
    with pytest.raises(NumericError):
        log_gradient_fixedpoint(GridOperator(geom, V), a_est=a_est)


@pytest.fixture(scope="module")
def decomposition(geom, nodes, consts):
    a_est, beta = consts
    dgeom = GridGeometry(Manifold.torus(3, [L, L, L]), (10, 10, 10))
    dx = dgeom.nodes()
    V = 0.01 * np.cos(2 * np.pi * dx[:, 0] / L) * np.sin(2 * np.pi * dx[:, 1] / L)
    op = GridOperator(dgeom, V)
    beta_d = estimate_sobolev_constant(dgeom)
    a_d = estimate_grad_inv_constant(dgeom)
    phi = lowest_eigenpair(op).phi
    dec = decompose_ground_state(op, 0.8, phi, beta_est=beta_d, a_est=a_d, seed=3)
    return dgeom, op, phi, dec, beta_d, a_d


def test_decomposition_reconstruction(decomposition):
    dgeom, op, phi, dec, *_ = decomposition
    assert dec.report["reconstruction_error"] <= 1e-8
    assert np.max(np.abs(np.exp(dec.f + dec.w) - phi)) <= 1e-8


def test_decomposition_trivial(decomposition):
    dgeom, *_ = decomposition
    n = int(np.prod(dgeom.shape))
    op0 = GridOperator(dgeom, np.zeros(n))
    dec = decompose_ground_state(op0, 0.8, np.ones(n), seed=1)
    assert np.abs(dec.f).max() <= 1e-10
    assert np.abs(dec.w - dec.w[0]).max() <= 1e-10


def test_decomposition_norm_scaling(decomposition):
    dgeom, op, phi, dec, beta_d, a_d = decomposition
    norms = {1.0: dec.report["df_ln"]}
    for t in (0.5, 0.25):
        opt = GridOperator(dgeom, t * op.V)
        phit = lowest_eigenpair(opt).phi
        dt = decompose_ground_state(opt, 0.8, phit, beta_est=beta_d, a_est=a_d, seed=3)
        norms[t] = dt.report["df_ln"]
    for t in (0.5, 0.25):
        assert abs(norms[t] / (t * norms[1.0]) - 1.0) <= 0.2


def test_decomposition_rho_guard(decomposition):
    dgeom, op, phi, *_ = decomposition
    with pytest.raises(InputError):
        decompose_ground_state(op, 5.0, phi)
