import numpy as np
import pytest
from scipy.integrate import quad

from conflab.errors import InputError
from conflab.manifold import PointSet, d0_many, lattice
from conflab.metric import (
    ChainBall,
    DistanceMatrix,
    RiemannLine,
    build_graph,
    f_ball,
    fit_rate,
    refine_distance,
    shortest_paths,
    stable_norm,
)
from conflab.weight import BuragoTorus, Constant, LogCusp, Scaled

TWO_NODES = PointSet(points=np.array([[0.0, 0.0], [1.0, 0.0]]), spacing=0.4)


def test_edge_weight_closed_forms(torus2):
    g_r = build_graph(torus2, TWO_NODES, 1.3, Constant(0.0), RiemannLine(5),
                      skip_connectivity_check=True)
    assert g_r.edge_w[0] == pytest.approx(1.0, rel=1e-14)
    g_c = build_graph(torus2, TWO_NODES, 1.3, Constant(0.0), ChainBall(), budget=400,
                      skip_connectivity_check=True)
    assert g_c.edge_w[0] == pytest.approx(0.5, rel=1e-14)


def test_chain_vs_riemann_two_node_factor(torus2):
    # the chain increment of a single edge is exactly half the line integral
    # for the trivial weight; the factor-2 relation is kept literal
    g_r = build_graph(torus2, TWO_NODES, 1.3, Constant(0.0), RiemannLine(5),
                      skip_connectivity_check=True)
    g_c = build_graph(torus2, TWO_NODES, 1.3, Constant(0.0), ChainBall(), budget=400,
                      skip_connectivity_check=True)
    assert 2 * shortest_paths(g_c, [0]).get(0, 1) == pytest.approx(
        shortest_paths(g_r, [0]).get(0, 1), rel=1e-12
    )


def test_weight_scaling_per_edge(torus2):
    g0 = build_graph(torus2, TWO_NODES, 1.3, Constant(0.0), RiemannLine(5),
                     skip_connectivity_check=True)
    for c in (0.5, -1.2):
        gc = g0.reweight(torus2, Constant(c), 256, 0)
        assert gc.edge_w[0] == pytest.approx(np.exp(c) * g0.edge_w[0], rel=1e-12)


def test_connectivity_precondition(torus2):
    pts = lattice(torus2, 0.5)
    with pytest.raises(InputError) as exc:
        build_graph(torus2, pts, 1.2, Constant(0.0))
    assert "eps >= 3 * spacing" in str(exc.value)


def test_flat_distance_three_percent(torus2, rng):
    pts = lattice(torus2, 0.1)
    g = build_graph(torus2, pts, 3 * pts.spacing, Constant(0.0))
    src = rng.choice(len(pts), 6, replace=False)
    dm = shortest_paths(g, src)
    for s in src:
        tgt = rng.choice(len(pts), 30, replace=False)
        dd0 = d0_many(torus2, pts.points[tgt], pts.points[s])
        ok = dd0 > 0.5
        rel = np.abs(dm.row(s)[tgt][ok] / dd0[ok] - 1.0)
        assert rel.max() <= 0.03


def test_distance_matrix_symmetry_triangle(torus2):
    pts = lattice(torus2, 0.35)
    g = build_graph(torus2, pts, 3 * pts.spacing, BuragoTorus(1))
    dm = shortest_paths(g, None)
    v = dm.values
    assert np.allclose(v, v.T, atol=1e-12)
    assert np.allclose(np.diag(v), 0.0)
    n = v.shape[0]
    idx = np.random.default_rng(0).integers(0, n, (200, 3))
    viol = v[idx[:, 0], idx[:, 2]] - v[idx[:, 0], idx[:, 1]] - v[idx[:, 1], idx[:, 2]]
    assert viol.max() <= 1e-12


def test_scaling_equivariance_full(torus2):
    pts = lattice(torus2, 0.25)
    g0 = build_graph(torus2, pts, 3 * pts.spacing, BuragoTorus(1), seed=3)
    g1 = g0.reweight(torus2, Scaled(BuragoTorus(1), 0.8), 256, 3)
    d0v = shortest_paths(g0, [0, 5]).values
    d1v = shortest_paths(g1, [0, 5]).values
    mask = d0v > 0
    assert np.abs(d1v[mask] / d0v[mask] / np.exp(0.8) - 1.0).max() <= 1e-10


def test_monotone_in_eps(torus2):
    pts = lattice(torus2, 0.15)
    d_prev = None
    for eps in (0.45, 0.9, 1.35):
        g = build_graph(torus2, pts, eps, Constant(0.0))
        d = shortest_paths(g, [0]).values
        if d_prev is not None:
            assert np.all(d <= d_prev + 1e-12)
        d_prev = d


def test_refine_flat_and_scaled(torus2):
    pairs = [
        (np.array([0.0, 0.0]), np.array([1.0, 0.0])),
        (np.array([0.3, 0.4]), np.array([2.0, 1.3])),
    ]
    res = refine_distance(torus2, Constant(0.0), pairs, [0.6, 0.3, 0.15], seed=1)
    assert not res.monotone_warning.any()
    assert np.abs(res.extrapolated / res.pair_d0 - 1.0).max() <= 5e-3
    res_c = refine_distance(torus2, Constant(0.4), pairs, [0.6, 0.3, 0.15], seed=1)
    expect = np.exp(0.4) * res_c.pair_d0
    assert np.abs(res_c.extrapolated / expect - 1.0).max() <= 5e-3


def test_refine_burago_valley(torus2):
    # vertical pair through the weight minimum: the optimal path hugs the
    # valley x1 = 0 and costs 2^{-1/2} per unit length
    pairs = [(np.array([0.0, 0.0]), np.array([0.0, np.pi]))]
    res = refine_distance(torus2, BuragoTorus(1), pairs, [0.6, 0.3, 0.15], seed=2)
    assert res.extrapolated[0] == pytest.approx(np.pi / np.sqrt(2.0), rel=0.01)


def test_chain_riemann_consistency_modulo_factor(torus2):
    pts = lattice(torus2, 0.2)
    g_r = build_graph(torus2, pts, 3 * pts.spacing, BuragoTorus(1))
    g_c = build_graph(torus2, pts, 3 * pts.spacing, BuragoTorus(1), ChainBall(), budget=256, seed=1)
    src = [0, 200, 700]
    dr = shortest_paths(g_r, src).values
    dc = shortest_paths(g_c, src).values
    mask = dr > 1.0
    assert np.abs(2 * dc[mask] / dr[mask] - 1.0).max() <= 0.03


def test_fit_rate_exact_model():
    eps = np.array([0.4, 0.2, 0.1])
    a, b, q = fit_rate(eps, 2.0 + 0.3 * eps**1.5)
    assert a == pytest.approx(2.0, abs=1e-6)
    assert q == pytest.approx(1.5, abs=0.05)


def test_f_ball_members_and_mass(torus2):
    pts = lattice(torus2, 0.15)
    g = build_graph(torus2, pts, 3 * pts.spacing, Constant(0.0))
    dm = shortest_paths(g, [0])
    members, mass, warn = f_ball(torus2, Constant(0.0), g, dm, 0, 0.8)
    d0_members = np.nonzero(d0_many(torus2, pts.points, pts.points[0]) <= 0.8)[0]
    # graph metric overshoots d0 slightly: members form a subset
    assert set(members).issubset(set(d0_members))
    assert len(members) >= 0.9 * len(d0_members)
    assert not warn
    # mass of the whole set approximates the total mass
    all_members, total, warn2 = f_ball(torus2, Constant(0.0), g, dm, 0, 1e9)
    assert warn2
    assert len(all_members) == len(pts)
    assert total == pytest.approx(torus2.volume, rel=0.02)
    # Ahlfors behaviour of the flat metric ball masses
    for r in (0.5, 0.8):
        mem, mass_r, _ = f_ball(torus2, Constant(0.0), g, dm, 0, r)
        assert mass_r / r**2 == pytest.approx(np.pi, rel=0.10)


def test_stable_norm_flat(torus2):
    P = 2 * np.pi
    r = stable_norm(torus2, Constant(0.0), [0.0, 1.0], [P, 2 * P], spacing=0.15)
    assert r.estimate == pytest.approx(1.0, rel=0.01)


def test_stable_norm_burago(torus2):
    P = 2 * np.pi
    r2 = stable_norm(torus2, BuragoTorus(1), [0.0, 1.0], [P, 2 * P, 3 * P], spacing=0.1)
    assert r2.estimate == pytest.approx(2.0**-0.5, rel=0.01)
    r1 = stable_norm(torus2, BuragoTorus(1), [1.0, 0.0], [P, 2 * P, 3 * P], spacing=0.1)
    oracle = quad(lambda t: np.sqrt(1 - 0.5 * np.cos(t)), 0, 2 * np.pi)[0] / (2 * np.pi)
    assert r1.estimate == pytest.approx(oracle, rel=0.01)
    assert r2.corridor_check <= 1e-9


def test_stable_norm_subadditive(torus2):
    P = 2 * np.pi
    kw = dict(spacing=0.15, check_corridor=False)
    n_e1 = stable_norm(torus2, BuragoTorus(1), [1.0, 0.0], [P, 2 * P], **kw).estimate
    n_e2 = stable_norm(torus2, BuragoTorus(1), [0.0, 1.0], [P, 2 * P], **kw).estimate
    n_diag = stable_norm(torus2, BuragoTorus(1), [1.0, 1.0], [P, 2 * P], **kw).estimate
    assert np.sqrt(2.0) * n_diag <= (n_e1 + n_e2) * 1.02


def test_distance_matrix_export(tmp_path, torus2):
    pts = lattice(torus2, 0.6)
    g = build_graph(torus2, pts, 3 * pts.spacing, Constant(0.0))
    dm = shortest_paths(g, [0, 3])
    csv_path = tmp_path / "dist.csv"
    dm.write_csv(csv_path)
    loaded = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    assert np.allclose(loaded[:, 1:], dm.values)
    bin_path = tmp_path / "dist.json"
    dm.write_binary(bin_path)
    dm2 = DistanceMatrix.read_binary(bin_path)
    assert np.array_equal(dm2.values, dm.values)
    assert np.array_equal(dm2.sources, dm.sources)


def test_box_lattice_graph(torus2):
    from conflab.manifold import Manifold

    box = Manifold.box([[0.0, 2.0], [0.0, 1.0]])
    pts = lattice(box, 0.1)
    g = build_graph(box, pts, 3 * pts.spacing, Constant(0.0))
    dm = shortest_paths(g, [0])
    d0v = d0_many(box, pts.points, pts.points[0])
    ok = d0v > 0.4
    rel = dm.values[0][ok] / d0v[ok] - 1.0
    assert rel.min() >= -1e-12
    assert rel.max() <= 0.03


def test_disconnected_graph_reported(torus2):
    # two distant clusters with a spacing claim that passes the eps check
    cluster = np.array([[0.0, 0.0], [0.05, 0.0], [0.0, 0.05]])
    pts = PointSet(
        points=np.vstack([cluster, cluster + np.array([3.0, 3.0])]), spacing=0.03
    )
    with pytest.raises(InputError) as exc:
        build_graph(torus2, pts, 0.1, Constant(0.0))
    assert "components" in str(exc.value)


def test_sphere_graph_distances(sphere2):
    pts = lattice(sphere2, 0.12)
    g = build_graph(sphere2, pts, 3 * 0.12, Constant(0.0))
    dm = shortest_paths(g, [0])
    d0v = d0_many(sphere2, pts.points, pts.points[0])
    ok = d0v > 0.8
    rel = dm.values[0][ok] / d0v[ok] - 1.0
    assert rel.min() >= -1e-9  # graph metric never undershoots
    assert rel.max() <= 0.05


def test_stable_norm_node_budget(torus2):
    from conflab.errors import ResourceError

    with pytest.raises(ResourceError):
        stable_norm(
            torus2, Constant(0.0), [0.0, 1.0], [2 * np.pi, 4 * np.pi],
            spacing=0.1, node_budget=100,
        )


def test_logcusp_distance_finite(torus2):
    # blow-up weight stays integrable: distances through the cusp are finite
    # (the singular center is kept off lattice midpoints)
    pts = lattice(torus2, 0.3)
    g = build_graph(torus2, pts, 3 * pts.spacing, LogCusp((np.pi + 0.013, np.pi - 0.029), 0.6))
    dm = shortest_paths(g, [0])
    assert np.all(np.isfinite(dm.values))
