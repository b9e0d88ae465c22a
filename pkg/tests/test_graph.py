"""Road-distance metric and graph construction."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra

from sharegnn.graph import (
    ParkingLot,
    RoadNetwork,
    build_city_graph,
    build_prop_masks,
    distance_matrix,
    road_distance,
)


def lot(i, x, y, labeled=False, capacity=100):
    return ParkingLot(id=i, x_km=x, y_km=y, capacity=capacity, labeled=labeled)


def unit_net(size=10.0):
    return RoadNetwork(0.0, 0.0, size, size, spacing_km=1.0)


def test_distance_on_lattice_nodes_is_manhattan():
    net = unit_net()
    assert road_distance(net, lot(0, 0.0, 0.0), lot(1, 3.0, 4.0)) == pytest.approx(7.0)


def test_distance_identity_is_zero():
    net = unit_net()
    a = lot(0, 2.3, 4.1)
    assert road_distance(net, a, a) == 0.0


def test_distance_includes_attachment_offset():
    # (0, 2.5) attaches to node (0, 2) or (0, 3) with offset 0.5; path 2 or 3.
    # nearest-node rounding: 2.5 -> banker's rint gives node 2, offset 0.5
    net = unit_net()
    d = road_distance(net, lot(0, 0.0, 0.0), lot(1, 0.0, 2.5))
    assert d == pytest.approx(2.5)


def test_matrix_agrees_with_pairwise_function():
    rng = np.random.default_rng(0)
    net = unit_net()
    lots = [lot(i, *rng.uniform(0, 9, size=2)) for i in range(12)]
    d = distance_matrix(net, lots)
    for i in range(12):
        for j in range(12):
            assert d[i, j] == pytest.approx(road_distance(net, lots[i], lots[j]))


def test_lattice_distance_matches_dijkstra_oracle():
    # independent oracle: explicit lattice graph, shortest path via scipy
    net = RoadNetwork(0.0, 0.0, 4.0, 4.0, spacing_km=0.5)
    nodes = [(ix, iy) for ix in range(net.nx) for iy in range(net.ny)]
    index = {n: k for k, n in enumerate(nodes)}
    g = lil_matrix((len(nodes), len(nodes)))
    for ix, iy in nodes:
        for dx, dy in ((1, 0), (0, 1)):
            if (ix + dx, iy + dy) in index:
                a, b = index[(ix, iy)], index[(ix + dx, iy + dy)]
                g[a, b] = g[b, a] = net.spacing_km
    sp = dijkstra(g.tocsr(), directed=False)

    rng = np.random.default_rng(1)
    lots = [lot(i, *rng.uniform(0, 4, size=2)) for i in range(8)]
    for i in range(8):
        for j in range(8):
            if i == j:
                continue
            ai = net.attach(lots[i].x_km, lots[i].y_km)
            aj = net.attach(lots[j].x_km, lots[j].y_km)
            expected = sp[index[ai[:2]], index[aj[:2]]] + ai[2] + aj[2]
            assert road_distance(net, lots[i], lots[j]) == pytest.approx(expected)


def test_triangle_inequality_on_random_triples():
    rng = np.random.default_rng(2)
    net = unit_net()
    lots = [lot(i, *rng.uniform(0, 9, size=2)) for i in range(30)]
    d = distance_matrix(net, lots)
    for _ in range(200):
        i, j, k = rng.integers(0, 30, size=3)
        assert d[i, k] <= d[i, j] + d[j, k] + 1e-12


def test_context_edges_by_threshold():
    # fine lattice so axis-aligned road distance equals the straight-line one
    net = RoadNetwork(0.0, 0.0, 4.0, 4.0, spacing_km=0.1)
    lots = [lot(0, 1.0, 1.0, labeled=True), lot(1, 1.0, 1.5)]
    g = build_city_graph(lots, net, eps_km=1.0, k_nn=1)
    assert g.ctx_mask[0, 1] == 1.0  # 0.5 km apart
    lots2 = [lot(0, 1.0, 1.0, labeled=True), lot(1, 1.0, 2.5)]
    g2 = build_city_graph(lots2, net, eps_km=1.0, k_nn=1)
    assert g2.ctx_mask[0, 1] == 0.0  # 1.5 km apart


def test_context_collinear_chain():
    net = RoadNetwork(0.0, 0.0, 4.0, 1.0, spacing_km=0.1)
    lots = [lot(0, 0.0, 0.0, labeled=True), lot(1, 0.8, 0.0), lot(2, 1.6, 0.0)]
    g = build_city_graph(lots, net, eps_km=1.0, k_nn=1)
    expected = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    npt.assert_array_equal(g.ctx_mask, expected)


def test_context_symmetric_with_self_loops():
    rng = np.random.default_rng(3)
    net = unit_net()
    lots = [lot(i, *rng.uniform(0, 9, size=2), labeled=(i % 3 == 0)) for i in range(15)]
    g = build_city_graph(lots, net)
    npt.assert_array_equal(g.ctx_mask, g.ctx_mask.T)
    npt.assert_array_equal(np.diag(g.ctx_mask), np.ones(15))


def test_context_invariant_under_reordering():
    rng = np.random.default_rng(4)
    net = unit_net()
    coords = rng.uniform(0, 9, size=(10, 2))
    lots = [lot(i, *coords[i], labeled=(i < 3)) for i in range(10)]
    g = build_city_graph(lots, net)
    perm = rng.permutation(10)
    lots_p = [lot(k, *coords[perm[k]], labeled=(perm[k] < 3)) for k in range(10)]
    g_p = build_city_graph(lots_p, net)
    npt.assert_array_equal(g_p.ctx_mask, g.ctx_mask[np.ix_(perm, perm)])


def test_prop_radius_forced_by_single_distant_labeled_lot():
    net = unit_net()
    lots = [lot(0, 0.0, 0.0), lot(1, 5.0, 0.0, labeled=True)]
    g = build_city_graph(lots, net, eps_km=1.0, k_nn=1)
    assert g.prop_radii[0] == pytest.approx(5.0)
    assert g.prop_agg_mask[0, 1] == 1.0


def test_prop_collapses_to_context_when_labeled_nearby():
    net = RoadNetwork(0.0, 0.0, 2.0, 2.0, spacing_km=0.1)
    lots = [
        lot(0, 0.5, 0.5, labeled=True),
        lot(1, 0.5, 0.9, labeled=True),
        lot(2, 0.9, 0.5, labeled=True),
    ]
    g = build_city_graph(lots, net, eps_km=1.0, k_nn=2)
    npt.assert_allclose(g.prop_radii, np.full(3, 1.0))
    expected = g.ctx_mask.copy()
    np.fill_diagonal(expected, 0.0)
    npt.assert_array_equal(g.prop_mask, expected)


def test_prop_neighbors_match_bruteforce():
    rng = np.random.default_rng(5)
    net = unit_net()
    lots = [lot(i, *rng.uniform(0, 9, size=2), labeled=(i in (1, 3))) for i in range(5)]
    g = build_city_graph(lots, net, eps_km=1.0, k_nn=2)
    d = g.dist
    labeled = {1, 3}
    for i in range(5):
        peers = sorted(labeled - {i})
        dists = sorted(d[i, j] for j in peers)
        r = max(1.0, dists[min(2, len(dists)) - 1])
        expected = {j for j in range(5) if j != i and d[i, j] <= r}
        assert set(g.prop_neighbors(i)) == expected
        assert set(g.prop_aggregation_set(i)) == expected & labeled


def test_prop_requires_labeled_lots():
    with pytest.raises(ValueError, match="no labeled lots"):
        build_prop_masks(np.zeros((3, 3)), np.zeros(3, dtype=bool), 1.0, 1)


def test_prop_aggregation_nonempty_for_unlabeled():
    rng = np.random.default_rng(6)
    net = unit_net()
    for trial in range(5):
        coords = rng.uniform(0, 9, size=(12, 2))
        labeled_ids = set(rng.choice(12, size=rng.integers(1, 5), replace=False).tolist())
        lots = [lot(i, *coords[i], labeled=(i in labeled_ids)) for i in range(12)]
        g = build_city_graph(lots, net, eps_km=1.0, k_nn=3)
        for i in g.unlabeled_ids:
            assert g.prop_aggregation_set(i).size >= 1


def test_prop_has_no_self_loops():
    rng = np.random.default_rng(7)
    net = unit_net()
    lots = [lot(i, *rng.uniform(0, 9, size=2), labeled=(i % 2 == 0)) for i in range(8)]
    g = build_city_graph(lots, net)
    npt.assert_array_equal(np.diag(g.prop_mask), np.zeros(8))


def test_dense_id_check():
    net = unit_net()
    with pytest.raises(ValueError, match="dense"):
        build_city_graph([lot(0, 1, 1, labeled=True), lot(2, 2, 2)], net)


def test_degenerate_box_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        RoadNetwork(0, 0, 0.0, 5.0, 1.0)
