import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gaussbubble import frontflow as ff
from gaussbubble import simplicial
from gaussbubble.errors import InvalidArgument, TopologyEvent

EQUAL = np.full(3, 1.0 / 3.0)
seeds = st.integers(0, 2**31 - 1)


def _slab_oracle(a):
    # best ordering on the line: the middle set is sandwiched between two breakpoints
    best = math.inf
    for left, mid, right in itertools.permutations(range(3)):
        t1 = stats.norm.ppf(a[left])
        t2 = stats.norm.ppf(a[left] + a[mid])
        best = min(best, math.exp(-t1 * t1 / 2) + math.exp(-t2 * t2 / 2))
    return best


# -- line partitions ---------------------------------------------------------


def test_optimize_1d_two_sets():
    res = ff.optimize_1d(2, [0.5, 0.5])
    assert res.cost == pytest.approx(1.0, abs=1e-12)
    assert len(res.best.breakpoints) == 1


def test_optimize_1d_slab_value():
    t = stats.norm.ppf(2.0 / 3.0)
    res = ff.optimize_1d(3, EQUAL)
    assert res.cost == pytest.approx(2 * math.exp(-t * t / 2), abs=1e-9)
    assert res.cost == pytest.approx(1.822818, abs=1e-6)
    np.testing.assert_allclose(sorted(res.best.breakpoints), [-t, t], atol=1e-9)


@pytest.mark.parametrize("a", [(0.2, 0.3, 0.5), (0.6, 0.25, 0.15), (0.1, 0.1, 0.8)])
def test_optimize_1d_matches_ordering_oracle(a):
    res = ff.optimize_1d(3, a)
    assert res.cost == pytest.approx(_slab_oracle(a), abs=1e-9)


@given(st.floats(0.1, 0.9))
def test_line_cost_exceeds_simplicial_for_three_sets(x):
    a = np.array([x, (1 - x) / 2, (1 - x) / 2])
    assert ff.optimize_1d(3, a, max_breaks=3).cost > simplicial.cost(a).value


def test_multipliers_1d_slab_signs():
    t = stats.norm.ppf(2.0 / 3.0)
    part = ff.Partition1D((-t, t), (1, 2, 3))
    lam = ff.multipliers_1d(part)
    assert lam.lam_ij(1, 2) == pytest.approx(t, abs=1e-12)
    assert lam.lam_ij(2, 3) == pytest.approx(-t, abs=1e-12)
    assert abs(lam.lam.sum()) < 1e-14


def test_partition_1d_validation():
    with pytest.raises(InvalidArgument):
        ff.Partition1D((0.5, -0.5), (1, 2, 3))
    with pytest.raises(InvalidArgument):
        ff.Partition1D((0.0,), (1, 1))
    with pytest.raises(InvalidArgument):
        ff.Partition1D((0.0,), (1, 2, 3))


# -- polygonal networks --------------------------------------------------------


def test_tripod_network_cost_and_volumes():
    net = ff.tripod_network()
    assert net.cost() == pytest.approx(1.5, abs=1e-12)
    np.testing.assert_allclose(net.volumes(), EQUAL, atol=1e-12)


def test_slab_network_cost_and_volumes():
    net = ff.slab_network()
    assert net.cost() == pytest.approx(1.8228189517012245, abs=1e-9)
    np.testing.assert_allclose(np.sort(net.volumes()), EQUAL, atol=1e-12)


def _interior_direction(net, rng):
    D = np.zeros_like(net.vertices)
    interior = [v for ch in net.chains for v in ch.nodes[1:-1]]
    D[interior] = rng.standard_normal((len(interior), 2))
    return D


@given(seeds)
def test_cost_gradient_matches_fd(seed):
    rng = np.random.default_rng(seed)
    net = ff.jitter(ff.tripod_network(n_per_ray=20), 0.1, seed % 1000)
    D = _interior_direction(net, rng)
    h = 1e-6
    fd = (net.with_vertices(net.vertices + h * D).cost() - net.with_vertices(net.vertices - h * D).cost()) / (2 * h)
    assert np.sum(net.cost_gradient() * D) == pytest.approx(fd, rel=1e-6, abs=1e-9)


@given(seeds)
def test_volume_gradient_matches_fd(seed):
    rng = np.random.default_rng(seed)
    net = ff.jitter(ff.tripod_network(n_per_ray=20), 0.1, seed % 1000)
    D = _interior_direction(net, rng)
    h = 1e-6
    fd = (net.with_vertices(net.vertices + h * D).volumes() - net.with_vertices(net.vertices - h * D).volumes()) / (2 * h)
    np.testing.assert_allclose(np.sum(net.volume_gradient() * D[None], axis=(1, 2)), fd, atol=1e-8)


@given(seeds)
def test_dof_derivatives_match_fd(seed):
    rng = np.random.default_rng(seed)
    net = ff.jitter(ff.tripod_network(n_per_ray=20), 0.1, seed % 1000)
    delta = rng.standard_normal(net.topo.dof_vertex.size)
    h = 1e-6
    up, dn = net.displaced(h * delta), net.displaced(-h * delta)
    fd_cost = (up.cost() - dn.cost()) / (2 * h)
    fd_vol = (up.volumes() - dn.volumes()) / (2 * h)
    assert net.dof_cost_gradient() @ delta == pytest.approx(fd_cost, rel=1e-5, abs=1e-8)
    np.testing.assert_allclose(net.dof_volume_jacobian() @ delta, fd_vol, atol=1e-7)


@given(seeds)
def test_volume_projection_restores_volumes(seed):
    net = ff.jitter(ff.tripod_network(n_per_ray=30), 0.1, seed % 1000)
    out = ff.volume_project(net, EQUAL)
    np.testing.assert_allclose(out.volumes(), EQUAL, atol=1e-12)


def test_volume_projection_rejects_distant_targets():
    with pytest.raises(InvalidArgument):
        ff.volume_project(ff.tripod_network(), [0.6, 0.2, 0.2])


def test_remesh_restores_uniform_spacing_on_straight_chains():
    net = ff.tripod_network(n_per_ray=30)
    rng = np.random.default_rng(1)
    V = net.vertices.copy()
    for ch in net.chains:
        inner = list(ch.nodes[1:-1])
        # slide interior nodes along their ray, keeping their order
        d = V[ch.nodes[-1]] - V[ch.nodes[0]]
        h = np.linalg.norm(d) / (len(ch.nodes) - 1)
        V[inner] += rng.uniform(-0.3, 0.3, size=(len(inner), 1)) * h * d / np.linalg.norm(d)
    out = ff.remesh(net.with_vertices(V))
    for c, ch in enumerate(net.chains):
        ends = [ch.nodes[0], ch.nodes[-1]]
        np.testing.assert_array_equal(out.vertices[ends], net.vertices[ends])
        seg = np.linalg.norm(np.diff(out.chain_points(c), axis=0), axis=1)
        np.testing.assert_allclose(seg, seg.mean(), rtol=1e-10)


def test_collision_detection():
    net = ff.tripod_network(n_per_ray=10)
    assert ff.find_collisions(net) == ([], [])
    V = net.vertices.copy()
    chain = net.chains[0].nodes
    other = net.chains[1].nodes
    # drag an interior node of one chain across the middle of another
    V[chain[4]] = 0.5 * (V[other[3]] + V[other[5]]) + 0.3 * (V[other[5]] - V[other[3]])[::-1] * [1, -1]
    crossings, _ = ff.find_collisions(net.with_vertices(V))
    assert crossings


def test_optimizer_reports_topology_events(monkeypatch):
    monkeypatch.setattr(ff, "find_collisions", lambda net: ([(0, 5)], []))
    with pytest.raises(TopologyEvent) as info:
        ff.optimize_2d(EQUAL, ff.jitter(ff.tripod_network(n_per_ray=20), 0.1, 7), steps=20)
    assert info.value.report["partial"].status == "topology-event"


def test_network_json_roundtrip_and_plot_rows():
    net = ff.jitter(ff.tripod_network(n_per_ray=12), 0.1, 4)
    back = ff.PolygonalNetwork.from_json(net.to_json())
    np.testing.assert_array_equal(back.vertices, net.vertices)
    assert back.cost() == net.cost()
    rows = net.plot_rows()
    assert len(rows) == sum(len(ch.nodes) for ch in net.chains)
    assert {r[2] for r in rows} == {f"{ch.labels[0]}-{ch.labels[1]}" for ch in net.chains}


def test_first_variation_of_exact_tripod():
    fv = ff.first_variation_residual(ff.tripod_network())
    assert fv.pointwise_max < 1e-12
    assert fv.angle_deviation < 1e-9
    assert fv.cocycle_max < 1e-12


def test_first_variation_grows_linearly_with_smooth_perturbation():
    # bend every chain by a smooth normal bump; the residual is first order in the amplitude
    base = ff.tripod_network(n_per_ray=80)
    kinds = base.topo.dof_kind
    pos = base.vertices[base.topo.dof_vertex]
    bump = np.where(kinds == 0, np.sin(np.linalg.norm(pos, axis=1)) * np.exp(-0.1 * np.sum(pos**2, axis=1)), 0.0)
    res = [ff.first_variation_residual(base.displaced(eps * bump)).pointwise_max for eps in (1e-3, 2e-3)]
    assert res[0] > 1e-4
    assert res[1] / res[0] == pytest.approx(2.0, rel=0.05)


def test_descent_is_monotone_and_volume_preserving():
    a = np.array([0.3, 0.3, 0.4])
    init = ff.jitter(ff.tripod_network(a, n_per_ray=30), 0.1, 2)
    res = ff.optimize_2d(a, init, steps=200)
    costs = [row[1] for row in res.trace]
    assert all(c1 <= c0 + 1e-12 for c0, c1 in zip(costs, costs[1:]))
    np.testing.assert_allclose(res.network.volumes(), a, atol=1e-10)
    assert res.cost < init.cost()


def test_optimizer_validation():
    with pytest.raises(InvalidArgument):
        ff.optimize_2d([0.5, 0.5, 0.1])


@pytest.mark.slow
def test_unequal_volumes_reach_simplicial_cost():
    a = np.array([0.2, 0.3, 0.5])
    res = ff.optimize_2d(a, ff.jitter(ff.tripod_network(a), 0.05, 3), steps=1500)
    assert res.cost == pytest.approx(simplicial.cost(a).value, abs=1e-5)
    fv = ff.first_variation_residual(res.network)
    assert fv.pointwise_max < 5e-3 and fv.angle_deviation < 0.5 and fv.cocycle_max <= 1e-4


@pytest.mark.slow
def test_slab_descent_stays_in_its_topology():
    init = ff.jitter(ff.slab_network(), 0.1, 7)
    res = ff.optimize_2d(EQUAL, init, steps=3000)
    assert res.cost < init.cost()
    assert res.cost == pytest.approx(1.822818, abs=1e-5)
    assert res.cost > 1.5


def test_trace_csv_header():
    res = ff.optimize_2d(EQUAL, ff.jitter(ff.tripod_network(n_per_ray=20), 0.1, 7), steps=15)
    lines = res.trace_csv().splitlines()
    assert lines[0] == "step,cost,grad_norm,max_residual"
    assert len(lines) == len(res.trace) + 1


def test_unequal_tripod_has_120_degree_junction():
    a = np.array([0.4, 0.35, 0.25])
    res = ff.optimize_2d(a, ff.tripod_network(a), steps=200)
    fv = ff.first_variation_residual(res.network)
    assert fv.angle_deviation <= 0.5
    assert fv.cocycle_max <= 1e-4 and fv.pointwise_max <= 5e-3


def test_exact_tripod_has_zero_multipliers():
    fv = ff.first_variation_residual(ff.tripod_network())
    np.testing.assert_allclose(fv.multipliers, 0.0, atol=1e-8)
    assert max(fv.edge_residual) <= 1e-8


def test_slab_multipliers_agree_across_modules():
    t = stats.norm.ppf(2.0 / 3.0)
    fv = ff.first_variation_residual(ff.slab_network())
    line = ff.multipliers_1d(ff.Partition1D((-t, t), (1, 2, 3)))
    np.testing.assert_allclose(fv.multipliers, line.lam, atol=1e-9)
    # flat interfaces: lambda_ij = -<x, N_ij> with N_12 pointing toward the middle slab
    assert line.lam_ij(1, 2) == pytest.approx(t, abs=1e-12)
    assert line.lam_ij(2, 3) == pytest.approx(-t, abs=1e-12)


def test_volume_projection_examples():
    net = ff.tripod_network()
    assert ff.volume_project(net, EQUAL) is net
    V = net.vertices + np.array([0.05, 0.0])
    moved = net.with_vertices(V)
    # keep endpoints on the truncation circle
    ends = [ch.nodes[-1] for ch in net.chains]
    moved = net.with_vertices(np.where(np.isin(np.arange(len(V)), ends)[:, None], net.vertices, V))
    out = ff.volume_project(moved, EQUAL)
    np.testing.assert_allclose(out.volumes(), EQUAL, atol=1e-9)


def test_projection_displacement_is_small_near_a_converged_net():
    net = ff.tripod_network()
    out = ff.volume_project(ff.jitter(net, 0.01, 5), EQUAL)
    shaken = ff.jitter(net, 0.01, 5)
    assert np.linalg.norm(out.vertices - shaken.vertices) <= 0.05
