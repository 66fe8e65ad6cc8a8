import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gaussbubble.errors import InvalidArgument
from gaussbubble.geometry import InterfacePiece, SimplicialPartition, interfaces_of, regular_simplex_vertices
from gaussbubble.measure import (
    HalfSpace,
    IntervalUnion,
    MeasureResult,
    Polygon2D,
    ProductRegion,
    SectorRegion,
    barycenter,
    gaussian_volume,
    interface_measure,
    partition_regions,
    segment_flux,
    segment_measure,
)

angles = st.floats(0.0, 2 * math.pi)
coords = st.floats(-2.0, 2.0)


def _sector_oracle(y, m, label):
    # P(<X - y, z_j - z_i> <= 0 for all j != i) via scipy's multivariate normal cdf
    Z = regular_simplex_vertices(m).vectors
    i = label - 1
    rows = np.array([Z[j] - Z[i] for j in range(m) if j != i])
    upper = rows @ np.asarray(y)
    return stats.multivariate_normal(mean=np.zeros(len(rows)), cov=rows @ rows.T).cdf(upper)


def _line_oracle(point, u, lo, hi):
    # direct 1-D integral of the weight along the carrier line
    f = lambda s: math.exp(-0.5 * float(np.sum((point + s * u) ** 2))) / math.sqrt(2 * math.pi)
    return integrate.quad(f, lo, hi, epsabs=1e-13, limit=200)[0]


def test_measure_result_addition_and_validation():
    a = MeasureResult(1.0, 1e-16)
    b = MeasureResult(2.0, 1e-10, "adaptive-quadrature")
    c = a + b
    assert c.value == 3.0 and c.abs_error_bound == pytest.approx(1e-10 + 1e-16)
    assert c.method == "adaptive-quadrature"
    assert sum([a, a]).value == 2.0
    with pytest.raises(InvalidArgument):
        MeasureResult(1.0, -1.0)
    with pytest.raises(InvalidArgument):
        MeasureResult(1.0, 0.0, "magic")


@given(st.floats(-5, 5), st.floats(0, 2 * math.pi))
def test_half_space_volume_and_barycenter(t, th):
    n = np.array([math.cos(th), math.sin(th)])
    h = HalfSpace(n, t)
    assert gaussian_volume(h).value == pytest.approx(stats.norm.cdf(t), abs=1e-15)
    vec, _ = barycenter(h)
    np.testing.assert_allclose(vec, -stats.norm.pdf(t) * n, atol=1e-15)


def test_interval_union_from_breakpoints():
    iv = IntervalUnion.from_breakpoints([-0.5, 0.5], [1, 2, 1], 1)
    assert iv.intervals == ((-math.inf, -0.5), (0.5, math.inf))
    assert gaussian_volume(iv).value == pytest.approx(2 * stats.norm.cdf(-0.5), abs=1e-15)
    with pytest.raises(InvalidArgument):
        IntervalUnion(((0.0, 1.0), (0.5, 2.0)))


def test_polygon_square_volume_and_orientation():
    sq = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1.0]])
    exact = (stats.norm.cdf(1) - stats.norm.cdf(-1)) ** 2
    for verts in (sq, sq[::-1]):
        r = gaussian_volume(Polygon2D(verts))
        assert abs(r.value - exact) <= max(r.abs_error_bound, 1e-13)


def test_polygon_barycenter_matches_dblquad():
    tri = np.array([[0.0, 0.0], [2.0, 0.5], [0.3, 1.7]])
    vec, _ = barycenter(Polygon2D(tri))
    # integrate over the triangle parametrized by barycentric coordinates
    A = np.array([tri[1] - tri[0], tri[2] - tri[0]]).T
    jac = abs(np.linalg.det(A))
    for k in range(2):
        f = lambda v, u: (tri[0] + A @ [u, v])[k] * stats.multivariate_normal.pdf(tri[0] + A @ [u, v], cov=np.eye(2)) * jac
        ref = integrate.dblquad(f, 0, 1, 0, lambda u: 1 - u, epsabs=1e-12)[0]
        assert vec[k] == pytest.approx(ref, abs=1e-10)


def test_closed_polygon_flux_equals_volume():
    sq = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1.0]])
    flux = float(np.sum(segment_flux(sq, np.roll(sq, -1, axis=0), order=12)))
    assert flux == pytest.approx((stats.norm.cdf(1) - stats.norm.cdf(-1)) ** 2, abs=1e-13)


@pytest.mark.parametrize("y", [[0.0, 0.0], [0.3, -0.4], [-1.0, 0.8]])
def test_sector_volumes_m3_against_scipy_mvn(y):
    p = SimplicialPartition.from_shift(y, 3)
    total = 0.0
    for label in (1, 2, 3):
        r = gaussian_volume(SectorRegion(p, label))
        assert r.value == pytest.approx(_sector_oracle(y, 3, label), abs=1e-6)
        q = gaussian_volume(SectorRegion(p, label), method="quadrature")
        assert abs(r.value - q.value) <= r.abs_error_bound + q.abs_error_bound + 1e-14
        total += r.value
    assert total == pytest.approx(1.0, abs=1e-12)


def test_sector_volumes_m4_closed_form_qmc_and_scipy():
    y = [0.2, -0.1, 0.15]
    p = SimplicialPartition.from_shift(y, 4)
    vals = []
    for label in range(1, 5):
        r = gaussian_volume(SectorRegion(p, label))
        q = gaussian_volume(SectorRegion(p, label), method="qmc", seed=3)
        assert r.value == pytest.approx(_sector_oracle(y, 4, label), abs=2e-5)
        assert abs(r.value - q.value) <= r.abs_error_bound + q.abs_error_bound
        vals.append(r.value)
    assert sum(vals) == pytest.approx(1.0, abs=1e-9)


def test_equal_sectors_have_equal_volume():
    for m in (2, 3, 4):
        p = SimplicialPartition.from_shift(np.zeros(m - 1), m)
        for label in range(1, m + 1):
            assert gaussian_volume(SectorRegion(p, label)).value == pytest.approx(1 / m, abs=1e-12)


def test_product_region_ignores_trailing_factor():
    base = IntervalUnion(((-0.3, 1.2),))
    assert gaussian_volume(ProductRegion(base, 2)).value == gaussian_volume(base).value
    vec, _ = barycenter(ProductRegion(base, 2))
    assert vec.shape == (3,) and vec[1] == vec[2] == 0.0


@given(coords, coords, angles, st.floats(-3, 1), st.floats(0.05, 3))
def test_segment_measure_against_line_quadrature(px, py, th, lo, length):
    u = np.array([math.cos(th), math.sin(th)])
    point = np.array([px, py])
    a, b = point + lo * u, point + (lo + length) * u
    ref = _line_oracle(point, u, lo, lo + length)
    assert float(segment_measure(a, b)) == pytest.approx(ref, abs=1e-12)


def test_hyperplane_measure_m2():
    for t in (0.0, 0.7, -1.3):
        piece = InterfacePiece("hyperplane", [t, 0.0], [[0.0, 1.0]])
        assert interface_measure(piece).value == pytest.approx(math.exp(-t * t / 2), abs=1e-15)


def test_centered_ray_measure_is_half():
    for pc in interfaces_of(SimplicialPartition.from_shift([0.0, 0.0], 3)):
        assert interface_measure(pc).value == pytest.approx(0.5, abs=1e-15)


def test_centered_wedge_measure_m4():
    # each interface is a planar wedge with opening arccos(-1/3) through the origin
    angle = math.acos(-1.0 / 3.0)
    for pc in interfaces_of(SimplicialPartition.from_shift(np.zeros(3), 4)):
        assert interface_measure(pc).value == pytest.approx(angle / (2 * math.pi), abs=1e-12)


@given(coords, coords, angles, st.floats(-1, 1), angles)
def test_interface_measure_rotation_invariant(px, py, th, lo, rot):
    u = np.array([[math.cos(th), math.sin(th)]])
    R = np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]])
    point = np.array([px, py])
    ray = InterfacePiece("ray", point, u, (lo, math.inf))
    turned = InterfacePiece("ray", R @ point, u @ R.T, (lo, math.inf))
    assert interface_measure(ray).value == pytest.approx(interface_measure(turned).value, abs=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_wedge_rotation_invariant_in_r3(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    R, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    point = rng.uniform(-1, 1, 3)
    lo = rng.uniform(-math.pi, math.pi)
    ext = (lo, lo + rng.uniform(0.2, 2.5))
    w1 = interface_measure(InterfacePiece("wedge2D-in-plane", point, Q[:2], ext))
    w2 = interface_measure(InterfacePiece("wedge2D-in-plane", R @ point, Q[:2] @ R.T, ext))
    assert abs(w1.value - w2.value) <= w1.abs_error_bound + w2.abs_error_bound + 1e-13


def test_interface_quadrature_agrees_with_closed_form():
    from gaussbubble.acceptance import random_pieces

    for pc in random_pieces(18, seed=5):
        c = interface_measure(pc)
        q = interface_measure(pc, method="quadrature")
        assert abs(c.value - q.value) <= c.abs_error_bound + q.abs_error_bound


def test_interface_measure_rejects_wrong_dimension():
    with pytest.raises(InvalidArgument):
        interface_measure(InterfacePiece("ray", [0, 0, 0], [[1, 0, 0]], (0, math.inf)))
    with pytest.raises(InvalidArgument):
        interface_measure(InterfacePiece("hyperplane", [0, 0], [[1, 0]]), method="bogus")


@given(st.lists(st.floats(-1.2, 1.2), min_size=1, max_size=3))
def test_sector_barycenters_sum_to_zero(y):
    m = len(y) + 1
    regions = partition_regions(SimplicialPartition.from_shift(y, m))
    total = sum(barycenter(r)[0] for r in regions)
    np.testing.assert_allclose(total, 0.0, atol=1e-12)


def test_sector_barycenter_direct_quadrature_m3():
    p = SimplicialPartition.from_shift([0.25, -0.35], 3)
    for label in (1, 2, 3):
        v1, e1 = barycenter(SectorRegion(p, label))
        v2, e2 = barycenter(SectorRegion(p, label), method="quadrature")
        assert np.all(np.abs(v1 - v2) <= e1 + e2 + 1e-14)


def test_centered_sector_barycenter_points_along_direction():
    # |barycenter| of a 120 degree sector = int_{-pi/3}^{pi/3} cos / (2 pi) * int r^2 e^{-r^2/2} dr
    p = SimplicialPartition.from_shift([0.0, 0.0], 3)
    mag = (2 * math.sin(math.pi / 3) / (2 * math.pi)) * math.sqrt(math.pi / 2)
    for label in (1, 2, 3):
        vec, _ = barycenter(SectorRegion(p, label))
        np.testing.assert_allclose(vec, mag * p.directions[label], atol=1e-13)


def test_volume_examples():
    assert gaussian_volume(HalfSpace(np.array([1.0, 0.0]), 0.0)).value == pytest.approx(0.5, abs=1e-15)
    assert gaussian_volume(HalfSpace(np.array([1.0, 0.0]), 0.2533471)).value == pytest.approx(0.6, abs=1e-7)
    t = stats.norm.ppf(0.6)
    assert gaussian_volume(HalfSpace(np.array([1.0, 0.0]), t)).value == pytest.approx(0.6, abs=1e-12)
    p = SimplicialPartition.from_shift([0.0, 0.0], 3)
    assert gaussian_volume(SectorRegion(p, 1)).value == pytest.approx(1 / 3, abs=1e-12)


def test_interface_examples():
    for d in (2, 3, 5):
        frame = np.eye(d)[1:]
        assert interface_measure(InterfacePiece("hyperplane", np.zeros(d), frame)).value == pytest.approx(1.0, abs=1e-15)
    ray = InterfacePiece("ray", [0.0, 0.0], [[0.6, 0.8]], (0.0, math.inf))
    assert interface_measure(ray).value == pytest.approx(0.5, abs=1e-15)
    t = 0.4307273
    line = InterfacePiece("hyperplane", [0.0, t], [[1.0, 0.0]])
    assert interface_measure(line).value == pytest.approx(0.911409, abs=1e-6)
    q = interface_measure(line, method="quadrature")
    assert abs(q.value - math.exp(-t * t / 2)) <= q.abs_error_bound + 1e-15


def test_barycenter_examples():
    vec, _ = barycenter(HalfSpace(np.array([1.0, 0.0]), 0.0))
    np.testing.assert_allclose(vec, [-0.398942, 0.0], atol=1e-6)
    ref = integrate.quad(lambda x: x * stats.norm.pdf(x), -np.inf, 0.0)[0]
    assert vec[0] == pytest.approx(ref, abs=1e-12)
    whole = IntervalUnion(((-math.inf, math.inf),))
    assert barycenter(ProductRegion(whole, 1))[0].tolist() == [0.0, 0.0]
