import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gaussbubble import stability
from gaussbubble.errors import InvalidMesh, PreconditionViolation

R = 8.5


def _line_fields(s):
    bump = R * R - s * s
    return bump * np.sin(s + 0.4), bump * np.cos(0.5 * s)


def _line_exact_q():
    # Q(f, g) = int (f'g' - f g) gamma_1 on a straight line through the origin
    def integrand(s):
        b, db = R * R - s * s, -2 * s
        f, df = b * math.sin(s + 0.4), db * math.sin(s + 0.4) + b * math.cos(s + 0.4)
        g, dg = b * math.cos(s / 2), db * math.cos(s / 2) - 0.5 * b * math.sin(s / 2)
        return (df * dg - f * g) * math.exp(-s * s / 2) / math.sqrt(2 * math.pi)

    return integrate.quad(integrand, -R, R, epsabs=1e-11, limit=400)[0]


def _graded_line(n):
    # a spacing jump at 0 keeps the node sums from being spectrally accurate
    left = np.linspace(-R, 0.0, n // 3 + 1)
    s = np.concatenate([left, np.linspace(0.0, R, n - n // 3)[1:]])
    n = s.size
    P = np.stack([s, np.zeros(n)], axis=1)
    edge = stability.MeshEdge(P, (1, 2), np.tile([0.0, -1.0], (n, 1)), np.zeros(n))
    return stability.CurveNetworkMesh((edge,)), s


def test_quadratic_form_converges_second_order():
    exact = _line_exact_q()
    errs_q, errs_l = [], []
    for n in (201, 401, 801):
        mesh, s = _graded_line(n)
        F, G = _line_fields(s)
        asm = stability.assemble(mesh)
        errs_q.append(abs(asm.Q(F, G) - exact))
        LF = stability.apply_L(mesh, F).values
        inner = slice(1, -1)
        errs_l.append(abs(-np.sum(asm.M[inner] * LF[inner] * G[inner]) - exact))
    for errs in (errs_q, errs_l):
        rates = [errs[0] / errs[1], errs[1] / errs[2]]
        assert min(rates) > 3.0, (errs, rates)
        assert errs[-1] < 1e-3 * abs(exact)


def test_circle_spectrum():
    rep = stability.fundamental_tone(stability.circle_mesh(256), n_eigs=3)
    np.testing.assert_allclose(np.sort(rep.top_eigenvalues)[::-1], [2, 1, 1], atol=1e-2)
    assert rep.sign_constant == (True,)


def test_circle_linear_modes_are_exact_at_any_resolution():
    for n in (16, 64):
        w = stability.fundamental_tone(stability.circle_mesh(n), n_eigs=3).top_eigenvalues
        np.testing.assert_allclose(w, [2, 1, 1], atol=1e-10)


def test_curved_junction_tone_self_convergence():
    tones = [stability.fundamental_tone(stability.curved_junction_mesh(n=n)).tone for n in (33, 65, 129, 257)]
    d = np.abs(np.diff(tones))
    np.testing.assert_allclose(d[:-1] / d[1:], 4.0, rtol=0.05)


@pytest.mark.parametrize("v", [(1.0, 0.0), (0.3, -0.8)])
def test_linear_fields_are_eigenfields_on_circle(v):
    chk = stability.linear_eigenfield_check(stability.circle_mesh(256), v)
    assert chk.residual <= 1e-3


def test_linear_fields_on_tripod_satisfy_junction_condition():
    chk = stability.linear_eigenfield_check(stability.tripod_mesh(100), (0.6, 0.8))
    assert chk.residual <= 1e-10
    assert chk.junction_sum <= 1e-12


def test_eigenfield_check_needs_stationary_network():
    with pytest.raises(PreconditionViolation):
        stability.linear_eigenfield_check(stability.curved_junction_mesh(), (1.0, 0.0))


def test_tripod_tone_and_stability():
    mesh = stability.tripod_mesh(400)
    free = stability.fundamental_tone(mesh)
    assert free.tone == pytest.approx(1.0, abs=5e-2)
    cons = stability.fundamental_tone(mesh, constrained=True)
    assert -cons.tone >= -1e-3


def test_tripod_junction_terms_vanish():
    mesh = stability.tripod_mesh(50)
    np.testing.assert_allclose(stability.junction_q(mesh, mesh.junctions[0]), 0.0, atol=1e-12)


def test_curved_junction_q():
    k = (0.3, -0.2, 0.1)
    mesh = stability.curved_junction_mesh(k, n=400, length=1.0)
    q = stability.junction_q(mesh, mesh.junctions[0])
    # edges (1,2), (2,3), (3,1): q_12 uses kappa_32 + kappa_31 = H_23 - H_31
    expected = [(k[1] - k[2]) / math.sqrt(3), (k[2] - k[0]) / math.sqrt(3), (k[0] - k[1]) / math.sqrt(3)]
    np.testing.assert_allclose(q, expected, atol=1e-4)


@given(st.integers(0, 2**31 - 1))
def test_q_symmetric_on_admissible_fields(seed):
    rng = np.random.default_rng(seed)
    for mesh in (stability.tripod_mesh(60), stability.curved_junction_mesh(n=40)):
        asm = stability.assemble(mesh)
        P = stability.admissible_basis(mesh)
        F, G = (P @ rng.standard_normal((P.shape[1], 2))).T
        assert abs(asm.Q(F, G) - asm.Q(G, F)) <= 1e-12 * max(1.0, abs(asm.Q(F, G)))


@given(st.integers(0, 2**31 - 1))
def test_admissible_fields_meet_boundary_conditions(seed):
    mesh = stability.curved_junction_mesh(n=30)
    P = stability.admissible_basis(mesh)
    F = stability.DiscreteField(mesh, P @ np.random.default_rng(seed).standard_normal(P.shape[1]))
    assert np.max(np.abs(F.junction_sums())) <= 1e-12
    for e in range(3):
        assert F.on_edge(e)[-1] == 0.0


def test_constrained_fields_preserve_volume():
    mesh = stability.tripod_mesh(80)
    rep = stability.fundamental_tone(mesh, constrained=True)
    V = stability.volume_rows(mesh)
    np.testing.assert_allclose(V @ rep.argmax_field.values, 0.0, atol=1e-10)


def test_eigenfields_are_mass_normalized():
    mesh = stability.circle_mesh(64)
    w, U = stability.eigenfields(mesh, k=3)
    M = stability.assemble(mesh).M
    np.testing.assert_allclose((U * M[:, None]).T @ U, np.eye(3), atol=1e-10)


def test_apply_l_marks_open_ends_and_rejects_tiny_meshes():
    mesh = stability.straight_line_mesh(41)
    out = stability.apply_L(mesh, np.zeros(41)).values
    assert np.isnan(out[0]) and np.isnan(out[-1]) and np.all(np.isfinite(out[1:-1]))
    with pytest.raises(InvalidMesh):
        stability.apply_L(stability.straight_line_mesh(5), np.zeros(5))


def test_mesh_validation():
    with pytest.raises(InvalidMesh):
        stability.MeshEdge(np.zeros((3, 2)), (1, 2), np.tile([0.0, 1.0], (3, 1)), np.zeros(3))
    edge = stability.straight_line_mesh(10).edges[0]
    with pytest.raises(InvalidMesh):
        stability.CurveNetworkMesh((edge,), (((0, 0), (0, 1), (0, 0)),))


def test_mesh_json_roundtrip_and_field_csv():
    mesh = stability.curved_junction_mesh(n=12)
    back = stability.CurveNetworkMesh.from_json(mesh.to_json())
    np.testing.assert_array_equal(back.positions(), mesh.positions())
    assert back.junctions == mesh.junctions
    csv = stability.DiscreteField(mesh, np.arange(mesh.n_nodes, dtype=float)).to_csv()
    assert csv.splitlines()[0] == "x,y,edge_label,value"
    assert len(csv.splitlines()) == mesh.n_nodes + 1


def test_stationarity_residual_detects_curved_edges():
    assert stability.stationarity_residual(stability.tripod_mesh(50))[0] < 1e-12
    assert stability.stationarity_residual(stability.circle_mesh(128))[0] < 1e-10
    assert stability.stationarity_residual(stability.curved_junction_mesh())[0] > 1e-2


def _quotient(mesh, F):
    asm = stability.assemble(mesh)
    return asm.Q(F, F) / asm.inner(F, F)


def test_quadratic_form_examples():
    line = stability.straight_line_mesh(801)
    F = np.ones(line.n_nodes)
    F[[0, -1]] = 0.0
    assert _quotient(line, F) == pytest.approx(-1.0, abs=1e-6)
    tri = stability.tripod_mesh(400)
    P = stability.admissible_basis(tri)
    c = 0.7
    # values (c, c, -2c) measured along the cyclic orientation of each edge
    signs = tri.junction_signs(tri.junctions[0])
    F = np.concatenate([np.full(400, s * v) for s, v in zip(signs, (c, c, -2 * c))])
    for e in range(3):
        F[tri.node_index(e, 1)] = 0.0
    assert np.max(np.abs(stability.DiscreteField(tri, F).junction_sums())) < 1e-15
    # F lies in the admissible span
    coef = np.linalg.lstsq(P, F, rcond=None)[0]
    np.testing.assert_allclose(P @ coef, F, atol=1e-12)
    assert _quotient(tri, F) == pytest.approx(-1.0, abs=1e-6)
    circ = stability.circle_mesh(256)
    assert _quotient(circ, np.ones(256)) == pytest.approx(-2.0, abs=1e-4)


def test_operator_examples():
    circ = stability.circle_mesh(256)
    th = 2 * np.pi * np.arange(256) / 256
    np.testing.assert_allclose(stability.apply_L(circ, np.cos(th)).values, np.cos(th), atol=1e-3)
    np.testing.assert_allclose(stability.apply_L(circ, np.ones(256)).values, 2.0, atol=1e-10)
    line = stability.straight_line_mesh(101)
    out = stability.apply_L(line, np.ones(101)).values[1:-1]
    np.testing.assert_allclose(out, 1.0, atol=1e-12)


def test_spectrum_examples():
    rep = stability.fundamental_tone(stability.circle_mesh(256))
    assert rep.tone == pytest.approx(2.0, abs=1e-2)
    tri = stability.fundamental_tone(stability.tripod_mesh(400))
    assert all(tri.sign_constant)


def test_eigenfield_examples():
    tri = stability.tripod_mesh(400)
    assert stability.linear_eigenfield_check(tri, (1.0, 0.0)).residual <= 1e-8
    assert stability.linear_eigenfield_check(tri, (0.0, 1.0)).junction_sum <= 1e-15
    assert stability.linear_eigenfield_check(stability.circle_mesh(256), (1.0, 0.0)).residual <= 1e-3
