"""Second-variation operator and quadratic form on planar curve networks.

A network is a list of meshed edges. Each edge carries one scalar field
``f_ij`` (the normal speed measured along ``N_ij``, pointing from set ``i``
into set ``j``). The weighted form

    Q(F, G) = sum_ij int (f' g' - (|A|^2 + 1) f g) gamma_1 ds + junction terms

is discretized with piecewise-linear elements, trapezoid segment weights and
a lumped mass matrix. Admissible fields satisfy ``f_ij + f_jk + f_ki = 0`` at
every triple junction and vanish at truncation (Dirichlet) ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _io
from ._normal import INV_SQRT2PI, TRUNCATION_RADIUS
from .errors import InvalidArgument, InvalidMesh, NumericFailure, PreconditionViolation
from .geometry import circumcircle_curvature

END_KINDS = ("junction", "dirichlet", "free", "periodic")
MIN_NODES = 8


def gaussian_weight_1(x):
    """``gamma_1`` evaluated at points of R^2 (rows)."""
    x = np.asarray(x, dtype=float)
    return INV_SQRT2PI * np.exp(-0.5 * np.sum(x * x, axis=-1))


@dataclass(frozen=True)
class MeshEdge:
    """One meshed interface curve.

    ``normals`` are unit normals ``N_ij`` per node; ``curvature2`` is
    ``|A|^2`` per node. For a periodic edge the last node is *not* a repeat
    of the first.
    """

    positions: np.ndarray = field(repr=False)
    labels: tuple
    normals: np.ndarray = field(repr=False)
    curvature2: np.ndarray = field(repr=False)
    start: str = "dirichlet"
    end: str = "dirichlet"

    def __post_init__(self):
        P = np.asarray(self.positions, dtype=float)
        N = np.asarray(self.normals, dtype=float)
        A2 = np.asarray(self.curvature2, dtype=float).reshape(-1)
        if P.ndim != 2 or P.shape[1] != 2 or P.shape[0] < 2:
            raise InvalidMesh("edge positions must be an (n, 2) array with n >= 2")
        if N.shape != P.shape or A2.shape != (P.shape[0],):
            raise InvalidMesh("normals/curvature must match the node count")
        if not np.allclose(np.linalg.norm(N, axis=1), 1.0, atol=1e-9):
            raise InvalidMesh("normals must be unit vectors")
        if np.any(A2 < 0):
            raise InvalidMesh("|A|^2 must be non-negative")
        i, j = self.labels
        if i == j:
            raise InvalidMesh("edge labels must differ")
        if self.start not in END_KINDS or self.end not in END_KINDS:
            raise InvalidMesh("unknown end kind")
        if (self.start == "periodic") != (self.end == "periodic"):
            raise InvalidMesh("periodic edges must be periodic at both ends")
        if np.any(self.segment_lengths() <= 0):
            raise InvalidMesh("node spacing must be positive")
        for name, arr in (("positions", P), ("normals", N), ("curvature2", A2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "labels", (int(i), int(j)))

    @property
    def periodic(self):
        return self.start == "periodic"

    @property
    def n(self):
        return self.positions.shape[0]

    def segment_lengths(self):
        P = np.asarray(self.positions, dtype=float)
        Q = np.roll(P, -1, axis=0) if self.start == "periodic" else P[1:]
        Pp = P if self.start == "periodic" else P[:-1]
        return np.linalg.norm(Q - Pp, axis=1)

    def arclength(self):
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths())])[: self.n]

    def weights(self):
        return gaussian_weight_1(self.positions)

    def to_dict(self):
        return {
            "positions": self.positions.tolist(),
            "labels": list(self.labels),
            "normals": self.normals.tolist(),
            "curvature2": self.curvature2.tolist(),
            "start": self.start,
            "end": self.end,
        }


@dataclass(frozen=True)
class CurveNetworkMesh:
    """Edges plus triple junctions; a junction is three ``(edge, end)`` pairs, end in {0, 1}."""

    edges: tuple
    junctions: tuple = ()

    def __post_init__(self):
        edges = tuple(self.edges)
        junctions = tuple(tuple((int(e), int(s)) for e, s in j) for j in self.junctions)
        used = set()
        for jn in junctions:
            if len(jn) != 3:
                raise InvalidMesh("a junction joins exactly three edge ends")
            pairs = []
            for e, s in jn:
                if not 0 <= e < len(edges) or s not in (0, 1):
                    raise InvalidMesh(f"bad junction member {(e, s)}")
                if (e, s) in used:
                    raise InvalidMesh(f"edge end {(e, s)} used by two junctions")
                used.add((e, s))
                kind = edges[e].start if s == 0 else edges[e].end
                if kind != "junction":
                    raise InvalidMesh(f"edge end {(e, s)} is not marked as a junction")
                pairs.append(frozenset(edges[e].labels))
            labels = set().union(*pairs)
            if len(labels) != 3 or len(set(pairs)) != 3:
                raise InvalidMesh("junction edges must carry label pairs (i,j),(j,k),(k,i)")
        for e, edge in enumerate(edges):
            for s, kind in ((0, edge.start), (1, edge.end)):
                if kind == "junction" and (e, s) not in used:
                    raise InvalidMesh(f"edge end {(e, s)} marked junction but unattached")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "junctions", junctions)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum([e.n for e in self.edges])])

    @property
    def n_nodes(self):
        return int(self.offsets[-1])

    def node_index(self, e, s):
        off = self.offsets
        return int(off[e] if s == 0 else off[e + 1] - 1)

    def junction_signs(self, jn):
        """Orientation signs making ``sum sign * f`` the cyclic sum ``f_ij + f_jk + f_ki``."""
        e0 = jn[0][0]
        i, j = self.edges[e0].labels
        (k,) = set().union(*(self.edges[e].labels for e, _ in jn)) - {i, j}
        cycle = {(i, j), (j, k), (k, i)}
        return [1.0 if self.edges[e].labels in cycle else -1.0 for e, _ in jn]

    def positions(self):
        return np.vstack([e.positions for e in self.edges])

    def normals(self):
        return np.vstack([e.normals for e in self.edges])

    def to_dict(self):
        return {
            "edges": [e.to_dict() for e in self.edges],
            "junctions": [[list(m) for m in j] for j in self.junctions],
        }

    def to_json(self):
        return _io.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        edges = [
            MeshEdge(
                np.array(e["positions"]), tuple(e["labels"]), np.array(e["normals"]),
                np.array(e["curvature2"]), e["start"], e["end"],
            )
            for e in d["edges"]
        ]
        return cls(tuple(edges), tuple(tuple(map(tuple, j)) for j in d["junctions"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(_io.loads(text))


@dataclass(frozen=True)
class DiscreteField:
    mesh: CurveNetworkMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.mesh.n_nodes:
            raise InvalidArgument(f"field needs {self.mesh.n_nodes} values, got {v.size}")
        object.__setattr__(self, "values", v)

    def on_edge(self, e):
        off = self.mesh.offsets
        return self.values[off[e]: off[e + 1]]

    def junction_sums(self):
        out = []
        for jn in self.mesh.junctions:
            signs = self.mesh.junction_signs(jn)
            out.append(sum(s * self.values[self.mesh.node_index(e, end)] for s, (e, end) in zip(signs, jn)))
        return np.array(out)

    def to_csv(self):
        rows = []
        for e, edge in enumerate(self.mesh.edges):
            label = f"{edge.labels[0]}-{edge.labels[1]}"
            for p, v in zip(edge.positions, self.on_edge(e)):
                rows.append([p[0], p[1], label, v])
        return _io.write_csv(rows, ["x", "y", "edge_label", "value"])


# --------------------------------------------------------------------------
# constructors


def _polyline_curvature2(P, periodic):
    k = np.zeros(P.shape[0])
    if periodic:
        kv = circumcircle_curvature(np.roll(P, 1, axis=0), P, np.roll(P, -1, axis=0))
        return np.sum(kv * kv, axis=1)
    if P.shape[0] >= 3:
        kv = circumcircle_curvature(P[:-2], P[1:-1], P[2:])
        k[1:-1] = np.sum(kv * kv, axis=1)
        k[0], k[-1] = k[1], k[-2]
    return k


def _polyline_normals(P, periodic):
    # right normal of the tangent; Omega_i lies on the left of the chain
    if periodic:
        T = np.roll(P, -1, axis=0) - np.roll(P, 1, axis=0)
    else:
        T = np.gradient(P, axis=0)
    T /= np.linalg.norm(T, axis=1, keepdims=True)
    return np.stack([T[:, 1], -T[:, 0]], axis=1)


def edge_from_polyline(P, labels, start="dirichlet", end="dirichlet", curvature2=None):
    """Edge with normals/curvature estimated from a polyline (``Omega_i`` on the left)."""
    P = np.asarray(P, dtype=float)
    periodic = start == "periodic"
    N = _polyline_normals(P, periodic)
    A2 = _polyline_curvature2(P, periodic) if curvature2 is None else curvature2
    return MeshEdge(P, tuple(labels), N, A2, start, end)


def straight_line_mesh(n=801, radius=TRUNCATION_RADIUS, direction=(1.0, 0.0)):
    """Full line through the origin, truncated at ``radius`` with Dirichlet ends."""
    d = np.asarray(direction, dtype=float)
    d /= np.linalg.norm(d)
    s = np.linspace(-radius, radius, n)
    P = s[:, None] * d
    N = np.tile([d[1], -d[0]], (n, 1))
    return CurveNetworkMesh((MeshEdge(P, (1, 2), N, np.zeros(n)),))


def tripod_mesh(n_per_ray=400, radius=TRUNCATION_RADIUS):
    """Three rays from the origin along ``-z_k`` (the m=3 cone partition)."""
    from .geometry import SimplicialPartition, interfaces_of

    p = SimplicialPartition.from_shift(np.zeros(2), 3)
    edges = []
    s = np.linspace(0.0, radius, n_per_ray)
    for piece in interfaces_of(p):
        P = s[:, None] * piece.frame[0]
        N = np.tile(piece.normal, (n_per_ray, 1))
        edges.append(MeshEdge(P, piece.labels, N, np.zeros(n_per_ray), "junction", "dirichlet"))
    return CurveNetworkMesh(tuple(edges), (((0, 0), (1, 0), (2, 0)),))


def circle_mesh(n=256, radius=1.0):
    """Closed circle; set 1 inside, normal pointing outward."""
    t = 2.0 * math.pi * np.arange(n) / n
    U = np.stack([np.cos(t), np.sin(t)], axis=1)
    edge = MeshEdge(radius * U, (1, 2), U, np.full(n, 1.0 / radius**2), "periodic", "periodic")
    return CurveNetworkMesh((edge,))


def curved_junction_mesh(curvatures=(0.3, -0.2, 0.1), n=64, length=2.0):
    """Three circular arcs leaving the origin at 120 degrees (junction test geometry).

    ``curvatures[e]`` is the signed curvature of edge ``e`` relative to its
    own normal ``N_ij``; arcs end in Dirichlet nodes.
    """
    edges = []
    labels = [(1, 2), (2, 3), (3, 1)]
    for e, (kappa, lab) in enumerate(zip(curvatures, labels)):
        ang = math.pi / 2.0 + 2.0 * math.pi * e / 3.0
        T0 = np.array([math.cos(ang), math.sin(ang)])
        N0 = np.array([T0[1], -T0[0]])
        s = np.linspace(0.0, length, n)
        if abs(kappa) < 1e-14:
            P = s[:, None] * T0
        else:
            # curvature vector equals -kappa * N, so H_ij = kappa
            th = kappa * s
            P = (np.sin(th) / kappa)[:, None] * T0 - ((1.0 - np.cos(th)) / kappa)[:, None] * N0
        edges.append(edge_from_polyline(P, lab, "junction", "dirichlet", np.full(n, kappa**2)))
    return CurveNetworkMesh(tuple(edges), (((0, 0), (1, 0), (2, 0)),))


# --------------------------------------------------------------------------
# assembly


def edge_mean_curvature(edge: MeshEdge, idx):
    """Signed ``H = -<curvature vector, N>`` at node ``idx`` (end nodes use their neighbour triple)."""
    P = edge.positions
    n = edge.n
    if edge.periodic:
        a, b, c = P[(idx - 1) % n], P[idx], P[(idx + 1) % n]
    else:
        k = min(max(idx, 1), n - 2)
        a, b, c = P[k - 1], P[k], P[k + 1]
    kv = circumcircle_curvature(a, b, c)
    return -float(kv @ edge.normals[idx])


def junction_q(mesh: CurveNetworkMesh, jn):
    """``q`` for each member of a junction: ``q_ij = (kappa_kj + kappa_ki) / sqrt(3)``.

    ``kappa_ab`` is the conormal curvature ``-H_ab`` of edge ``ab`` at the junction.
    """
    kappa = {}
    for e, end in jn:
        edge = mesh.edges[e]
        idx = 0 if end == 0 else edge.n - 1
        h = edge_mean_curvature(edge, idx)
        i, j = edge.labels
        kappa[(i, j)] = -h
        kappa[(j, i)] = h
    out = []
    for e, _ in jn:
        i, j = mesh.edges[e].labels
        (k,) = {a for pair in kappa for a in pair} - {i, j}
        out.append((kappa[(k, j)] + kappa[(k, i)]) / math.sqrt(3.0))
    return out


@dataclass(frozen=True)
class Assembly:
    S: np.ndarray
    M: np.ndarray  # lumped mass diagonal

    def Q(self, F, G):
        return float(np.asarray(F) @ self.S @ np.asarray(G))

    def inner(self, F, G):
        return float(np.sum(self.M * np.asarray(F) * np.asarray(G)))


def assemble(mesh: CurveNetworkMesh) -> Assembly:
    """Matrices with ``Q(F, G) = F^T S G`` and ``<F, G> = F^T diag(M) G``."""
    N = mesh.n_nodes
    S = np.zeros((N, N))
    M = np.zeros(N)
    for e, edge in enumerate(mesh.edges):
        off = int(mesh.offsets[e])
        n = edge.n
        g = edge.weights()
        h = edge.segment_lengths()
        left = np.arange(n) if edge.periodic else np.arange(n - 1)
        right = (left + 1) % n
        w = 0.5 * (g[left] + g[right]) / h
        il, ir = off + left, off + right
        np.add.at(S, (il, il), w)
        np.add.at(S, (ir, ir), w)
        np.add.at(S, (il, ir), -w)
        np.add.at(S, (ir, il), -w)
        mass = np.zeros(n)
        np.add.at(mass, left, 0.5 * h)
        np.add.at(mass, right, 0.5 * h)
        mass *= g
        M[off: off + n] = mass
        S[off + np.arange(n), off + np.arange(n)] -= mass * (edge.curvature2 + 1.0)
    for jn in mesh.junctions:
        for (e, end), q in zip(jn, junction_q(mesh, jn)):
            idx = mesh.node_index(e, end)
            S[idx, idx] += q * float(gaussian_weight_1(mesh.edges[e].positions[0 if end == 0 else -1]))
    return Assembly(S, M)


def admissible_basis(mesh: CurveNetworkMesh) -> np.ndarray:
    """Columns span fields vanishing at Dirichlet ends with zero cyclic junction sums.

    The first member of each junction is eliminated in favour of the other
    two, so every junction keeps a rank-2 block of free values.
    """
    N = mesh.n_nodes
    dirichlet = set()
    for e, edge in enumerate(mesh.edges):
        if edge.start == "dirichlet":
            dirichlet.add(mesh.node_index(e, 0))
        if edge.end == "dirichlet":
            dirichlet.add(mesh.node_index(e, 1))
    dependent = {}
    for jn in mesh.junctions:
        signs = mesh.junction_signs(jn)
        idx = [mesh.node_index(e, end) for e, end in jn]
        dependent[idx[0]] = [(idx[1], -signs[1] * signs[0]), (idx[2], -signs[2] * signs[0])]
    free = [k for k in range(N) if k not in dirichlet and k not in dependent]
    col = {k: c for c, k in enumerate(free)}
    P = np.zeros((N, len(free)))
    for k in free:
        P[k, col[k]] = 1.0
    for k, deps in dependent.items():
        for d, s in deps:
            if d in col:
                P[k, col[d]] = s
    return P


def volume_rows(mesh: CurveNetworkMesh, labels=None):
    """Row ``i``: discrete ``sum_j int_{Sigma_ij} f_ij gamma`` (volume change of set i)."""
    asm_mass = assemble_mass(mesh)
    all_labels = sorted({l for e in mesh.edges for l in e.labels})
    labels = all_labels if labels is None else labels
    V = np.zeros((len(labels), mesh.n_nodes))
    for r, lab in enumerate(labels):
        for e, edge in enumerate(mesh.edges):
            sl = slice(mesh.offsets[e], mesh.offsets[e + 1])
            if edge.labels[0] == lab:
                V[r, sl] = asm_mass[sl]
            elif edge.labels[1] == lab:
                V[r, sl] = -asm_mass[sl]
    return V


def assemble_mass(mesh):
    M = np.zeros(mesh.n_nodes)
    for e, edge in enumerate(mesh.edges):
        n = edge.n
        h = edge.segment_lengths()
        left = np.arange(n) if edge.periodic else np.arange(n - 1)
        mass = np.zeros(n)
        np.add.at(mass, left, 0.5 * h)
        np.add.at(mass, (left + 1) % n, 0.5 * h)
        M[mesh.offsets[e]: mesh.offsets[e + 1]] = mass * edge.weights()
    return M


# --------------------------------------------------------------------------
# operator L and spectra


def apply_L(mesh: CurveNetworkMesh, F) -> DiscreteField:
    """``L f = f'' - <x, tau> f' + (|A|^2 + 1) f`` by nonuniform central differences.

    Values are returned at interior nodes (every node of a periodic edge);
    end nodes of open edges are NaN.
    """
    F = np.asarray(F.values if isinstance(F, DiscreteField) else F, dtype=float)
    out = np.full(mesh.n_nodes, np.nan)
    for e, edge in enumerate(mesh.edges):
        n = edge.n
        if n < MIN_NODES:
            raise InvalidMesh(f"edge {e} has {n} nodes; L needs at least {MIN_NODES}")
        off = int(mesh.offsets[e])
        f = F[off: off + n]
        P = edge.positions
        if edge.periodic:
            idx = np.arange(n)
        else:
            idx = np.arange(1, n - 1)
        im, ip = (idx - 1) % n, (idx + 1) % n
        hm = np.linalg.norm(P[idx] - P[im], axis=1)
        hp = np.linalg.norm(P[ip] - P[idx], axis=1)
        d2 = 2.0 * ((f[ip] - f[idx]) / hp - (f[idx] - f[im]) / hm) / (hp + hm)
        d1 = (hm**2 * (f[ip] - f[idx]) + hp**2 * (f[idx] - f[im])) / (hp * hm * (hp + hm))
        tau = (P[ip] - P[im])
        tau /= np.linalg.norm(tau, axis=1, keepdims=True)
        xt = np.sum(P[idx] * tau, axis=1)
        out[off + idx] = d2 - xt * d1 + (edge.curvature2[idx] + 1.0) * f[idx]
    return DiscreteField(mesh, out)


@dataclass(frozen=True)
class SpectralReport:
    tone: float
    top_eigenvalues: np.ndarray
    argmax_field: DiscreteField = field(repr=False)
    constrained: bool
    sign_constant: tuple

    def to_dict(self):
        return {
            "tone": self.tone,
            "top_eigenvalues": self.top_eigenvalues.tolist(),
            "constrained": self.constrained,
            "sign_constant_per_edge": list(self.sign_constant),
        }


def _sign_constant(field_, rel=1e-8):
    out = []
    for e in range(len(field_.mesh.edges)):
        v = field_.on_edge(e)
        big = v[np.abs(v) > rel * max(float(np.max(np.abs(field_.values))), 1e-300)]
        out.append(bool(big.size == 0 or np.all(big > 0) or np.all(big < 0)))
    return tuple(out)


def fundamental_tone(mesh: CurveNetworkMesh, constrained=False, n_eigs=5) -> SpectralReport:
    """Largest eigenvalues of ``-Q`` relative to the weighted mass on admissible fields.

    With ``constrained=True`` fields must also preserve every set volume to
    first order. The tone is the largest eigenvalue; its eigenfield is
    returned normalized to unit weighted mass.
    """
    asm = assemble(mesh)
    P = admissible_basis(mesh)
    if constrained:
        V = volume_rows(mesh) @ P
        Z = linalg.null_space(V, rcond=1e-10)
        P = P @ Z
    if P.shape[1] == 0:
        raise InvalidMesh("no admissible fields on this mesh")
    A = -(P.T @ asm.S @ P)
    B = P.T @ (asm.M[:, None] * P)
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    try:
        w, U = linalg.eigh(A, B)
    except linalg.LinAlgError as exc:
        raise NumericFailure(f"generalized eigensolve failed: {exc}") from None
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    top = P @ U[:, 0]
    top /= math.sqrt(float(np.sum(asm.M * top * top)))
    if np.sum(asm.M * top) < 0:
        top = -top
    fld = DiscreteField(mesh, top)
    return SpectralReport(float(w[0]), w[:n_eigs].copy(), fld, bool(constrained), _sign_constant(fld))


def eigenfields(mesh: CurveNetworkMesh, constrained=False, k=5):
    """Top ``k`` eigenvalues and mass-normalized eigenfields (columns)."""
    asm = assemble(mesh)
    P = admissible_basis(mesh)
    if constrained:
        P = P @ linalg.null_space(volume_rows(mesh) @ P, rcond=1e-10)
    A = -(P.T @ asm.S @ P)
    B = P.T @ (asm.M[:, None] * P)
    w, U = linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
    order = np.argsort(w)[::-1][:k]
    return w[order], P @ U[:, order]


def stationarity_residual(mesh: CurveNetworkMesh):
    """Max over edges of ``|H - <x, N> - lambda_edge|`` at interior nodes (edge-mean lambda)."""
    worst = 0.0
    lam = []
    for edge in mesh.edges:
        idx = range(edge.n) if edge.periodic else range(1, edge.n - 1)
        r = np.array([edge_mean_curvature(edge, k) - float(edge.positions[k] @ edge.normals[k]) for k in idx])
        lam.append(float(np.mean(r)) if r.size else 0.0)
        if r.size:
            worst = max(worst, float(np.max(np.abs(r - r.mean()))))
    return worst, lam


@dataclass(frozen=True)
class EigenfieldCheck:
    v: np.ndarray
    residual: float
    stationarity: float
    junction_sum: float

    def to_dict(self):
        return {
            "v": self.v.tolist(),
            "residual": self.residual,
            "stationarity_residual": self.stationarity,
            "junction_sum": self.junction_sum,
        }


def linear_eigenfield_check(mesh: CurveNetworkMesh, v, stationarity_tol=1e-4) -> EigenfieldCheck:
    """Apply L to ``f_ij = <v, N_ij>`` and report ``max |L F - F|`` over interior nodes.

    Raises :class:`PreconditionViolation` when the network is not stationary
    (curvature not of the form ``<x, N> + const`` on some edge).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (2,):
        raise InvalidArgument("v must be a vector in R^2")
    stat, _ = stationarity_residual(mesh)
    if stat > stationarity_tol:
        raise PreconditionViolation(
            f"network is not stationary (residual {stat:.3e})", residual=stat
        )
    F = DiscreteField(mesh, mesh.normals() @ v)
    LF = apply_L(mesh, F)
    mask = np.isfinite(LF.values)
    res = float(np.max(np.abs(LF.values[mask] - F.values[mask])))
    js = F.junction_sums()
    return EigenfieldCheck(v, res, stat, float(np.max(np.abs(js))) if js.size else 0.0)
