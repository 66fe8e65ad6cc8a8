"""Direct variational search for low-cost partitions.

Two optimizers live here. ``optimize_1d`` enumerates labeled interval
partitions of the line and optimizes their breakpoints under exact volume
constraints. ``optimize_2d`` runs a volume-constrained descent of the total
weighted length of a polygonal curve network in the plane, with fixed
topology; unbounded edges are cut at the truncation circle and their outer
endpoints slide on it.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _io
from . import _normal as nm
from ._validation import check_volume_vector
from .errors import InvalidArgument, NumericFailure, TopologyEvent
from .geometry import SimplicialPartition, circumcircle_curvature, interfaces_of
from .measure import segment_flux, segment_frame
from .simplicial import MultiplierVector, fit_multipliers, solve_shift

log = logging.getLogger(__name__)

MAX_BREAKS = 6


# --------------------------------------------------------------------------
# one dimension


@dataclass(frozen=True)
class Partition1D:
    """Labeled partition of R: ``labels[k]`` owns ``(t_k, t_{k+1})`` with ``t_0 = -inf``."""

    breakpoints: tuple
    labels: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in self.breakpoints)
        lab = tuple(int(x) for x in self.labels)
        if len(lab) != len(t) + 1:
            raise InvalidArgument("need one more label than breakpoints")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise InvalidArgument("breakpoints must be strictly increasing")
        if any(x == y for x, y in zip(lab, lab[1:])):
            raise InvalidArgument("adjacent intervals must carry different labels")
        object.__setattr__(self, "breakpoints", t)
        object.__setattr__(self, "labels", lab)

    @property
    def m(self):
        return max(self.labels)

    def volumes(self, m=None):
        m = self.m if m is None else m
        edges = np.array([-np.inf, *self.breakpoints, np.inf])
        pieces = nm.phi_diff(edges[:-1], edges[1:])
        out = np.zeros(m)
        np.add.at(out, np.array(self.labels) - 1, pieces)
        return out

    def cost(self):
        t = np.asarray(self.breakpoints)
        return float(np.sum(np.exp(-0.5 * t * t)))

    def to_dict(self):
        return {"breakpoints": list(self.breakpoints), "labels": list(self.labels)}


def multipliers_1d(part: Partition1D, tol=1e-10) -> MultiplierVector:
    """Multipliers of a flat line partition: ``lambda_(left,right) = -t`` at each breakpoint."""
    pairwise = {}
    for t, (l, r) in zip(part.breakpoints, zip(part.labels, part.labels[1:])):
        key, val = ((l, r), -t) if l < r else ((r, l), t)
        if key in pairwise and abs(pairwise[key] - val) > tol:
            raise InvalidArgument(f"pair {key} appears with different multipliers")
        pairwise[key] = val
    return fit_multipliers(pairwise, part.m, tol)


@dataclass
class Result1D:
    best: Partition1D
    cost: float
    candidates: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def to_dict(self):
        return {
            "best": self.best.to_dict(),
            "cost": self.cost,
            "candidates": self.candidates,
            "log": self.log,
        }


def _label_sequences(m, max_breaks):
    for k in range(1, max_breaks + 1):
        for first in range(1, m + 1):
            for rest in itertools.product(range(1, m), repeat=k):
                seq = [first]
                for r in rest:
                    # r-th label different from the previous one
                    seq.append(r if r < seq[-1] else r + 1)
                yield tuple(seq)


def _inner_descent(labels, a, rng, max_iter=200):
    """Minimize the concave cost over piece masses with fixed label totals.

    Returns ``(piece_masses, status)``; ``status`` is ``"interior"`` when no
    label has spare pieces and ``"degenerate"`` once a piece collapses.
    """
    labels = np.asarray(labels)
    m = a.size
    v = np.empty(labels.size)
    for i in range(1, m + 1):
        mask = labels == i
        w = rng.dirichlet(np.full(mask.sum(), 5.0)) if mask.sum() > 1 else np.ones(1)
        v[mask] = a[i - 1] * w
    if all(np.sum(labels == i) == 1 for i in range(1, m + 1)):
        return v, "interior"
    for _ in range(max_iter):
        u = np.cumsum(v)[:-1]
        t = nm.norm_ppf(u)
        du = -nm.SQRT2PI * t
        # d cost / d v_p = sum of du over breakpoints at or after p
        gv = np.concatenate([np.cumsum(du[::-1])[::-1], [0.0]])
        d = -gv.copy()
        for i in range(1, m + 1):
            mask = labels == i
            d[mask] -= d[mask].mean()
        if np.max(np.abs(d)) < 1e-14:
            return v, "stationary"
        # the cost is concave, so it keeps decreasing until a piece empties
        neg = d < 0
        alpha = float(np.min(-v[neg] / d[neg]))
        v = v + alpha * d
        v[np.argmin(v)] = 0.0
        return v, "degenerate"
    return v, "stationary"


def optimize_1d(m, a, max_breaks=4, seed=0) -> Result1D:
    """Best labeled interval partition of R with Gaussian volumes ``a``.

    Every label sequence with up to ``max_breaks`` breakpoints is tried.
    Sequences missing a label are infeasible and skipped. For the rest the
    breakpoints are optimized in the variables ``u_k = Phi(t_k)`` where the
    volume constraints are linear; the cost ``sum exp(-t_k^2/2)`` is concave
    there, so the optimum over a topology with spare pieces sits on a face
    where some piece collapses. Such topologies are logged as degenerate
    and reported with the cost at the collapse point.
    """
    a = check_volume_vector(a, m)
    if not 1 <= max_breaks <= MAX_BREAKS:
        raise InvalidArgument(f"max_breaks must lie in 1..{MAX_BREAKS}")
    if max_breaks < m - 1:
        raise InvalidArgument(f"{m} labels need at least {m - 1} breakpoints")
    rng = np.random.default_rng(seed)
    best, best_cost = None, math.inf
    cands, entries = [], []
    for seq in _label_sequences(m, max_breaks):
        if len(set(seq)) < m:
            entries.append({"labels": list(seq), "status": "infeasible"})
            log.debug("skip %s: label missing", seq)
            continue
        v, status = _inner_descent(seq, a, rng)
        u = np.cumsum(v)[:-1]
        t = nm.norm_ppf(u)
        c = float(np.sum(np.exp(-0.5 * t * t)))
        cands.append({"labels": list(seq), "cost": c, "status": status})
        if status == "degenerate":
            entries.append({"labels": list(seq), "status": "degenerate"})
            continue
        if c < best_cost - 1e-15:
            best, best_cost = Partition1D(tuple(t), seq), c
    return Result1D(best, best_cost, cands, entries)


# --------------------------------------------------------------------------
# polygonal networks


@dataclass(frozen=True)
class Chain:
    """Polyline through vertex indices; set ``labels[0]`` lies on its left."""

    nodes: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(k) for k in self.nodes))
        object.__setattr__(self, "labels", tuple(int(k) for k in self.labels))
        if len(self.nodes) < 2:
            raise InvalidArgument("a chain needs at least two vertices")
        if self.labels[0] == self.labels[1]:
            raise InvalidArgument("chain labels must differ")


class _Topology:
    """Index arrays derived from the chain structure (fixed during descent)."""

    def __init__(self, chains, n_vertices, radius, outer_label):
        self.chains = tuple(chains)
        self.radius = radius
        self.outer_label = outer_label
        sa, sb, left, right, owner = [], [], [], [], []
        uses = np.zeros(n_vertices, dtype=int)
        ends = {}
        interior = {}
        for c, ch in enumerate(self.chains):
            nodes = ch.nodes
            sa.extend(nodes[:-1])
            sb.extend(nodes[1:])
            left.extend([ch.labels[0]] * (len(nodes) - 1))
            right.extend([ch.labels[1]] * (len(nodes) - 1))
            owner.extend([c] * (len(nodes) - 1))
            for k in nodes[1:-1]:
                if k in interior or uses[k]:
                    raise InvalidArgument(f"vertex {k} appears inside two chains")
                interior[k] = c
                uses[k] += 2
            for end, k in ((0, nodes[0]), (1, nodes[-1])):
                if k in interior:
                    raise InvalidArgument(f"vertex {k} is both a chain end and interior")
                ends.setdefault(k, []).append((c, end))
                uses[k] += 1
        if np.any(uses == 0):
            raise InvalidArgument("every vertex must belong to a chain")
        self.seg_a = np.array(sa)
        self.seg_b = np.array(sb)
        self.seg_left = np.array(left)
        self.seg_right = np.array(right)
        self.seg_chain = np.array(owner)
        self.labels = sorted({l for ch in self.chains for l in ch.labels} | (
            {outer_label} if outer_label is not None else set()))
        if self.labels != list(range(1, len(self.labels) + 1)):
            raise InvalidArgument("labels must be 1..m")
        self.m = len(self.labels)
        self.interior = sorted(interior)
        self.junctions = {}
        self.endpoints = {}
        for k, members in ends.items():
            if len(members) == 3:
                pairs = [frozenset(self.chains[c].labels) for c, _ in members]
                if len(set(pairs)) != 3 or len(set().union(*pairs)) != 3:
                    raise InvalidArgument(f"junction {k} does not join a label cycle")
                self.junctions[k] = members
            elif len(members) == 1:
                self.endpoints[k] = members[0]
            else:
                raise InvalidArgument(f"vertex {k} has chain-end degree {len(members)}")
        # dof layout: interior (normal), junction (x, y), endpoint (angle)
        kinds, verts, comps = [], [], []
        for k in self.interior:
            kinds.append(0), verts.append(k), comps.append(0)
        for k in sorted(self.junctions):
            for comp in (0, 1):
                kinds.append(1), verts.append(k), comps.append(comp)
        for k in sorted(self.endpoints):
            kinds.append(2), verts.append(k), comps.append(0)
        self.dof_kind = np.array(kinds)
        self.dof_vertex = np.array(verts)
        self.dof_comp = np.array(comps)

    def ccw_label(self, k):
        c, end = self.endpoints[k]
        lab = self.chains[c].labels
        return lab[0] if end == 1 else lab[1]

    def cw_label(self, k):
        c, end = self.endpoints[k]
        lab = self.chains[c].labels
        return lab[1] if end == 1 else lab[0]


class PolygonalNetwork:
    """Polygonal curve network in the plane with labeled faces.

    Parameters
    ----------
    vertices : (n, 2) array
    chains : sequence of :class:`Chain` or ``(nodes, labels)`` pairs
    radius : truncation radius; degree-one vertices must lie on this circle
    outer_label : label of the region outside every chain when the network
        has no endpoints on the circle
    """

    def __init__(self, vertices, chains, radius=nm.TRUNCATION_RADIUS, outer_label=None,
                 _topology=None):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2:
            raise InvalidArgument("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(V)):
            raise InvalidArgument("vertices must be finite")
        if _topology is None:
            chains = [c if isinstance(c, Chain) else Chain(*c) for c in chains]
            for ch in chains:
                if max(ch.nodes) >= V.shape[0] or min(ch.nodes) < 0:
                    raise InvalidArgument("chain references a missing vertex")
            _topology = _Topology(chains, V.shape[0], float(radius), outer_label)
            for k in _topology.endpoints:
                if abs(np.linalg.norm(V[k]) - _topology.radius) > 1e-9:
                    raise InvalidArgument(f"endpoint {k} is not on the truncation circle")
            if not _topology.endpoints and outer_label is None:
                raise InvalidArgument("closed networks need an outer_label")
        self.vertices = V
        self.vertices.setflags(write=False)
        self.topo = _topology
        L = np.linalg.norm(V[self.topo.seg_b] - V[self.topo.seg_a], axis=1)
        if np.any(L <= 0):
            raise InvalidArgument("zero-length segment")

    # -- basic data -------------------------------------------------------

    @property
    def chains(self):
        return self.topo.chains

    @property
    def m(self):
        return self.topo.m

    @property
    def radius(self):
        return self.topo.radius

    def with_vertices(self, V):
        return PolygonalNetwork(V, self.chains, self.radius, self.topo.outer_label, _topology=self.topo)

    def chain_points(self, c):
        return self.vertices[list(self.chains[c].nodes)]

    def segment_lengths(self):
        return np.linalg.norm(self.vertices[self.topo.seg_b] - self.vertices[self.topo.seg_a], axis=1)

    def junction_vertices(self):
        return sorted(self.topo.junctions)

    # -- cost ---------------------------------------------------------------

    def segment_costs(self):
        _, _, p2, sa, sb = segment_frame(self.vertices[self.topo.seg_a], self.vertices[self.topo.seg_b])
        return np.exp(-0.5 * p2) * nm.phi_diff(sa, sb)

    def cost(self):
        return float(math.fsum(self.segment_costs()))

    def cost_gradient(self):
        """Gradient of the total weighted length with respect to every vertex, shape (n, 2)."""
        A = self.vertices[self.topo.seg_a]
        B = self.vertices[self.topo.seg_b]
        L, u, p2, sa, sb = segment_frame(A, B)
        p = A - sa[:, None] * u
        e = np.exp(-0.5 * p2)
        pa, pb = nm.norm_pdf(sa), nm.norm_pdf(sb)
        M0 = nm.phi_diff(sa, sb)
        M1 = pa - pb
        M2 = M0 + sa * pa - sb * pb
        E = e * M0
        tot = -e[:, None] * (p * M0[:, None] + u * M1[:, None])
        tau = -(e / L)[:, None] * (p * (M1 - sa * M0)[:, None] + u * (M2 - sa * M1)[:, None])
        ga = -u * (E / L)[:, None] + (tot - tau)
        gb = u * (E / L)[:, None] + tau
        G = np.zeros_like(self.vertices)
        np.add.at(G, self.topo.seg_a, ga)
        np.add.at(G, self.topo.seg_b, gb)
        return G

    # -- volumes ------------------------------------------------------------

    def _arc_masses(self):
        topo = self.topo
        scale = -math.expm1(-0.5 * topo.radius**2) / (2.0 * math.pi)
        out = np.zeros(topo.m)
        if not topo.endpoints:
            out[topo.outer_label - 1] += 2.0 * math.pi * scale
            return out
        ks = sorted(topo.endpoints, key=lambda k: math.atan2(self.vertices[k, 1], self.vertices[k, 0]))
        ang = np.array([math.atan2(self.vertices[k, 1], self.vertices[k, 0]) for k in ks])
        for q, k in enumerate(ks):
            nxt = ks[(q + 1) % len(ks)]
            lab = topo.ccw_label(k)
            if topo.cw_label(nxt) != lab:
                raise InvalidArgument("endpoint labels around the circle are inconsistent")
            dth = (ang[(q + 1) % len(ks)] - ang[q]) % (2.0 * math.pi)
            if len(ks) == 1:
                dth = 2.0 * math.pi
            out[lab - 1] += scale * dth
        return out

    def volumes(self):
        """Gaussian areas of the labeled faces inside the truncation disc."""
        topo = self.topo
        flux = segment_flux(self.vertices[topo.seg_a], self.vertices[topo.seg_b])
        out = self._arc_masses()
        np.add.at(out, topo.seg_left - 1, flux)
        np.add.at(out, topo.seg_right - 1, -flux)
        return out

    def volume_gradient(self):
        """d volume_i / d vertex, shape (m, n, 2); arc terms are not included."""
        topo = self.topo
        A = self.vertices[topo.seg_a]
        B = self.vertices[topo.seg_b]
        L, u, p2, sa, sb = segment_frame(A, B)
        e = nm.INV_SQRT2PI * np.exp(-0.5 * p2)
        M0 = nm.phi_diff(sa, sb)
        M1 = nm.norm_pdf(sa) - nm.norm_pdf(sb)
        wb = e * (M1 - sa * M0) / L
        wa = e * M0 - wb
        n_out = np.stack([u[:, 1], -u[:, 0]], axis=1)
        G = np.zeros((topo.m,) + self.vertices.shape)
        for sign, lab in ((1.0, topo.seg_left), (-1.0, topo.seg_right)):
            idx = lab - 1
            np.add.at(G, (idx, topo.seg_a), sign * wa[:, None] * n_out)
            np.add.at(G, (idx, topo.seg_b), sign * wb[:, None] * n_out)
        return G

    # -- degrees of freedom -------------------------------------------------

    def node_normals(self):
        """Unit right normals at interior vertices (averaged over adjacent segments)."""
        V = self.vertices
        N = np.zeros_like(V)
        d = V[self.topo.seg_b] - V[self.topo.seg_a]
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rn = np.stack([d[:, 1], -d[:, 0]], axis=1)
        np.add.at(N, self.topo.seg_a, rn)
        np.add.at(N, self.topo.seg_b, rn)
        nrm = np.linalg.norm(N, axis=1, keepdims=True)
        return N / np.where(nrm > 0, nrm, 1.0)

    def dof_directions(self):
        """Per-dof displacement direction of its vertex (per unit dof)."""
        topo = self.topo
        D = np.zeros((topo.dof_vertex.size, 2))
        N = self.node_normals()
        V = self.vertices
        for q, (kind, k, comp) in enumerate(zip(topo.dof_kind, topo.dof_vertex, topo.dof_comp)):
            if kind == 0:
                D[q] = N[k]
            elif kind == 1:
                D[q, comp] = 1.0
            else:
                D[q] = [-V[k, 1], V[k, 0]]  # d/d(angle) of R (cos, sin)
        return D

    def dof_metric(self):
        """Diagonal metric ``gamma_1(x_v) * (half adjacent length)``; angles carry R^2."""
        topo = self.topo
        ell = np.zeros(self.vertices.shape[0])
        L = self.segment_lengths()
        np.add.at(ell, topo.seg_a, 0.5 * L)
        np.add.at(ell, topo.seg_b, 0.5 * L)
        w = nm.INV_SQRT2PI * np.exp(-0.5 * np.sum(self.vertices**2, axis=1))
        Mv = np.maximum(w * ell, 1e-300)
        M = Mv[topo.dof_vertex].copy()
        M[topo.dof_kind == 2] *= topo.radius**2
        return M

    def displaced(self, delta):
        """Network after moving each dof by ``delta`` (endpoints rotate on the circle)."""
        topo = self.topo
        D = self.dof_directions()
        V = self.vertices.copy()
        lin = topo.dof_kind != 2
        np.add.at(V, topo.dof_vertex[lin], delta[lin, None] * D[lin])
        for q in np.flatnonzero(~lin):
            k = topo.dof_vertex[q]
            th = math.atan2(V[k, 1], V[k, 0]) + delta[q]
            V[k] = topo.radius * np.array([math.cos(th), math.sin(th)])
        return self.with_vertices(V)

    def dof_cost_gradient(self):
        G = self.cost_gradient()
        D = self.dof_directions()
        return np.sum(G[self.topo.dof_vertex] * D, axis=1)

    def dof_volume_jacobian(self):
        topo = self.topo
        G = self.volume_gradient()
        D = self.dof_directions()
        # sliding an endpoint trades arc flux for segment flux one-for-one;
        # only the swept sliver changes mass, which the local term captures
        return np.sum(G[:, topo.dof_vertex, :] * D[None], axis=2)

    # -- conversions ---------------------------------------------------------

    def to_dict(self):
        return {
            "vertices": self.vertices.tolist(),
            "chains": [{"nodes": list(c.nodes), "labels": list(c.labels)} for c in self.chains],
            "radius": self.radius,
            "outer_label": self.topo.outer_label,
        }

    def to_json(self):
        return _io.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        chains = [Chain(tuple(c["nodes"]), tuple(c["labels"])) for c in d["chains"]]
        return cls(np.array(d["vertices"]), chains, d.get("radius", nm.TRUNCATION_RADIUS),
                   d.get("outer_label"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(_io.loads(text))

    def plot_rows(self):
        rows = []
        for c, ch in enumerate(self.chains):
            lab = f"{ch.labels[0]}-{ch.labels[1]}"
            for p in self.chain_points(c):
                rows.append([p[0], p[1], lab])
        return rows

    def to_mesh(self):
        """Curve-network mesh for the stability module (endpoints become Dirichlet ends)."""
        from .stability import CurveNetworkMesh, edge_from_polyline

        edges, owner = [], {}
        for c, ch in enumerate(self.chains):
            kinds = ["junction" if k in self.topo.junctions else "dirichlet"
                     for k in (ch.nodes[0], ch.nodes[-1])]
            edges.append(edge_from_polyline(self.chain_points(c), ch.labels, *kinds))
        junctions = [tuple(members) for _, members in sorted(self.topo.junctions.items())]
        return CurveNetworkMesh(tuple(edges), tuple(junctions))


# --------------------------------------------------------------------------
# constructors


def _circle_hit(y, d, radius):
    # s > 0 with |y + s d| = radius
    b = float(y @ d)
    c = float(y @ y) - radius**2
    return -b + math.sqrt(b * b - c)


def tripod_network(a=None, n_per_ray=60, radius=nm.TRUNCATION_RADIUS):
    """Shifted tripod realizing volumes ``a`` (equal thirds by default), rays cut at ``radius``."""
    a = np.full(3, 1.0 / 3.0) if a is None else check_volume_vector(a, 3)
    y = solve_shift(a).y
    p = SimplicialPartition.from_shift(y, 3)
    verts = [y]
    chains = []
    for piece in interfaces_of(p):
        d = piece.frame[0]
        s_end = _circle_hit(y, d, radius)
        s = np.linspace(0.0, s_end, n_per_ray)[1:]
        pts = y + s[:, None] * d
        pts[-1] *= radius / np.linalg.norm(pts[-1])
        start = len(verts)
        verts.extend(pts)
        i, j = piece.labels
        right = np.array([d[1], -d[0]])
        labels = (i, j) if right @ piece.normal > 0 else (j, i)
        chains.append(Chain((0, *range(start, start + len(pts))), labels))
    return PolygonalNetwork(np.array(verts), chains, radius)


def slab_network(a=None, n_per_chord=80, radius=nm.TRUNCATION_RADIUS):
    """Two vertical chords ``x = t_1 < t_2`` splitting the disc into labels 1, 2, 3."""
    a = np.full(3, 1.0 / 3.0) if a is None else check_volume_vector(a, 3)
    t = nm.norm_ppf(np.cumsum(a)[:2])
    verts, chains = [], []
    for (lab, tk) in zip(((1, 2), (2, 3)), t):
        h = math.sqrt(radius**2 - tk**2)
        ys = np.linspace(-h, h, n_per_chord)
        start = len(verts)
        verts.extend(np.stack([np.full_like(ys, tk), ys], axis=1))
        chains.append(Chain(tuple(range(start, start + n_per_chord)), lab))
    return PolygonalNetwork(np.array(verts), chains, radius)


def jitter(net: PolygonalNetwork, amplitude=0.1, seed=7):
    """Perturb every degree of freedom by an independent uniform draw in ``[-amplitude, amplitude]``.

    Interior vertices move along their normals and junctions in both
    coordinates; endpoints slide along the circle by ``amplitude`` in
    arclength. Moving interior vertices only normally keeps each chain
    ordered, so a jitter comparable to the node spacing cannot fold it.
    """
    rng = np.random.default_rng(seed)
    delta = rng.uniform(-amplitude, amplitude, size=net.topo.dof_vertex.size)
    delta[net.topo.dof_kind == 2] /= net.radius
    return net.displaced(delta)


# --------------------------------------------------------------------------
# projection, remeshing, diagnostics


def volume_project(net: PolygonalNetwork, a, tol=1e-12, max_iter=30, max_offset=0.1):
    """Restore the face volumes to ``a`` with minimal metric-norm Newton corrections.

    Raises
    ------
    InvalidArgument
        If the current volumes are further than ``max_offset`` from ``a``.
    NumericFailure
        If the volume Jacobian is rank deficient or Newton stalls.
    """
    a = check_volume_vector(a, net.m, tol=1e-9)
    vol = net.volumes()
    res = float(np.max(np.abs(vol - a)))
    if res > max_offset:
        raise InvalidArgument(f"volumes are {res:.3g} away from the target")
    k = net.m - 1
    for it in range(max_iter):
        if res <= tol:
            return net
        J = net.dof_volume_jacobian()[:k]
        Minv = 1.0 / net.dof_metric()
        G = (J * Minv) @ J.T
        sv = np.linalg.svd(G, compute_uv=False)
        if sv[-1] <= 1e-14 * sv[0]:
            raise NumericFailure(
                "volume Jacobian is rank deficient",
                last_iterate=net.vertices,
                diagnostics={"singular_values": sv.tolist(), "residual": res},
            )
        delta = Minv * (J.T @ np.linalg.solve(G, (a - vol)[:k]))
        step = 1.0
        for _ in range(20):
            trial = net.displaced(step * delta)
            tv = trial.volumes()
            tres = float(np.max(np.abs(tv - a)))
            if tres < res:
                break
            step *= 0.5
        else:
            break
        net, vol, res = trial, tv, tres
    if res > max(tol, 1e-10):
        raise NumericFailure(
            f"volume projection stalled at residual {res:.3e}",
            last_iterate=net.vertices,
            diagnostics={"residual": res},
        )
    return net


def remesh(net: PolygonalNetwork):
    """Redistribute every chain's vertices uniformly in arclength (ends fixed)."""
    V = net.vertices.copy()
    for c, ch in enumerate(net.chains):
        P = net.chain_points(c)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
        target = np.linspace(0.0, s[-1], len(ch.nodes))
        new = np.stack([np.interp(target, s, P[:, 0]), np.interp(target, s, P[:, 1])], axis=1)
        V[list(ch.nodes[1:-1])] = new[1:-1]
    return net.with_vertices(V)


def find_collisions(net: PolygonalNetwork, min_length=1e-8):
    """Pairs of crossing segments (not sharing a vertex) and collapsed segments."""
    topo = net.topo
    A = net.vertices[topo.seg_a]
    B = net.vertices[topo.seg_b]
    short = np.flatnonzero(np.linalg.norm(B - A, axis=1) < min_length).tolist()

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    i, j = np.triu_indices(A.shape[0], k=1)
    share = (
        (topo.seg_a[i] == topo.seg_a[j]) | (topo.seg_a[i] == topo.seg_b[j])
        | (topo.seg_b[i] == topo.seg_a[j]) | (topo.seg_b[i] == topo.seg_b[j])
    )
    i, j = i[~share], j[~share]
    o1 = orient(A[i], B[i], A[j])
    o2 = orient(A[i], B[i], B[j])
    o3 = orient(A[j], B[j], A[i])
    o4 = orient(A[j], B[j], B[i])
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    return [(int(p), int(q)) for p, q in zip(i[hit], j[hit])], short


@dataclass
class FirstVariationReport:
    edge_residual: list
    edge_lambda: list
    pointwise_max: float
    boundary_max: float
    multipliers: list
    multiplier_residual: float
    cocycle: list
    conormal: list
    angles: list

    @property
    def cocycle_max(self):
        return max(self.cocycle, default=0.0)

    @property
    def conormal_max(self):
        return max(self.conormal, default=0.0)

    @property
    def angle_deviation(self):
        return max((abs(x - 120.0) for t in self.angles for x in t), default=0.0)

    def to_dict(self):
        return {
            "edge_residual": self.edge_residual,
            "edge_lambda": self.edge_lambda,
            "pointwise_max": self.pointwise_max,
            "boundary_max": self.boundary_max,
            "multipliers": self.multipliers,
            "multiplier_residual": self.multiplier_residual,
            "cocycle": self.cocycle,
            "conormal": self.conormal,
            "angles": self.angles,
        }


def _chain_residuals(P):
    kv = circumcircle_curvature(P[:-2], P[1:-1], P[2:])
    T = P[2:] - P[:-2]
    T /= np.linalg.norm(T, axis=1, keepdims=True)
    N = np.stack([T[:, 1], -T[:, 0]], axis=1)
    H = -np.sum(kv * N, axis=1)
    return H - np.sum(P[1:-1] * N, axis=1)


def first_variation_residual(net: PolygonalNetwork, core_radius=None) -> FirstVariationReport:
    """Discrete stationarity diagnostics.

    At interior vertices the curvature ``H`` comes from the circle through
    three consecutive vertices. ``lambda_ij`` is the chain mean of
    ``H - <x, N_ij>`` over vertices inside ``core_radius`` (default: one unit
    inside the truncation circle); the report lists the largest pointwise
    deviation from that mean per chain, the cocycle sums and conormal sums
    at junctions, and the junction angles in degrees. Sliding endpoints meet
    the circle orthogonally, which bends shifted rays in a thin layer of
    negligible weight; deviations there are reported as ``boundary_max``.
    """
    core = net.radius - 1.0 if core_radius is None else core_radius
    res, lam = [], []
    boundary = 0.0
    for c, ch in enumerate(net.chains):
        if len(ch.nodes) < 8:
            raise InvalidArgument(f"chain {c} has fewer than 8 vertices")
        P = net.chain_points(c)
        r = _chain_residuals(P)
        inside = np.linalg.norm(P[1:-1], axis=1) <= core
        if not np.any(inside):
            inside[:] = True
        mean = float(np.mean(r[inside]))
        lam.append(mean)
        res.append(float(np.max(np.abs(r[inside] - mean))))
        if np.any(~inside):
            boundary = max(boundary, float(np.max(np.abs(r[~inside] - mean))))
    pair_vals = {}
    for ch, l in zip(net.chains, lam):
        i, j = ch.labels
        key, val = ((i, j), l) if i < j else ((j, i), -l)
        pair_vals.setdefault(key, []).append(val)
    pairwise = {k: float(np.mean(v)) for k, v in pair_vals.items()}
    mv = fit_multipliers(pairwise, net.m, tol=math.inf)
    cocycle, conormal, angles = [], [], []
    for k, members in sorted(net.topo.junctions.items()):
        signed = {}
        dirs = []
        for c, end in members:
            ch = net.chains[c]
            i, j = ch.labels
            signed[(i, j)] = lam[c]
            signed[(j, i)] = -lam[c]
            P = net.chain_points(c)
            d = P[1] - P[0] if end == 0 else P[-2] - P[-1]
            dirs.append(d / np.linalg.norm(d))
        i, j = net.chains[members[0][0]].labels
        (kk,) = {l for c, _ in members for l in net.chains[c].labels} - {i, j}
        cocycle.append(abs(signed[(i, j)] + signed[(j, kk)] + signed[(kk, i)]))
        conormal.append(float(np.linalg.norm(np.sum(dirs, axis=0))))
        th = sorted(math.atan2(d[1], d[0]) for d in dirs)
        gaps = [th[1] - th[0], th[2] - th[1], 2.0 * math.pi - (th[2] - th[0])]
        angles.append([math.degrees(g) for g in gaps])
    return FirstVariationReport(
        res, lam, max(res), boundary, mv.lam.tolist(), mv.residual, cocycle, conormal, angles
    )


# --------------------------------------------------------------------------
# descent


@dataclass
class Result2D:
    network: PolygonalNetwork
    cost: float
    trace: list
    status: str
    steps: int
    snapshots: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"

    def trace_csv(self):
        return _io.write_csv(self.trace, ["step", "cost", "grad_norm", "max_residual"])

    def to_dict(self):
        return {
            "cost": self.cost,
            "status": self.status,
            "steps": self.steps,
            "network": self.network.to_dict(),
            "trace": [dict(zip(["step", "cost", "grad_norm", "max_residual"], r)) for r in self.trace],
        }


def _descent_direction(net):
    g = net.dof_cost_gradient()
    Minv = 1.0 / net.dof_metric()
    J = net.dof_volume_jacobian()[: net.m - 1]
    v = Minv * g
    G = (J * Minv) @ J.T
    v = v - Minv * (J.T @ np.linalg.solve(G, J @ v))
    return -v, g


def _velocity_norm(net, d):
    # angle dofs are reported as arclength speeds
    scale = np.where(net.topo.dof_kind == 2, net.radius, 1.0)
    return float(np.max(np.abs(d * scale))) if d.size else 0.0


def optimize_2d(a, init=None, steps=5000, seed=7, tol=1e-7, armijo=1e-4,
                remesh_every=25, collision_every=5, snapshot_every=0, slack=1e-12,
                cfl=0.25):
    """Volume-constrained descent of the weighted length of a polygonal network.

    Each step follows the metric gradient projected onto the volume-preserving
    directions, restores volumes exactly with :func:`volume_project` and
    accepts by Armijo backtracking on the cost change (summed per segment).
    Steps are capped at ``cfl * h_min^2`` for the explicit diffusion. Chains
    are remeshed every ``remesh_every`` steps when that does not raise the
    cost. When ``init`` is omitted the start is the equal-volume tripod
    jittered by 0.1 with ``seed``.

    Raises
    ------
    TopologyEvent
        If segments cross or collapse; ``report`` holds the partial result.
    """
    if init is None:
        init = jitter(tripod_network(), 0.1, seed)
    if init.m != 3:
        raise InvalidArgument("the network optimizer handles three-set partitions")
    a = check_volume_vector(a, init.m, tol=1e-9)
    if init.vertices.shape[0] > 2000:
        raise InvalidArgument("networks are limited to 2000 vertices")
    net = volume_project(init, a)
    seg_cost = net.segment_costs()
    E = float(math.fsum(seg_cost))
    trace = []
    snaps = []
    alpha = None
    status = "budget"
    k = 0

    def record(step, E, vel):
        fv = first_variation_residual(net).pointwise_max
        trace.append([step, E, vel, fv])

    for k in range(1, steps + 1):
        d, g = _descent_direction(net)
        vel = _velocity_norm(net, d)
        if k == 1 or k % 10 == 0:
            record(k - 1, E, vel)
        if vel <= tol:
            status = "converged"
            break
        h_min = float(np.min(net.segment_lengths()))
        cap = cfl * h_min**2
        alpha = cap if alpha is None else min(2.0 * alpha, cap)
        slope = float(g @ d)
        accepted = False
        for _ in range(40):
            try:
                trial = volume_project(net.displaced(alpha * d), a)
            except (NumericFailure, InvalidArgument):
                alpha *= 0.5
                continue
            tc = trial.segment_costs()
            dE = float(math.fsum(tc - seg_cost))
            if dE <= armijo * alpha * slope + slack:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = "line-search-stalled"
            break
        net, seg_cost, E = trial, tc, E + dE
        if remesh_every and k % remesh_every == 0:
            try:
                rm = volume_project(remesh(net), a)
                rc = rm.segment_costs()
                if math.fsum(rc - seg_cost) <= 0.0:
                    net, seg_cost, E = rm, rc, float(math.fsum(rc))
            except (NumericFailure, InvalidArgument):
                pass
        if collision_every and k % collision_every == 0:
            crossings, short = find_collisions(net)
            if crossings or short:
                partial = Result2D(net, E, trace, "topology-event", k, snaps)
                raise TopologyEvent(
                    f"topology change at step {k}: {len(crossings)} crossings, "
                    f"{len(short)} collapsed segments",
                    report={"partial": partial, "crossings": crossings, "collapsed": short},
                )
        if snapshot_every and k % snapshot_every == 0:
            snaps.append((k, net.plot_rows()))
    else:
        k = steps
    d, _ = _descent_direction(net)
    record(k, E, _velocity_norm(net, d))
    return Result2D(net, float(math.fsum(net.segment_costs())), trace, status, k, snaps)
