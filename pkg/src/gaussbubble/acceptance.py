"""Acceptance checks shared by the test suite and ``gaussbubble verify-all``.

Each check returns a :class:`CriterionResult` with its measured values, the
wall time and the time budget; a check passes only if both the numerical
condition and the budget hold.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import frontflow, simplicial, stability
from ._normal import norm_ppf
from .geometry import InterfacePiece, SimplicialPartition, barycenter_spectrum
from .measure import IntervalUnion, ProductRegion, interface_measure, partition_regions

SLAB_COST = 1.8228189517012245  # 2 exp(-t^2/2), t = Phi^{-1}(2/3)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    elapsed: float
    budget: float
    details: dict = field(default_factory=dict)

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number}: {self.name} ({self.elapsed:.2f}s / {self.budget:g}s)"

    def to_dict(self):
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "elapsed": self.elapsed,
            "budget": self.budget,
            "details": self.details,
        }


def _timed(number, name, budget):
    def wrap(fn):
        def run(**kw):
            t0 = time.perf_counter()
            ok, details = fn(**kw)
            dt = time.perf_counter() - t0
            return CriterionResult(number, name, bool(ok and dt <= budget), dt, budget, details)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


@_timed(1, "candidate cost closed forms", 2.0)
def closed_form_costs():
    out = {}
    ok = True
    for m, expected in ((2, 1.0), (3, 1.5)):
        t0 = time.perf_counter()
        c = simplicial.cost(np.full(m, 1.0 / m))
        dt = time.perf_counter() - t0
        out[f"m{m}"] = {"cost": c.value, "error_bound": c.abs_error_bound, "under_1s": dt < 1.0}
        ok &= abs(c.value - expected) <= 1e-9 and dt < 1.0
    return ok, out


@_timed(2, "slab exclusion gap", 10.0)
def slab_gap(max_breaks=6):
    res = frontflow.optimize_1d(3, np.full(3, 1.0 / 3.0), max_breaks=max_breaks)
    tripod = simplicial.cost(np.full(3, 1.0 / 3.0)).value
    ok = abs(res.cost - SLAB_COST) <= 1e-6 and res.cost > tripod
    return ok, {
        "best_cost": res.cost,
        "breakpoints": list(res.best.breakpoints),
        "labels": list(res.best.labels),
        "tripod_cost": tripod,
    }


def random_direction(rng, m):
    b = rng.standard_normal(m)
    b -= b.mean()
    return b / np.linalg.norm(b)


def random_volumes(rng, m, floor=0.08):
    while True:
        a = rng.dirichlet(np.full(m, 4.0))
        if a.min() >= floor:
            return a


@_timed(3, "first-order identity", 30.0)
def first_order_identity(samples=20, seed=2024):
    rng = np.random.default_rng(seed)
    worst = 0.0
    rows = []
    for q in range(samples):
        m = 2 if q % 2 == 0 else 3
        a = random_volumes(rng, m)
        b = random_direction(rng, m)
        chk = simplicial.gradient_check(a, b)
        worst = max(worst, chk.rel_err)
        rows.append(chk.to_dict())
    return worst <= 1e-4, {"max_rel_err": worst, "checks": rows}


@_timed(4, "Hessian identity", 30.0)
def hessian_identity():
    cases = [
        ((0.6, 0.4), (1.0, -1.0), -6.488085),
        ((1 / 3, 1 / 3, 1 / 3), (1.0, -1.0, 0.0), -8.377580),
    ]
    rows = []
    ok = True
    for a, b, approx in cases:
        chk = simplicial.hessian_check(a, b)
        rows.append(chk.to_dict())
        ok &= chk.rel_err <= 1e-3 and abs(chk.identity - approx) / abs(approx) <= 1e-3
    return ok, {"checks": rows}


@_timed(5, "spectral identities on the unit circle", 5.0)
def circle_spectrum():
    mesh = stability.circle_mesh(256)
    rep = stability.fundamental_tone(mesh, n_eigs=3)
    top = np.sort(rep.top_eigenvalues)[::-1]
    chk = stability.linear_eigenfield_check(mesh, [1.0, 0.0])
    ok = np.max(np.abs(top - [2.0, 1.0, 1.0])) <= 1e-2 and chk.residual <= 1e-3
    return ok, {"top_eigenvalues": top.tolist(), "L_cos_residual": chk.residual}


@_timed(6, "fundamental tone of the tripod", 20.0)
def tripod_tone():
    mesh = stability.tripod_mesh(400)
    free = stability.fundamental_tone(mesh)
    cons = stability.fundamental_tone(mesh, constrained=True)
    min_quotient = -cons.tone
    ok = abs(free.tone - 1.0) <= 5e-2 and min_quotient >= -1e-3
    return ok, {
        "tone": free.tone,
        "maximizer_sign_constant": list(free.sign_constant),
        "constrained_min_quotient": min_quotient,
    }


def _rank_case(regions, expected, tol):
    rank, sv, _ = barycenter_spectrum(regions, tol)
    rel = sv / sv[0]
    kept = rel[expected - 1]
    dropped = rel[expected] if rel.size > expected else 0.0
    ok = rank == expected and kept >= 10 * tol and dropped <= tol / 10
    return ok, {"rank": rank, "singular_values": sv.tolist()}


@_timed(7, "barycenter rank diagnostic", 10.0)
def barycenter_ranks(tol=1e-8):
    out = {}
    ok = True
    shifts = {2: [0.3], 3: [0.2, -0.15], 4: [0.1, -0.2, 0.15]}
    for m in (2, 3, 4):
        for tag, y in (("centered", np.zeros(m - 1)), ("shifted", np.array(shifts[m]))):
            good, info = _rank_case(partition_regions(SimplicialPartition.from_shift(y, m)), m - 1, tol)
            out[f"simplicial_m{m}_{tag}"] = info
            ok &= good
    t = float(norm_ppf(2.0 / 3.0))
    for extra in (0, 1, 2):
        slabs = [
            ProductRegion(IntervalUnion(((-math.inf, -t),)), extra),
            ProductRegion(IntervalUnion(((-t, t),)), extra),
            ProductRegion(IntervalUnion(((t, math.inf),)), extra),
        ]
        good, info = _rank_case(slabs, 1, tol)
        out[f"slab_R{1 + extra}"] = info
        ok &= good
    return ok, out


@_timed(8, "optimizer recovers the tripod", 120.0)
def optimizer_recovery(seed=7, jitter=0.1, steps=8000):
    init = frontflow.jitter(frontflow.tripod_network(), jitter, seed)
    res = frontflow.optimize_2d(np.full(3, 1.0 / 3.0), init, steps=steps, seed=seed)
    fv = frontflow.first_variation_residual(res.network)
    junction = res.network.vertices[res.network.junction_vertices()[0]]
    ok = (
        res.cost <= 1.5 + 1e-3
        and fv.angle_deviation <= 0.5
        and fv.pointwise_max <= 5e-3
        and float(np.linalg.norm(junction)) <= 1e-3
    )
    return ok, {
        "cost": res.cost,
        "status": res.status,
        "steps": res.steps,
        "angles": fv.angles,
        "pointwise_residual": fv.pointwise_max,
        "cocycle": fv.cocycle_max,
        "junction": junction.tolist(),
    }


def random_pieces(n, seed=0):
    """Random codimension-one pieces covering every catalog kind."""
    rng = np.random.default_rng(seed)
    kinds = ["hyperplane2", "segment", "ray", "half-space-boundary", "wedge", "hyperplane3"]
    out = []
    for q in range(n):
        kind = kinds[q % len(kinds)]
        if kind in ("hyperplane2", "segment", "ray", "half-space-boundary"):
            th = rng.uniform(0, 2 * math.pi)
            frame = np.array([[math.cos(th), math.sin(th)]])
            point = rng.uniform(-2, 2, size=2)
            if kind == "hyperplane2":
                out.append(InterfacePiece("hyperplane", point, frame))
            elif kind == "segment":
                lo = rng.uniform(-3, 1)
                out.append(InterfacePiece("segment", point, frame, (lo, lo + rng.uniform(0.1, 3))))
            elif kind == "ray":
                out.append(InterfacePiece("ray", point, frame, (rng.uniform(-1, 1), math.inf)))
            else:
                out.append(
                    InterfacePiece("half-space-boundary", point, frame, (-math.inf, rng.uniform(-1, 1)))
                )
        else:
            Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            point = rng.uniform(-1.5, 1.5, size=3)
            if kind == "hyperplane3":
                out.append(InterfacePiece("hyperplane", point, Q[:2]))
            else:
                lo = rng.uniform(-math.pi, math.pi)
                out.append(
                    InterfacePiece("wedge2D-in-plane", point, Q[:2], (lo, lo + rng.uniform(0.2, 2.5)))
                )
    return out


@_timed(9, "property suites", 60.0)
def property_suites(cs_trials=1000, n_pieces=100, n_roundtrip=50, seed=11):
    rng = np.random.default_rng(seed)
    details = {}
    # Q symmetry on admissible fields
    sym = 0.0
    for mesh in (stability.tripod_mesh(100), stability.curved_junction_mesh()):
        asm = stability.assemble(mesh)
        P = stability.admissible_basis(mesh)
        for _ in range(10):
            F = P @ rng.standard_normal(P.shape[1])
            G = P @ rng.standard_normal(P.shape[1])
            sym = max(sym, abs(asm.Q(F, G) - asm.Q(G, F)))
    details["q_symmetry"] = sym
    cs = simplicial.matrix_cs_check(cs_trials, seed)
    details["matrix_cs"] = {"passed": cs.passed, "min_eigenvalue": cs.min_eigenvalue}
    worst_ratio = 0.0
    for piece in random_pieces(n_pieces, seed):
        c = interface_measure(piece)
        q = interface_measure(piece, method="quadrature")
        bound = c.abs_error_bound + q.abs_error_bound
        worst_ratio = max(worst_ratio, abs(c.value - q.value) / bound)
    details["closed_vs_quadrature_worst_ratio"] = worst_ratio
    worst_rt = 0.0
    for _ in range(n_roundtrip):
        a = random_volumes(rng, 3, floor=0.02)
        sol = simplicial.solve_shift(a)
        vols, _ = simplicial.sector_volumes(sol.y, 3)
        worst_rt = max(worst_rt, float(np.max(np.abs(vols - a))))
    details["roundtrip_max_residual"] = worst_rt
    ok = sym <= 1e-12 and cs.passed and worst_ratio <= 1.0 and worst_rt <= 1e-8
    return ok, details


CRITERIA = (
    closed_form_costs,
    slab_gap,
    first_order_identity,
    hessian_identity,
    circle_spectrum,
    tripod_tone,
    barycenter_ranks,
    optimizer_recovery,
    property_suites,
)


def run_all(quick=False):
    """Run every criterion; ``quick`` trims the sample counts of the property suite."""
    results = []
    for check in CRITERIA:
        if quick and check is property_suites:
            results.append(check(cs_trials=200, n_pieces=30, n_roundtrip=20))
        else:
            results.append(check())
    return results
