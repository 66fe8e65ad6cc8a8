"""Gaussian volumes, weighted interface measures and Gaussian barycenters.

Volumes use the standard Gaussian density ``gamma_d``; interfaces in R^d are
weighted by ``gamma_{d-1}(x) = (2 pi)^{-(d-1)/2} exp(-|x|^2 / 2)`` evaluated
at the ambient point. Every routine returns an additive absolute error bound
alongside the value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from . import _normal as nm
from .errors import InvalidArgument
from .geometry import InterfacePiece, SimplicialPartition, interfaces_of

METHODS = ("closed-form", "adaptive-quadrature", "qmc")


@dataclass(frozen=True)
class MeasureResult:
    value: float
    abs_error_bound: float = 0.0
    method: str = "closed-form"

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown method {self.method!r}")
        if not self.abs_error_bound >= 0.0:
            raise InvalidArgument("error bound must be non-negative")

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        methods = {self.method, other.method}
        if methods == {"closed-form"}:
            method = "closed-form"
        elif "qmc" in methods:
            method = "qmc"
        else:
            method = "adaptive-quadrature"
        return MeasureResult(
            self.value + other.value, self.abs_error_bound + other.abs_error_bound, method
        )

    __radd__ = __add__

    def __float__(self):
        return float(self.value)

    def to_dict(self):
        return {
            "value": self.value,
            "abs_error_bound": self.abs_error_bound,
            "method": self.method,
        }


# --------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class HalfSpace:
    """``{x in R^d : <x, normal> <= offset}`` with a unit normal."""

    normal: np.ndarray = field(repr=False)
    offset: float = 0.0

    def __post_init__(self):
        n = np.atleast_1d(np.asarray(self.normal, dtype=float))
        if not abs(np.linalg.norm(n) - 1.0) < 1e-12:
            raise InvalidArgument("half-space normal must be a unit vector")
        object.__setattr__(self, "normal", n)

    @property
    def ambient_dim(self):
        return self.normal.size


@dataclass(frozen=True)
class SectorRegion:
    """Sector ``label`` (1-based) of a shifted simplicial partition."""

    partition: SimplicialPartition
    label: int

    def __post_init__(self):
        if not 1 <= self.label <= self.partition.m:
            raise InvalidArgument(f"sector label {self.label} outside 1..{self.partition.m}")

    @property
    def ambient_dim(self):
        return self.partition.ambient_dim


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of disjoint closed intervals of R, ordered left to right."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        prev = -math.inf
        for a, b in iv:
            if not (a <= b and a >= prev):
                raise InvalidArgument("intervals must be ordered and disjoint")
            prev = b
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def from_breakpoints(cls, breakpoints, labels, label):
        """Pieces of a labeled line partition carrying ``label``."""
        edges = [-math.inf, *map(float, breakpoints), math.inf]
        return cls(
            tuple(
                (edges[k], edges[k + 1]) for k, lab in enumerate(labels) if lab == label
            )
        )

    @property
    def ambient_dim(self):
        return 1


@dataclass(frozen=True)
class Polygon2D:
    """Simple polygon in R^2 (either orientation)."""

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise InvalidArgument("polygon needs at least three 2-D vertices")
        if _shoelace(v) < 0.0:
            v = v[::-1]
        object.__setattr__(self, "vertices", v)

    @property
    def ambient_dim(self):
        return 2


@dataclass(frozen=True)
class ProductRegion:
    """``base x R^k``; the trailing factor carries full Gaussian mass."""

    base: object
    extra: int

    def __post_init__(self):
        if self.extra < 0:
            raise InvalidArgument("extra dimensions must be >= 0")

    @property
    def ambient_dim(self):
        return self.base.ambient_dim + self.extra


def _shoelace(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# --------------------------------------------------------------------------
# segment primitives (vectorized, shared with the network optimizer)


def segment_frame(a, b):
    """Arclength data of segments ``a -> b`` relative to the foot of the origin.

    Returns ``(length, unit, foot_dist2, s_a, s_b)`` where points are
    ``p + s * unit`` for ``s`` in ``[s_a, s_b]`` and ``|p|^2 = foot_dist2``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    length = np.linalg.norm(d, axis=-1)
    unit = d / length[..., None]
    s_a = np.sum(a * unit, axis=-1)
    cross = a[..., 0] * unit[..., 1] - a[..., 1] * unit[..., 0]
    return length, unit, cross * cross, s_a, s_a + length


def segment_measure(a, b):
    """Closed-form ``int_seg gamma_1 ds`` for segments in R^2 (vectorized)."""
    _, _, p2, s_a, s_b = segment_frame(a, b)
    return np.exp(-0.5 * p2) * nm.phi_diff(s_a, s_b)


_GL_CACHE = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


def _radial_kernel(r2):
    # (1 - e^{-r^2/2}) / (2 pi r^2), continuous at 0
    safe = np.where(r2 > 1e-12, r2, 1.0)
    val = -np.expm1(-0.5 * safe) / (2.0 * math.pi * safe)
    return np.where(r2 > 1e-12, val, 1.0 / (4.0 * math.pi) - r2 / (16.0 * math.pi))


def segment_flux(a, b, order=8, max_piece=0.25):
    """Flux of ``F(x) = x (1 - e^{-|x|^2/2}) / (2 pi |x|^2)`` through ``a -> b``.

    ``div F = gamma_2``, so summing over a counter-clockwise closed boundary
    gives the enclosed Gaussian area. The outward normal is the right normal
    of the segment direction. Composite Gauss-Legendre on pieces no longer
    than ``max_piece``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = b - a
    length = np.linalg.norm(d, axis=1)
    # <x, n_out> is constant along the segment
    h = np.where(length > 0, (a[:, 0] * d[:, 1] - a[:, 1] * d[:, 0]) / np.where(length > 0, length, 1.0), 0.0)
    pieces = np.maximum(1, np.ceil(length / max_piece)).astype(int)
    seg_idx = np.repeat(np.arange(a.shape[0]), pieces)
    starts = np.concatenate([np.arange(k) for k in pieces]) if len(pieces) else np.zeros(0)
    frac0 = starts / pieces[seg_idx]
    dfrac = 1.0 / pieces[seg_idx]
    x, w = _gauss_legendre(order)
    t = frac0[:, None] + dfrac[:, None] * x[None, :]
    pts = a[seg_idx][:, :, None] + d[seg_idx][:, :, None] * t[:, None, :]
    r2 = np.sum(pts * pts, axis=1)
    vals = np.sum(_radial_kernel(r2) * w[None, :], axis=1) * dfrac
    integral = np.bincount(seg_idx, weights=vals, minlength=a.shape[0])
    return h * length * integral


# --------------------------------------------------------------------------
# volumes


def _sector_constraints(partition: SimplicialPartition, label: int):
    z = partition.directions
    G = np.array([z[label] - z[j] for j in range(1, partition.m + 1) if j != label])
    c = G @ partition.shift
    return G, c


def _sector_angles(partition, label):
    # 2-D sector = apex y plus the cone within pi/m of z_label
    z = partition.directions[label]
    alpha = math.atan2(z[1], z[0])
    half = math.pi / partition.m
    return alpha - half, alpha + half


def _qmc_sector_volume(partition, label, seed, n_points=2**16, replicates=8):
    d = partition.dim
    estimates = []
    for r in range(replicates):
        sampler = qmc.Sobol(d, scramble=True, seed=np.random.default_rng([seed, r]))
        u = sampler.random(n_points)
        X = nm.norm_ppf(np.clip(u, 1e-16, 1.0 - 1e-16))
        lab = np.argmax((X - partition.shift) @ partition.directions.vectors.T, axis=1) + 1
        estimates.append(np.mean(lab == label))
    estimates = np.asarray(estimates)
    stderr = float(np.std(estimates, ddof=1) / math.sqrt(replicates))
    return MeasureResult(float(np.mean(estimates)), 3.0 * stderr + 1e-12, "qmc")


def gaussian_volume(region, method=None, seed=0) -> MeasureResult:
    """Gaussian volume ``int_region gamma_d`` with an absolute error bound.

    ``method`` selects an alternative route for simplicial sectors:
    ``"quadrature"`` (polar-angle integral, R^2 only) or ``"qmc"``
    (randomized Sobol, replicate seeds derived from ``seed``).
    """
    if isinstance(region, ProductRegion):
        return gaussian_volume(region.base, method, seed)
    if isinstance(region, HalfSpace):
        return MeasureResult(float(nm.norm_cdf(region.offset)), 1e-16)
    if isinstance(region, IntervalUnion):
        total = sum(float(nm.phi_diff(a, b)) for a, b in region.intervals)
        return MeasureResult(total, 1e-16 * max(1, len(region.intervals)))
    if isinstance(region, Polygon2D):
        v = region.vertices
        w = np.roll(v, -1, axis=0)
        fine = float(np.sum(segment_flux(v, w, order=12)))
        coarse = float(np.sum(segment_flux(v, w, order=8)))
        return MeasureResult(fine, abs(fine - coarse) + 1e-15, "adaptive-quadrature")
    if isinstance(region, SectorRegion):
        p, label = region.partition, region.label
        if method == "qmc":
            return _qmc_sector_volume(p, label, seed)
        if method == "quadrature":
            if p.m != 3:
                raise InvalidArgument("polar quadrature route is for sectors in R^2")
            lo, hi = _sector_angles(p, label)
            val, err, _ = nm.wedge_measure_2d(p.shift, lo, hi)
            return MeasureResult(val, err, "adaptive-quadrature")
        if method is not None:
            raise InvalidArgument(f"unknown volume method {method!r}")
        G, c = _sector_constraints(p, label)
        if G.shape[0] > 3:
            raise InvalidArgument("closed-form sector volumes need m <= 4; use method='qmc'")
        val, err, how = nm.orthant_probability(G @ G.T, c)
        return MeasureResult(val, err, how)
    raise InvalidArgument(f"unsupported region type {type(region).__name__}")


# --------------------------------------------------------------------------
# interface measures


def _foot(piece: InterfacePiece):
    F = piece.frame
    coords = F @ piece.point
    foot = piece.point - F.T @ coords
    return foot, coords


def _check_codim_one(piece):
    d = piece.ambient_dim
    if piece.kind in ("segment", "ray") and d != 2:
        raise InvalidArgument(f"{piece.kind} pieces are measured in R^2 only")
    if piece.kind == "wedge2D-in-plane" and d != 3:
        raise InvalidArgument("planar wedges are measured in R^3 only")
    if piece.kind == "half-space-boundary" and piece.frame.shape[0] != d - 1:
        raise InvalidArgument("half-space boundary frame must span d-1 directions")


def interface_measure(piece: InterfacePiece, method=None) -> MeasureResult:
    """Weighted measure ``int_piece gamma_{d-1}`` of a codimension-one piece.

    Closed forms: a hyperplane at distance t gives ``e^{-t^2/2}``; a
    segment/ray/half-hyperplane ``p + s u`` (``p`` the foot of the origin)
    gives ``e^{-|p|^2/2} (Phi(s_b) - Phi(s_a))``; a planar wedge through the
    origin gives ``angle / (2 pi)``. Wedges with an off-origin apex integrate
    the polar angle adaptively. ``method="quadrature"`` forces direct
    numerical integration of the weight for any piece.
    """
    _check_codim_one(piece)
    if method == "quadrature":
        return _interface_quadrature(piece)
    if method is not None:
        raise InvalidArgument(f"unknown interface method {method!r}")
    foot, coords = _foot(piece)
    scale = math.exp(-0.5 * float(foot @ foot))
    if piece.kind == "hyperplane":
        return MeasureResult(scale, 1e-16)
    if piece.kind in ("segment", "ray", "half-space-boundary"):
        s0 = coords[0]
        lo, hi = piece.extent
        return MeasureResult(scale * float(nm.phi_diff(s0 + lo, s0 + hi)), 1e-16)
    lo, hi = piece.extent
    val, err, how = nm.wedge_measure_2d(coords, lo, hi)
    return MeasureResult(scale * val, scale * err, how)


def _interface_quadrature(piece):
    d = piece.ambient_dim
    F = piece.frame
    norm_const = (2.0 * math.pi) ** (-(d - 1) / 2.0)
    R = nm.TRUNCATION_RADIUS
    tail = 4.0 * nm.TAIL_MASS

    def weight(x):
        return norm_const * math.exp(-0.5 * float(x @ x))

    if piece.kind == "hyperplane" and d == 1:
        return MeasureResult(weight(piece.point), 1e-16, "adaptive-quadrature")
    if d == 2:
        lo, hi = piece.extent if piece.extent else (-math.inf, math.inf)
        # integrate over the parameter window that carries mass
        s0 = float(F[0] @ piece.point)
        lo_c, hi_c = max(lo, -s0 - R), min(hi, -s0 + R)
        if lo_c >= hi_c:
            return MeasureResult(0.0, tail, "adaptive-quadrature")
        val, err = integrate.quad(
            lambda s: weight(piece.point + s * F[0]),
            lo_c, hi_c, epsabs=1e-14, epsrel=1e-12, limit=200,
        )
        return MeasureResult(val, err + tail, "adaptive-quadrature")
    if piece.kind == "wedge2D-in-plane":
        lo, hi = piece.extent
        apex = piece.point
        rmax = R + float(np.linalg.norm(apex))

        def f(r, t):
            x = apex + r * (math.cos(t) * F[0] + math.sin(t) * F[1])
            return weight(x) * r

        val, err = integrate.dblquad(f, lo, hi, 0.0, rmax, epsabs=1e-13, epsrel=1e-11)
        return MeasureResult(val, err + tail, "adaptive-quadrature")
    if d == 3:
        foot, coords = _foot(piece)
        if piece.kind == "half-space-boundary":
            s_lo = max(coords[0] + piece.extent[0], -R)
            s_hi = min(coords[0] + piece.extent[1], R)
        else:
            s_lo, s_hi = -R, R

        def g(t, s):
            x = foot + s * F[0] + t * F[1]
            return weight(x)

        if s_lo >= s_hi:
            return MeasureResult(0.0, tail, "adaptive-quadrature")
        val, err = integrate.dblquad(g, s_lo, s_hi, -R, R, epsabs=1e-13, epsrel=1e-11)
        return MeasureResult(val, err + tail, "adaptive-quadrature")
    raise InvalidArgument(f"no quadrature route for {piece.kind} in R^{d}")


# --------------------------------------------------------------------------
# barycenters


def _sector_flux_barycenter(partition, label):
    # int_Omega x gamma_d = -int_{dOmega} gamma_d N = -(2pi)^{-1/2} sum_j gamma_{d-1}(Sigma_ij) N_ij
    out = np.zeros(partition.dim)
    err = 0.0
    for piece in interfaces_of(partition):
        i, j = piece.labels
        if label not in (i, j):
            continue
        meas = interface_measure(piece)
        n = piece.normal if label == i else -piece.normal
        out -= nm.INV_SQRT2PI * meas.value * n
        err += nm.INV_SQRT2PI * meas.abs_error_bound
    return out, err


def barycenter(region, method=None):
    """Gaussian barycenter ``int_region x gamma_d(x) dx`` and per-component bounds.

    Sectors use the divergence identity over their interfaces by default;
    ``method="quadrature"`` integrates the first moment directly (R^2 sectors).
    """
    if isinstance(region, ProductRegion):
        vec, err = barycenter(region.base, method)
        pad = np.zeros(region.extra)
        return np.concatenate([vec, pad]), np.concatenate([err, pad])
    if isinstance(region, HalfSpace):
        vec = -float(nm.norm_pdf(region.offset)) * region.normal
        return vec, np.full(vec.shape, 1e-16)
    if isinstance(region, IntervalUnion):
        total = 0.0
        for a, b in region.intervals:
            total += float(nm.norm_pdf(a)) - float(nm.norm_pdf(b))
        return np.array([total]), np.array([1e-16 * max(1, len(region.intervals))])
    if isinstance(region, Polygon2D):
        v = region.vertices
        w = np.roll(v, -1, axis=0)
        _, unit, p2, s_a, s_b = segment_frame(v, w)
        n_out = np.stack([unit[:, 1], -unit[:, 0]], axis=1)
        mass = nm.INV_SQRT2PI * np.exp(-0.5 * p2) * nm.phi_diff(s_a, s_b)
        vec = -np.sum(mass[:, None] * n_out, axis=0)
        return vec, np.full(2, 1e-16 * len(v))
    if isinstance(region, SectorRegion):
        p = region.partition
        if method == "quadrature":
            if p.m != 3:
                raise InvalidArgument("direct quadrature barycenters are for sectors in R^2")
            lo, hi = _sector_angles(p, region.label)
            vec, err = nm.wedge_moment_2d(p.shift, lo, hi)
        elif method is None:
            if p.m == 2:
                # sector 1 is {<x, n> <= <y, n>} with n = (z_2 - z_1) / 2
                n = (p.directions[2] - p.directions[1]) / 2.0
                sign = 1.0 if region.label == 1 else -1.0
                vec, e = barycenter(HalfSpace(sign * n, sign * float(n @ p.shift)))
                err = float(e[0])
            else:
                vec, err = _sector_flux_barycenter(p, region.label)
        else:
            raise InvalidArgument(f"unknown barycenter method {method!r}")
        vec = np.concatenate([vec, np.zeros(p.ambient_extra)])
        return vec, np.full(vec.shape, float(err))
    raise InvalidArgument(f"unsupported region type {type(region).__name__}")


def partition_regions(p: SimplicialPartition):
    """All sectors of a simplicial partition as regions."""
    return [SectorRegion(p, i) for i in range(1, p.m + 1)]
