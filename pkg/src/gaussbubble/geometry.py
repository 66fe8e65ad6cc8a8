"""Regular-simplex directions, shifted simplicial-cone partitions and their interfaces.

Set labels are 1-based throughout (``1..m``), matching how partitions are
usually written down; array positions are ``label - 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _io
from .errors import InvalidArgument, Unsupported

INTERFACE_KINDS = (
    "hyperplane",
    "half-space-boundary",
    "wedge2D-in-plane",
    "segment",
    "ray",
)


@dataclass(frozen=True)
class SimplexDirections:
    """Unit vectors ``z_1..z_m`` in R^(m-1) forming a regular simplex centered at 0."""

    m: int
    vectors: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.m - 1

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T

    def __getitem__(self, label: int) -> np.ndarray:
        return self.vectors[label - 1]


def regular_simplex_vertices(m: int) -> SimplexDirections:
    """Canonical regular simplex with ``m`` unit vertices in R^(m-1).

    Construction: center the standard basis of R^m, ``c_i = e_i - 1/m``, run
    modified Gram-Schmidt (two passes) on ``c_1..c_{m-1}`` to get an
    orthonormal basis of the zero-sum hyperplane, express every ``c_i`` in
    that basis and normalize. The first vertex therefore lies on the first
    axis and the output is identical across runs and platforms.
    """
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 2:
        raise InvalidArgument(f"need an integer m >= 2, got {m!r}")
    m = int(m)
    centered = np.eye(m) - 1.0 / m
    basis = []
    for i in range(m - 1):
        v = centered[i].copy()
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        basis.append(v / np.linalg.norm(v))
    coords = centered @ np.array(basis).T
    coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    coords[np.abs(coords) < 1e-15] = 0.0
    coords.setflags(write=False)
    return SimplexDirections(m, coords)


@dataclass(frozen=True)
class SimplicialPartition:
    """Sectors ``Omega_i = y + {x : <x, z_i> = max_j <x, z_j>}`` times R^k.

    ``ambient_extra`` counts trailing product dimensions; they are never
    materialized since the Gaussian measure factorizes over them.
    """

    directions: SimplexDirections
    shift: np.ndarray = field(repr=False)
    ambient_extra: int = 0

    def __post_init__(self):
        y = np.array(self.shift, dtype=float).reshape(-1)
        if y.shape != (self.directions.dim,):
            raise InvalidArgument(
                f"shift must have {self.directions.dim} entries, got {y.shape[0]}"
            )
        if self.ambient_extra < 0:
            raise InvalidArgument("ambient_extra must be >= 0")
        y.setflags(write=False)
        object.__setattr__(self, "shift", y)

    @classmethod
    def from_shift(cls, shift, m=None, ambient_extra=0):
        shift = np.atleast_1d(np.asarray(shift, dtype=float))
        m = shift.size + 1 if m is None else m
        return cls(regular_simplex_vertices(m), shift, ambient_extra)

    @property
    def m(self) -> int:
        return self.directions.m

    @property
    def dim(self) -> int:
        return self.directions.dim

    @property
    def ambient_dim(self) -> int:
        return self.dim + self.ambient_extra

    def scores(self, X) -> np.ndarray:
        """``<x - y, z_i>`` for every row of ``X`` (trailing coordinates ignored)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.ambient_dim:
            raise InvalidArgument(
                f"points must have dimension {self.ambient_dim}, got {X.shape[1]}"
            )
        return (X[:, : self.dim] - self.shift) @ self.directions.vectors.T

    def labels(self, X) -> np.ndarray:
        """Sector label (1..m) for each row; ties go to the smallest label."""
        return np.argmax(self.scores(X), axis=1) + 1

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "dim": self.dim,
            "shift": [float(v) for v in self.shift],
            "extra": self.ambient_extra,
        }

    def to_json(self) -> str:
        return _io.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SimplicialPartition":
        d = _io.loads(text) if isinstance(text, str) else dict(text)
        if d["dim"] != d["m"] - 1:
            raise InvalidArgument("dim must equal m - 1")
        return cls.from_shift(d["shift"], m=d["m"], ambient_extra=d.get("extra", 0))


def sector_of(x, p: SimplicialPartition) -> int:
    """Label of the sector containing ``x`` (ties broken by smallest label)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidArgument("sector_of expects a single point")
    return int(p.labels(x[None, :])[0])


def _orthonormal_rows(F) -> bool:
    F = np.atleast_2d(F)
    return np.allclose(F @ F.T, np.eye(F.shape[0]), atol=1e-10)


@dataclass(frozen=True)
class InterfacePiece:
    """A flat piece of an interface ``Sigma_ij`` with its carrier geometry.

    ``point`` and ``frame`` (orthonormal rows) describe the carrier affine
    subspace. ``extent`` bounds the first frame coordinate (``segment``,
    ``ray``, ``half-space-boundary``; measured from ``point``) or the polar
    angle in the frame plane (``wedge2D-in-plane``, apex at ``point``).
    ``normal`` is the unit normal pointing from ``Omega_i`` into ``Omega_j``.
    """

    kind: str
    point: np.ndarray = field(repr=False)
    frame: np.ndarray = field(repr=False)
    extent: tuple = ()
    labels: tuple = (1, 2)
    normal: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in INTERFACE_KINDS:
            raise InvalidArgument(f"unknown interface kind {self.kind!r}")
        point = np.asarray(self.point, dtype=float).reshape(-1)
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        if frame.shape[1] != point.size:
            raise InvalidArgument("frame and point dimensions differ")
        if not _orthonormal_rows(frame):
            raise InvalidArgument("carrier frame is not orthonormal")
        i, j = self.labels
        if i == j:
            raise InvalidArgument("interface labels must differ")
        ext = tuple(float(e) for e in self.extent)
        if len(ext) == 2 and not ext[0] <= ext[1]:
            raise InvalidArgument("extent bounds must be ordered")
        if self.kind in ("segment", "ray", "half-space-boundary") and len(ext) != 2:
            raise InvalidArgument(f"{self.kind} needs (lower, upper) extent")
        if self.kind == "wedge2D-in-plane":
            if frame.shape[0] != 2 or len(ext) != 2:
                raise InvalidArgument("wedge needs a 2-row frame and angle bounds")
            if ext[1] - ext[0] > 2.0 * math.pi + 1e-12:
                raise InvalidArgument("wedge angle exceeds a full turn")
        if self.kind == "hyperplane" and frame.shape[0] != point.size - 1:
            raise InvalidArgument("hyperplane frame must span d-1 directions")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "extent", ext)
        if self.normal is not None:
            object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))

    @property
    def ambient_dim(self) -> int:
        return self.point.size

    def sample_point(self) -> np.ndarray:
        """A point on the piece (interior where possible)."""
        if self.kind == "wedge2D-in-plane":
            t = 0.5 * (self.extent[0] + self.extent[1])
            return self.point + self.frame[0] * math.cos(t) + self.frame[1] * math.sin(t)
        if self.kind in ("segment", "ray", "half-space-boundary"):
            lo, hi = self.extent
            s = 0.5 * (lo + hi) if math.isfinite(hi) else lo + 1.0
            return self.point + s * self.frame[0]
        return self.point.copy()


def _ray_direction(z: SimplexDirections, i: int, j: int) -> np.ndarray:
    # Sigma_ij for m = 3 is the ray y + s (z_i + z_j), i.e. along -z_k
    d = z[i] + z[j]
    return d / np.linalg.norm(d)


def interfaces_of(p: SimplicialPartition) -> list[InterfacePiece]:
    """Closed-form catalog of interface pieces for m in {2, 3, 4}."""
    m = p.m
    if m > 4:
        raise Unsupported("interface catalog is closed-form only for m <= 4")
    z = p.directions
    y = p.shift
    pieces = []
    for i, j in itertools.combinations(range(1, m + 1), 2):
        diff = z[j] - z[i]
        normal = diff / np.linalg.norm(diff)
        if m == 2:
            frame = np.zeros((0, 1))
            pieces.append(InterfacePiece("hyperplane", y, frame, (), (i, j), normal))
        elif m == 3:
            d = _ray_direction(z, i, j)
            pieces.append(
                InterfacePiece("ray", y, d[None, :], (0.0, math.inf), (i, j), normal)
            )
        else:
            k, l = [q for q in range(1, m + 1) if q not in (i, j)]
            e1 = -z[k]
            e2 = -z[l] - (-z[l] @ e1) * e1
            e2 /= np.linalg.norm(e2)
            theta = math.atan2(float(-z[l] @ e2), float(-z[l] @ e1))
            pieces.append(
                InterfacePiece(
                    "wedge2D-in-plane", y, np.array([e1, e2]), (0.0, theta), (i, j), normal
                )
            )
    return pieces


def barycenter_rank(regions, tolerance: float = 1e-8) -> int:
    """Numerical rank of the matrix of Gaussian barycenters of a partition.

    Singular values above ``tolerance * largest`` count. Raises
    :class:`~gaussbubble.errors.InconsistentPartition` when the region
    volumes do not sum to one within ``tolerance``.
    """
    return barycenter_spectrum(regions, tolerance)[0]


def barycenter_spectrum(regions, tolerance: float = 1e-8):
    """``(rank, singular_values, barycenter_matrix)`` for a partition."""
    from .measure import barycenter, gaussian_volume
    from .errors import InconsistentPartition

    regions = list(regions)
    if not regions:
        raise InvalidArgument("no regions given")
    total = sum(gaussian_volume(r).value for r in regions)
    if abs(total - 1.0) > tolerance:
        raise InconsistentPartition(
            f"region volumes sum to {total:.15g}, not 1 (tolerance {tolerance:g})"
        )
    B = np.array([barycenter(r)[0] for r in regions])
    sv = np.linalg.svd(B, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv, B
    return int(np.sum(sv > tolerance * sv[0])), sv, B


def circumcircle_curvature(prev, cur, nxt):
    """Curvature vector of the circle through three consecutive polyline nodes.

    Points toward the circumcenter with magnitude ``1 / radius``; zero for
    collinear triples. Arrays of shape (..., 2) are handled elementwise.
    """
    prev, cur, nxt = (np.asarray(p, dtype=float) for p in (prev, cur, nxt))
    u = prev - cur
    w = nxt - cur
    uu = np.sum(u * u, axis=-1)
    ww = np.sum(w * w, axis=-1)
    d = 2.0 * (u[..., 0] * w[..., 1] - u[..., 1] * w[..., 0])
    num = np.stack([w[..., 1] * uu - u[..., 1] * ww, u[..., 0] * ww - w[..., 0] * uu], axis=-1)
    nn = np.sum(num * num, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = num * (d / np.where(nn > 0, nn, 1.0))[..., None]
    return np.where((nn > 0)[..., None], k, 0.0)
