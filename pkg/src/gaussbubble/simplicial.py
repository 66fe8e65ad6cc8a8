"""Cost functional of shifted simplicial partitions and its derivative checks.

For a volume vector ``a`` the shift ``y(a)`` is the unique point making the
sector volumes equal to ``a``; the cost ``I(a)`` is the total weighted
interface measure of that partition. The first and second directional
derivatives of ``I`` are compared against closed identities built from the
Lagrange multipliers and the interface matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _io
from ._normal import SQRT2PI
from ._validation import check_m, check_volume_vector, check_zero_sum
from .errors import CancellationWarning, InvalidArgument, NumericFailure, StructuralViolation
from .geometry import SimplicialPartition, interfaces_of, regular_simplex_vertices
from .measure import MeasureResult, SectorRegion, barycenter, gaussian_volume, interface_measure

COCYCLE_TOL = 1e-10
PINV_RTOL = 1e-12


def _partition(y, m):
    m = check_m(m)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (m - 1,):
        raise InvalidArgument(f"shift must have {m - 1} entries for m={m}")
    return SimplicialPartition.from_shift(y, m)


def total_perimeter(y, m) -> MeasureResult:
    """Weighted interface measure ``B(y)`` of the partition shifted by ``y``."""
    p = _partition(y, m)
    return sum((interface_measure(piece) for piece in interfaces_of(p)), MeasureResult(0.0))


def sector_volumes(y, m):
    """Gaussian volumes of the ``m`` sectors and their error bounds."""
    p = _partition(y, m)
    res = [gaussian_volume(SectorRegion(p, i)) for i in range(1, m + 1)]
    return np.array([r.value for r in res]), np.array([r.abs_error_bound for r in res])


def barycenter_matrix(y, m):
    """Rows are the Gaussian barycenters of the sectors; ``dV/dy = -B``."""
    p = _partition(y, m)
    return np.array([barycenter(SectorRegion(p, i))[0] for i in range(1, m + 1)])


@dataclass(frozen=True)
class ShiftSolution:
    a: np.ndarray
    y: np.ndarray
    volumes: np.ndarray
    residual: float
    iterations: int
    volume_error_bound: float = 0.0

    @property
    def m(self):
        return self.a.size

    def partition(self) -> SimplicialPartition:
        return SimplicialPartition.from_shift(self.y, self.m)

    def to_dict(self):
        return {
            "a": self.a.tolist(),
            "y": self.y.tolist(),
            "volumes": self.volumes.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "volume_error_bound": self.volume_error_bound,
        }


def solve_shift(a, tol=1e-9, max_iter=50, target=1e-13) -> ShiftSolution:
    """Newton solve for the shift ``y`` whose sectors have Gaussian volumes ``a``.

    Iterates on the first ``m - 1`` volume equations with the Jacobian given
    by minus the sector barycenters, halving the step whenever the residual
    fails to drop. Stops once the max-norm residual reaches ``target`` or
    stagnates below ``tol``.

    Raises
    ------
    InvalidArgument
        If ``a`` is not a strictly positive vector summing to one.
    NumericFailure
        If the residual is still above ``tol`` after ``max_iter`` iterations;
        ``last_iterate`` holds the final shift.
    """
    a = check_volume_vector(a)
    m = check_m(a.size)
    y = np.zeros(m - 1)
    vols, errs = sector_volumes(y, m)
    res = float(np.max(np.abs(vols - a)))
    it = 0
    while res > target and it < max_iter:
        it += 1
        J = -barycenter_matrix(y, m)[: m - 1]
        try:
            step = np.linalg.solve(J, a[: m - 1] - vols[: m - 1])
        except np.linalg.LinAlgError:
            raise NumericFailure(
                "singular volume Jacobian", last_iterate=y, diagnostics={"residual": res}
            ) from None
        alpha = 1.0
        for _ in range(40):
            y_new = y + alpha * step
            v_new, e_new = sector_volumes(y_new, m)
            r_new = float(np.max(np.abs(v_new - a)))
            if r_new < res:
                break
            alpha *= 0.5
        else:
            break  # no descent left: at the accuracy floor of the volumes
        y, vols, errs, res = y_new, v_new, e_new, r_new
    if res > tol:
        raise NumericFailure(
            f"shift solve stalled with residual {res:.3e}",
            last_iterate=y,
            diagnostics={"residual": res, "iterations": it},
        )
    return ShiftSolution(a, y, vols, res, it, float(np.max(errs)))


def cost(a, tol=1e-9) -> MeasureResult:
    """Cost ``I(a) = B(y(a))`` with an error bound covering the volume residual."""
    sol = solve_shift(a, tol=tol)
    B = total_perimeter(sol.y, sol.m)
    lam = multipliers(sol.y, sol.m).lam
    # dI = sqrt(2 pi) <lambda, dV>, so a volume mismatch r moves I by at most this
    extra = SQRT2PI * float(np.sum(np.abs(lam))) * (sol.residual + sol.volume_error_bound)
    return MeasureResult(B.value, B.abs_error_bound + extra, B.method)


@dataclass(frozen=True)
class InterfaceMatrix:
    """``K = sum_{i<j} gamma(Sigma_ij) (u_i - u_j)(u_i - u_j)^T`` on R^m."""

    K: np.ndarray
    measures: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.K.shape[0]

    def pinv(self, rtol=PINV_RTOL):
        """Pseudo-inverse via eigendecomposition; tiny eigenvalues are dropped."""
        w, V = np.linalg.eigh(self.K)
        keep = w > rtol * max(float(np.max(w)), 0.0)
        inv = np.zeros_like(w)
        inv[keep] = 1.0 / w[keep]
        return (V * inv) @ V.T

    def quadratic_inverse(self, b):
        b = np.asarray(b, dtype=float)
        return float(b @ self.pinv() @ b)

    def to_dict(self):
        return {
            "K": self.K.tolist(),
            "measures": {f"{i},{j}": v for (i, j), v in self.measures.items()},
        }


def interface_matrix(y, m) -> InterfaceMatrix:
    p = _partition(y, m)
    K = np.zeros((m, m))
    measures = {}
    for piece in interfaces_of(p):
        i, j = piece.labels
        g = interface_measure(piece).value
        measures[(i, j)] = g
        K[i - 1, i - 1] += g
        K[j - 1, j - 1] += g
        K[i - 1, j - 1] -= g
        K[j - 1, i - 1] -= g
    return InterfaceMatrix(K, measures)


@dataclass(frozen=True)
class MultiplierVector:
    lam: np.ndarray
    pairwise: dict
    residual: float

    def lam_ij(self, i, j):
        return float(self.lam[i - 1] - self.lam[j - 1])

    def to_dict(self):
        return {
            "lambda": self.lam.tolist(),
            "pairwise": {f"{i},{j}": v for (i, j), v in self.pairwise.items()},
            "cocycle_residual": self.residual,
        }


def fit_multipliers(pairwise, m, tol=COCYCLE_TOL) -> MultiplierVector:
    """Least-squares ``lambda`` with ``lambda_i - lambda_j = lambda_ij`` and zero sum.

    ``pairwise`` maps 1-based label pairs ``(i, j)`` to ``lambda_ij``.
    Raises :class:`StructuralViolation` if the system is inconsistent by more
    than ``tol``.
    """
    rows, rhs = [], []
    for (i, j), val in pairwise.items():
        r = np.zeros(m)
        r[i - 1], r[j - 1] = 1.0, -1.0
        rows.append(r)
        rhs.append(val)
    rows.append(np.ones(m))
    rhs.append(0.0)
    A, c = np.array(rows), np.array(rhs)
    lam = np.linalg.lstsq(A, c, rcond=None)[0]
    residual = float(np.max(np.abs(A @ lam - c)))
    if residual > tol:
        raise StructuralViolation(
            f"pairwise multipliers are not a cocycle (residual {residual:.3e})",
            residual=residual,
        )
    return MultiplierVector(lam, dict(pairwise), residual)


def multipliers(y, m, tol=COCYCLE_TOL) -> MultiplierVector:
    """Multipliers of the flat partition: ``lambda_ij = -<x, N_ij>`` on Sigma_ij."""
    p = _partition(y, m)
    pairwise = {}
    for piece in interfaces_of(p):
        x = piece.sample_point()
        pairwise[piece.labels] = -float(x @ piece.normal)
    return fit_multipliers(pairwise, m, tol)


@dataclass(frozen=True)
class DerivativeCheck:
    kind: str
    a: np.ndarray
    b: np.ndarray
    fd: float
    identity: float
    rel_err: float
    h: float

    def to_dict(self):
        return {
            "kind": self.kind,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "fd": self.fd,
            "identity": self.identity,
            "rel_err": self.rel_err,
            "h": self.h,
        }

    def to_json(self):
        return _io.dumps(self.to_dict())


def _prepare(a, b, h):
    a = check_volume_vector(a)
    m = check_m(a.size)
    b = check_zero_sum(b, m)
    if not h > 0:
        raise InvalidArgument("finite-difference step must be positive")
    if np.min(a - h * np.abs(b)) <= 0.0:
        raise InvalidArgument("finite-difference stencil leaves the simplex")
    return a, b, m


def _record(kind, a, b, fd, ident, h, scale, order):
    rel = abs(fd - ident) / max(abs(ident), 1e-6)
    # rounding in the stencil values is amplified by h^-order
    roundoff = 4.0 * np.finfo(float).eps * abs(scale) / h**order
    lost = abs(fd) < 1e-10 and abs(ident) > 1e-6
    if lost or roundoff > 1e-2 * max(abs(ident), 1e-6):
        warnings.warn(
            f"{kind}: step {h:g} leaves roundoff {roundoff:.1e} in the finite difference",
            CancellationWarning,
            stacklevel=3,
        )
    return DerivativeCheck(kind, a, b, float(fd), float(ident), float(rel), h)


def _cost_value(a):
    return cost(a).value


def gradient_check(a, b, h=1e-4) -> DerivativeCheck:
    """Central difference of ``eps -> I(a + eps b)`` against ``sqrt(2 pi) <lambda, b>``."""
    a, b, m = _prepare(a, b, h)
    cp, cm = _cost_value(a + h * b), _cost_value(a - h * b)
    fd = (cp - cm) / (2.0 * h)
    sol = solve_shift(a)
    ident = SQRT2PI * float(multipliers(sol.y, m).lam @ b)
    return _record("gradient", a, b, fd, ident, h, max(abs(cp), abs(cm)), 1)


def hessian_check(a, b, h=1e-3) -> DerivativeCheck:
    """Second central difference against ``-2 pi b^T K^+ b``."""
    a, b, m = _prepare(a, b, h)
    c0 = _cost_value(a)
    fd = (_cost_value(a + h * b) - 2.0 * c0 + _cost_value(a - h * b)) / (h * h)
    sol = solve_shift(a)
    ident = -2.0 * math.pi * interface_matrix(sol.y, m).quadratic_inverse(b)
    return _record("hessian", a, b, fd, ident, h, c0, 2)


# --------------------------------------------------------------------------
# matrix Cauchy-Schwarz


def cs_difference(D, E, weights=None):
    """``E[DD^T] - E[DE^T] E[EE^T]^{-1} E[ED^T]`` for a finite distribution.

    ``D`` is (n, p), ``E`` is (n, q); rows are atoms with probabilities
    ``weights`` (uniform by default).
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if D.shape[0] != E.shape[0]:
        raise InvalidArgument("D and E need the same number of atoms")
    n = D.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    DD = (D * w[:, None]).T @ D
    DE = (D * w[:, None]).T @ E
    EE = (E * w[:, None]).T @ E
    diff = DD - DE @ np.linalg.solve(EE, DE.T)
    return 0.5 * (diff + diff.T)


@dataclass
class CSReport:
    passed: bool
    trials: int
    min_eigenvalue: float
    tolerance: float
    counterexample: dict | None = None

    def to_dict(self):
        return {
            "passed": self.passed,
            "trials": self.trials,
            "min_eigenvalue": self.min_eigenvalue,
            "tolerance": self.tolerance,
            "counterexample": self.counterexample,
        }


def matrix_cs_check(trials=1000, seed=0, tol=1e-10, max_dim=4) -> CSReport:
    """Check the matrix Cauchy-Schwarz ordering on random finite distributions.

    Each trial draws dimensions ``p, q <= max_dim``, ``n`` atoms with
    Dirichlet weights and Gaussian values, rejecting draws whose ``E[EE^T]``
    has condition number above 1e4 so roundoff stays far below ``tol``.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = math.inf
    for t in range(trials):
        while True:
            p, q = rng.integers(1, max_dim + 1, size=2)
            n = int(rng.integers(q + 1, q + 8))
            D = rng.standard_normal((n, p))
            E = rng.standard_normal((n, q))
            if rng.random() < 0.25:
                E[:, : min(p, q)] += D[:, : min(p, q)]  # correlated pairs
            w = rng.dirichlet(np.ones(n))
            EE = (E * w[:, None]).T @ E
            if np.linalg.cond(EE) < 1e4:
                break
        lo = float(np.linalg.eigvalsh(cs_difference(D, E, w))[0])
        worst = min(worst, lo)
        if lo < -tol:
            return CSReport(
                False, t + 1, worst, tol,
                {"D": D.tolist(), "E": E.tolist(), "weights": w.tolist(), "min_eigenvalue": lo},
            )
    return CSReport(True, trials, worst, tol)


def simplex_permutation(sigma, m):
    """Orthogonal map ``R`` with ``R z_i = z_{sigma(i)}`` (``sigma`` 0-based)."""
    Z = regular_simplex_vertices(m).vectors
    sigma = np.asarray(sigma)
    return np.linalg.lstsq(Z, Z[sigma], rcond=None)[0].T
