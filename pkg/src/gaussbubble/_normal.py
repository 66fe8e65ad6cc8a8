"""Standard-normal building blocks shared by the measure routines.

The scalar CDF, its inverse and Owen's T function come from ``scipy.special``;
everything here assembles those into orthant probabilities and planar wedge
measures with explicit absolute error bounds.
"""

import math

import numpy as np
from scipy import integrate, special

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
INV_SQRT2PI = 1.0 / SQRT2PI

#: Truncation radius for quadrature domains; the standard normal tail beyond
#: it is below 1e-17 and is added to reported error bounds.
TRUNCATION_RADIUS = 8.5
TAIL_MASS = float(special.ndtr(-TRUNCATION_RADIUS))

QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-12


def norm_cdf(x):
    return special.ndtr(x)


def norm_sf(x):
    return special.ndtr(np.negative(x))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return INV_SQRT2PI * np.exp(-0.5 * x * x)


def norm_ppf(p):
    return special.ndtri(p)


def phi_diff(a, b):
    """``Phi(b) - Phi(a)`` without cancellation in either tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = special.ndtr(-a) - special.ndtr(-b)
    lower = special.ndtr(b) - special.ndtr(a)
    return np.where(a >= 0.0, upper, lower)


def _owen_term(h, k, rho, s):
    # T(h, (k - rho h) / (h s)); the h = 0 value is the h -> 0+ limit, which
    # pairs with the tie rule used for ``beta`` in ``bvn_cdf``.
    if h == 0.0:
        return 0.25 * math.copysign(1.0, k) if k != 0.0 else 0.0
    return float(special.owens_t(h, (k - rho * h) / (h * s)))


def bvn_cdf(a, b, rho):
    """P(X <= a, Y <= b) for standard normals with correlation ``rho``."""
    if not -1.0 < rho < 1.0:
        raise ValueError("correlation must lie in (-1, 1)")
    if math.isinf(a) or math.isinf(b):
        if a == -math.inf or b == -math.inf:
            return 0.0
        return float(special.ndtr(b if math.isinf(a) else a))
    if a == 0.0 and b == 0.0:
        return 0.25 + math.asin(rho) / (2.0 * math.pi)
    s = math.sqrt(1.0 - rho * rho)
    if a * b > 0.0 or (a * b == 0.0 and a + b >= 0.0):
        beta = 0.0
    else:
        beta = 0.5
    val = (
        0.5 * special.ndtr(a)
        + 0.5 * special.ndtr(b)
        - _owen_term(a, b, rho, s)
        - _owen_term(b, a, rho, s)
        - beta
    )
    return min(max(float(val), 0.0), 1.0)


def bvn_upper(h, k, rho):
    """P(X >= h, Y >= k) for standard normals with correlation ``rho``."""
    return bvn_cdf(-h, -k, rho)


def orthant_probability(cov, lower):
    """P(W >= lower) for W ~ N(0, cov) in dimension 1, 2 or 3.

    Returns ``(value, abs_error_bound, method)``. Dimensions 1 and 2 are
    closed forms (normal CDF, Owen's T); dimension 3 conditions on the first
    coordinate and integrates the bivariate closed form adaptively.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    c = np.atleast_1d(np.asarray(lower, dtype=float))
    n = c.size
    sd = np.sqrt(np.diag(cov))
    z = c / sd
    if n == 1:
        return float(special.ndtr(-z[0])), 1e-16, "closed-form"
    corr = cov / np.outer(sd, sd)
    if n == 2:
        return bvn_upper(z[0], z[1], corr[0, 1]), 1e-15, "closed-form"
    if n != 3:
        raise ValueError("orthant probabilities implemented for dimension <= 3")

    # condition on the standardized first coordinate Z1 = z1
    r12, r13, r23 = corr[0, 1], corr[0, 2], corr[1, 2]
    s2 = math.sqrt(1.0 - r12 * r12)
    s3 = math.sqrt(1.0 - r13 * r13)
    rho_c = (r23 - r12 * r13) / (s2 * s3)

    def integrand(t):
        return math.exp(-0.5 * t * t) * INV_SQRT2PI * bvn_upper(
            (z[1] - r12 * t) / s2, (z[2] - r13 * t) / s3, rho_c
        )

    lo = max(z[0], -TRUNCATION_RADIUS)
    hi = TRUNCATION_RADIUS
    if lo >= hi:
        return 0.0, float(special.ndtr(-z[0])) + 1e-16, "adaptive-quadrature"
    val, err = integrate.quad(
        integrand, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200
    )
    return max(val, 0.0), err + 2.0 * TAIL_MASS, "adaptive-quadrature"


def _wedge_radial(w, theta):
    """(1/2pi) * integral_0^inf exp(-|w + r u|^2/2) r dr for u = (cos, sin)(theta)."""
    b = w[0] * math.cos(theta) + w[1] * math.sin(theta)
    c = w[0] * w[0] + w[1] * w[1]
    if b > 0.0:
        # e^{b^2/2} Phi(-b) through erfcx avoids cancellation for large b
        inner = math.exp(-0.5 * c) * (
            1.0 - b * math.sqrt(math.pi / 2.0) * special.erfcx(b / SQRT2)
        )
    else:
        inner = math.exp(-0.5 * c) - b * SQRT2PI * math.exp(
            -0.5 * (c - b * b)
        ) * special.ndtr(-b)
    return inner / (2.0 * math.pi)


def wedge_measure_2d(apex, theta_a, theta_b):
    """Standard 2-D Gaussian measure of the planar wedge with the given apex.

    The wedge is ``{apex + r (cos t, sin t) : r >= 0, theta_a <= t <= theta_b}``.
    The radial integral is closed form; the angular one is adaptive.
    Returns ``(value, abs_error_bound, method)``.
    """
    w = np.asarray(apex, dtype=float)
    if theta_b < theta_a:
        raise ValueError("wedge angle bounds must be ordered")
    if not np.any(w):
        return (theta_b - theta_a) / (2.0 * math.pi), 1e-16, "closed-form"
    val, err = integrate.quad(
        lambda t: _wedge_radial(w, t),
        theta_a,
        theta_b,
        epsabs=QUAD_EPSABS,
        epsrel=QUAD_EPSREL,
        limit=200,
    )
    return val, err, "adaptive-quadrature"


def _wedge_radial_moment(w, theta):
    # (1/2pi) int_0^inf (w + r u) exp(-|w + r u|^2/2) r dr, via
    # I_n(b) = int_b^inf s^n e^{-s^2/2} ds after the shift s = r + b.
    u = np.array([math.cos(theta), math.sin(theta)])
    b = float(w @ u)
    c = float(w @ w)
    i0 = SQRT2PI * special.ndtr(-b)
    i1 = math.exp(-0.5 * b * b)
    i2 = b * i1 + i0
    pref = math.exp(-0.5 * (c - b * b)) / (2.0 * math.pi)
    m1 = pref * (i1 - b * i0)
    m2 = pref * (i2 - 2.0 * b * i1 + b * b * i0)
    return w * m1 + u * m2


def wedge_moment_2d(apex, theta_a, theta_b):
    """First moment ``int x gamma_2(x) dx`` over a planar wedge, with error bound."""
    w = np.asarray(apex, dtype=float)
    out = np.zeros(2)
    err = 0.0
    for k in range(2):
        val, e = integrate.quad(
            lambda t: _wedge_radial_moment(w, t)[k],
            theta_a,
            theta_b,
            epsabs=QUAD_EPSABS,
            epsrel=QUAD_EPSREL,
            limit=200,
        )
        out[k] = val
        err += e
    return out, err
