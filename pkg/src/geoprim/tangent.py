"""Tangent estimation on digital curves and three-point ellipse centres.

The estimator draws a ring of radius ``R`` around the pixel of interest,
walks the curve both ways to the first pixels on that ring and takes the slope
of the chord joining them. Its error splits into an analytic part (curvature
of the underlying conic) and a digital part (rounding of the two ring pixels).
"""

from dataclasses import dataclass
import math

import numpy as np

RING_HALF_WIDTH = 1 / math.sqrt(2)


@dataclass(frozen=True)
class TangentEstimate:
    slope_angle: float
    anchor: tuple
    p1: tuple
    p2: tuple
    radius_used: float


@dataclass(frozen=True)
class DebBounds:
    analytic: float
    digital: float
    total: float


def fold_angle(phi):
    """Map a line direction to (-pi/2, pi/2]."""
    phi = math.fmod(phi, math.pi)
    if phi <= -math.pi / 2:
        phi += math.pi
    elif phi > math.pi / 2:
        phi -= math.pi
    return phi


def _ring_pixel(pts, index, R, step, closed):
    n = len(pts)
    x0, y0 = pts[index]
    for p in range(1, n):
        j = index + step * p
        if closed:
            j %= n
        elif not 0 <= j < n:
            break
        if j == index:
            break
        if abs(math.hypot(pts[j][0] - x0, pts[j][1] - y0) - R) < RING_HALF_WIDTH:
            return j
    raise ValueError("insufficient arc")


def deb_tangent(curve, index, R):
    """Tangent direction at ``curve.points[index]`` from the chord between the two ring crossings."""
    if R < 2:
        raise ValueError("R must be at least 2")
    pts = curve.points
    j1 = _ring_pixel(pts, index, R, -1, curve.closed)
    j2 = _ring_pixel(pts, index, R, +1, curve.closed)
    p1, p2 = pts[j1], pts[j2]
    angle = fold_angle(math.atan2(float(p2[1] - p1[1]), float(p2[0] - p1[0])))
    return TangentEstimate(angle, tuple(int(v) for v in pts[index]), tuple(int(v) for v in p1),
                           tuple(int(v) for v in p2), float(R))


def deb_tangents(curve, R, indices=None):
    """Angles at many pixels; ``nan`` where the ring is not reached."""
    idx = range(len(curve.points)) if indices is None else indices
    out = []
    for i in idx:
        try:
            out.append(deb_tangent(curve, i, R).slope_angle)
        except ValueError:
            out.append(math.nan)
    return np.array(out)


def analytic_bound(e, a, theta0, R):
    """Curvature part of the tangent error for the conic ``r (1 - e cos t) = a e`` (vectorised)."""
    e = np.asarray(e, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 1 - e * np.cos(theta0)
        D = g ** 2 * (R / (a * e)) / np.sqrt((e * np.sin(theta0)) ** 2 + g ** 2)
        d = e * np.sin(theta0) / g
        m0 = e / np.sin(theta0) - np.cos(theta0) / np.sin(theta0)
        out = np.abs(0.5 * e * d * D ** 3 / np.sin(theta0) / (1 + m0 ** 2))
    out = np.where(e == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def digital_bound(s, phi):
    """Rounding part of the tangent error for a chord of length ``s`` at angle ``phi``."""
    c, sn = math.cos(phi), math.sin(phi)
    best = 0.0
    for first in (1, -1):
        lead = abs(sn + first * c)
        for sa in (1, -1):
            for sb in (1, -1):
                u = sa * c + sb * sn
                best = max(best, lead * abs(s * s - s * u + u * u) / s ** 3)
    return best


def _conic_point(e, a, theta):
    r = a * e / (1 - e * math.cos(theta))
    return r * math.cos(theta), r * math.sin(theta)


def _ring_chord(e, a, theta0, R):
    """Length and direction of the chord between the ring crossings on the analytic curve."""
    if e == 0:
        # circle of radius a: the chord is parallel to the tangent
        s = 2 * R * math.sqrt(max(0.0, 1 - (R / (2 * a)) ** 2))
        return s, theta0 + math.pi / 2
    g = 1 - e * math.cos(theta0)
    D = g ** 2 * (R / (a * e)) / math.sqrt((e * math.sin(theta0)) ** 2 + g ** 2)
    d = e * math.sin(theta0) / g
    geo = 1 / (1 - (d * D) ** 2)
    t1 = theta0 + D * (d * D - 1) * geo
    t2 = theta0 + D * (d * D + 1) * geo
    (x1, y1), (x2, y2) = _conic_point(e, a, t1), _conic_point(e, a, t2)
    return math.hypot(x2 - x1, y2 - y1), math.atan2(y2 - y1, x2 - x1)


def deb_bounds(e, a, theta0, R):
    """Analytic, digital and total tangent error bounds (radians).

    ``a`` is the focal parameter of ``r (1 - e cos t) = a e``; for a circle
    (``e = 0``) it is taken as the radius.
    """
    if a <= 0 or e < 0:
        raise ValueError("need e >= 0 and a > 0")
    if e > 0 and 1 - e * math.cos(theta0) <= 0:
        raise ValueError("theta0 is not on the curve")
    if e > 0 and (1 + 1 / e) * R / a >= 1:
        raise ValueError("R too large for conic")
    analytic = 0.0 if e == 0 else analytic_bound(e, a, theta0, R)
    s, phi = _ring_chord(e, a, theta0, R)
    digital = digital_bound(s, fold_angle(phi))
    return DebBounds(float(analytic), float(digital), float(analytic + digital))


def conic_tangent_angle(e, theta0):
    """Exact tangent direction of the conic at polar angle ``theta0`` (circle when ``e = 0``)."""
    # slope e csc - cot, kept as a direction so sin = 0 stays finite
    return fold_angle(math.atan2(e - math.cos(theta0), math.sin(theta0)))


def choose_R(rho_min, D_tol=0.5, h=1.0):
    """Ring radius keeping the normalised ring size below ``D_tol`` for curvature radius ``rho_min``."""
    return D_tol * rho_min * h


def _yuen_raw(p1, p2, p3, t1, t2, t3):
    (x1, y1), (x2, y2), (x3, y3) = p1, p2, p3
    k1, k2, k3 = math.tan(t1), math.tan(t2), math.tan(t3)

    def terms(xa, ya, xb, yb, ka, kb):
        A = yb ** 2 - ya ** 2 - (xb * yb - xa * ya) * (ka + kb) + (xb ** 2 - xa ** 2) * ka * kb
        B = (yb - ya) * (ka + kb) - 2 * (xb - xa) * ka * kb
        C = 2 * (yb - ya) - (xb - xa) * (ka + kb)
        return A, B, C

    A12, B12, C12 = terms(x1, y1, x2, y2, k1, k2)
    A23, B23, C23 = terms(x2, y2, x3, y3, k2, k3)
    den = B12 * C23 - B23 * C12
    scale = abs(B12 * C23) + abs(B23 * C12)
    if not math.isfinite(den) or abs(den) < 1e-9 or abs(den) <= 1e-12 * scale:
        raise ValueError("yuen degenerate")
    return -(A12 * C23 - A23 * C12) / den, -(A12 * B23 - A23 * B12) / den


def yuen_center(p1, p2, p3, t1, t2, t3):
    """Ellipse centre from three boundary points and their tangent angles."""
    ts = (t1, t2, t3)
    if min(abs(math.cos(t)) for t in ts) >= 0.3:
        return _yuen_raw(p1, p2, p3, t1, t2, t3)
    # slopes blow up near vertical tangents: solve in a rotated frame where all are tame
    psi = max((k * math.pi / 8 for k in range(8)), key=lambda a: min(abs(math.cos(t - a)) for t in ts))
    c, s = math.cos(psi), math.sin(psi)
    rot = [(c * x + s * y, -s * x + c * y) for x, y in (p1, p2, p3)]
    u, v = _yuen_raw(*rot, *(t - psi for t in ts))
    return c * u - s * v, s * u + c * v


def center_error(actual, computed):
    return math.hypot(actual[0] - computed[0], actual[1] - computed[1])
