"""Least-squares ellipse fitting.

Angles follow the usual counter-clockwise convention in the (x, y) frame: the
boundary point at parameter t is ``c + a cos t (cos th, sin th) + b sin t (-sin th, cos th)``.

``ellifit`` solves an unconstrained linear problem in five intermediate
variables (``PhiVector``) whose implied conic is

    phi1 x^2 + phi2 x y + y^2 - phi3 x - phi4 y + phi5 = 0,

and maps them back to geometric parameters, rejecting non-elliptic solutions.
``fitzgibbon`` and ``nsaf`` are the constrained algebraic fits.
"""

from dataclasses import dataclass
import math

import numpy as np

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class EllipseGeometric:
    a: float
    b: float
    theta: float
    xc: float
    yc: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("semi-axes must be positive")
        if self.b > self.a * (1 + 1e-12):
            raise ValueError("semi-minor axis exceeds semi-major axis")
        if not (0 <= self.theta < math.pi):
            raise ValueError("theta must lie in [0, pi)")
        if not (math.isfinite(self.xc) and math.isfinite(self.yc)):
            raise ValueError("centre must be finite")

    @classmethod
    def normalized(cls, a, b, theta, xc, yc):
        """Build from any axis order / angle, swapping axes and wrapping the angle as needed."""
        if b > a:
            a, b, theta = b, a, theta + math.pi / 2
        theta = math.fmod(theta, math.pi)
        if theta < 0:
            theta += math.pi
        if theta >= math.pi:
            theta = 0.0
        return cls(float(a), float(b), float(theta), float(xc), float(yc))

    def to_json(self):
        return {"a": self.a, "b": self.b, "theta": self.theta, "xc": self.xc, "yc": self.yc}

    def boundary(self, t):
        t = np.asarray(t, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = self.a * np.cos(t)
        v = self.b * np.sin(t)
        return np.stack([self.xc + u * c - v * s, self.yc + u * s + v * c], axis=-1)

    def implicit(self, pts):
        """Normalised implicit value: negative inside, zero on, positive outside."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx = pts[:, 0] - self.xc
        dy = pts[:, 1] - self.yc
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 - 1


@dataclass(frozen=True)
class PhiVector:
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    phi5: float

    def as_array(self):
        return np.array([self.phi1, self.phi2, self.phi3, self.phi4, self.phi5])


@dataclass(frozen=True)
class FitResult:
    ellipse: EllipseGeometric = None
    mean_distance: float = 0.0
    residual: float = 0.0
    rejected: str = None

    def to_json(self):
        return {"ellipse": None if self.ellipse is None else self.ellipse.to_json(),
                "rejected": self.rejected, "mean_distance": self.mean_distance}


def geometric_distance(E, pts, samples=720, iterations=40):
    """Distance from each point to the ellipse boundary.

    Coarse search over ``samples`` boundary parameters, then golden-section
    refinement inside the bracketing cell.
    """
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    t = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    bnd = E.boundary(t)
    out = np.empty(len(pts))
    step = 2 * np.pi / samples
    for start in range(0, len(pts), 2048):
        chunk = pts[start:start + 2048]
        d2 = ((chunk[:, None, :] - bnd[None, :, :]) ** 2).sum(-1)
        t0 = t[np.argmin(d2, axis=1)]
        lo, hi = t0 - step, t0 + step

        def dist(tt):
            return np.hypot(*(E.boundary(tt) - chunk).T)

        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        f1, f2 = dist(x1), dist(x2)
        for _ in range(iterations):
            left = f1 < f2
            hi = np.where(left, x2, hi)
            lo = np.where(left, lo, x1)
            x2n = np.where(left, x1, lo + _GOLDEN * (hi - lo))
            x1n = np.where(left, hi - _GOLDEN * (hi - lo), x2)
            f1n = np.where(left, dist(x1n), f2)
            f2 = np.where(left, f1, dist(x2n))
            f1 = f1n
            x1, x2 = x1n, x2n
        out[start:start + 2048] = np.minimum(np.minimum(f1, f2), np.sqrt(d2.min(axis=1)))
    return float(out[0]) if single else out


def phi_forward(E):
    """Intermediate variables of an ellipse."""
    a2, b2 = E.a ** 2, E.b ** 2
    c, s = math.cos(E.theta), math.sin(E.theta)
    alpha = a2 * s * s + b2 * c * c
    beta = a2 * c * c + b2 * s * s
    gamma = -(a2 - b2) * math.sin(2 * E.theta)
    p1 = alpha / beta
    p2 = gamma / beta
    p3 = 2 * p1 * E.xc + p2 * E.yc
    p4 = 2 * E.yc + p2 * E.xc
    p5 = p1 * E.xc ** 2 + E.yc ** 2 + p2 * E.xc * E.yc - a2 * b2 / beta
    return PhiVector(p1, p2, p3, p4, p5)


def phi_exists(phi):
    """True when the variables describe a real ellipse: phi1 > 0 and both squared semi-axes positive."""
    p1, p2, p3, p4, p5 = phi.as_array() if isinstance(phi, PhiVector) else phi
    if not p1 > 0:
        return False
    det = 4 * p1 - p2 * p2
    if not det > 0:
        return False
    # a^2 b^2 / beta, written straight from phi
    k = (p4 * p4 * p1 + p3 * p3 - p2 * p3 * p4) / det - p5
    return bool(math.isfinite(k) and k > 0)


def phi_inverse(phi):
    """Geometric ellipse for the intermediate variables, or ``None`` when non-elliptic."""
    p1, p2, p3, p4, p5 = phi.as_array() if isinstance(phi, PhiVector) else phi
    if not all(math.isfinite(v) for v in (p1, p2, p3, p4, p5)):
        return None
    if not p1 > 0 or p2 * p2 - 4 * p1 >= 0:
        return None
    # extended precision: the constant term cancels heavily for thin, off-origin ellipses
    q1, q2, q3, q4, q5 = (np.longdouble(v) for v in (p1, p2, p3, p4, p5))
    disc = q2 * q2 - 4 * q1
    xc = (q2 * q4 - 2 * q3) / disc
    yc = (q2 * q3 - 2 * q1 * q4) / disc
    # a^2 b^2 / beta
    k = q1 * xc * xc + yc * yc + q2 * xc * yc - q5
    if not k > 0:
        return None
    root = np.sqrt((1 - q1) ** 2 + q2 * q2)
    # 2k / ((1 + p1) - root) rewritten without the cancellation
    a_sq = float(2 * k * ((1 + q1) + root) / (-disc))
    b_sq = float(2 * k / ((1 + q1) + root))
    xc, yc = float(xc), float(yc)
    if not all(math.isfinite(v) and v > 0 for v in (a_sq, b_sq)) or not (math.isfinite(xc) and math.isfinite(yc)):
        return None
    if abs(p2) < 1e-9 and abs(p1 - 1) < 1e-9:
        theta = 0.0
    else:
        theta = 0.5 * math.atan2(-p2, 1 - p1)
    return EllipseGeometric.normalized(math.sqrt(a_sq), math.sqrt(b_sq), theta, xc, yc)


def _finish(ellipse, pts, residual, with_distance):
    if ellipse is None:
        return FitResult(None, 0.0, residual, "non_elliptic")
    md = float(np.mean(geometric_distance(ellipse, pts))) if with_distance else 0.0
    return FitResult(ellipse, md, residual, None)


def _reference(pts):
    # integer pixel data gets an integer origin, so integer shifts of the input pass through exactly
    if np.all(pts == np.round(pts)) and np.abs(pts).max() < 2 ** 52 // max(len(pts), 1):
        sums = pts.sum(axis=0).astype(np.int64)
        return (sums // len(pts)).astype(float)
    return np.round(pts.mean(axis=0))


def ellifit(points, with_distance=True):
    """Unconstrained linear least squares in the intermediate variables, then inverse map."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 7:
        return FitResult(rejected="too_few_points")
    centre = _reference(pts)
    x, y = (pts - centre).T
    X = np.column_stack([-x * x, -x * y, x, y, -np.ones_like(x)])
    Y = y * y
    G = X.T @ X
    try:
        if np.linalg.cond(G) > 1e14:
            raise np.linalg.LinAlgError
        phi = np.linalg.solve(G, X.T @ Y)
    except np.linalg.LinAlgError:
        return FitResult(rejected="degenerate")
    residual = float(np.linalg.norm(Y - X @ phi) ** 2 / len(pts))
    if not phi_exists(phi):
        return FitResult(None, 0.0, residual, "non_elliptic")
    local = phi_inverse(phi)
    if local is None:
        return FitResult(None, 0.0, residual, "non_elliptic")
    E = EllipseGeometric(local.a, local.b, local.theta, local.xc + centre[0], local.yc + centre[1])
    return _finish(E, pts, residual, with_distance)


def design_matrix(pts):
    x, y = np.asarray(pts, dtype=float).reshape(-1, 2).T
    return np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])


def scatter_matrix(pts):
    D = design_matrix(pts)
    return D.T @ D


def conic_to_geometric(coef):
    """Geometric ellipse of ``a x^2 + b xy + c y^2 + d x + f y + g = 0``; ``None`` if not an ellipse."""
    A, B, C, Dd, F, G = [float(v) for v in coef]
    if B * B - 4 * A * C >= 0 or C == 0:
        return None
    return phi_inverse((A / C, B / C, -Dd / C, -F / C, G / C))


def _fitzgibbon_coefficients(pts):
    D = design_matrix(pts)
    S = D.T @ D
    S1, S2, S3 = S[:3, :3], S[:3, 3:], S[3:, 3:]
    T = -np.linalg.solve(S3, S2.T)
    M = S1 + S2 @ T
    # inverse of the 3x3 block of the constraint matrix 4ac - b^2
    C1_inv = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 0.0], [0.5, 0.0, 0.0]])
    vals, vecs = np.linalg.eig(C1_inv @ M)
    vals, vecs = np.real(vals), np.real(vecs)
    cons = 4 * vecs[0] * vecs[2] - vecs[1] ** 2
    ok = np.nonzero(cons > 0)[0]
    if len(ok) == 0:
        return None
    k = ok[np.argmin(np.abs(vals[ok]))]
    a1 = vecs[:, k]
    coef = np.concatenate([a1, T @ a1])
    return coef / np.linalg.norm(coef)


def fitzgibbon(points, with_distance=True):
    """Direct ellipse-specific algebraic fit (constraint 4ac - b^2 = 1)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 6:
        return FitResult(rejected="too_few_points")
    try:
        coef = _fitzgibbon_coefficients(pts)
    except np.linalg.LinAlgError:
        return FitResult(rejected="degenerate")
    if coef is None or not np.all(np.isfinite(coef)):
        return FitResult(rejected="degenerate")
    residual = float(np.linalg.norm(design_matrix(pts) @ coef) ** 2 / len(pts))
    E = conic_to_geometric(coef)
    if E is None:
        return FitResult(None, 0.0, residual, "degenerate")
    return _finish(E, pts, residual, with_distance)


def nsaf(points, with_distance=True):
    """``fitzgibbon`` in coordinates centred near the point mean."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 6:
        return FitResult(rejected="too_few_points")
    centre = _reference(pts)
    res = fitzgibbon(pts - centre, with_distance=False)
    if res.ellipse is None:
        return res
    E = res.ellipse
    E = EllipseGeometric(E.a, E.b, E.theta, E.xc + centre[0], E.yc + centre[1])
    return _finish(E, pts, res.residual, with_distance)


def condition_inf(matrix):
    """Infinity-norm condition number ``||M|| ||M^-1||``."""
    return float(np.linalg.cond(np.asarray(matrix, dtype=float), np.inf))
