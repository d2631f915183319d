"""Ellipse detection from edge maps by grouping smooth edge contours.

The pipeline runs in three stages:

1. Edge contours are split into smooth pieces at sharp turns and inflexions
   of their parameter-free polygonal approximation.
2. Every piece votes for ellipse centres with three-point tangent geometry.
   Contours sharing a centre bin are grouped, filtered by a search region and
   an associated-convexity test, and fitted with NSAF. The weakest contour is
   dropped until the fit is good and encloses the bin centre.
3. Near-duplicate hypotheses are merged, and the survivors are kept only if
   they beat the average in every saliency score.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .curve_core import DigitalCurve, extract_contours
from .ellipse_fit import EllipseGeometric, geometric_distance, nsaf
from .poly_approx import rdp_mod
from .tangent import deb_tangent, deb_tangents, yuen_center

DEFAULTS = dict(bins=25, sets=200, eps_ls=0.01, R=4, theta0=math.pi / 2, D0=0.9, d0=2.0,
                min_length=5, convexity_tol=2.0)


@dataclass(eq=False)
class SmoothContour:
    curve: DigitalCurve
    approx: object = None
    tangent_start: float = None
    tangent_end: float = None
    midpoint: tuple = None
    id: int = 0

    @property
    def points(self):
        return self.curve.points

    @property
    def closed(self):
        return self.curve.closed


@dataclass
class CenterBin:
    row_bin: int
    col_bin: int
    size: tuple
    accum_relationship: float = 0.0
    voters: dict = field(default_factory=dict)

    @property
    def center(self):
        """Bin centre as ``(x, y)``."""
        m, n = self.size
        return ((self.col_bin + 0.5) * n, (self.row_bin + 0.5) * m)


@dataclass
class EllipticHypothesis:
    ellipse: EllipseGeometric
    group: list
    bin: CenterBin = None
    residual: float = 0.0
    saliency_c: float = 0.0
    saliency_a: float = 0.0
    saliency_phi: float = 0.0
    sigma_add: float = 0.0
    sigma_mul: float = 0.0

    def to_json(self):
        return {
            "ellipse": self.ellipse.to_json(),
            "contours": [c.id for c in self.group],
            "bin": None if self.bin is None else [self.bin.row_bin, self.bin.col_bin],
            "residual": self.residual,
            "saliency": {"c": self.saliency_c, "a": self.saliency_a, "phi": self.saliency_phi},
            "sigma_add": self.sigma_add,
            "sigma_mul": self.sigma_mul,
        }


# smooth contours

def _polygon_vertices(approx):
    return approx.curve.points[list(approx.indices)].astype(float)


def _turns(verts):
    """Signed anticlockwise angle from each edge to the previous one, at the interior vertices."""
    e = np.diff(verts, axis=0)
    a, b = e[:-1], e[1:]
    cross = b[:, 0] * a[:, 1] - b[:, 1] * a[:, 0]
    dot = (a * b).sum(axis=1)
    return np.arctan2(cross, dot)


def turn_angles(approx):
    """Turn angles between consecutive polygon edges.

    Open polygons give one angle per interior vertex. Closed polygons give
    one angle per vertex, starting at vertex 0.
    """
    verts = _polygon_vertices(approx)
    if approx.curve.closed:
        ext = np.vstack([verts[-1:], verts, verts[:1]])
        return _turns(ext)
    if len(verts) < 3:
        return np.zeros(0)
    return _turns(verts)


def sharp_turn_vertices(angles, theta0=math.pi / 2):
    """Positions in ``angles`` whose magnitude reaches ``theta0``."""
    return [k for k, t in enumerate(angles) if abs(t) >= theta0]


def inflexion_splits(angles):
    """Positions in ``angles`` at which to split for a change of turning direction.

    ``b[k]`` flags a sign change between angles ``k`` and ``k + 1``. A lone flag
    splits at angle ``k``; a pair splits at ``k`` and ``k + 1``; a longer run
    splits only at its first angle. Flags outside the sequence count as 0.
    """
    th = np.asarray(angles, dtype=float)
    if len(th) < 2:
        return []
    b = (np.abs(th[:-1] + th[1:]) < np.abs(th[:-1]) + np.abs(th[1:])).astype(int)
    n = len(b)
    flag = lambda k: b[k] if 0 <= k < n else 0
    out = []
    k = 0
    while k < n:
        if b[k] and not flag(k - 1):
            run = 1
            while flag(k + run):
                run += 1
            out.append(k)
            if run == 2:
                out.append(k + 1)
            k += run
        else:
            k += 1
    return out


def _cut(curve, cut_pixels, min_length):
    """Split ``curve`` at pixel indices; pieces share the cut pixel."""
    n = len(curve.points)
    cuts = sorted(set(int(c) for c in cut_pixels))
    if not cuts:
        return [curve]
    pts = curve.points
    pieces = []
    if curve.closed:
        order = cuts + [cuts[0] + n]
        for a, b in zip(order[:-1], order[1:]):
            idx = np.arange(a, b + 1) % n
            pieces.append(pts[idx])
    else:
        bounds = [0] + [c for c in cuts if 0 < c < n - 1] + [n - 1]
        for a, b in zip(bounds[:-1], bounds[1:]):
            pieces.append(pts[a:b + 1])
    return [DigitalCurve(p, False) for p in pieces if len(p) >= max(min_length, 2)]


def _split_vertices(approx, theta0, inflexions=True):
    angles = turn_angles(approx)
    idx = list(approx.indices)
    # angle position -> polygon vertex
    offset = 0 if approx.curve.closed else 1
    keys = set(sharp_turn_vertices(angles, theta0))
    if inflexions:
        keys |= set(inflexion_splits(angles))
    return sorted(idx[k + offset] for k in keys)


def split_sharp_turns(curve, theta0=math.pi / 2, min_length=2):
    """Pieces of ``curve`` cut at every approximation vertex turning by at least ``theta0``."""
    approx = rdp_mod(curve)
    return _cut(curve, _split_vertices(approx, theta0, inflexions=False), min_length)


def smooth_pieces(curve, theta0=math.pi / 2, min_length=5):
    """Cut a contour at sharp turns and inflexions of its approximating polygon."""
    if len(curve.points) < 3:
        return [curve] if len(curve.points) >= min_length else []
    approx = rdp_mod(curve)
    return _cut(curve, _split_vertices(approx, theta0), min_length)


def end_tangent(curve, at_end, R=4):
    """Tangent angle near an end of an open curve: the first pixel inward where the ring fits."""
    n = len(curve.points)
    order = range(n - 1, -1, -1) if at_end else range(n)
    for i in order:
        try:
            return deb_tangent(curve, i, R).slope_angle
        except ValueError:
            continue
    return None


def make_smooth_contour(curve, cid=0, R=4):
    pts = curve.points
    mid = tuple(int(v) for v in pts[len(pts) // 2])
    if curve.closed:
        return SmoothContour(curve, None, None, None, mid, cid)
    return SmoothContour(curve, None, end_tangent(curve, False, R), end_tangent(curve, True, R), mid, cid)


# grouping filters

def _side(p, direction, q):
    """Cross product sign of ``q - p`` against ``direction`` (vectorised over ``q``)."""
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    return direction[0] * (q[:, 1] - p[1]) - direction[1] * (q[:, 0] - p[0])


def search_region_accepts(host, candidate, tol=0.0):
    """True if every candidate pixel lies in the host's search region.

    The region is the side of the host's chord away from its middle pixel,
    limited by the two end tangents on the contour's side. Pixels on a
    tangent line count as inside.
    """
    if host.closed or host.tangent_start is None or host.tangent_end is None or host is candidate:
        return False
    pts = host.points.astype(float)
    p1, p2 = pts[0], pts[-1]
    mid = np.asarray(host.midpoint, dtype=float)
    chord = p2 - p1
    if not np.any(chord):
        return False
    q = candidate.points
    for p, far, ang in ((p1, p2, host.tangent_start), (p2, p1, host.tangent_end)):
        d = np.array([math.cos(ang), math.sin(ang)])
        # the far end sits on the contour's side too, and well clear of a slightly wrong tangent
        s_ref = _side(p, d, far)[0]
        if s_ref == 0:
            return False
        if np.any(_side(p, d, q) * math.copysign(1.0, s_ref) < -tol):
            return False
    s_mid = _side(p1, chord, mid)[0]
    if s_mid == 0:
        return False
    return bool(np.all(_side(p1, chord, q) * math.copysign(1.0, s_mid) < 0))


def _nearest_on_line(pts, p, d):
    dist = np.abs(d[0] * (pts[:, 1] - p[1]) - d[1] * (pts[:, 0] - p[0]))
    k = int(np.argmin(dist))
    return pts[k], float(dist[k])


def associated_convexity_ok(c1, c2, tol=2.0, miss=1.0):
    """True if the two contours bulge away from each other along the line joining their chord midpoints."""
    a = c1.points.astype(float)
    b = c2.points.astype(float)
    P1 = 0.5 * (a[0] + a[-1])
    P2 = 0.5 * (b[0] + b[-1])
    v = P2 - P1
    length = math.hypot(*v)
    if length == 0:
        return False
    d = v / length
    Q1, r1 = _nearest_on_line(a, P1, d)
    Q2, r2 = _nearest_on_line(b, P1, d)
    if r1 > miss or r2 > miss:
        return False
    outer = math.hypot(*(Q2 - Q1))
    chain = math.hypot(*(Q1 - P1)) + length + math.hypot(*(Q2 - P2))
    return abs(chain - outer) <= tol


# centre voting

def relationship_score(S_eb, S_e, S):
    """Vote count damped by the bin share of the contour and the contour's valid-set share."""
    if S <= 0:
        raise ValueError("S must be positive")
    if S_e == 0:
        return 0.0
    q1 = S_eb / S_e
    q2 = S_e / S
    r1 = q1 * math.exp(q1 - 1)
    r2 = q2 * math.exp(2 * (q2 - 1))
    return S_eb * r1 * r2


def vote_centers(contour, S=200, bin_size=(25, 25), rng=None, image_size=(300, 300), R=4, tangents=None):
    """Centre votes of one contour: ``({(row, col): S_eb}, S_e)``.

    Each of ``S`` distinct sets takes one random pixel from each third of the
    contour (fewer when the contour has fewer distinct sets); sets whose
    tangents are degenerate or whose centre leaves the image do not count
    towards ``S_e``.
    """
    rng = np.random.default_rng(rng)
    curve = contour.curve if isinstance(contour, SmoothContour) else contour
    pts = curve.points
    if len(pts) < 9:
        return {}, 0
    t = deb_tangents(curve, R) if tangents is None else tangents
    valid = np.nonzero(np.isfinite(t))[0]
    if len(valid) < 3:
        return {}, 0
    thirds = np.array_split(valid, 3)
    if any(len(th) == 0 for th in thirds):
        return {}, 0
    sizes = [len(th) for th in thirds]
    total = sizes[0] * sizes[1] * sizes[2]
    # distinct triples only, so a short contour cannot repeat one set S times
    flat = rng.choice(total, size=min(S, total), replace=False)
    i0, rest = np.divmod(flat, sizes[1] * sizes[2])
    i1, i2 = np.divmod(rest, sizes[2])
    picks = np.stack([thirds[0][i0], thirds[1][i1], thirds[2][i2]], axis=1)
    m, n = bin_size
    w, h = image_size
    votes, S_e = {}, 0
    for i, j, k in picks:
        try:
            x, y = yuen_center(pts[i], pts[j], pts[k], t[i], t[j], t[k])
        except (ValueError, ZeroDivisionError, OverflowError):
            continue
        if not (math.isfinite(x) and math.isfinite(y)) or not (0 <= x < w and 0 <= y < h):
            continue
        key = (int(y // m), int(x // n))
        votes[key] = votes.get(key, 0) + 1
        S_e += 1
    return votes, S_e


# overlap

def _bbox(E):
    c, s = math.cos(E.theta), math.sin(E.theta)
    hx = math.hypot(E.a * c, E.b * s)
    hy = math.hypot(E.a * s, E.b * c)
    return E.xc - hx, E.xc + hx, E.yc - hy, E.yc + hy


def overlap_ratio(E1, E2):
    """Jaccard overlap of the two ellipse interiors sampled at integer pixel centres."""
    b1, b2 = _bbox(E1), _bbox(E2)
    if b1[1] < b2[0] or b2[1] < b1[0] or b1[3] < b2[2] or b2[3] < b1[2]:
        return 0.0
    x0 = math.floor(min(b1[0], b2[0]))
    x1 = math.ceil(max(b1[1], b2[1]))
    y0 = math.floor(min(b1[2], b2[2]))
    y1 = math.ceil(max(b1[3], b2[3]))
    # coarser sampling only for hypotheses far larger than any image
    step = max(1, math.ceil(math.sqrt((x1 - x0 + 1) * (y1 - y0 + 1) / 4e6)))
    xs, ys = np.meshgrid(np.arange(x0, x1 + 1, step), np.arange(y0, y1 + 1, step))
    grid = np.column_stack([xs.ravel(), ys.ravel()])
    I1 = E1.implicit(grid) <= 0
    I2 = E2.implicit(grid) <= 0
    union = int(np.count_nonzero(I1 | I2))
    if union == 0:
        return 1.0 if E1 == E2 else 0.0
    return 1.0 - int(np.count_nonzero(I1 ^ I2)) / union


# hypothesis generation

def algebraic_residual(points, ellipse):
    """Mean squared algebraic distance with the conic scaled to unit coefficient norm.

    Coordinates are centred on the point mean, as in the NSAF fit.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c = pts.mean(axis=0)
    E = ellipse
    cs, sn = math.cos(E.theta), math.sin(E.theta)
    A = cs * cs / E.a ** 2 + sn * sn / E.b ** 2
    B = 2 * cs * sn * (1 / E.a ** 2 - 1 / E.b ** 2)
    C = sn * sn / E.a ** 2 + cs * cs / E.b ** 2
    x0, y0 = E.xc - c[0], E.yc - c[1]
    D = -2 * A * x0 - B * y0
    F = -2 * C * y0 - B * x0
    G = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 - 1
    coef = np.array([A, B, C, D, F, G])
    coef /= np.linalg.norm(coef)
    x, y = (pts - c).T
    val = coef[0] * x * x + coef[1] * x * y + coef[2] * y * y + coef[3] * x + coef[4] * y + coef[5]
    return float(np.mean(val ** 2))


def _fit_group(group, cache):
    key = tuple(c.id for c in group)
    if key not in cache:
        pts = np.vstack([c.points for c in group])
        res = nsaf(pts, with_distance=False) if len(pts) >= 6 else None
        if res is None or res.ellipse is None:
            cache[key] = None
        else:
            cache[key] = (res.ellipse, algebraic_residual(pts, res.ellipse))
    return cache[key]


def group_and_fit(bin_, contours, eps_ls=0.01, use_filters=True, cache=None, convexity_tol=2.0):
    """Fit the bin's voters, strongest first, dropping the weakest until the fit is accepted.

    Accepted means a small algebraic residual and the bin centre strictly inside the ellipse.
    """
    cache = {} if cache is None else cache
    ranked = sorted(bin_.voters.items(), key=lambda kv: (-kv[1][1], kv[0]))
    if not ranked:
        return None
    host = contours[ranked[0][0]]
    group = [host]
    for cid, _ in ranked[1:]:
        c = contours[cid]
        if not use_filters or (search_region_accepts(host, c)
                               and associated_convexity_ok(host, c, convexity_tol)):
            group.append(c)
    centre = np.array([bin_.center])
    while group:
        fit = _fit_group(group, cache)
        if fit is not None:
            E, res = fit
            if res <= eps_ls and E.implicit(centre)[0] < 0:
                return EllipticHypothesis(E, list(group), bin_, res)
        group.pop()
    return None


# saliency and selection

def _angle(p, c):
    return math.atan2(p[1] - c[1], p[0] - c[0])


def subtended_angle(E, contour):
    """Angle subtended at the ellipse centre by the ends of a contour, through the contour side."""
    if contour.closed:
        return 2 * math.pi
    c = (E.xc, E.yc)
    pts = contour.points
    a0 = _angle(pts[0], c)
    a1 = _angle(pts[-1], c)
    am = _angle(pts[len(pts) // 2], c)
    span = (a1 - a0) % (2 * math.pi)
    if (am - a0) % (2 * math.pi) <= span:
        return span
    return 2 * math.pi - span


def _outward(curve, at_end, R):
    ang = end_tangent(curve, at_end, R)
    if ang is None:
        return None
    pts = curve.points.astype(float)
    n = len(pts)
    k = min(n - 1, 2 * R)
    d = pts[-1] - pts[n - 1 - k] if at_end else pts[0] - pts[k]
    u = np.array([math.cos(ang), math.sin(ang)])
    return u if float(d @ u) >= 0 else -u


def _continuity(c1, c2, R):
    """Angle in [0, pi] between the outward end tangents at the two nearest contour ends."""
    a, b = c1.points, c2.points
    best = None
    for e1 in (False, True):
        for e2 in (False, True):
            p = a[-1] if e1 else a[0]
            q = b[-1] if e2 else b[0]
            d = math.hypot(*(p - q))
            if best is None or d < best[0]:
                best = (d, e1, e2)
    _, e1, e2 = best
    u = _outward(c1.curve, e1, R) if not c1.closed else None
    v = _outward(c2.curve, e2, R) if not c2.closed else None
    if u is None or v is None:
        return 0.0
    return math.acos(max(-1.0, min(1.0, float(u @ v))))


def saliency_scores(h, d0=2.0, R=4):
    """Angular circumference, alignment and angular continuity ratios of a hypothesis."""
    E = h.ellipse
    c = min(1.0, sum(subtended_angle(E, g) for g in h.group) / (2 * math.pi))
    pts = np.vstack([g.points for g in h.group])
    a = float(np.mean(geometric_distance(E, pts) < d0))
    if len(h.group) == 1:
        phi = 1.0
    else:
        centre = (E.xc, E.yc)
        order = sorted(h.group, key=lambda g: (_angle(g.points[len(g.points) // 2], centre), g.id))
        phi = float(np.mean([_continuity(g1, g2, R) / math.pi for g1, g2 in zip(order[:-1], order[1:])]))
    return c, a, phi


def _set_saliency(h, d0, R):
    h.saliency_c, h.saliency_a, h.saliency_phi = saliency_scores(h, d0, R)
    h.sigma_add = (h.saliency_c + h.saliency_a + h.saliency_phi) / 3
    h.sigma_mul = h.saliency_c * h.saliency_a * h.saliency_phi
    return h


def _area(E):
    return math.pi * E.a * E.b


def merge_similar(hyps, D0=0.9):
    """Cluster hypotheses linked by overlap above ``D0``; keep the largest angular circumference per cluster."""
    n = len(hyps)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        Ei = hyps[i].ellipse
        for j in range(i + 1, n):
            Ej = hyps[j].ellipse
            # the overlap can never exceed the area ratio
            if min(_area(Ei), _area(Ej)) <= D0 * max(_area(Ei), _area(Ej)) * 0.95:
                continue
            if find(i) != find(j) and overlap_ratio(Ei, Ej) > D0:
                parent[find(i)] = find(j)
    best = {}
    for i, h in enumerate(hyps):
        r = find(i)
        if r not in best or h.saliency_c > hyps[best[r]].saliency_c:
            best[r] = i
    return [hyps[i] for i in sorted(best.values())]


def select_hypotheses(hyps):
    """Keep the hypotheses at or above the average in all three saliency ratios and their mean."""
    if not hyps:
        return []
    avg = {k: float(np.mean([getattr(h, k) for h in hyps]))
           for k in ("saliency_c", "saliency_a", "saliency_phi", "sigma_add")}
    eps = 1e-12
    return [h for h in hyps if all(getattr(h, k) >= v - eps for k, v in avg.items())]


# pipeline

@dataclass
class DetectionTrace:
    contours: list
    bins: dict
    hypotheses: list
    merged: list
    selected: list


def smooth_contours(edge_map, theta0=math.pi / 2, min_length=5, R=4):
    out = []
    for curve in extract_contours(edge_map, min_length):
        for piece in smooth_pieces(curve, theta0, min_length):
            out.append(make_smooth_contour(piece, len(out), R))
    return out


def detect_trace(edge_map, seed=0, bins=25, sets=200, eps_ls=0.01, R=4, theta0=math.pi / 2, D0=0.9,
                 d0=2.0, min_length=5, use_filters=True, use_relationship=True, convexity_tol=2.0):
    """Full detection run keeping every intermediate stage."""
    img = np.asarray(edge_map)
    h, w = img.shape
    contours = smooth_contours(img, theta0, min_length, R)
    rng = np.random.default_rng(seed)
    bin_size = (h / max(1, round(h / bins)), w / max(1, round(w / bins)))
    table = {}
    for c in contours:
        votes, S_e = vote_centers(c, sets, bin_size, rng, (w, h), R)
        for key, S_eb in votes.items():
            score = relationship_score(S_eb, S_e, sets) if use_relationship else float(S_eb)
            b = table.get(key)
            if b is None:
                b = table[key] = CenterBin(key[0], key[1], bin_size)
            b.voters[c.id] = (S_eb, score)
            b.accum_relationship += score
    by_id = {c.id: c for c in contours}
    cache = {}
    hyps, seen = [], set()
    for b in sorted(table.values(), key=lambda b: (-b.accum_relationship, b.row_bin, b.col_bin)):
        hyp = group_and_fit(b, by_id, eps_ls, use_filters, cache, convexity_tol)
        if hyp is None:
            continue
        key = tuple(c.id for c in hyp.group)
        if key in seen:
            continue
        seen.add(key)
        hyps.append(_set_saliency(hyp, d0, R))
    merged = merge_similar(hyps, D0)
    selected = select_hypotheses(merged)
    return DetectionTrace(contours, table, hyps, merged, selected)


def detect(edge_map, seed=0, **params):
    """Selected elliptic hypotheses of an edge raster (rows = y); empty for a blank map."""
    return detect_trace(edge_map, seed, **params).selected
