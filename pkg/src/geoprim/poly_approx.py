"""Polygonal approximation of digital curves.

Fixed-tolerance methods (``rdp``, ``pro``, ``masood``, ``carmona``) sit next to
their parameter-free variants, which replace the user tolerance by the
digitization bound of each chord (:func:`geoprim.bounds.d_dig`).

Closed curves are handled on an "unrolled" copy: the pixel sequence starts at
a chosen pixel and repeats it at the end, so every method works on an open
sequence and the indices are mapped back modulo the curve length.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .bounds import chord_bound
from .curve_core import line_distances
from .fit_metrics import segment_fit, precision_metric, reliability_metric

TOLER_EQ = 1e-12
METHODS = ("rdp", "rdp-mod", "pro", "masood", "masood-mod", "carmona", "carmona-mod")


@dataclass(frozen=True)
class PolyApprox:
    curve: object
    indices: tuple
    method: str
    params: dict = field(default_factory=dict)

    def to_json(self):
        return {"method": self.method, "params": dict(self.params), "indices": [int(i) for i in self.indices],
                "points": self.curve.points[list(self.indices)].tolist(), "closed": bool(self.curve.closed)}


class _Unrolled:
    """Open view of a curve starting at ``start`` (closed curves repeat the start pixel at the end)."""

    def __init__(self, curve, start=0):
        self.n = len(curve.points)
        self.closed = curve.closed
        self.start = start if curve.closed else 0
        pts = curve.points
        if curve.closed:
            order = np.r_[np.arange(self.start, self.n), np.arange(0, self.start + 1)]
            pts = pts[order]
        self.pts = pts.astype(float)
        self.last = len(self.pts) - 1
        self._cache = {}

    def to_curve(self, positions):
        out = sorted({(int(p) + self.start) % self.n for p in positions})
        return tuple(out)

    def deviations(self, i, j):
        seg = self.pts[i:j + 1]
        if j - i < 2 or np.array_equal(seg[0], seg[-1]):
            return np.zeros(j - i + 1)
        return line_distances(seg[0], seg[-1], seg)

    def cost(self, i, j):
        """(ISE, max deviation) of the pixels ``i..j`` against chord ``i -> j``; memoised."""
        key = (i, j)
        hit = self._cache.get(key)
        if hit is None:
            d = self.deviations(i, j)
            hit = (float((d * d).sum()), float(d.max()) if len(d) else 0.0)
            self._cache[key] = hit
        return hit

    def bound(self, i, j):
        return chord_bound(self.pts[i], self.pts[j])


def _trivial(curve):
    return len(curve.points) <= 2


def _farthest_pair(points):
    """Indices ``i < j`` of the two mutually farthest pixels (lowest indices on ties)."""
    pts = points.astype(float)
    cand = np.arange(len(pts))
    if len(pts) > 16:
        try:
            cand = np.sort(ConvexHull(pts).vertices)
        except QhullError:
            pass
    sub = pts[cand]
    d2 = ((sub[:, None, :] - sub[None, :, :]) ** 2).sum(-1)
    a, b = np.unravel_index(int(np.argmax(d2)), d2.shape)
    i, j = int(cand[a]), int(cand[b])
    return (i, j) if i < j else (j, i)


def _split_recursive(view, lo, hi, accept):
    """Top-down splitting of ``lo..hi`` at the farthest pixel until ``accept`` holds everywhere."""
    keep = {lo, hi}
    stack = [(lo, hi)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        d = view.deviations(i, j)
        if accept(i, j, d):
            continue
        k = i + int(np.argmax(d))
        if k in (i, j):
            continue
        keep.add(k)
        stack.append((k, j))
        stack.append((i, k))
    return keep


def _top_down(curve, make_accept, method, params):
    if _trivial(curve):
        return PolyApprox(curve, tuple(range(len(curve.points))), method, params)
    if curve.closed:
        i, j = _farthest_pair(curve.points)
        view = _Unrolled(curve, i)
        accept = make_accept(view)
        mid = j - i
        keep = _split_recursive(view, 0, mid, accept) | _split_recursive(view, mid, view.last, accept)
    else:
        view = _Unrolled(curve)
        keep = _split_recursive(view, 0, view.last, make_accept(view))
    return PolyApprox(curve, view.to_curve(keep), method, params)


def rdp(curve, d_tol):
    """Split at the farthest pixel until no pixel is more than ``d_tol`` from its chord."""
    if d_tol <= 0:
        raise ValueError("d_tol must be positive")
    return _top_down(curve, lambda view: lambda i, j, d: d.max() <= d_tol + TOLER_EQ,
                     "rdp", {"dtol": d_tol})


def rdp_mod(curve):
    """RDP with the tolerance of each chord set to its digitization bound."""
    return _top_down(curve, lambda view: lambda i, j, d: d.max() <= view.bound(i, j) + TOLER_EQ,
                     "rdp-mod", {})


def pro(curve, epsilon0):
    """Split until every segment has precision and reliability both within ``epsilon0``."""
    if epsilon0 <= 0:
        raise ValueError("epsilon0 must be positive")

    def make_accept(view):
        def accept(i, j, d):
            if d.max() == 0:
                return True
            fit = segment_fit(view.pts[i:j + 1])
            return max(precision_metric(fit), reliability_metric(fit)) <= epsilon0 + TOLER_EQ
        return accept

    return _top_down(curve, make_accept, "pro", {"eps0": epsilon0})


def break_points(curve):
    """Pixels where the chain-code direction changes (zero-error polygon)."""
    pts = curve.points
    n = len(pts)
    if n <= 2:
        return PolyApprox(curve, tuple(range(n)), "break", {})
    if curve.closed:
        step_in = pts - np.roll(pts, 1, axis=0)
        step_out = np.roll(pts, -1, axis=0) - pts
        turn = np.any(step_in != step_out, axis=1)
        idx = tuple(int(i) for i in np.nonzero(turn)[0])
        if len(idx) < 3:
            idx = tuple(sorted(set(idx) | {0, n // 3, (2 * n) // 3}))
    else:
        step = np.diff(pts, axis=0)
        turn = np.any(step[1:] != step[:-1], axis=1)
        idx = (0,) + tuple(int(i) + 1 for i in np.nonzero(turn)[0]) + (n - 1,)
    return PolyApprox(curve, idx, "break", {})


def _corner_distance(pts, a, n, b):
    pa, pn, pb = pts[a], pts[n], pts[b]
    dx, dy = pb - pa
    length = math.hypot(dx, dy)
    if length == 0:
        return math.hypot(*(pn - pa))
    return abs(dx * (pn[1] - pa[1]) - dy * (pn[0] - pa[0])) / length


def _unrolled_break_points(curve):
    """Break-point positions on an unrolled view; closed curves start at the sharpest break point."""
    bp = list(break_points(curve).indices)
    if not curve.closed:
        return _Unrolled(curve), bp
    pts = curve.points.astype(float)
    m = len(bp)
    dc = [_corner_distance(pts, bp[k - 1], bp[k], bp[(k + 1) % m]) for k in range(m)]
    first = int(np.argmax(dc))
    start = bp[first]
    view = _Unrolled(curve, start)
    pos = sorted(((b - start) % view.n) for b in bp)
    return view, pos + [view.last]


# --- Masood -----------------------------------------------------------------------------


def _optimize_side(dom, k, step, objective, first_limit):
    """Move dominant points outward from slot ``k`` while the best in-window position changes.

    ``dom`` is the post-deletion list (edited in place) and ``step`` is -1 towards
    the start or +1 towards the end. The first window stops at the deleted
    pixel ``first_limit``. Returns the slots that moved.
    """
    moved = []
    m = len(dom)
    limit = first_limit
    while 0 < k < m - 1:
        lo, hi = dom[k - 1], dom[k + 1]
        w_lo, w_hi = (lo, limit) if step < 0 else (limit, hi)
        if limit is None:
            w_lo, w_hi = lo, hi
        limit = None
        best_p, best_v = dom[k], objective(lo, dom[k], hi)
        for p in range(w_lo + 1, w_hi):
            v = objective(lo, p, hi)
            if v < best_v - TOLER_EQ:
                best_p, best_v = p, v
        if best_p == dom[k]:
            break
        dom[k] = best_p
        moved.append(k)
        k += step
    return moved


def _masood_candidate(dom, k, objective):
    """Delete slot ``k`` and re-optimise its neighbours; returns the new list and changed slot span."""
    new = dom[:k] + dom[k + 1:]
    left = _optimize_side(new, k - 1, -1, objective, dom[k])
    right = _optimize_side(new, k, +1, objective, dom[k])
    return new, min(left + [k - 1]), max(right + [k])


def _ise_pair(view):
    return lambda a, p, b: view.cost(a, p)[0] + view.cost(p, b)[0]


def _dev_pair(view):
    return lambda a, p, b: max(view.cost(a, p)[1], view.cost(p, b)[1])


def _polygon_max_dev(view, dom):
    return max(view.cost(a, b)[1] for a, b in zip(dom[:-1], dom[1:]))


def masood_trace(curve, d_tol=None):
    """Run Masood deletions; ``d_tol=None`` selects the parameter-free variant.

    Returns ``(view, [(deleted position, aev, dominant list), ...])`` where the
    last list is the result.
    """
    modified = d_tol is None
    view, dom = _unrolled_break_points(curve)
    objective = _dev_pair(view) if modified else _ise_pair(view)
    min_len = 4 if curve.closed else 2
    trace = [(None, None, list(dom))]
    cache = {}
    while len(dom) > min_len:
        # the original rule checks the current polygon, so the first violating one is returned
        if not modified and _polygon_max_dev(view, dom) ** 2 > d_tol + TOLER_EQ:
            break
        seg_ise = [view.cost(a, b)[0] for a, b in zip(dom[:-1], dom[1:])]
        seg_dev = [view.cost(a, b)[1] for a, b in zip(dom[:-1], dom[1:])]
        prefix_max = [0.0]
        for v in seg_dev:
            prefix_max.append(max(prefix_max[-1], v))
        suffix_max = [0.0]
        for v in reversed(seg_dev):
            suffix_max.append(max(suffix_max[-1], v))
        suffix_max = suffix_max[::-1]
        best = None
        for k in range(1, len(dom) - 1):
            new = None
            hit = cache.get(dom[k])
            if hit is not None:
                r_a, r_b, window, r_lo, r_hi, patch = hit
                a, b = k + r_a, k + r_b
                if a >= 0 and b < len(dom) and tuple(dom[a:b + 1]) == window:
                    new = dom[:a] + patch + dom[b + 1:]
                    lo, hi = k + r_lo, k + r_hi
            if new is None:
                new, lo, hi = _masood_candidate(dom, k, objective)
                # everything the candidate read lies within old slots a..b
                a, b = max(lo - 2, 0), min(hi + 3, len(dom) - 1)
                cache[dom[k]] = (a - k, b - k, tuple(dom[a:b + 1]), lo - k, hi - k, new[a:b])
            first = max(lo - 1, 0)
            last = min(hi + 1, len(new) - 1)
            new_segs = [view.cost(a, b) for a, b in zip(new[first:last], new[first + 1:last + 1])]
            if modified:
                aev = max([prefix_max[first], suffix_max[last + 1]] + [c[1] for c in new_segs])
            else:
                aev = sum(c[0] for c in new_segs) - sum(seg_ise[first:last + 1])
            if best is None or aev < best[0] - TOLER_EQ:
                best = (aev, k, new)
        aev, k, new = best
        if modified:
            # bridging segment: the new chord spanning the deleted slot
            if aev > view.bound(new[k - 1], new[k]) + TOLER_EQ:
                break
        dom = new
        trace.append((best[1], aev, list(dom)))
    return view, trace


def masood(curve, d_tol=0.9):
    """Iterative deletion from the break points, minimising the increase of ISE."""
    if d_tol <= 0:
        raise ValueError("d_tol must be positive")
    if _trivial(curve):
        return PolyApprox(curve, tuple(range(len(curve.points))), "masood", {"dtol": d_tol})
    view, trace = masood_trace(curve, d_tol)
    dom = trace[-1][2]
    return PolyApprox(curve, view.to_curve(dom), "masood", {"dtol": d_tol})


def masood_mod(curve):
    """Masood deletion driven by per-segment maximum deviation, stopped by the digitization bound."""
    if _trivial(curve):
        return PolyApprox(curve, tuple(range(len(curve.points))), "masood-mod", {})
    view, trace = masood_trace(curve)
    dom = trace[-1][2]
    return PolyApprox(curve, view.to_curve(dom), "masood-mod", {})


# --- Carmona ----------------------------------------------------------------------------


def _carmona_sweep(view, dom, d_tol, guard=None):
    """Delete, until none is left, the first interior point closer than ``d_tol`` to its neighbours' chord.

    ``guard(a, b)`` may veto a deletion that would create chord ``a -> b``.
    Returns the perimeter ratios of the deleted points and the number of vetoes.
    """
    pts = view.pts
    deleted = []
    vetoed = set()
    k = 1
    while k < len(dom) - 1:
        a, n, b = dom[k - 1], dom[k], dom[k + 1]
        if _corner_distance(pts, a, n, b) < d_tol and (a, n, b) not in vetoed:
            if guard is not None and not guard(a, b):
                vetoed.add((a, n, b))
                k += 1
                continue
            chord = math.hypot(*(pts[b] - pts[a]))
            around = math.hypot(*(pts[n] - pts[a])) + math.hypot(*(pts[b] - pts[n]))
            deleted.append(around / chord if chord > 0 else math.inf)
            del dom[k]
            # the previous point's neighbourhood changed; earlier ones did not
            k = max(1, k - 1)
        else:
            k += 1
    return deleted, len(vetoed)


def carmona_trace(curve, r_tol=None):
    """Run the Carmona iterations and return ``(view, [(d_tol, dominant list, r_i), ...])``.

    With ``r_tol=None`` the parameter-free rule is used: a deletion whose new
    chord would deviate beyond its digitization bound is refused, and the run
    ends with the iteration in which that first happens.
    """
    view, dom = _unrolled_break_points(curve)
    min_len = 4 if curve.closed else 2
    guard = None
    if r_tol is None:
        guard = lambda a, b: view.cost(a, b)[1] <= view.bound(a, b) + TOLER_EQ
    trace = []
    d_tol = 0.0
    while True:
        d_tol += 0.5
        deleted, vetoes = _carmona_sweep(view, dom, d_tol, guard) if len(dom) > min_len else ([], 0)
        devs = [view.cost(a, b)[1] for a, b in zip(dom[:-1], dom[1:])]
        max_dev = max(devs) if devs else 0.0
        r_i = max(deleted) / max_dev if deleted and max_dev > 0 else math.inf
        trace.append((d_tol, list(dom), r_i))
        if r_tol is None:
            if vetoes:
                break
        elif r_i < r_tol:
            break
        if len(dom) <= min_len:
            break
    return view, trace


def carmona(curve, r_tol=0.3):
    if r_tol <= 0:
        raise ValueError("r_tol must be positive")
    if _trivial(curve):
        return PolyApprox(curve, tuple(range(len(curve.points))), "carmona", {"rtol": r_tol})
    view, trace = carmona_trace(curve, r_tol)
    return PolyApprox(curve, view.to_curve(trace[-1][1]), "carmona", {"rtol": r_tol})


def carmona_mod(curve):
    if _trivial(curve):
        return PolyApprox(curve, tuple(range(len(curve.points))), "carmona-mod", {})
    view, trace = carmona_trace(curve, None)
    return PolyApprox(curve, view.to_curve(trace[-1][1]), "carmona-mod", {})


def approximate(curve, method, dtol=None, eps0=None, rtol=None):
    """Dispatch by method name, as used by the command line."""
    if method == "rdp":
        return rdp(curve, 1.0 if dtol is None else dtol)
    if method == "rdp-mod":
        return rdp_mod(curve)
    if method == "pro":
        return pro(curve, 0.5 if eps0 is None else eps0)
    if method == "masood":
        return masood(curve, 0.9 if dtol is None else dtol)
    if method == "masood-mod":
        return masood_mod(curve)
    if method == "carmona":
        return carmona(curve, 0.3 if rtol is None else rtol)
    if method == "carmona-mod":
        return carmona_mod(curve)
    raise ValueError(f"unknown method {method!r}")
