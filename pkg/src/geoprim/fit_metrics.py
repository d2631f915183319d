"""Line-fit quality measures for polygonal approximations.

Per-segment residues are taken against the chord through the two dominant
pixels. Distances are translation invariant, so chords through the origin
(not representable as ``ax + by = 1``) are handled by shifting the frame.
"""

from dataclasses import dataclass, asdict
import math

import numpy as np

from .curve_core import line_distances, max_pairwise_distance


@dataclass(frozen=True)
class SegmentFit:
    start: int
    end: int
    line: tuple
    shift: tuple
    residual_l1: float
    residual_l2: float
    residual_linf: float
    s_max: float


@dataclass(frozen=True)
class MetricReport:
    md: float
    ise: float
    cr: float
    dr: float
    fom: float
    precision: float
    reliability: float
    n_points: int
    n_dominant: int

    @property
    def fom_infinite(self):
        return math.isinf(self.fom)

    def to_json(self):
        out = asdict(self)
        out["fom_infinite"] = self.fom_infinite
        if self.fom_infinite:
            out["fom"] = None
        return out


def lsq_line(points):
    """Least-squares ``(a, b)`` of ``a x + b y = 1``."""
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(X) < 2:
        raise ValueError("need at least 2 points")
    normal = X.T @ X
    if abs(np.linalg.det(normal)) <= 1e-12 * max(1.0, np.abs(normal).max()) ** 2:
        raise ValueError("line through origin unrepresentable")
    a, b = np.linalg.solve(normal, X.T @ np.ones(len(X)))
    return float(a), float(b)


def chord_line(p, q):
    """Coefficients of the line through ``p`` and ``q`` as ``a x + b y = 1``.

    Returns ``((a, b), shift)`` where the coefficients hold in coordinates
    translated by ``shift`` (non-zero only when the chord passes the origin).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.array_equal(p, q):
        raise ValueError("degenerate line")
    for shift in ((0.0, 0.0), (1.0, 1.0), (1.0, 0.0)):
        ps, qs = p + shift, q + shift
        det = ps[0] * qs[1] - ps[1] * qs[0]
        if abs(det) > 1e-12:
            a = (qs[1] - ps[1]) / det
            b = (ps[0] - qs[0]) / det
            return (float(a), float(b)), shift
    raise ValueError("degenerate line")


def segment_fit(points, start=0, end=None):
    """Chord-based fit of the pixel run ``points`` (first and last are the dominant pixels)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    end = len(pts) - 1 + start if end is None else end
    if len(pts) < 2:
        raise ValueError("segment needs at least 2 pixels")
    line, shift = chord_line(pts[0], pts[-1])
    d = line_distances(pts[0], pts[-1], pts)
    return SegmentFit(start, end, line, shift, float(d.sum()), float(math.sqrt((d ** 2).sum())),
                      float(d.max()), max_pairwise_distance(pts))


def precision_metric(fit):
    return fit.residual_l2


def reliability_metric(fit):
    return fit.residual_l1 / fit.s_max


def segment_slices(n, indices, closed):
    """Pixel index arrays of each polygon edge, wrapping for closed curves."""
    idx = list(indices)
    out = [np.arange(i, j + 1) for i, j in zip(idx[:-1], idx[1:])]
    if closed:
        out.append(np.r_[np.arange(idx[-1], n), np.arange(0, idx[0] + 1)])
    return out


def curve_metrics(curve, approx):
    """MetricReport of a curve against the polygon through ``approx.indices``."""
    indices = approx.indices if hasattr(approx, "indices") else approx
    if len(indices) < 2:
        raise ValueError("need at least 2 dominant points")
    pts = curve.points
    n = len(pts)
    dev = np.zeros(n)
    precisions, l1, smax = [], 0.0, 0.0
    for sl in segment_slices(n, indices, curve.closed):
        seg = pts[sl]
        if np.array_equal(seg[0], seg[-1]):
            continue
        fit = segment_fit(seg)
        d = line_distances(seg[0], seg[-1], seg)
        dev[sl] = np.maximum(dev[sl], d)
        precisions.append(precision_metric(fit))
        l1 += fit.residual_l1
        smax += fit.s_max
    ise = float((dev ** 2).sum())
    cr = n / len(indices)
    return MetricReport(
        md=float(dev.max()),
        ise=ise,
        cr=cr,
        dr=1.0 / cr,
        fom=cr / ise if ise > 0 else math.inf,
        precision=float(np.mean(precisions)) if precisions else 0.0,
        reliability=l1 / smax if smax > 0 else 0.0,
        n_points=n,
        n_dominant=len(indices),
    )


def aggregate_metrics(level, reports):
    """Combine curve reports into an image report, or image reports into a dataset report."""
    if not reports:
        raise ValueError("no reports to aggregate")
    if level not in ("image", "dataset"):
        raise ValueError(f"unknown level {level!r}")

    def mean(name):
        return float(np.mean([getattr(r, name) for r in reports]))

    cr = mean("cr")
    foms = [r.fom for r in reports]
    precision = max(r.precision for r in reports) if level == "image" else mean("precision")
    return MetricReport(
        md=mean("md"),
        ise=mean("ise"),
        cr=cr,
        dr=1.0 / cr,
        fom=math.inf if any(math.isinf(f) for f in foms) else float(np.mean(foms)),
        precision=float(precision),
        reliability=mean("reliability"),
        n_points=int(sum(r.n_points for r in reports)),
        n_dominant=int(sum(r.n_dominant for r in reports)),
    )


def hat_matrix_sum(points):
    """Sum of all entries of ``X (X'X)^-1 X'`` for the two-column design ``X = [x y]``."""
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    normal = X.T @ X
    if abs(np.linalg.det(normal)) <= 1e-12 * max(1.0, np.abs(normal).max()) ** 2:
        raise ValueError("line through origin unrepresentable")
    s = X.sum(axis=0)
    return float(s @ np.linalg.solve(normal, s))
