"""Digital curves, the rounding model, point-line geometry and contour tracing."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError

_NEIGHBOURS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


@dataclass(frozen=True)
class DigitalCurve:
    """Ordered integer pixels ``(x, y)``; ``closed`` means the last pixel links back to the first."""

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("a digital curve needs at least 2 points")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def to_json(self):
        return {"closed": bool(self.closed), "points": self.points.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["points"], dtype=np.int64), bool(obj.get("closed", False)))


def round_half_away(values):
    values = np.asarray(values, dtype=float)
    return (np.sign(values) * np.floor(np.abs(values) + 0.5)).astype(np.int64)


def digitize(p):
    """Nearest pixel of a real point, ties rounded away from zero."""
    x, y = p
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("point must be finite")
    return tuple(int(v) for v in round_half_away([x, y]))


def point_line_distance(a, b, p):
    """Perpendicular distance of ``p`` from the infinite line through ``a`` and ``b``."""
    (xa, ya), (xb, yb), (xp, yp) = a, b, p
    length = math.hypot(xb - xa, yb - ya)
    if length == 0:
        raise ValueError("degenerate line")
    return abs(xp * (ya - yb) + yp * (xb - xa) + yb * xa - ya * xb) / length


def line_distances(a, b, pts):
    """Vectorised :func:`point_line_distance` for an ``(n, 2)`` array."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    dx, dy = b - a
    length = math.hypot(dx, dy)
    if length == 0:
        raise ValueError("degenerate line")
    return np.abs(dx * (pts[:, 1] - a[1]) - dy * (pts[:, 0] - a[0])) / length


def max_pairwise_distance(curve):
    pts = curve.points if isinstance(curve, DigitalCurve) else np.asarray(curve, dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    cand = pts
    if len(pts) > 16:
        try:
            cand = pts[ConvexHull(pts).vertices]
        except QhullError:
            # collinear input: the extreme pair is among the coordinate extremes
            idx = {int(np.argmin(pts[:, 0])), int(np.argmax(pts[:, 0])),
                   int(np.argmin(pts[:, 1])), int(np.argmax(pts[:, 1]))}
            cand = pts[sorted(idx)]
    diff = cand[:, None, :] - cand[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def _degree(mask):
    padded = np.pad(mask.astype(np.int32), 1)
    h, w = mask.shape
    deg = np.zeros_like(padded[1:-1, 1:-1])
    for dx, dy in _NEIGHBOURS:
        deg += padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return deg


def remove_junctions(edge_map):
    """Drop every edge pixel with more than two 8-neighbours (counted on the input map)."""
    mask = np.asarray(edge_map) > 0
    return mask & ~(_degree(mask) > 2)


def _signed_area(pts):
    x = pts[:, 0].astype(float)
    y = pts[:, 1].astype(float)
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def extract_contours(edge_map, min_length=5):
    """Trace junction-free 8-connected chains of an edge raster (row = y, column = x).

    Open chains start at their lexicographically smallest end pixel; closed chains
    start at their smallest pixel and run counter-clockwise in (x, y).
    """
    mask = remove_junctions(edge_map)
    if mask.size == 0 or not mask.any():
        return []
    on = {(int(x), int(y)) for y, x in zip(*np.nonzero(mask))}

    def nbrs(p):
        x, y = p
        return [(x + dx, y + dy) for dx, dy in _NEIGHBOURS if (x + dx, y + dy) in on]

    seen = set()
    curves = []
    for start in sorted(on):
        if start in seen:
            continue
        # collect the component
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            p = stack.pop()
            comp.append(p)
            for q in nbrs(p):
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
        if len(comp) < max(min_length, 2):
            continue
        ends = sorted(p for p in comp if len(nbrs(p)) < 2)
        closed = not ends
        first = ends[0] if ends else min(comp)
        chain, prev, cur = [first], None, first
        while True:
            nxt = sorted(q for q in nbrs(cur) if q != prev)
            if not nxt or nxt[0] == first or (len(chain) > 1 and first in nxt):
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
        pts = np.array(chain, dtype=np.int64)
        if closed and _signed_area(pts) < 0:
            pts = np.vstack([pts[:1], pts[1:][::-1]])
        curves.append(DigitalCurve(pts, closed))
    return curves


def read_netpbm(path):
    """Read a plain or raw PBM/PGM file into a 2-D uint array."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def next_token():
        nonlocal pos
        while True:
            while pos < len(data) and data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
                continue
            break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        return data[start:pos]

    magic = next_token()
    if magic not in (b"P1", b"P2", b"P4", b"P5"):
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    width, height = int(next_token()), int(next_token())
    maxval = 1 if magic in (b"P1", b"P4") else int(next_token())
    if magic == b"P1":
        body = data[pos:]
        bits = [c - 48 for c in body if c in (48, 49)]
        arr = np.array(bits[:width * height], dtype=np.uint8)
    elif magic == b"P2":
        arr = np.array(data[pos:].split()[:width * height], dtype=np.int64)
    elif magic == b"P4":
        pos += 1
        row_bytes = (width + 7) // 8
        raw = np.frombuffer(data[pos:pos + row_bytes * height], dtype=np.uint8)
        arr = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width]
    else:
        pos += 1
        dtype = np.uint8 if maxval < 256 else ">u2"
        arr = np.frombuffer(data[pos:], dtype=dtype)[:width * height]
    if arr.size != width * height:
        raise ValueError("truncated netpbm data")
    return arr.reshape(height, width)


def write_pgm(path, image):
    """Write a binary raster as plain PGM (edge pixels 255)."""
    img = (np.asarray(image) > 0).astype(np.uint8) * 255
    h, w = img.shape
    lines = [f"P2\n{w} {h}\n255\n"]
    for row in img:
        lines.append(" ".join(str(int(v)) for v in row) + "\n")
    with open(path, "w") as fh:
        fh.write("".join(lines))
