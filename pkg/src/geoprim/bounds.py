"""Upper bounds on the deviation a digitized straight segment can show.

``d_dig`` is the length-and-angle aware bound used by the parameter-free
polygonal approximations; ``d_dss`` and ``d_tan`` are the two classical
comparison bounds it converges to for long segments.
"""

import math

import numpy as np


def _t_max(s, phi):
    return (np.abs(np.cos(phi)) + np.abs(np.sin(phi))) / s


def slope_error_bound(s, phi):
    """Largest change of slope angle (radians) caused by rounding both segment ends."""
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    t = _t_max(s, phi)
    if np.any(t >= 1):
        raise ValueError("segment too short for bound")
    series = 1.0 - t + t * t
    plus = np.arctan(np.abs(np.sin(phi) + np.cos(phi)) * series / s)
    minus = np.arctan(np.abs(np.sin(phi) - np.cos(phi)) * series / s)
    out = np.maximum(plus, minus)
    return float(out) if out.ndim == 0 else out


def d_dig(s, phi):
    """Maximum pixel deviation from a digitized segment of length ``s`` and angle ``phi``."""
    out = np.asarray(s, dtype=float) * slope_error_bound(s, phi)
    return float(out) if np.ndim(out) == 0 else out


def d_dss(phi):
    out = np.abs(np.sin(phi)) + np.abs(np.cos(phi))
    return float(out) if np.ndim(out) == 0 else out


def d_tan(s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= math.sqrt(2)):
        raise ValueError("d_tan needs s > sqrt(2)")
    out = s * np.arcsin(math.sqrt(2) / s)
    return float(out) if out.ndim == 0 else out


def chord_bound(p, q):
    """``d_dig`` for the chord joining pixels ``p`` and ``q``; ``inf`` when the chord is too short."""
    dx = float(q[0]) - float(p[0])
    dy = float(q[1]) - float(p[1])
    s = math.hypot(dx, dy)
    # t_max >= 1, compared on squared length to stay exact for adjacent pixels
    if s == 0 or abs(dx) + abs(dy) >= dx * dx + dy * dy:
        return math.inf
    return d_dig(s, math.atan2(dy, dx))
