"""End-to-end acceptance checks; each records one PASS/FAIL line in the run summary."""

import math
import subprocess
import sys
import time

import numpy as np
from scipy.optimize import minimize_scalar

from geoprim.bounds import d_dig, d_dss, d_tan, chord_bound
from geoprim.curve_core import DigitalCurve, round_half_away
from geoprim.ellipse_detect import detect, overlap_ratio
from geoprim.ellipse_fit import (EllipseGeometric, condition_inf, ellifit, phi_forward, phi_inverse,
                                 scatter_matrix)
from geoprim.fit_metrics import hat_matrix_sum, precision_metric, reliability_metric, segment_fit
from geoprim.poly_approx import carmona_mod, pro, rdp_mod
from geoprim.synth_bench import (evaluate, gen_conic_curve, gen_ellipse_arc, gen_scene, gen_single_ellipse_scene,
                                 gen_superellipse)
from geoprim.tangent import analytic_bound, conic_tangent_angle, deb_bounds, deb_tangent, fold_angle, yuen_center
from oracles import chord_deviations, conic_point, local_conic_chain

E_GRID = [k * 10.0 ** n for n in range(-1, 5) for k in range(1, 10)] + [1e5]


def test_digitization_bound_sound(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, fails = -math.inf, 0
    for _ in range(10_000):
        s = rng.uniform(5, 200)
        phi = rng.uniform(-math.pi, math.pi)
        a = rng.uniform(-100, 100, 2)
        d = np.array([math.cos(phi), math.sin(phi)])
        t = np.linspace(0, s, int(4 * s) + 2)
        pix = round_half_away(a + t[:, None] * d)
        dev = np.abs(d[0] * (pix[:, 1] - a[1]) - d[1] * (pix[:, 0] - a[0])).max()
        margin = dev - d_dig(s, phi)
        worst = max(worst, margin)
        fails += margin > 1e-9
    elapsed = time.perf_counter() - t0
    ok = verdict(1, fails == 0 and elapsed < 10,
                 f"d_dig soundness: {fails}/10000 violations, worst margin {worst:.3g}, {elapsed:.1f} s")
    assert ok


def test_bound_limits(verdict):
    phis = np.radians(np.arange(-180, 180.0001, 0.5))
    gap = max(abs(d_dig(1e4, p) - d_dss(p)) for p in phis)
    tan_gap = abs(d_tan(1e4) - math.sqrt(2))
    ok = verdict(2, gap <= 0.02 and tan_gap <= 0.001,
                 f"bound limits: max |d_dig-d_dss| = {gap:.4f}, |d_tan-sqrt2| = {tan_gap:.2e}")
    assert ok


def test_hat_matrix_sum(verdict):
    rng = np.random.default_rng(3)
    worst = max(hat_matrix_sum(rng.normal(size=(20, 2)) * rng.uniform(1, 50) + rng.uniform(-20, 20, 2)) - 20
                for _ in range(1000))
    line = [(1.5 + 2 * t, -3 + 0.7 * 2 * t) for t in range(20)]
    col = abs(hat_matrix_sum(line) - 20)
    ok = verdict(3, worst <= 1e-9 and col <= 1e-9,
                 f"hat sum: max(sum - M) = {worst:.3g} over 1000 clouds, collinear error {col:.2e}")
    assert ok


def _pa_curves(rng):
    ells, sups = [], []
    while len(ells) < 100:
        b = rng.uniform(10, 100)
        E = EllipseGeometric(b * rng.uniform(1, 2.5), b, rng.uniform(0, math.pi), 150, 150)
        span = 2 * math.pi if rng.random() < 0.3 else rng.uniform(1, 5.5)
        ells.append(gen_ellipse_arc(E, rng.uniform(0, 2 * math.pi), span))
    while len(sups) < 100:
        a = rng.uniform(30, 120)
        sups.append(gen_superellipse(a, a * rng.uniform(0.3, 1), rng.uniform(0.6, 5), rng.uniform(0, math.pi)))
    return ells + sups


def test_pa_postconditions(verdict):
    curves = _pa_curves(np.random.default_rng(4))
    bad = []
    for k, c in enumerate(curves):
        for fn in (rdp_mod, carmona_mod):
            pa = fn(c)
            for e, dev in chord_deviations(c.points, pa.indices, c.closed)[1]:
                if dev.max() > chord_bound(c.points[e[0]], c.points[e[-1]]) + 1e-9:
                    bad.append((k, fn.__name__))
        pa = pro(c, 0.5)
        for e, _ in chord_deviations(c.points, pa.indices, c.closed)[1]:
            fit = segment_fit(c.points[e])
            if max(precision_metric(fit), reliability_metric(fit)) > 0.5 + 1e-12:
                bad.append((k, "pro"))
    ok = verdict(4, not bad, f"PA postconditions on 100 ellipse + 100 superellipse curves: {len(bad)} violations")
    assert ok


def test_deb_analytic_values(verdict):
    t0 = time.perf_counter()
    th = np.linspace(1e-4, 2 * math.pi - 1e-4, 20001)
    conic = max(np.nanmax(analytic_bound(e, 200.0, th, 10.0)) for e in E_GRID)
    parabola = max(np.nanmax(analytic_bound(1.0, a, th, 10.0)) for a in np.linspace(30, 500, 471))
    elapsed = time.perf_counter() - t0
    c_deg, p_deg = math.degrees(conic), math.degrees(parabola)
    ok = verdict(5, abs(c_deg - 0.035) <= 0.005 and abs(p_deg - 0.3913) <= 0.01 and elapsed < 5,
                 f"DEB analytic maxima {c_deg:.5f} deg (0.035), {p_deg:.5f} deg (0.3913), {elapsed:.2f} s")
    assert ok


def _reference_tangent(e, a, theta0, pixel):
    """True tangent at the curve point closest to the pixel the estimate was made at."""
    if e == 0:
        c = (1000.3, 1000.7)
        return fold_angle(math.atan2(pixel[1] - c[1], pixel[0] - c[0]) + math.pi / 2)
    res = minimize_scalar(lambda t: math.dist(conic_point(e, a, t, (1000.3, 1000.7)), pixel),
                          bounds=(theta0 - 0.2, theta0 + 0.2), method="bounded", options={"xatol": 1e-12})
    return conic_tangent_angle(e, res.x)


def _deb_total_check(e, a, R):
    n = skipped = bad = 0
    worst = -math.inf
    for th in np.linspace(0, 2 * math.pi, 73)[:-1]:
        if min(abs(th), abs(th - math.pi), abs(th - 2 * math.pi)) < math.radians(1):
            continue
        try:
            bound = deb_bounds(e, a, th, R).total
            pix, k, _ = local_conic_chain(e, a, th, 3 * R)
            est = deb_tangent(DigitalCurve(pix), k, R).slope_angle
        except ValueError:
            # no point at th, or too little curve around it for the ring
            skipped += 1
            continue
        err = abs(fold_angle(est - _reference_tangent(e, a, th, pix[k])))
        n += 1
        bad += err > bound
        worst = max(worst, err - bound)
    return n, skipped, bad, worst


def test_deb_total_bound(verdict):
    rng = np.random.default_rng(6)
    totals = np.zeros(4)
    worst = -math.inf
    for _ in range(50):
        n, s, b, w = _deb_total_check(float(rng.choice(E_GRID)), 200.0, 10)
        totals += (n, s, b, 0)
        worst = max(worst, w)
    for _ in range(50):
        n, s, b, w = _deb_total_check(0.0, float(rng.uniform(20, 1000)), 10)
        totals += (n, s, b, 0)
        worst = max(worst, w)
    n, skipped, bad, _ = totals.astype(int)
    ok = verdict(6, bad == 0 and n > 0,
                 f"DEB total bound: {bad}/{n} samples exceed it (worst margin {worst:.2e} rad), {skipped} off-curve skips")
    assert ok


def test_yuen_exact(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        b = rng.uniform(5, 200)
        E = EllipseGeometric(b * rng.uniform(1, 4), b, rng.uniform(0, math.pi), *rng.uniform(-300, 300, 2))
        ts = rng.uniform(0, 2 * math.pi) + np.array([0, 2 * math.pi / 3, 4 * math.pi / 3]) + rng.uniform(-0.6, 0.6, 3)
        pts = E.boundary(ts)
        c, s = math.cos(E.theta), math.sin(E.theta)
        ang = []
        for t in ts:
            dx, dy = -E.a * math.sin(t), E.b * math.cos(t)
            ang.append(math.atan2(dx * s + dy * c, dx * c - dy * s))
        x, y = yuen_center(*pts, *ang)
        worst = max(worst, math.hypot(x - E.xc, y - E.yc) / E.a)
    ok = verdict(7, worst <= 1e-9, f"Yuen exact tangents: max r_err/a = {worst:.2e} over 1000 ellipses")
    assert ok


def test_ellifit_round_trip(verdict):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10_000):
        a = rng.uniform(5, 300)
        E = EllipseGeometric(a, a * rng.uniform(0.1, 1), rng.uniform(0, math.pi), *rng.uniform(0, 1000, 2))
        F = phi_inverse(phi_forward(E))
        dth = abs(F.theta - E.theta)
        dth = min(dth, math.pi - dth) if E.a - E.b > 1e-9 else 0.0
        worst = max(worst, abs(F.a - E.a), abs(F.b - E.b), abs(F.xc - E.xc), abs(F.yc - E.yc), dth)
    shift = 0.0
    for _ in range(200):
        b = rng.uniform(20, 150)
        E = EllipseGeometric(rng.uniform(b, 150), b, rng.uniform(0, math.pi), 150, 150)
        pts = gen_ellipse_arc(E, rng.uniform(0, 2 * math.pi), rng.uniform(1.5, 2 * math.pi)).points
        T = rng.integers(-500, 500, 2)
        F1, F2 = ellifit(pts, False).ellipse, ellifit(pts + T, False).ellipse
        if F1 is None or F2 is None:
            shift = max(shift, 0.0 if F1 is F2 else math.inf)
            continue
        shift = max(shift, abs(F2.xc - T[0] - F1.xc), abs(F2.yc - T[1] - F1.yc),
                    abs(F2.a - F1.a), abs(F2.b - F1.b), abs(F2.theta - F1.theta))
    ok = verdict(8, worst <= 1e-9 and shift <= 1e-9,
                 f"ElliFit round trip max error {worst:.2e} over 1e4 ellipses; translation error {shift:.2e}")
    assert ok


def test_ellifit_recall(verdict):
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    rates = {}
    for deg in (90, 180, 270, 360):
        hit = 0
        for _ in range(100):
            b = rng.uniform(20, 150)
            E = EllipseGeometric(rng.uniform(b, 150), b, rng.uniform(0, math.pi), 150, 150)
            curve = gen_ellipse_arc(E, rng.uniform(0, 2 * math.pi), math.radians(deg))
            F = ellifit(curve.points, False).ellipse
            hit += F is not None and overlap_ratio(F, E) >= 0.8
        rates[deg] = hit / 100
    elapsed = time.perf_counter() - t0
    ok = (rates[90] >= 0.90 and all(rates[d] >= 0.95 for d in (180, 270, 360)) and elapsed < 30)
    verdict(9, ok, f"ElliFit recall {rates} in {elapsed:.1f} s")
    assert ok


def test_ellifit_selectivity(verdict):
    rng = np.random.default_rng(10)
    accepted = 0
    for _ in range(200):
        e = rng.uniform(1, 2)
        half = math.radians(rng.choice(np.arange(90, 181, 10)))
        curve = gen_conic_curve(rng.uniform(20, 150), e, theta_range=(math.pi - half, math.pi + half))
        accepted += ellifit(curve.points, False).ellipse is not None
    ok = verdict(10, accepted == 0, f"ElliFit selectivity: {accepted}/200 non-elliptic conics accepted")
    assert ok


def test_nsaf_conditioning(verdict):
    rng = np.random.default_rng(11)
    worse = 0
    for _ in range(100):
        b = rng.uniform(10, 80)
        E = EllipseGeometric(b * rng.uniform(1, 3), b, rng.uniform(0, math.pi), *(500 + rng.normal(0, 20, 2)))
        pts = E.boundary(rng.uniform(0, 2 * math.pi, 60)) + rng.normal(0, 0.5, (60, 2))
        worse += condition_inf(scatter_matrix(pts - pts.mean(0))) > condition_inf(scatter_matrix(pts))
    ok = verdict(11, worse == 0, f"NSAF conditioning: translated worse in {worse}/100 clouds")
    assert ok


def test_ecc_scenes(verdict):
    t0 = time.perf_counter()
    f = {}
    for mode in ("occluded", "overlapping"):
        scores = []
        for seed in range(20):
            img, truth = gen_scene(8, mode, seed=seed)
            scores.append(evaluate(detect(img, seed=seed), truth, 0.95).f_measure)
        f[mode] = float(np.mean(scores))
    elapsed = time.perf_counter() - t0
    ok = f["occluded"] >= 0.70 and f["overlapping"] >= 0.75 and elapsed < 180
    verdict(12, ok, f"ECC mean F at alpha=8: occluded {f['occluded']:.3f} (>=0.70), "
                    f"overlapping {f['overlapping']:.3f} (>=0.75), {elapsed:.0f} s")
    assert ok


def test_ecc_single_ellipse(verdict):
    misses = []
    for seed in range(20):
        img, truth = gen_single_ellipse_scene(seed=seed)
        hyps = detect(img, seed=seed)
        if len(hyps) != 1 or overlap_ratio(hyps[0].ellipse, truth.ellipses[0]) < 0.95:
            misses.append(seed)
    ok = verdict(13, not misses, f"single-ellipse scenes: {20 - len(misses)}/20 exact (misses {misses})")
    assert ok


def test_jaccard_oracle(verdict):
    big, small = EllipseGeometric(100, 100, 0, 150, 150), EllipseGeometric(50, 50, 0, 150, 150)
    E = EllipseGeometric(60, 30, 0.7, 100, 100)
    quarter = overlap_ratio(big, small)
    same = overlap_ratio(E, E)
    apart = overlap_ratio(E, EllipseGeometric(60, 30, 0.7, 400, 100))
    ok = verdict(14, abs(quarter - 0.25) <= 0.01 and same == 1 and apart == 0,
                 f"Jaccard: concentric {quarter:.4f}, identical {same}, disjoint {apart}")
    assert ok


def test_cli_determinism(verdict, tmp_path):
    def run(*argv):
        return subprocess.run([sys.executable, "-m", "geoprim", *map(str, argv)], capture_output=True, check=True)

    outputs = []
    for k in range(2):
        scene, truth = tmp_path / f"scene{k}.pgm", tmp_path / f"truth{k}.json"
        run("--seed", 7, "synth", "--alpha", 6, "--mode", "occluded", "-o", scene, "--truth", truth)
        det = run("detect-ellipses", scene, "--seed", 7).stdout
        contours = run("contours", scene).stdout
        outputs.append((scene.read_bytes(), truth.read_bytes(), det, contours))
    ok = verdict(15, outputs[0] == outputs[1], "CLI reruns with the same seed are byte-identical"
                 if outputs[0] == outputs[1] else "CLI reruns differ")
    assert ok
