"""Command-line entry point: ``geoprim <command> ...`` or ``python3 -m geoprim``.

Every command writes JSON (CSV for ``tangent`` and ``bounds``) with sorted keys and floats
cut to 9 significant digits, so equal inputs and seeds give equal bytes.
Exit status is 0 on success, 2 on bad input or usage and 1 on anything else.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import math
import sys

import numpy as np

from .bounds import d_dig, d_dss, d_tan
from .curve_core import DigitalCurve, extract_contours, read_netpbm, write_pgm
from .ellipse_detect import DEFAULTS, detect
from .ellipse_fit import EllipseGeometric, ellifit, fitzgibbon, nsaf
from .fit_metrics import curve_metrics
from .poly_approx import METHODS, approximate
from .synth_bench import SceneTruth, evaluate, gen_scene
from .tangent import deb_tangent

FITTERS = {"ellifit": ellifit, "fitzgibbon": fitzgibbon, "nsaf": nsaf}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _clean(obj):
    """Plain JSON types, floats at 9 significant digits, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.9g}")
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def _emit(obj, path):
    _emit_text(dumps(obj), path)


def _emit_text(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _read_image(path):
    try:
        return read_netpbm(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _read_curves(path):
    """A curve file holds one curve object or ``{"contours": [...]}``."""
    obj = _read_json(path)
    items = obj.get("contours", [obj]) if isinstance(obj, dict) else obj
    try:
        return [DigitalCurve.from_json(c) for c in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a curve file ({exc})") from exc


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _per_file(results, paths):
    return results[0] if len(paths) == 1 else dict(zip(paths, results))


# commands

def _contours_one(job):
    path, min_length = job
    img = _read_image(path)
    return {"image_size": [img.shape[1], img.shape[0]],
            "contours": [c.to_json() for c in extract_contours(img > 0, min_length)]}


def cmd_contours(args, rng):
    res = _map(_contours_one, [(p, args.min_length) for p in args.inputs], args.jobs)
    _emit(_per_file(res, args.inputs), args.output)


def cmd_approx(args, rng):
    out = []
    for curve in _read_curves(args.input):
        pa = approximate(curve, args.method, dtol=args.dtol, eps0=args.eps0, rtol=args.rtol)
        out.append({"approx": pa.to_json(), "metrics": curve_metrics(curve, pa).to_json()})
    _emit({"approximations": out}, args.output)


def cmd_tangent(args, rng):
    if args.radius < 2:
        raise InputError("--R must be at least 2")
    lines = ["curve,index,angle"]
    for k, curve in enumerate(_read_curves(args.input)):
        idx = args.index if args.index else range(len(curve))
        for i in idx:
            if not 0 <= i < len(curve):
                raise InputError(f"index {i} outside curve {k}")
            try:
                angle = f"{deb_tangent(curve, i, args.radius).slope_angle:.9g}"
            except ValueError:
                # ring not reached near the ends of open curves
                angle = ""
            lines.append(f"{k},{i},{angle}")
    _emit_text("\n".join(lines) + "\n", args.output)


def cmd_fit_ellipse(args, rng):
    fit = FITTERS[args.method]
    out = []
    for curve in _read_curves(args.input):
        res = fit(curve.points)
        out.append(res.to_json())
    _emit({"method": args.method, "fits": out}, args.output)


def _detect_one(job):
    path, seed, params = job
    img = _read_image(path)
    hyps = detect(img > 0, seed, **params)
    return {"image_size": [img.shape[1], img.shape[0]], "hypotheses": [h.to_json() for h in hyps]}


def svg_overlay(edge_map, ellipses, path):
    """Edge pixels in grey with the ellipses drawn on top."""
    edge_map = np.asarray(edge_map) > 0
    h, w = edge_map.shape
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>', '<g fill="#888">']
    for y, x in zip(*np.nonzero(edge_map)):
        parts.append(f'<rect x="{x}" y="{y}" width="1" height="1"/>')
    parts.append('</g><g fill="none" stroke="red" stroke-width="1">')
    for E in ellipses:
        # pixel centres sit at +0.5 in SVG user space
        cx, cy = E.xc + 0.5, E.yc + 0.5
        parts.append(f'<ellipse cx="{cx:.3f}" cy="{cy:.3f}" rx="{E.a:.3f}" ry="{E.b:.3f}" '
                     f'transform="rotate({math.degrees(E.theta):.3f} {cx:.3f} {cy:.3f})"/>')
    parts.append("</g></svg>\n")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def cmd_detect(args, rng):
    params = dict(bins=args.bins, sets=args.sets, eps_ls=args.eps_ls)
    # one seed per file, all drawn from the invocation's generator
    seeds = [int(s) for s in rng.integers(0, 2 ** 31, size=len(args.inputs))]
    if len(args.inputs) == 1:
        seeds = [args.seed]
    res = _map(_detect_one, [(p, s, params) for p, s in zip(args.inputs, seeds)], args.jobs)
    _emit(_per_file(res, args.inputs), args.output)
    if args.svg:
        if len(args.inputs) != 1:
            raise InputError("--svg needs a single input")
        ells = [EllipseGeometric(**h["ellipse"]) for h in res[0]["hypotheses"]]
        svg_overlay(_read_image(args.inputs[0]), ells, args.svg)


def cmd_synth(args, rng):
    if args.alpha < 1:
        raise InputError("--alpha must be at least 1")
    img, truth = gen_scene(args.alpha, args.mode, seed=rng)
    write_pgm(args.output, img)
    if args.truth:
        _emit(truth.to_json(), args.truth)


def _ellipses_of(obj, path):
    items = obj.get("hypotheses", obj.get("ellipses")) if isinstance(obj, dict) else obj
    if items is None:
        raise InputError(f"{path}: no hypotheses or ellipses")
    try:
        return [EllipseGeometric(**(e["ellipse"] if "ellipse" in e else e)) for e in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad ellipse ({exc})") from exc


def cmd_bench(args, rng):
    det = _ellipses_of(_read_json(args.detections), args.detections)
    truth_obj = _read_json(args.truth)
    try:
        truth = SceneTruth.from_json(truth_obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.truth}: bad truth file ({exc})") from exc
    _emit(evaluate(det, truth, args.overlap).to_json(), args.output)


def cmd_bounds(args, rng):
    lines = ["s,phi_deg,d_dig,d_dss,d_tan"]
    phis = np.arange(0.0, 90.0 + 1e-9, args.phi_step)
    for s in args.s:
        if s <= 0:
            raise InputError("segment lengths must be positive")
        for deg in phis:
            phi = math.radians(deg)
            row = [s, deg, d_dig(s, phi), d_dss(phi), d_tan(s)]
            lines.append(",".join(f"{float(v):.9g}" for v in row))
    _emit_text("\n".join(lines) + "\n", args.output)


def build_parser():
    p = _Parser(prog="geoprim", description="Digital curve primitives and ellipse detection.")
    p.add_argument("--seed", type=int, default=0, help="seed for the invocation's random generator")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for multi-file commands")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("-o", "--output", default=None, help="output file (stdout if omitted)")
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
        return sp

    sp = common(sub.add_parser("contours", help="edge map to traced curves"))
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--min-length", type=int, default=5)
    sp.set_defaults(func=cmd_contours)

    sp = common(sub.add_parser("approx", help="polygonal approximation with quality metrics"))
    sp.add_argument("input")
    sp.add_argument("--method", choices=METHODS, default="rdp-mod")
    sp.add_argument("--dtol", type=float)
    sp.add_argument("--eps0", type=float)
    sp.add_argument("--rtol", type=float)
    sp.set_defaults(func=cmd_approx)

    sp = common(sub.add_parser("tangent", help="ring-chord tangent angle per pixel (CSV)"))
    sp.add_argument("input")
    sp.add_argument("--R", "--radius", "-R", dest="radius", type=float, default=4.0)
    sp.add_argument("--index", type=int, nargs="*")
    sp.set_defaults(func=cmd_tangent)

    sp = common(sub.add_parser("fit-ellipse", help="fit one ellipse per curve"))
    sp.add_argument("input")
    sp.add_argument("--method", choices=sorted(FITTERS), default="ellifit")
    sp.set_defaults(func=cmd_fit_ellipse)

    sp = common(sub.add_parser("detect-ellipses", help="detect ellipses in edge maps"))
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--bins", type=int, default=DEFAULTS["bins"])
    sp.add_argument("--sets", type=int, default=DEFAULTS["sets"])
    sp.add_argument("--eps-ls", type=float, default=DEFAULTS["eps_ls"])
    sp.add_argument("--svg", help="write an SVG overlay here")
    sp.set_defaults(func=cmd_detect)

    sp = common(sub.add_parser("synth", help="random ellipse scene with ground truth"))
    sp.add_argument("--alpha", type=int, default=4)
    sp.add_argument("--mode", choices=("occluded", "overlapping"), default="occluded")
    sp.add_argument("--truth", help="ground-truth JSON path")
    sp.set_defaults(func=cmd_synth)

    sp = common(sub.add_parser("bench", help="precision, recall and F-measure of detections"))
    sp.add_argument("detections")
    sp.add_argument("truth")
    sp.add_argument("--overlap", type=float, default=0.95)
    sp.set_defaults(func=cmd_bench)

    sp = common(sub.add_parser("bounds", help="CSV table of the digitization bounds"))
    sp.add_argument("--s", type=float, nargs="+", default=[5, 10, 20, 50, 100, 200, 1000])
    sp.add_argument("--phi-step", type=float, default=5.0, help="degrees")
    sp.set_defaults(func=cmd_bounds)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth" and not args.output:
            raise InputError("synth needs -o")
        if args.jobs < 1:
            raise InputError("--jobs must be positive")
        rng = np.random.default_rng(args.seed)
        args.func(args, rng)
    except InputError as exc:
        print(f"geoprim: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"geoprim: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        # --help exits 0 through argparse
        return int(exc.code or 0)
    except Exception as exc:
        print(f"geoprim: internal error: {exc!r}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
