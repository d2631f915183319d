"""Digital curve primitives: polygonal approximation, tangent estimation, ellipse fitting and detection."""

from .curve_core import DigitalCurve, extract_contours, read_netpbm, write_pgm
from .bounds import d_dig, d_dss, d_tan, chord_bound
from .fit_metrics import MetricReport, curve_metrics, hat_matrix_sum
from .poly_approx import PolyApprox, approximate, rdp, rdp_mod, pro, masood, masood_mod, carmona, carmona_mod
from .tangent import deb_tangent, deb_bounds, yuen_center
from .ellipse_fit import EllipseGeometric, ellifit, fitzgibbon, nsaf
from .ellipse_detect import EllipticHypothesis, detect, detect_trace, overlap_ratio
from .synth_bench import SceneTruth, EvalResult, gen_scene, evaluate

__version__ = "0.1.0"
