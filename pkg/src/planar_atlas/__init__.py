"""Global numerical study of smooth maps of the plane: critical curves,
folds and cusps, images, flowers, preimages by continuation, and
rotation-number compatibility checks."""

__version__ = "0.1.0"

from .mapdef import BUILTIN_SOURCES, PlaneMap, builtin_map, parse_map  # noqa: E402
from .geometry import Polyline, rotation_number, winding_number  # noqa: E402
from .critical import CriticalCurve, Window, find_critical_curves, image_of_curve  # noqa: E402
from .continuation import all_preimages, build_flower, solve_preimages  # noqa: E402
from .checks import brute_force_preimages, check_annulus, check_disk, check_polydisk, standard_checks  # noqa: E402

__all__ = [
    "BUILTIN_SOURCES", "PlaneMap", "builtin_map", "parse_map", "Polyline", "rotation_number",
    "winding_number", "CriticalCurve", "Window", "find_critical_curves", "image_of_curve", "all_preimages",
    "build_flower", "solve_preimages", "brute_force_preimages", "check_annulus", "check_disk",
    "check_polydisk", "standard_checks",
]
