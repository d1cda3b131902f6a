"""Closed-form comparison surfaces: umbrella, ruled surface over a horizontal
geodesic axis, and the heights b_I used to bound the admissible b-range.

Two height expressions for the ruled surface coexist deliberately:

* ``surface_i_height`` evaluates the polar-form branches exactly as printed,
  which for kappa < 0 disagree in sign (and in one tanh argument) with the
  graph of the actual surface.  They are kept verbatim and pinned by tests.
* ``surface_i_height_xy`` is the chart closed form ``(2 tau/kappa) *
  arctan(2xy / (4/kappa + x^2 - y^2))`` (``tau x y`` for kappa = 0), which is
  an exact zero of the minimal-graph operator and is what every solver oracle
  samples.  ``surface_i_height_polar_exact`` is the same function in polar
  form.

The PDE machinery and the nodoid b-bounds use the exact branch; see
``b_i_pipeline``.
"""

import math
import threading

import mpmath as mp
import numpy as np

from .errors import DomainError
from .geometry import SpaceParams

# ---------------------------------------------------------------------------
# umbrella
# ---------------------------------------------------------------------------


def umbrella_height_origin(params: SpaceParams, p) -> float:
    """Height of the umbrella centered at the origin: identically zero."""
    x, y = float(p[0]), float(p[1])
    if params.kappa < 0.0 and 1.0 + 0.25 * params.kappa * (x * x + y * y) <= 0.0:
        raise DomainError("point outside the model disk")
    return 0.0


def umbrella_offset_sign(params: SpaceParams, center_y0: float, p) -> int:
    """Sign predicate of the umbrella graph centered at (0, y0, 0), y0 > 0, tau > 0.

    Positive in {x < 0}, negative in {x > 0}, zero on {x = 0}.
    """
    if center_y0 <= 0.0 or params.tau <= 0.0:
        raise DomainError("predicate defined for y0 > 0 and tau > 0")
    x = float(p[0])
    return -int(np.sign(x))


# ---------------------------------------------------------------------------
# ruled surface over the axis {y = 0, z = 0}
# ---------------------------------------------------------------------------


def surface_i_height(params: SpaceParams, r, theta):
    """Polar-form height, each branch exactly as printed.

    kappa = 0: (tau/2) r^2 sin(2 theta)
    kappa < 0: (2 tau/kappa) arctan[ tanh^2(r/2) sin(2 theta)
                                     / (-kappa (1 - tanh^2(r) cos(2 theta))) ]
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r < 0.0):
        raise DomainError("polar radius must be nonnegative")
    k, tau = params.kappa, params.tau
    if k == 0.0:
        out = 0.5 * tau * r**2 * np.sin(2.0 * theta)
    else:
        num = np.tanh(0.5 * r) ** 2 * np.sin(2.0 * theta)
        den = -k * (1.0 - np.tanh(r) ** 2 * np.cos(2.0 * theta))
        out = (2.0 * tau / k) * np.arctan2(num, den)
    return float(out) if out.ndim == 0 else out


def surface_i_height_xy(params: SpaceParams, x, y):
    """Chart height of the ruled minimal surface with axis {y = 0, z = 0}.

    Exact solution of the minimal-graph equation for every kappa <= 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k, tau = params.kappa, params.tau
    if k == 0.0:
        out = tau * x * y
    else:
        q = 1.0 + 0.25 * k * (x * x + y * y)
        if np.any(q <= 0.0):
            raise DomainError("point outside the model disk")
        # 4/kappa + x^2 - y^2 < 0 everywhere on the disk, so the principal
        # arctan branch never crosses a pole
        out = (2.0 * tau / k) * np.arctan(2.0 * x * y / (4.0 / k + x * x - y * y))
    return float(out) if out.ndim == 0 else out


def surface_i_height_polar_exact(params: SpaceParams, r, theta):
    """Exact-solution height at the point of polar coordinates (r, theta),
    r the metric distance to the origin."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    k, tau = params.kappa, params.tau
    if k == 0.0:
        return surface_i_height(params, r, theta)
    t = np.tanh(0.5 * r * math.sqrt(-k)) ** 2
    out = -(2.0 * tau / k) * np.arctan2(
        t * np.sin(2.0 * theta), 1.0 - t * np.cos(2.0 * theta)
    )
    return float(out) if out.ndim == 0 else out


def surface_i_limit(params: SpaceParams, theta: float):
    """Radial limit of the printed polar height.

    kappa < 0: (2 tau/kappa)(pi/2 - theta); kappa = 0: +-inf off theta = pi/2.
    """
    if not (0.0 < theta < math.pi):
        raise DomainError(f"theta must lie in (0, pi), got {theta}")
    k, tau = params.kappa, params.tau
    if k < 0.0:
        return (2.0 * tau / k) * (0.5 * math.pi - theta)
    if theta == 0.5 * math.pi:
        return 0.0
    return math.inf if theta < 0.5 * math.pi else -math.inf


def surface_i_limit_exact(params: SpaceParams, theta: float):
    """Radial limit of the exact-solution height (sign-corrected)."""
    if not (0.0 < theta < math.pi):
        raise DomainError(f"theta must lie in (0, pi), got {theta}")
    k, tau = params.kappa, params.tau
    if k < 0.0:
        return -(2.0 * tau / k) * (0.5 * math.pi - theta)
    if theta == 0.5 * math.pi:
        return 0.0
    return math.inf if theta < 0.5 * math.pi else -math.inf


def b_i(a, phi: float, params: SpaceParams) -> float:
    """Printed-branch height of the ruled surface at polar (a, phi).

    For a = +inf uses the printed radial limit (kappa < 0 only).  phi = pi/2
    is admitted for the limit case.
    """
    if not (0.0 < phi <= 0.5 * math.pi):
        raise DomainError(f"phi must lie in (0, pi/2], got {phi}")
    if math.isinf(a):
        if params.kappa == 0.0:
            raise DomainError("radial limit is infinite for kappa = 0")
        return surface_i_limit(params, phi)
    if a <= 0.0:
        raise DomainError(f"need a > 0, got {a}")
    if params.kappa < 0.0 and phi < 0.05:
        return _b_i_highprec(a, phi, params)
    return float(surface_i_height(params, a, phi))


def b_i_pipeline(a, phi: float, params: SpaceParams) -> float:
    """Exact-solution height at polar (a, phi): the admissible-b bound used by
    the nodoid pipeline (positive on 0 < phi < pi/2, unlike the printed branch)."""
    if not (0.0 < phi <= 0.5 * math.pi):
        raise DomainError(f"phi must lie in (0, pi/2], got {phi}")
    if math.isinf(a):
        if params.kappa == 0.0:
            raise DomainError("radial limit is infinite for kappa = 0")
        return surface_i_limit_exact(params, phi)
    return float(surface_i_height_polar_exact(params, a, phi))


def _b_i_highprec(a, phi, params):
    """Double-precision-safe evaluation near phi -> 0 where the arctan argument
    degenerates; computed with mpmath and rounded once."""
    with mp.workdps(40):
        k = mp.mpf(params.kappa)
        tau = mp.mpf(params.tau)
        num = mp.tanh(mp.mpf(a) / 2) ** 2 * mp.sin(2 * mp.mpf(phi))
        den = -k * (1 - mp.tanh(mp.mpf(a)) ** 2 * mp.cos(2 * mp.mpf(phi)))
        return float((2 * tau / k) * mp.atan2(num, den))


# ---------------------------------------------------------------------------
# helicoid cache (critical case): solved on demand, memoized
# ---------------------------------------------------------------------------

_HELICOID_CACHE = {}
_HELICOID_LOCK = threading.Lock()


def helicoid_strip_graph(width: float, b: float = 0.0, h: float = 0.08, R: float = 4.0):
    """Jenkins-Serrin graph over the half-strip of the given width in E(0, 1/2):
    data 0 on the finite edge and the near ray, M on the far ray.

    The solves are cached under single-writer insertion; concurrent readers
    share the stored graph, which is treated as immutable.
    """
    key = (round(width, 12), round(b, 12), round(h, 12), round(R, 12))
    with _HELICOID_LOCK:
        hit = _HELICOID_CACHE.get(key)
    if hit is not None:
        return hit
    from .meshing import TriangleDomain
    from .solver import solve_minimal_graph

    domain = TriangleDomain(a1=math.inf, a2=width, phi=0.5 * math.pi - 1e-9,
                            params=SpaceParams(0.5))
    graph = solve_minimal_graph(domain, b=b, M=8.0 * max(1.0, abs(b)), h=h, R=R)
    with _HELICOID_LOCK:
        _HELICOID_CACHE.setdefault(key, graph)
    return _HELICOID_CACHE[key]
