"""Exact geometry of the ambient spaces.

Two charts are used throughout the toolkit:

* the cylinder model of E(kappa, tau) over the base M^2(kappa), with
  conformal factor ``lambda = 1/(1 + kappa/4 (x^2+y^2))`` and orthonormal
  frame ``E1 = dx/lambda - tau*y*dz``, ``E2 = dy/lambda + tau*x*dz``,
  ``E3 = dz``.  All PDE work happens here.
* the upper half-plane model of H^2 (curvature -1) with the horocycle
  frame ``E1 = y*dx``, ``E2 = y*dy``.  All period work happens here.

Angles are radians everywhere; lengths are metric lengths of the chart in
question.  Base points in M^2(kappa) are passed around as complex numbers
``x + 1j*y`` in cylinder-model coordinates.
"""

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# ---------------------------------------------------------------------------
# ambient-space constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceParams:
    """Constants of E(4H^2-1, H) for target mean curvature H in [0, 1/2].

    H = 0 is accepted (minimal case) but flagged: the construction theorems
    assume H > 0.
    """

    H: float

    def __post_init__(self):
        if not (0.0 <= self.H <= 0.5):
            raise DomainError(f"H must lie in [0, 1/2], got {self.H}")

    @property
    def kappa(self) -> float:
        return 4.0 * self.H * self.H - 1.0

    @property
    def tau(self) -> float:
        return self.H

    @property
    def is_minimal_case(self) -> bool:
        return self.H == 0.0

    @property
    def is_critical(self) -> bool:
        """H = 1/2: base is flat, a_max is unbounded."""
        return self.H == 0.5

    @property
    def disk_radius(self) -> float:
        """Euclidean radius of the model disk (inf for kappa = 0)."""
        if self.kappa == 0.0:
            return math.inf
        return 2.0 / math.sqrt(-self.kappa)


def conformal_factor(params: SpaceParams, x, y):
    """lambda(x, y) of the base metric.  Raises DomainError outside the disk."""
    q = 1.0 + 0.25 * params.kappa * (np.asarray(x) ** 2 + np.asarray(y) ** 2)
    if np.any(q <= 0.0):
        raise DomainError("point outside the model disk of M^2(kappa)")
    out = 1.0 / q
    return float(out) if np.isscalar(x) and np.isscalar(y) else out


def frame_at(params: SpaceParams, p) -> np.ndarray:
    """Orthonormal frame at p = (x, y, z), columns E1, E2, E3 in coordinates."""
    x, y = float(p[0]), float(p[1])
    lam = conformal_factor(params, x, y)
    tau = params.tau
    return np.array(
        [
            [1.0 / lam, 0.0, 0.0],
            [0.0, 1.0 / lam, 0.0],
            [-tau * y, tau * x, 1.0],
        ]
    )


def metric_tensor(params: SpaceParams, x, y) -> np.ndarray:
    """Metric of E(kappa, tau) at (x, y, z) as a 3x3 matrix (z-independent)."""
    lam = conformal_factor(params, x, y)
    tau = params.tau
    w = np.array([lam * tau * y, -lam * tau * x, 1.0])
    g = np.diag([lam * lam, lam * lam, 0.0])
    return g + np.outer(w, w)


def coords_to_frame(params: SpaceParams, x, y, v):
    """Components of a coordinate vector v = (vx, vy, vz) in the frame E1,E2,E3.

    Vectorized: x, y scalar or arrays, v of shape (..., 3).
    """
    lam = conformal_factor(params, x, y)
    tau = params.tau
    v = np.asarray(v, dtype=float)
    c1 = lam * v[..., 0]
    c2 = lam * v[..., 1]
    c3 = v[..., 2] + lam * tau * (y * v[..., 0] - x * v[..., 1])
    return np.stack([c1, c2, c3], axis=-1)


# ---------------------------------------------------------------------------
# admissible-parameter thresholds
# ---------------------------------------------------------------------------


def a_max(phi: float, H: float) -> float:
    """Upper bound of the admissible side length, curvature -1 normalization.

    Returns ``2 artanh(cos phi)`` for 0 <= H < 1/2 and +inf for H = 1/2.
    The unbounded case is the distinguished value ``math.inf``.
    """
    _check_phi(phi)
    if not (0.0 <= H <= 0.5):
        raise DomainError(f"H must lie in [0, 1/2], got {H}")
    if H == 0.5:
        return math.inf
    return 2.0 * math.atanh(math.cos(phi))


def a_emb(phi: float) -> float:
    """Side length at which the far vertex angle is exactly pi/2 (curvature -1)."""
    _check_phi(phi)
    return math.asinh(1.0 / math.tan(phi))


def omega_side_bound(phi: float, params: SpaceParams) -> float:
    """a_max expressed as a length of M^2(4H^2-1).

    The closed form 2 artanh(cos phi) is the curvature -1 expression for the
    geodesic length at which the far vertex angle of the semi-ideal triangle
    equals phi; lengths in the base of curvature kappa scale by 1/sqrt(-kappa).
    """
    am = a_max(phi, params.H)
    if math.isinf(am):
        return math.inf
    return am / math.sqrt(-params.kappa)


def emb_side_bound(phi: float, params: SpaceParams) -> float:
    """a_emb expressed as a length of M^2(4H^2-1)."""
    if params.is_critical:
        return a_emb(phi)
    return a_emb(phi) / math.sqrt(-params.kappa)


def in_omega(a: float, phi: float, params: SpaceParams) -> bool:
    """Membership of (a, phi) in the admissible region for one infinite side."""
    try:
        _check_phi(phi)
    except DomainError:
        return False
    return 0.0 < a < omega_side_bound(phi, params)


def _check_phi(phi):
    if not (0.0 < phi < math.pi / 2.0):
        raise DomainError(f"phi must lie in (0, pi/2), got {phi}")


# ---------------------------------------------------------------------------
# base chart M^2(kappa), kappa <= 0 (complex model coordinates x + i y)
# ---------------------------------------------------------------------------


class BaseChart:
    """Geodesic calculus in the cylinder-model base disk.

    For kappa < 0 the model disk is rescaled to the unit Poincare disk by
    w = (sqrt(-kappa)/2) * p, where all classical formulas apply; lengths pick
    up a factor 1/sqrt(-kappa).  For kappa = 0 the base is flat R^2.
    """

    def __init__(self, params: SpaceParams):
        self.params = params
        self.kappa = params.kappa
        self._s = 0.0 if self.kappa == 0.0 else 0.5 * math.sqrt(-self.kappa)

    # -- conversions

    def to_unit_disk(self, p):
        return self._s * np.asarray(p, dtype=complex)

    def from_unit_disk(self, w):
        return np.asarray(w, dtype=complex) / self._s

    # -- metric

    def dist(self, p, q) -> float:
        if self.kappa == 0.0:
            return abs(complex(q) - complex(p))
        w1, w2 = self._s * complex(p), self._s * complex(q)
        num = abs(w1 - w2)
        den = abs(1.0 - w1.conjugate() * w2)
        return 2.0 * math.atanh(num / den) / math.sqrt(-self.kappa)

    def from_polar(self, r: float, beta: float) -> complex:
        """Point at geodesic distance r from the origin in direction beta."""
        if self.kappa == 0.0:
            return r * cmath.exp(1j * beta)
        w = math.tanh(0.5 * r * math.sqrt(-self.kappa)) * cmath.exp(1j * beta)
        return w / self._s

    def to_polar(self, p):
        p = complex(p)
        return self.dist(0.0, p), math.atan2(p.imag, p.real)

    def point_at(self, p, direction: float, d: float) -> complex:
        """Geodesic step of length d from p with initial Euclidean angle `direction`.

        Angles are conformal, so the initial direction in model coordinates
        equals the metric direction.
        """
        if self.kappa == 0.0:
            return complex(p) + d * cmath.exp(1j * direction)
        a = self._s * complex(p)
        # translating a -> 0 has real positive derivative at a: no rotation
        t = math.tanh(0.5 * d * math.sqrt(-self.kappa)) * cmath.exp(1j * direction)
        w = (t + a) / (1.0 + a.conjugate() * t)
        return w / self._s

    def geodesic_point(self, p, q, d: float) -> complex:
        """Point at distance d from p along the geodesic toward q."""
        if self.kappa == 0.0:
            u = complex(q) - complex(p)
            return complex(p) + d * u / abs(u)
        a, b = self._s * complex(p), self._s * complex(q)
        v = (b - a) / (1.0 - a.conjugate() * b)
        t = math.tanh(0.5 * d * math.sqrt(-self.kappa)) * v / abs(v)
        w = (t + a) / (1.0 + a.conjugate() * t)
        return w / self._s

    def direction_at(self, p, q) -> float:
        """Initial Euclidean angle at p of the geodesic toward q."""
        if self.kappa == 0.0:
            return cmath.phase(complex(q) - complex(p))
        a, b = self._s * complex(p), self._s * complex(q)
        v = (b - a) / (1.0 - a.conjugate() * b)
        return cmath.phase(v)

    def angle_at(self, p, q1, q2) -> float:
        """Unsigned angle at p between the geodesics to q1 and q2."""
        d = self.direction_at(p, q1) - self.direction_at(p, q2)
        d = abs(math.remainder(d, 2.0 * math.pi))
        return d

    def triangle_area(self, p0, p1, p2) -> float:
        """Metric area of the geodesic triangle."""
        if self.kappa == 0.0:
            u, v = complex(p1) - complex(p0), complex(p2) - complex(p0)
            return 0.5 * abs(u.real * v.imag - u.imag * v.real)
        defect = math.pi - (
            self.angle_at(p0, p1, p2)
            + self.angle_at(p1, p0, p2)
            + self.angle_at(p2, p0, p1)
        )
        return defect / (-self.kappa)

    def geodesic_to_halfplane_dist(self, p, g1, g2) -> float:
        """Distance from p to the complete geodesic through g1, g2."""
        if self.kappa == 0.0:
            u = complex(g2) - complex(g1)
            v = complex(p) - complex(g1)
            return abs(u.real * v.imag - u.imag * v.real) / abs(u)
        # translate g1 to 0; the geodesic becomes a diameter at angle alpha
        a = self._s * complex(g1)
        w2 = self._s * complex(g2)
        wp = self._s * complex(p)
        m2 = (w2 - a) / (1.0 - a.conjugate() * w2)
        mp = (wp - a) / (1.0 - a.conjugate() * wp)
        alpha = cmath.phase(m2)
        zp = mp * cmath.exp(-1j * alpha)
        # distance from z to the real diameter: sinh(d) = 2 Im z / (1 - |z|^2)
        sh = 2.0 * zp.imag / (1.0 - abs(zp) ** 2)
        return abs(math.asinh(sh)) / math.sqrt(-self.kappa)


# ---------------------------------------------------------------------------
# half-plane model of H^2 (curvature -1) -- the conjugate side
# ---------------------------------------------------------------------------


def hp_dist(z1: complex, z2: complex) -> float:
    z1, z2 = complex(z1), complex(z2)
    arg = 1.0 + (abs(z1 - z2) ** 2) / (2.0 * z1.imag * z2.imag)
    return math.acosh(arg)


@dataclass(frozen=True)
class HalfPlaneGeodesic:
    """Complete geodesic through (x0, y0) with horocycle-frame angle psi0.

    ``kind == "arc"`` is a semicircle centered on the ideal axis, parameterized
    on t in (0, pi) by the branch matching the sign of sin(psi0); the ideal
    endpoints are gamma(0) and gamma(pi).  ``kind == "vertical"`` is the
    degenerate variant {x = x0} occurring when sin(psi0) = 0.
    """

    x0: float
    y0: float
    psi0: float
    kind: str
    center: float = math.nan
    radius: float = math.nan

    @classmethod
    def from_endpoint_data(cls, x0: float, y0: float, psi0: float):
        if y0 <= 0.0:
            raise DomainError(f"half-plane point needs y0 > 0, got {y0}")
        s = math.sin(psi0)
        if abs(s) < 1e-14:
            return cls(x0, y0, psi0, kind="vertical", center=x0)
        center = x0 - y0 * math.cos(psi0) / s
        radius = abs(y0 / s)
        return cls(x0, y0, psi0, kind="arc", center=center, radius=radius)

    def point(self, t):
        """gamma(t) for t in (0, pi); vectorized in t."""
        t = np.asarray(t, dtype=float)
        if self.kind == "vertical":
            raise DomainError("vertical geodesic has no arc parameterization")
        s = math.sin(self.psi0)
        c = math.cos(self.psi0)
        if s < 0.0:
            x = self.x0 - self.y0 * (np.cos(t) + c) / s
            y = -self.y0 * np.sin(t) / s
        else:
            x = self.x0 - self.y0 * (np.cos(math.pi - t) + c) / s
            y = self.y0 * np.sin(math.pi - t) / s
        return x + 1j * y

    def ideal_endpoints(self):
        """First coordinates of gamma(0) and gamma(pi)."""
        if self.kind == "vertical":
            return (self.x0, math.inf)
        p0 = self.point(1e-12)
        ppi = self.point(math.pi - 1e-12)
        return (float(p0.real), float(ppi.real))

    def crossing_with_y_axis(self):
        """Point where the geodesic meets {x = 0}, or None."""
        if self.kind == "vertical":
            return None
        if abs(self.center) >= self.radius:
            return None
        return 1j * math.sqrt(self.radius**2 - self.center**2)


def halfplane_geodesic_from_endpoint_data(x0, y0, psi0) -> HalfPlaneGeodesic:
    return HalfPlaneGeodesic.from_endpoint_data(x0, y0, psi0)


@dataclass(frozen=True)
class ConstantCurvatureCurve:
    """Curve of constant geodesic curvature 2H through (0,1) orthogonal to the y-axis.

    ``side="concave"``: alpha(s) = (sin s, -2H + cos s)/(1-2H), H < 1/2.
    ``side="convex"`` : alpha(s) = (sin s,  2H + cos s)/(1+2H); at H = 1/2 this
    is the horocycle (sin s, 1 + cos s)/2.
    """

    H: float
    side: str

    def __post_init__(self):
        if not (0.0 <= self.H <= 0.5):
            raise DomainError(f"H must lie in [0, 1/2], got {self.H}")
        if self.side not in ("concave", "convex"):
            raise DomainError(f"side must be concave or convex, got {self.side}")
        if self.side == "concave" and self.H == 0.5:
            raise DomainError("concave branch is undefined at H = 1/2")

    @property
    def s_range(self):
        if self.side == "concave":
            m = math.acos(2.0 * self.H)
        else:
            m = math.acos(-2.0 * self.H)
        return (-m, m)

    def point(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_range
        if np.any(s <= lo) or np.any(s >= hi):
            raise DomainError("parameter outside the open curve domain")
        if self.side == "concave":
            f = 1.0 / (1.0 - 2.0 * self.H)
            return f * (np.sin(s) + 1j * (-2.0 * self.H + np.cos(s)))
        f = 1.0 / (1.0 + 2.0 * self.H)
        return f * (np.sin(s) + 1j * (2.0 * self.H + np.cos(s)))


def constant_curvature_curve(H: float, side: str) -> ConstantCurvatureCurve:
    return ConstantCurvatureCurve(H, side)


def horocycle_frame_angle(dx: float, dy: float) -> float:
    """Angle psi of a half-plane velocity against {E1 = y dx, E2 = y dy}."""
    return math.atan2(dy, dx)


def hyperbolic_curvature_samples(z: np.ndarray) -> np.ndarray:
    """Discrete geodesic curvature k_g = psi' + cos(psi) of a sampled curve.

    z: complex samples, assumed smooth; interior nodes only are returned.
    Sign is with respect to the left normal J gamma'.
    """
    x, y = z.real, z.imag
    dx, dy = np.gradient(x, edge_order=2), np.gradient(y, edge_order=2)
    psi = np.unwrap(np.arctan2(dy, dx))
    speed = np.hypot(dx, dy) / y  # metric speed per unit index
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]))])
    dpsi = np.gradient(psi, s, edge_order=2)
    return (dpsi + np.cos(psi))[2:-2]


# ---------------------------------------------------------------------------
# isometries of the half-plane (assembly reflections/translations)
# ---------------------------------------------------------------------------


class HalfPlaneIsometry:
    """Element of Isom(H^2) as a real 2x2 matrix with |det| = 1.

    det > 0 acts as the Mobius map z -> (az+b)/(cz+d); det < 0 acts on the
    conjugate, z -> (a z~ + b)/(c z~ + d).
    """

    __slots__ = ("m",)

    def __init__(self, m):
        m = np.asarray(m, dtype=float)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det == 0.0:
            raise DomainError("singular Mobius matrix")
        self.m = m / math.sqrt(abs(det))

    @property
    def det(self) -> float:
        return float(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])

    @property
    def orientation_reversing(self) -> bool:
        return self.det < 0.0

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def reflection_in_vertical(cls, x_line: float):
        return cls(np.array([[-1.0, 2.0 * x_line], [0.0, 1.0]]))

    @classmethod
    def reflection_in_circle(cls, center: float, radius: float):
        c, r = float(center), float(radius)
        return cls(np.array([[c, r * r - c * c], [1.0, -c]]))

    @classmethod
    def reflection_in_geodesic(cls, geo: HalfPlaneGeodesic):
        if geo.kind == "vertical":
            return cls.reflection_in_vertical(geo.center)
        return cls.reflection_in_circle(geo.center, geo.radius)

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        if self.orientation_reversing:
            z = np.conj(z)
        a, b = self.m[0]
        c, d = self.m[1]
        return (a * z + b) / (c * z + d)

    def compose(self, other: "HalfPlaneIsometry") -> "HalfPlaneIsometry":
        """self after other; real matrices commute with conjugation, so the
        product matrix composes and det signs multiply into the right flag."""
        return HalfPlaneIsometry(self.m @ other.m)

    def inverse(self) -> "HalfPlaneIsometry":
        a, b = self.m[0]
        c, d = self.m[1]
        return HalfPlaneIsometry(np.array([[d, -b], [-c, a]]))

    def classify(self, tol: float = 1e-9):
        """'elliptic' / 'parabolic' / 'hyperbolic' for orientation-preserving maps."""
        if self.orientation_reversing:
            return "reflection"
        tr = abs(self.m[0, 0] + self.m[1, 1])
        if tr > 2.0 + tol:
            return "hyperbolic"
        if tr < 2.0 - tol:
            return "elliptic"
        return "parabolic"

    def translation_length(self) -> float:
        if self.classify() != "hyperbolic":
            return 0.0
        tr = abs(self.m[0, 0] + self.m[1, 1])
        return 2.0 * math.acosh(0.5 * tr)

    def rotation_angle(self) -> float:
        if self.classify() != "elliptic":
            return 0.0
        tr = abs(self.m[0, 0] + self.m[1, 1])
        return 2.0 * math.acos(min(1.0, 0.5 * tr))
