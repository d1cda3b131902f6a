"""Flux integrals of solved graphs, the first period function and its root.

Conventions.  The conserved field is X = Gu / sqrt(1 + |Gu|^2); for a curve
c the flux is the line integral of <X, n> with n the unit normal obtained by
rotating the tangent clockwise (so walking with the domain on the right
makes n the inward conormal).  In model coordinates the integrand reduces to

    (lambda/alpha) * (x' (tau lambda x - u_y) + y' (tau lambda y + u_x)),

which is also <-J gamma', xi> along the lifted boundary curve: the two
operations below evaluate the same quantity through these two routes.

Closed polylines are evaluated through the discrete conservation identity
(the weak residual paired with the inside-indicator), which is the faithful
finite-element analogue of the exact statement that closed fluxes vanish;
pointwise quadrature of the discrete field cannot reach comparable accuracy
at practical mesh sizes.  The quadrature value and its two-order error
estimate are still reported.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, DomainError
from .geometry import BaseChart, SpaceParams
from .meshing import TriangleDomain
from .solver import (
    DiscreteGraph,
    LadderRung,
    SolveOptions,
    VerticalBoundaryTrace,
    default_schedule,
    extract_theta_trace,
    residual,
    truncation_ladder,
)

_GAUSS = {
    3: (
        np.array([-0.7745966692414834, 0.0, 0.7745966692414834]),
        np.array([5 / 9, 8 / 9, 5 / 9]),
    ),
    7: (
        np.array(
            [
                -0.9491079123427585,
                -0.7415311855993945,
                -0.4058451513773972,
                0.0,
                0.4058451513773972,
                0.7415311855993945,
                0.9491079123427585,
            ]
        ),
        np.array(
            [
                0.1294849661688697,
                0.2797053914892766,
                0.3818300505051189,
                0.4179591836734694,
                0.3818300505051189,
                0.2797053914892766,
                0.1294849661688697,
            ]
        ),
    ),
}


@dataclass(frozen=True)
class FluxValue:
    value: float
    curve_id: str
    orientation: str          # 'inward' or 'outer'
    err: float

    def flipped(self):
        other = "outer" if self.orientation == "inward" else "inward"
        return FluxValue(-self.value, self.curve_id, other, self.err)


def _field_at(graph: DiscreteGraph, pts, recovered=False):
    """Normalized conserved field (euclidean components) at query points.

    recovered=True uses the nodal-averaged gradient instead of the element
    one; the difference between the two estimates the discretization error.
    """
    tri, bary = graph.mesh.locate(pts)
    if recovered:
        du = np.einsum("ijk,ij->ik", graph.grad[graph.mesh.tris[tri]], bary)
    else:
        du = graph.elements().gradient(graph.u)[tri]
    x, y = pts[:, 0], pts[:, 1]
    lam = 1.0 / (1.0 + 0.25 * graph.params.kappa * (x**2 + y**2))
    tau = graph.params.tau
    g1 = du[:, 0] / lam**2 + tau * y / lam
    g2 = du[:, 1] / lam**2 - tau * x / lam
    W = np.sqrt(1.0 + lam**2 * (g1**2 + g2**2))
    return g1, g2, W, lam


def _quad_flux(graph, polyline, order, recovered=False):
    """Quadrature of the flux integrand along the polyline (as parameterized,
    normal = tangent rotated clockwise)."""
    t, w = _GAUSS[order]
    total = 0.0
    seg_a, seg_b = polyline[:-1], polyline[1:]
    h_ref = graph.mesh.h
    for a, b in zip(seg_a, seg_b):
        a = complex(a[0], a[1]) if not isinstance(a, complex) else a
        b = complex(b[0], b[1]) if not isinstance(b, complex) else b
        n_sub = max(2, int(abs(b - a) / (0.5 * h_ref)) + 1)
        cuts = np.linspace(0.0, 1.0, n_sub + 1)
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            pa = a + c0 * (b - a)
            pb = a + c1 * (b - a)
            mid = 0.5 * (pa + pb)
            half = 0.5 * (pb - pa)
            qs = np.array([mid + ti * half for ti in t])
            pts = np.column_stack([qs.real, qs.imag])
            g1, g2, W, lam = _field_at(graph, pts, recovered)
            # integrand dt with c' = (pb - pa): lambda^2 (g1 y' - g2 x') / W
            integrand = lam**2 * (g1 * (pb - pa).imag - g2 * (pb - pa).real) / W
            total += float(np.sum(w * integrand)) * 0.5
    return total


def flux_base(graph: DiscreteGraph, polyline, curve_id="c", orientation="outer") -> FluxValue:
    """Flux across a base polyline (list of complex or (x, y) pairs).

    Open arcs: Gauss quadrature with a two-order error estimate.  Closed
    loops: the conserved variational value, with the quadrature discrepancy
    folded into the error estimate.
    """
    poly = [complex(p[0], p[1]) if not isinstance(p, complex) else complex(p) for p in polyline]
    if len(poly) < 2:
        raise DomainError("polyline needs at least two points")
    arr = np.array(poly)
    closed = abs(arr[0] - arr[-1]) < 1e-12
    q3 = _quad_flux(graph, poly, 3)
    q7 = _quad_flux(graph, poly, 7)
    q7r = _quad_flux(graph, poly, 7, recovered=True)
    if not closed:
        return FluxValue(q7, curve_id, orientation, abs(q7 - q3) + abs(q7 - q7r))
    # conserved evaluation: residual paired with the inside indicator
    from .meshing import _point_in_polygon

    inside = _point_in_polygon(graph.mesh.pts, np.column_stack([arr.real, arr.imag])[:-1])
    r = residual(graph)
    value = float(np.sum(r[inside]))
    return FluxValue(value, curve_id, orientation, abs(q7 - value) + abs(q7 - q3))


def flux_boundary(graph: DiscreteGraph, chain, curve_id="gamma", orientation="outer") -> FluxValue:
    """Flux along a boundary node chain via the lifted-curve formulation.

    The integrand <-J gamma', xi> is evaluated from the surface normal in
    frame components and the lifted tangent; the trapezoid and Simpson values
    give the error estimate.
    """
    chain = np.asarray(chain, dtype=int)
    pts = graph.mesh.pts[chain]
    u = graph.u[chain]
    x, y = pts[:, 0], pts[:, 1]
    lam = 1.0 / (1.0 + 0.25 * graph.params.kappa * (x**2 + y**2))
    tau = graph.params.tau
    # du along the chain from the recovered gradient (tangential derivative)
    gx, gy = graph.grad[chain, 0], graph.grad[chain, 1]
    # integrand per unit parameter t with (x', y') from chain differences:
    # (lambda/alpha)(x'(tau lam x - u_y) + y'(tau lam y + u_x))
    alpha = np.sqrt(lam**2 + (tau * lam * y + gx) ** 2 + (tau * lam * x - gy) ** 2)
    f1 = (lam / alpha) * (tau * lam * x - gy)
    f2 = (lam / alpha) * (tau * lam * y + gx)
    dx = np.diff(x)
    dy = np.diff(y)
    mid1 = 0.5 * (f1[:-1] + f1[1:])
    mid2 = 0.5 * (f2[:-1] + f2[1:])
    trap = float(np.sum(mid1 * dx + mid2 * dy))
    # Simpson-like refinement using midpoint field values
    mpts = 0.5 * (pts[:-1] + pts[1:])
    g1m, g2m, Wm, lamm = _field_at(graph, mpts)
    # midpoint integrand from the element field: lambda^2 (g1 y' - g2 x') / W
    simp_mid = lamm**2 * (g1m * dy - g2m * dx) / Wm
    simpson = float(np.sum((mid1 * dx + mid2 * dy) / 3.0 + 2.0 / 3.0 * simp_mid))
    return FluxValue(simpson, curve_id, orientation, abs(simpson - trap))


def side_chain(graph: DiscreteGraph, side: int):
    mesh = graph.mesh
    return {1: mesh.chain1, 2: mesh.chain2, 3: mesh.chain3}[side]


def side_flux(graph: DiscreteGraph, side: int, conormal: str = "inward") -> FluxValue:
    """Consistent (variational) flux through a boundary side.

    Interior-node residual entries give the superconvergent part; the two
    corner caps are added by quadrature of the discrete field against the
    corner hat restricted to the adjacent boundary edges.
    """
    chain = side_chain(graph, side)
    r = residual(graph)
    core = float(np.sum(r[chain[1:-1]]))
    caps = 0.0
    for end in (0, -1):
        a = chain[end]
        bnode = chain[1] if end == 0 else chain[-2]
        pa, pb = graph.mesh.pts[a], graph.mesh.pts[bnode]
        t, w = _GAUSS[3]
        # hat of the corner node falls 1 -> 0 from pa to pb
        lam_hat = 0.5 * (1.0 - t)
        mid = 0.5 * (pa + pb)
        half = 0.5 * (pb - pa)
        qs = mid[None, :] + t[:, None] * half[None, :]
        g1, g2, W, lam = _field_at(graph, qs)
        dxy = pb - pa
        integrand = lam**2 * (g1 * dxy[1] - g2 * dxy[0]) / W
        caps += float(np.sum(w * lam_hat * integrand)) * 0.5
    outward = core + caps
    value = -outward if conormal == "inward" else outward
    err = abs(caps) * 0.05 + graph.residual_norm
    return FluxValue(value, f"l{side}", conormal, err)


def boundary_closure(graph: DiscreteGraph) -> float:
    """Sum of oriented fluxes over the whole boundary (discrete conservation)."""
    r = residual(graph)
    bnd = graph.mesh.boundary_nodes()
    return float(np.sum(r[bnd]))


# ---------------------------------------------------------------------------
# first period function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodFamily:
    """A one-parameter family at fixed (a, phi): noid (a1 = inf, finite l2)
    or nodoid (a2 = inf, finite l1)."""

    kind: str                # 'noid' or 'nodoid'
    a: float
    phi: float
    params: SpaceParams

    def __post_init__(self):
        if self.kind not in ("noid", "nodoid"):
            raise DomainError(f"family must be noid or nodoid, got {self.kind}")

    @property
    def side(self) -> int:
        return 2 if self.kind == "noid" else 1

    @property
    def trace_vertex(self) -> int:
        return 0

    def domain(self) -> TriangleDomain:
        if self.kind == "noid":
            return TriangleDomain(math.inf, self.a, self.phi, self.params)
        return TriangleDomain(self.a, math.inf, self.phi, self.params)


class LadderCache:
    """Memo for ladder evaluations keyed by (family, b, schedule)."""

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def key(self, family, b, schedule, with_trace):
        return (
            family.kind,
            round(family.a, 12),
            round(family.phi, 12),
            family.params.H,
            round(b, 12),
            tuple((r.M, r.R, r.h) for r in schedule),
            with_trace,
        )

    def get(self, key):
        with self._lock:
            return self._data.get(key)

    def put(self, key, value):
        with self._lock:
            self._data.setdefault(key, value)
            return self._data[key]


_CACHE = LadderCache()


def evaluate_p1(
    family: PeriodFamily,
    b: float,
    schedule=None,
    options: SolveOptions = SolveOptions(),
    with_trace: bool = False,
    n_trace: int = 121,
    cache: LadderCache = _CACHE,
):
    """Extrapolated first period P1(b) (and optionally the theta trace).

    P1 is the flux through the finite horizontal side with the inward
    conormal; for the noid family it equals the height drop along the
    conjugate h2, for the nodoid family along h1.
    """
    dom = family.domain()
    if schedule is None:
        schedule = default_schedule(b, h=0.1, R0=4.0 + max(0.0, family.a))
    key = cache.key(family, b, schedule, with_trace)
    hit = cache.get(key)
    if hit is not None:
        return hit

    def observables(graph):
        out = {"P1": side_flux(graph, family.side, "inward").value}
        if with_trace and abs(b) > 1e-12:
            tr = extract_theta_trace(graph, family.trace_vertex, n_samples=n_trace)
            out["theta"] = tr.theta
            out["trace_s"] = tr.s
        if with_trace:
            chain = side_chain(graph, family.side)
            # nu along the finite side on a fixed arc grid for the conjugate
            # plane curve; arc positions normalized to [0, 1]
            s_arc = _chain_arc(graph, chain)
            grid = np.linspace(0.0, s_arc[-1], 161)
            out["nu_side"] = np.interp(grid, s_arc, graph.nu[chain])
            out["zprime_side"] = np.interp(grid, s_arc, _vertical_speed(graph, chain))
            out["side_length"] = s_arc[-1]
        return out

    result = truncation_ladder(
        dom, b, schedule, observables, options=options, keep_graphs=with_trace
    )
    return cache.put(key, result)


def _chain_arc(graph, chain):
    """Metric arc positions along a boundary chain."""
    pts = graph.mesh.pts[chain]
    x, y = pts[:, 0], pts[:, 1]
    xm = 0.5 * (x[:-1] + x[1:])
    ym = 0.5 * (y[:-1] + y[1:])
    lam = 1.0 / (1.0 + 0.25 * graph.params.kappa * (xm**2 + ym**2))
    seg = lam * np.hypot(np.diff(x), np.diff(y))
    return np.concatenate([[0.0], np.cumsum(seg)])


def _vertical_speed(graph, chain):
    """Signed vertical speed of the conjugate plane curve along a horizontal
    side: the flux integrand of the unit-speed parameterization."""
    pts = graph.mesh.pts[chain]
    x, y = pts[:, 0], pts[:, 1]
    lam = 1.0 / (1.0 + 0.25 * graph.params.kappa * (x**2 + y**2))
    tau = graph.params.tau
    gx, gy = graph.grad[chain, 0], graph.grad[chain, 1]
    alpha = np.sqrt(lam**2 + (tau * lam * y + gx) ** 2 + (tau * lam * x - gy) ** 2)
    tx = np.gradient(x)
    ty = np.gradient(y)
    nrm = lam * np.hypot(tx, ty)
    tx, ty = tx / nrm, ty / nrm
    return (lam / alpha) * (tx * (tau * lam * x - gy) + ty * (tau * lam * y + gx))


def solve_f(
    family: PeriodFamily,
    schedule_for=None,
    tol_p1: float = 1e-6,
    options: SolveOptions = SolveOptions(),
    max_bracket_steps: int = 12,
    cache: LadderCache = _CACHE,
):
    """Root b* of the first period function for the family, |P1| <= tol_p1.

    Monotonicity of P1 in b guarantees a sign change: decreasing from
    P1(0) > 0 for noids, increasing toward positive values below the
    admissible upper bound for nodoids.  Returns (b*, history).
    """
    from .surfaces import b_i_pipeline

    if schedule_for is None:
        schedule_for = lambda b: default_schedule(b, h=0.1, R0=4.0 + family.a)

    def p1(b):
        return float(
            np.asarray(
                evaluate_p1(family, b, schedule_for(b), options, cache=cache).extrapolated["P1"]
            )
        )

    history = []
    if family.kind == "noid":
        lo, f_lo = 0.0, p1(0.0)
        history.append((lo, f_lo))
        if f_lo <= 0.0:
            raise BracketError("P1(0) <= 0 for the noid family", scan=history)
        hi = max(0.5, 0.5 * family.a)
        f_hi = p1(hi)
        history.append((hi, f_hi))
        steps = 0
        while f_hi > 0.0 and steps < max_bracket_steps:
            hi *= 2.0
            f_hi = p1(hi)
            history.append((hi, f_hi))
            steps += 1
        if f_hi > 0.0:
            raise BracketError("no sign change found for the noid family", scan=history)
    else:
        if family.params.is_critical:
            hi = 1.0
        else:
            hi = b_i_pipeline(math.inf, family.phi, family.params) * 0.98
        f_hi = p1(hi)
        history.append((hi, f_hi))
        steps = 0
        while f_hi < 0.0 and family.params.is_critical and steps < max_bracket_steps:
            hi *= 2.0
            f_hi = p1(hi)
            history.append((hi, f_hi))
            steps += 1
        if f_hi < 0.0:
            raise BracketError(
                "P1 at the admissible upper bound is negative", scan=history
            )
        lo, f_lo = -max(0.5, 0.5 * family.a), None
        f_lo = p1(lo)
        history.append((lo, f_lo))
        steps = 0
        while f_lo > 0.0 and steps < max_bracket_steps:
            lo *= 2.0
            f_lo = p1(lo)
            history.append((lo, f_lo))
            steps += 1
        if f_lo > 0.0:
            raise BracketError("no sign change found for the nodoid family", scan=history)
        lo, hi = lo, hi
        f_lo, f_hi = f_lo, f_hi
        # make (lo, hi) a decreasing-to-increasing bracket: P1 increasing
        # in b for nodoids, so f_lo < 0 < f_hi
    # Brent-style iteration on the extrapolated values, function-value stop
    a_, b_ = (lo, hi)
    fa, fb = (f_lo, f_hi)
    for _ in range(80):
        if abs(fb) <= tol_p1:
            return b_, history
        if abs(fa) <= tol_p1:
            return a_, history
        # secant proposal, safeguarded by bisection
        if fa != fb:
            c = b_ - fb * (b_ - a_) / (fb - fa)
        else:
            c = 0.5 * (a_ + b_)
        if not (min(a_, b_) < c < max(a_, b_)) or abs(c - b_) < 1e-14:
            c = 0.5 * (a_ + b_)
        fc = p1(c)
        history.append((c, fc))
        if (fa < 0) == (fc < 0):
            a_, fa = c, fc
        else:
            b_, fb = c, fc
        if abs(b_ - a_) < 1e-13:
            break
    best = min(history, key=lambda t: abs(t[1]))
    if abs(best[1]) <= tol_p1:
        return best[0], history
    raise BracketError(
        f"P1 root refinement stalled: best |P1| = {abs(best[1]):.3e}", scan=history
    )


def scan_csv_rows(family: PeriodFamily, bs, schedule_for=None, options=SolveOptions()):
    """Rows (a, phi, b, P1, err) for a scan over boundary values."""
    rows = []
    for b in bs:
        sched = schedule_for(b) if schedule_for else None
        res = evaluate_p1(family, b, sched, options)
        p1 = float(np.asarray(res.extrapolated["P1"]))
        rows.append((family.a, family.phi, b, p1, res.deltas["P1"]))
    return rows
