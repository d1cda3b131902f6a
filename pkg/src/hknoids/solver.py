"""Dirichlet solves for the minimal-graph equation in E(kappa, tau).

The weak form in model coordinates is

    R(u; v) = int (g . grad v) lambda^2 / W dx dy = 0,
    g = grad(u)/lambda^2 + (tau/lambda) (y, -x),   W^2 = 1 + lambda^2 |g|^2,

whose Jacobian is symmetric positive definite; a damped Newton iteration
from the harmonic extension of the boundary data converges in a handful of
steps, with continuation in the large boundary value M as a fallback.

Boundary data is 0 on l1, b on l2 and M (standing in for +infinity) on l3;
corner nodes take the value of the lower-numbered adjacent side.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, LadderError, SolverError
from .geometry import BaseChart, SpaceParams
from .meshing import MeshOptions, TriangleDomain, TriangleMesh, mesh_triangle_domain

# degree-5 triangle quadrature (barycentric points, weights summing to 1)
_QP = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [0.0597158717897698, 0.4701420641051151, 0.4701420641051151],
        [0.4701420641051151, 0.0597158717897698, 0.4701420641051151],
        [0.4701420641051151, 0.4701420641051151, 0.0597158717897698],
        [0.7974269853530873, 0.1012865073234563, 0.1012865073234563],
        [0.1012865073234563, 0.7974269853530873, 0.1012865073234563],
        [0.1012865073234563, 0.1012865073234563, 0.7974269853530873],
    ]
)
_QW = np.array(
    [0.225]
    + [0.1323941527885062] * 3
    + [0.1259391805448271] * 3
)


@dataclass(frozen=True)
class SolveOptions:
    newton_tol: float = 1e-10
    max_iter: int = 60
    min_damping: float = 1e-4
    continuation: bool = True
    mesh_options: MeshOptions = field(default_factory=MeshOptions)


class _Elements:
    """Per-element precomputed quantities for vectorized assembly."""

    def __init__(self, mesh: TriangleMesh, params: SpaceParams):
        pts, tris = mesh.pts, mesh.tris
        a = pts[tris[:, 0]]
        b = pts[tris[:, 1]]
        c = pts[tris[:, 2]]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
            b[:, 1] - a[:, 1]
        )
        self.area = 0.5 * det  # CCW: positive
        # grad of barycentric basis: lambda_i = (alpha_i + beta_i x + gamma_i y)
        g = np.empty((len(tris), 3, 2))
        g[:, 0, 0] = b[:, 1] - c[:, 1]
        g[:, 0, 1] = c[:, 0] - b[:, 0]
        g[:, 1, 0] = c[:, 1] - a[:, 1]
        g[:, 1, 1] = a[:, 0] - c[:, 0]
        g[:, 2, 0] = a[:, 1] - b[:, 1]
        g[:, 2, 1] = b[:, 0] - a[:, 0]
        self.grads = g / det[:, None, None]
        # quadrature point coordinates and conformal factor
        xq = np.einsum("qk,mk->mq", _QP, pts[tris][:, :, 0])
        yq = np.einsum("qk,mk->mq", _QP, pts[tris][:, :, 1])
        self.xq, self.yq = xq, yq
        self.lam = 1.0 / (1.0 + 0.25 * params.kappa * (xq**2 + yq**2))
        self.tris = tris
        self.n_nodes = mesh.n_nodes
        self.params = params
        # sparsity pattern indices for 3x3 element blocks
        self.rows = np.repeat(tris, 3, axis=1).ravel()
        self.cols = np.tile(tris, (1, 3)).ravel()

    def gradient(self, u):
        """Per-element constant gradient of a nodal field."""
        return np.einsum("mk,mkd->md", u[self.tris], self.grads)

    def _fields(self, u):
        du = self.gradient(u)
        tau = self.params.tau
        lam = self.lam
        g1 = du[:, 0, None] / lam**2 + tau * self.yq / lam
        g2 = du[:, 1, None] / lam**2 - tau * self.xq / lam
        W = np.sqrt(1.0 + lam**2 * (g1**2 + g2**2))
        return g1, g2, W

    def residual(self, u):
        g1, g2, W = self._fields(u)
        r = np.zeros(self.n_nodes)
        for q in range(len(_QW)):
            coeff = (_QW[q] * self.area) * (self.lam[:, q] ** 2 / W[:, q])
            contrib = coeff[:, None] * (
                g1[:, q, None] * self.grads[:, :, 0]
                + g2[:, q, None] * self.grads[:, :, 1]
            )
            np.add.at(r, self.tris, contrib)
        return r

    def jacobian(self, u):
        g1, g2, W = self._fields(u)
        lam2 = self.lam**2
        vals = np.zeros((len(self.tris), 3, 3))
        for q in range(len(_QW)):
            w = _QW[q] * self.area
            gv = self.grads  # (m,3,2)
            gdotphi = g1[:, q, None] * gv[:, :, 0] + g2[:, q, None] * gv[:, :, 1]
            a_ij = np.einsum("mid,mjd->mij", gv, gv) / W[:, q, None, None]
            b_ij = (
                lam2[:, q, None, None]
                * gdotphi[:, :, None]
                * gdotphi[:, None, :]
                / W[:, q, None, None] ** 3
            )
            vals += w[:, None, None] * (a_ij - b_ij)
        return sp.coo_matrix(
            (vals.ravel(), (self.rows, self.cols)),
            shape=(self.n_nodes, self.n_nodes),
        ).tocsr()


@dataclass
class DiscreteGraph:
    """A converged solution with its derived fields; treated as immutable."""

    mesh: TriangleMesh
    params: SpaceParams
    b: float
    M: float
    u: np.ndarray
    nu: np.ndarray            # per-vertex angle function lambda/alpha
    grad: np.ndarray          # per-vertex recovered gradient of u
    residual_norm: float
    newton_iters: int
    _elements: _Elements = field(default=None, repr=False)

    @property
    def h(self):
        return self.mesh.h

    @property
    def R(self):
        return self.mesh.R

    def elements(self) -> _Elements:
        if self._elements is None:
            self._elements = _Elements(self.mesh, self.params)
        return self._elements

    def lam_nodes(self):
        p = self.mesh.pts
        return 1.0 / (1.0 + 0.25 * self.params.kappa * (p[:, 0] ** 2 + p[:, 1] ** 2))

    def alpha_nodes(self):
        p = self.mesh.pts
        lam = self.lam_nodes()
        tau = self.params.tau
        t1 = tau * lam * p[:, 1] + self.grad[:, 0]
        t2 = tau * lam * p[:, 0] - self.grad[:, 1]
        return np.sqrt(lam**2 + t1**2 + t2**2)

    def normal_frame_components(self):
        """Upward unit normal in the orthonormal frame, per vertex."""
        p = self.mesh.pts
        lam = self.lam_nodes()
        tau = self.params.tau
        alpha = self.alpha_nodes()
        n1 = -(tau * lam * p[:, 1] + self.grad[:, 0]) / alpha
        n2 = (tau * lam * p[:, 0] - self.grad[:, 1]) / alpha
        n3 = lam / alpha
        return np.stack([n1, n2, n3], axis=1)


def boundary_values(mesh: TriangleMesh, b: float, M: float) -> np.ndarray:
    vals = np.zeros(mesh.n_nodes)
    present = np.zeros(mesh.n_nodes, dtype=bool)
    for chain, v in ((mesh.chain3, M), (mesh.chain2, b), (mesh.chain1, 0.0)):
        vals[chain] = v
        present[chain] = True
    return vals, present


def _recovered_gradient(mesh: TriangleMesh, elems: _Elements, u: np.ndarray):
    """Area-weighted average of element gradients at each vertex."""
    du = elems.gradient(u)
    acc = np.zeros((mesh.n_nodes, 2))
    wsum = np.zeros(mesh.n_nodes)
    w = elems.area
    for k in range(3):
        np.add.at(acc, mesh.tris[:, k], du * w[:, None])
        np.add.at(wsum, mesh.tris[:, k], w)
    return acc / wsum[:, None]


def residual(graph: DiscreteGraph) -> np.ndarray:
    """Per-node weak residual of the stored solution (boundary rows included)."""
    return graph.elements().residual(graph.u)


def _newton(elems, u0, fixed, vals, opts):
    u = u0.copy()
    u[fixed] = vals[fixed]
    free = ~fixed
    history = []
    r = elems.residual(u)
    rnorm = np.linalg.norm(r[free])
    for it in range(opts.max_iter):
        if rnorm <= opts.newton_tol:
            return u, rnorm, it, history
        J = elems.jacobian(u)
        Jff = J[free][:, free].tocsc()
        try:
            delta = spla.spsolve(Jff, -r[free])
        except RuntimeError as exc:  # singular factorization
            raise SolverError(f"linear solve failed: {exc}", history=history,
                              last_iterate=u)
        step = 1.0
        while step >= opts.min_damping:
            u_try = u.copy()
            u_try[free] += step * delta
            r_try = elems.residual(u_try)
            rn_try = np.linalg.norm(r_try[free])
            if rn_try < (1.0 - 1e-4 * step) * rnorm or rn_try <= opts.newton_tol:
                break
            step *= 0.5
        else:
            raise SolverError(
                f"Newton stalled at |R| = {rnorm:.3e}", history=history, last_iterate=u
            )
        u, r, rnorm = u_try, r_try, rn_try
        history.append((it, step, rnorm))
    raise SolverError(
        f"no convergence in {opts.max_iter} iterations, |R| = {rnorm:.3e}",
        history=history,
        last_iterate=u,
    )


def _harmonic_start(elems, fixed, vals):
    """Euclidean-harmonic extension of the boundary data."""
    n = elems.n_nodes
    rows, cols = elems.rows, elems.cols
    gv = elems.grads
    kmat = np.einsum("mid,mjd->mij", gv, gv) * elems.area[:, None, None]
    K = sp.coo_matrix((kmat.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    free = ~fixed
    rhs = -K[free][:, fixed] @ vals[fixed]
    u = vals.copy()
    u[free] = spla.spsolve(K[free][:, free].tocsc(), rhs)
    return u


def solve_dirichlet(
    mesh: TriangleMesh,
    params: SpaceParams,
    vals: np.ndarray,
    fixed: np.ndarray = None,
    options: SolveOptions = SolveOptions(),
    warm_start: np.ndarray = None,
    b: float = math.nan,
    M: float = math.nan,
) -> DiscreteGraph:
    """Solve the minimal-graph equation with explicit Dirichlet data."""
    elems = _Elements(mesh, params)
    if fixed is None:
        fixed = ~mesh.interior_mask()
    u0 = warm_start.copy() if warm_start is not None else _harmonic_start(elems, fixed, vals)
    u, rnorm, iters, _ = _newton(elems, u0, fixed, vals, options)
    grad = _recovered_gradient(mesh, elems, u)
    graph = DiscreteGraph(
        mesh=mesh, params=params, b=b, M=M, u=u, nu=None, grad=grad,
        residual_norm=rnorm, newton_iters=iters, _elements=elems,
    )
    graph.nu = graph.lam_nodes() / graph.alpha_nodes()
    return graph


def solve_minimal_graph(
    domain: TriangleDomain,
    b: float,
    M: float,
    h: float,
    R: float = math.inf,
    options: SolveOptions = SolveOptions(),
    mesh: TriangleMesh = None,
    warm_start: np.ndarray = None,
) -> DiscreteGraph:
    """Solve the Jenkins-Serrin data (0, b, M) over the (truncated) triangle."""
    if not (M > max(0.0, b)):
        raise DomainError(f"need M > max(0, b), got M={M}, b={b}")
    if mesh is None:
        mesh = mesh_triangle_domain(domain, h, R=R, options=options.mesh_options)
    vals, fixed = boundary_values(mesh, b, M)
    try:
        return solve_dirichlet(
            mesh, domain.params, vals, fixed, options, warm_start, b=b, M=M
        )
    except SolverError:
        if not options.continuation:
            raise
    # continuation in M from a shallow problem
    m_path = [max(2.0, abs(b) + 1.0)]
    while m_path[-1] < M:
        m_path.append(min(M, 2.0 * m_path[-1]))
    graph = None
    for m_k in m_path:
        vals_k, _ = boundary_values(mesh, b, m_k)
        start = graph.u if graph is not None else None
        graph = solve_dirichlet(
            mesh, domain.params, vals_k, fixed, options, start, b=b, M=m_k
        )
    return graph


# ---------------------------------------------------------------------------
# traces of the normal rotation angle along vertical boundary segments
# ---------------------------------------------------------------------------


@dataclass
class VerticalBoundaryTrace:
    """Samples (s, theta(s)) of the normal rotation angle, s upward arc length.

    theta is the frame angle of the horizontal unit normal (the downhill
    direction of u at the vertex), recovered from level-direction fits.
    """

    vertex: int            # 0, 1 or 2
    s: np.ndarray
    theta: np.ndarray
    span: tuple            # (low value, high value) of u at the segment
    sector: tuple          # (dir_a, dir_b, orient)

    @property
    def total_turn(self):
        return float(self.theta[-1] - self.theta[0])


def _corner_geometry(graph: DiscreteGraph, vertex: int):
    mesh = graph.mesh
    chart = BaseChart(graph.params)
    d1, d2 = (
        mesh.domain.truncated_lengths(mesh.R)
        if mesh.domain.semi_ideal
        else (mesh.domain.a1, mesh.domain.a2)
    )
    p0 = 0.0 + 0.0j
    P1 = chart.from_polar(d1, 0.0)
    P2 = chart.from_polar(d2, mesh.domain.phi)
    b, M = graph.b, graph.M
    if vertex == 0:
        corner, na, nb = p0, P1, P2
        va, vb = 0.0, b
    elif vertex == 2:
        corner, na, nb = P2, p0, P1
        va, vb = b, M
    elif vertex == 1:
        corner, na, nb = P1, p0, P2
        va, vb = 0.0, M
    else:
        raise DomainError(f"vertex must be 0, 1 or 2, got {vertex}")
    dir_a = chart.direction_at(corner, na)
    dir_b = chart.direction_at(corner, nb)
    # orientation of the interior sector from dir_a
    spread = math.remainder(dir_b - dir_a, 2.0 * math.pi)
    orient = 1.0 if spread > 0 else -1.0
    eta = abs(spread)
    return chart, corner, dir_a, eta, orient, va, vb


def extract_theta_trace(
    graph: DiscreteGraph,
    vertex: int,
    n_samples: int = 121,
    rings=(2.0, 3.0, 4.0, 5.0),
    fit_degree: int = 2,
) -> VerticalBoundaryTrace:
    """Normal rotation angle along the vertical segment over a domain corner.

    The level set {u = t} leaves the corner in a direction beta(t) inside the
    corner sector; theta(t) is that direction turned to the downhill normal.
    beta is sampled on small rings and extrapolated to ring radius zero.
    """
    chart, corner, dir_a, eta, orient, va, vb = _corner_geometry(graph, vertex)
    lo, hi = (va, vb) if va <= vb else (vb, va)
    if hi - lo <= 0:
        raise DomainError("vertical segment vanishes (b = 0): trace is empty")
    mesh = graph.mesh
    lam_c = 1.0 / (1.0 + 0.25 * graph.params.kappa * abs(corner) ** 2)
    base = graph.mesh.h * 0.25
    radii = [r * base / lam_c for r in rings]

    n_ang = 160
    margin = 1e-3 * eta
    betas = np.linspace(margin, eta - margin, n_ang)
    t_interior = lo + (hi - lo) * np.linspace(0.0, 1.0, n_samples)[1:-1]

    beta_of_t = []
    for rho in radii:
        angles = dir_a + orient * betas
        qs = np.column_stack(
            [corner.real + rho * np.cos(angles), corner.imag + rho * np.sin(angles)]
        )
        uvals = mesh.eval_linear(graph.u, qs)
        # enforce monotonicity of u along the arc before inverting
        inc = va <= vb
        uu = uvals if inc else uvals[::-1]
        bb = betas if inc else betas[::-1]
        uu = np.maximum.accumulate(uu)
        beta_of_t.append(np.interp(t_interior, uu, bb))
    beta_of_t = np.asarray(beta_of_t)

    # extrapolate ring radius -> 0
    A = np.vander(np.asarray(radii), N=fit_degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(A, beta_of_t, rcond=None)
    beta0 = coef[0]

    # analytic endpoints: levels leave tangent to the adjacent sides
    t_full = np.concatenate([[lo], t_interior, [hi]])
    beta_full = np.concatenate([[0.0], beta0, [eta]])

    sgn = 1.0 if vb > va else -1.0
    theta_of_t = dir_a + orient * beta_full - orient * sgn * 0.5 * math.pi

    # upward parameterization s = t - lo
    s = t_full - lo
    return VerticalBoundaryTrace(
        vertex=vertex,
        s=s,
        theta=theta_of_t,
        span=(lo, hi),
        sector=(dir_a, eta, orient),
    )


# ---------------------------------------------------------------------------
# diagnostics of the angle function
# ---------------------------------------------------------------------------


def nu_diagnostics(graph: DiscreteGraph, tol: float = 5e-3) -> dict:
    """Interior near-1 local maxima of nu along the finite horizontal sides."""
    out = {}
    for side, chain in ((1, graph.mesh.chain1), (2, graph.mesh.chain2)):
        vals = graph.nu[chain]
        hits = []
        for i in range(1, len(chain) - 1):
            if vals[i] > 1.0 - tol and vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1]:
                hits.append((int(chain[i]), float(vals[i])))
        # merge adjacent plateau nodes into one maximum
        merged = []
        last_node = None
        for node, v in hits:
            if merged and last_node is not None and _adjacent_in_chain(chain, last_node, node):
                if v > merged[-1][1]:
                    merged[-1] = (node, v)
            else:
                merged.append((node, v))
            last_node = node
        out[side] = merged
    return out


def _adjacent_in_chain(chain, n1, n2):
    idx = {int(v): i for i, v in enumerate(chain)}
    return abs(idx[int(n1)] - idx[int(n2)]) == 1


# ---------------------------------------------------------------------------
# truncation ladder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LadderRung:
    M: float
    R: float
    h: float


def default_schedule(b: float, h: float, R0: float = 4.0) -> list:
    """(M, R, h) rungs: M in {8,16,32} max(1,|b|), R in {R0, R0+2, R0+4},
    h decreasing by 1/sqrt(2) per rung."""
    mb = max(1.0, abs(b))
    return [
        LadderRung(8.0 * mb, R0, h),
        LadderRung(16.0 * mb, R0 + 2.0, h / math.sqrt(2.0)),
        LadderRung(32.0 * mb, R0 + 4.0, h / 2.0),
    ]


@dataclass
class LadderResult:
    rungs: list
    graphs: list
    observables: list       # dict per rung
    extrapolated: dict
    rates: dict
    deltas: dict


def truncation_ladder(
    domain: TriangleDomain,
    b: float,
    schedule: list,
    observable_fn,
    options: SolveOptions = SolveOptions(),
    check_monotone: bool = False,
    ladder_tol: float = None,
    keep_graphs: bool = True,
) -> LadderResult:
    """Solve the rung sequence and Richardson-extrapolate the observables.

    observable_fn(graph) -> dict of named floats / 1d arrays evaluated on a
    rung-independent grid.  Monotonicity checks solve one extra intermediate
    problem per rung pair: raising M at fixed mesh must raise u everywhere,
    and widening the truncation must lower it on the common domain.
    """
    for r1, r2 in zip(schedule[:-1], schedule[1:]):
        if not (r2.M > r1.M and r2.R > r1.R and r2.h < r1.h):
            raise DomainError("schedule must increase M, R and decrease h")
    graphs, obs = [], []
    warm = None
    for rung in schedule:
        mesh = mesh_triangle_domain(domain, rung.h, R=rung.R, options=options.mesh_options)
        if warm is not None:
            u0 = warm[0].mesh.eval_linear(warm[0].u, mesh.pts)
        else:
            u0 = None
        g = solve_minimal_graph(
            domain, b, rung.M, rung.h, R=rung.R, options=options, mesh=mesh,
            warm_start=u0,
        )
        if check_monotone and warm is not None:
            _monotone_checks(domain, b, warm[0], g, options)
        graphs.append(g)
        obs.append(observable_fn(g))
        warm = (g,)
    extrapolated, rates, deltas = {}, {}, {}
    ratio = schedule[0].h / schedule[1].h if len(schedule) > 1 else 2.0
    for key in obs[-1]:
        series = [np.asarray(o[key], dtype=float) for o in obs]
        if len(series) >= 3:
            d1 = np.linalg.norm(np.atleast_1d(series[-2] - series[-3]))
            d2 = np.linalg.norm(np.atleast_1d(series[-1] - series[-2]))
            if d2 > 1e-300 and d1 > d2:
                p = math.log(d1 / d2) / math.log(ratio)
                p = min(3.0, max(0.5, p))
            else:
                p = 2.0
            extrapolated[key] = series[-1] + (series[-1] - series[-2]) / (ratio**p - 1.0)
            rates[key] = p
            deltas[key] = float(d2)
        elif len(series) == 2:
            extrapolated[key] = series[-1] + (series[-1] - series[-2]) / (ratio**2 - 1.0)
            rates[key] = None
            deltas[key] = float(np.linalg.norm(np.atleast_1d(series[-1] - series[-2])))
        else:
            extrapolated[key] = series[-1]
            rates[key] = None
            deltas[key] = math.inf
    if ladder_tol is not None:
        worst = max(deltas.values())
        if worst > ladder_tol:
            raise LadderError(
                f"ladder not stabilized: final delta {worst:.3e} > {ladder_tol:.3e}"
            )
    return LadderResult(
        rungs=list(schedule),
        graphs=graphs if keep_graphs else [graphs[-1]],
        observables=obs,
        extrapolated=extrapolated,
        rates=rates,
        deltas=deltas,
    )


def _monotone_checks(domain, b, g_prev, g_next, options):
    """Comparison-principle checks between consecutive rungs."""
    # raising M on the previous mesh raises the solution pointwise
    g_mid = solve_minimal_graph(
        domain, b, g_next.M, g_prev.h, R=g_prev.R, options=options,
        mesh=g_prev.mesh, warm_start=g_prev.u,
    )
    if np.any(g_mid.u < g_prev.u - 1e-8):
        raise LadderError("M-monotonicity violated: solver bug")
    # widening the truncation lowers the solution on the common domain
    interior = g_prev.mesh.interior_mask()
    u_wide = g_next.mesh.eval_linear(g_next.u, g_prev.mesh.pts[interior])
    if np.any(u_wide > g_mid.u[interior] + max(0.05, 0.05 * abs(b))):
        raise LadderError("R-monotonicity violated: solver bug")
