"""Triangulation of the base domains.

Every solve domain is a finite geodesic triangle p0 P1 P2 in M^2(kappa):
infinite sides are truncated by moving the far vertex to geodesic distance R
along the same ray, which reproduces the exhaustion used to build the
infinite-data solutions and keeps the truncation ladder monotone.

Meshes are unstructured: boundary nodes are walked along the geodesic sides
at the local target size, interior nodes are stratified-random with density
1/size^2 (fixed seed), and the point set is Delaunay-triangulated in the
conformal chart and relaxed by a few smoothing passes.  The size field
carries corner grading (factor 1/4), a boundary layer toward l3 (where the
data is large), exponential coarsening far from the finite features, and a
local-feature-size cap inside thin truncated wedges.

Minimum-angle gate: 15 degrees, relaxed only near domain corners whose own
interior angle is small (thin truncated wedges cannot do better than the
domain allows).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import DomainError, MeshQualityError
from .geometry import BaseChart, SpaceParams, in_omega, omega_side_bound

MIN_ANGLE = math.radians(15.0)


@dataclass(frozen=True)
class TriangleDomain:
    """Base triangle Delta(a1, a2, phi); a1/a2 may be math.inf (not both).

    l1 = p0 p1 along direction 0 with length a1, l2 = p0 p2 along direction
    phi with length a2, l3 = p1 p2.  Boundary data is 0 on l1, b on l2 and
    +infinity (numerically M) on l3.
    """

    a1: float
    a2: float
    phi: float
    params: SpaceParams

    def __post_init__(self):
        if not (0.0 < self.phi < 0.5 * math.pi):
            raise DomainError(f"need 0 < phi < pi/2, got {self.phi}")
        for a in (self.a1, self.a2):
            if not (a > 0.0):
                raise DomainError(f"side lengths must be positive, got {a}")
        if math.isinf(self.a1) and math.isinf(self.a2):
            raise DomainError("at most one side may be infinite")
        if math.isinf(self.a1) and not in_omega(self.a2, self.phi, self.params):
            raise DomainError(
                f"(a2, phi)=({self.a2}, {self.phi}) outside the admissible "
                f"region: need a2 < {omega_side_bound(self.phi, self.params):.6g}"
            )
        if math.isinf(self.a2) and not in_omega(self.a1, self.phi, self.params):
            raise DomainError(
                f"(a1, phi)=({self.a1}, {self.phi}) outside the admissible "
                f"region: need a1 < {omega_side_bound(self.phi, self.params):.6g}"
            )

    @property
    def semi_ideal(self) -> bool:
        return math.isinf(self.a1) or math.isinf(self.a2)

    @property
    def ideal_vertex(self):
        if math.isinf(self.a1):
            return 1
        if math.isinf(self.a2):
            return 2
        return None

    def truncated_lengths(self, R: float):
        """(d1, d2) after replacing infinite sides by radius R."""
        if self.semi_ideal:
            finite = self.a2 if math.isinf(self.a1) else self.a1
            if R <= finite:
                raise DomainError(f"truncation radius {R} must exceed {finite}")
        d1 = R if math.isinf(self.a1) else self.a1
        d2 = R if math.isinf(self.a2) else self.a2
        return d1, d2


@dataclass(frozen=True)
class MeshOptions:
    corner_factor: float = 0.25
    zone_inner: float = 0.3    # absolute metric radius of full refinement
    zone_outer: float = 1.0    # absolute metric radius where grading ends
    layer_factor: float = 0.25  # refinement toward l3
    far_beta: float = 0.5
    far_cap: float = 16.0
    lfs_factor: float = 0.5
    smooth_passes: int = 8
    min_angle: float = MIN_ANGLE
    seed: int = 2024


@dataclass
class TriangleMesh:
    pts: np.ndarray                 # (N, 2) model coordinates
    tris: np.ndarray                # (M, 3) CCW
    chain1: np.ndarray              # node indices along l1, p0 -> P1
    chain2: np.ndarray              # node indices along l2, p0 -> P2
    chain3: np.ndarray              # node indices along l3, P1 -> P2
    domain: TriangleDomain
    h: float
    R: float
    min_angle: float
    _tree: cKDTree = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.pts.shape[0]

    @property
    def i_p0(self):
        return int(self.chain1[0])

    @property
    def i_p1(self):
        return int(self.chain1[-1])

    @property
    def i_p2(self):
        return int(self.chain2[-1])

    def boundary_nodes(self):
        return np.unique(np.concatenate([self.chain1, self.chain2, self.chain3]))

    def interior_mask(self):
        m = np.ones(self.n_nodes, dtype=bool)
        m[self.boundary_nodes()] = False
        return m

    # -- point location --------------------------------------------------

    def _ensure_tree(self):
        if self._tree is None:
            cent = self.pts[self.tris].mean(axis=1)
            self._tree = cKDTree(cent)

    def locate(self, q, k: int = 24):
        """Element index and barycentric coordinates for query points (Q, 2).

        Falls back to the nearest candidate element (clamped barycentrics)
        for points marginally outside, which happens along polygonal sides.
        """
        self._ensure_tree()
        q = np.atleast_2d(np.asarray(q, dtype=float))
        kq = min(k, len(self.tris))
        _, idx = self._tree.query(q, k=kq)
        idx = idx.reshape(len(q), -1)
        tri_out = np.empty(len(q), dtype=int)
        bary_out = np.empty((len(q), 3))
        a = self.pts[self.tris[:, 0]]
        b = self.pts[self.tris[:, 1]]
        c = self.pts[self.tris[:, 2]]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
            b[:, 1] - a[:, 1]
        )
        for row, p in enumerate(q):
            best, best_t, best_b = -1e30, -1, None
            for t in idx[row]:
                va, dt = a[t], det[t]
                lb = ((p[0] - va[0]) * (c[t, 1] - va[1]) - (p[1] - va[1]) * (c[t, 0] - va[0])) / dt
                lc = ((b[t, 0] - va[0]) * (p[1] - va[1]) - (b[t, 1] - va[1]) * (p[0] - va[0])) / dt
                bar = np.array([1.0 - lb - lc, lb, lc])
                score = bar.min()
                if score > best:
                    best, best_t, best_b = score, t, bar
                if score >= -1e-12:
                    break
            bar = np.clip(best_b, 0.0, 1.0)
            bar /= bar.sum()
            tri_out[row] = best_t
            bary_out[row] = bar
        return tri_out, bary_out

    def eval_linear(self, values, q):
        """Evaluate a nodal field at query points by P1 interpolation."""
        tri, bary = self.locate(q)
        return np.einsum("ij,ij->i", values[self.tris[tri]], bary)


def _walk_side(chart, p_from, p_to, size_fn):
    """Nodes along the geodesic side from p_from to p_to at the local size."""
    L = chart.dist(p_from, p_to)
    s = [0.0]
    while s[-1] < L:
        pt = chart.geodesic_point(p_from, p_to, s[-1])
        s.append(s[-1] + max(1e-6, size_fn(pt)))
        if len(s) > 100000:
            raise MeshQualityError("size field produced too many boundary nodes")
    if len(s) > 2 and (L - s[-2]) < 0.45 * (s[-1] - s[-2]):
        del s[-2]
    scale = L / s[-1]
    pts = [chart.geodesic_point(p_from, p_to, v * scale) for v in s]
    pts[0], pts[-1] = p_from, p_to
    return pts


def _point_in_polygon(q, poly):
    """Vectorized crossing-number test; q (Q, 2), poly (P, 2) CCW, implicit close."""
    x, y = q[:, 0], q[:, 1]
    inside = np.zeros(len(q), dtype=bool)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cond = (y0 > y) != (y1 > y)
        if not np.any(cond):
            continue
        xs = (x1 - x0) * (y - y0) / (y1 - y0) + x0
        inside ^= cond & (x < xs)
    return inside


def mesh_triangle_domain(
    domain: TriangleDomain,
    h: float,
    R: float = math.inf,
    options: MeshOptions = MeshOptions(),
) -> TriangleMesh:
    """Mesh the (possibly truncated) geodesic triangle at target size h."""
    if h <= 0:
        raise DomainError(f"target edge length must be positive, got {h}")
    if domain.semi_ideal and math.isinf(R):
        raise DomainError("semi-ideal domain needs a finite truncation radius R")
    chart = BaseChart(domain.params)
    d1, d2 = domain.truncated_lengths(R) if domain.semi_ideal else (domain.a1, domain.a2)
    phi = domain.phi
    P1 = chart.from_polar(d1, 0.0)
    P2 = chart.from_polar(d2, phi)
    corners = [0.0 + 0.0j, P1, P2]
    r_core = 1.5 + min(d1, d2)
    kappa = domain.params.kappa

    scale0 = min(1.0, d1, d2)
    zone_lo = options.zone_inner * scale0
    zone_hi = options.zone_outer * scale0

    def size(p) -> float:
        r = chart.dist(0.0, p)
        dmin = min(chart.dist(p, c) for c in corners)
        lo, hi = zone_lo, zone_hi
        if dmin <= lo:
            vg = options.corner_factor
        elif dmin >= hi:
            vg = 1.0
        else:
            vg = options.corner_factor + (1 - options.corner_factor) * (dmin - lo) / (hi - lo)
        d3 = chart.geodesic_to_halfplane_dist(p, P1, P2)
        if d3 <= lo:
            lg = options.layer_factor
        elif d3 >= hi:
            lg = 1.0
        else:
            lg = options.layer_factor + (1 - options.layer_factor) * (d3 - lo) / (hi - lo)
        far = min(options.far_cap, math.exp(options.far_beta * max(0.0, r - r_core)))
        # local feature size: inside thin wedges (truncated near-ideal corners)
        # isotropic cells must shrink with the wedge width
        dl1 = chart.geodesic_to_halfplane_dist(p, 0.0, P1)
        dl2 = chart.geodesic_to_halfplane_dist(p, 0.0, P2)
        lfs_cap = max(options.corner_factor * h, options.lfs_factor * (d3 + min(dl1, dl2)))
        return min(h * min(vg, lg) * far, lfs_cap)

    def lam_at(p):
        return 1.0 / (1.0 + 0.25 * kappa * (p.real * p.real + p.imag * p.imag))

    # --- boundary nodes --------------------------------------------------
    side1 = _walk_side(chart, corners[0], P1, size)
    side2 = _walk_side(chart, corners[0], P2, size)
    side3 = _walk_side(chart, P1, P2, size)

    bnd_pts = [corners[0], P1, P2]
    chain1_ix = [0] + [len(bnd_pts) + i for i in range(len(side1) - 2)] + [1]
    bnd_pts.extend(side1[1:-1])
    chain2_ix = [0] + [len(bnd_pts) + i for i in range(len(side2) - 2)] + [2]
    bnd_pts.extend(side2[1:-1])
    chain3_ix = [1] + [len(bnd_pts) + i for i in range(len(side3) - 2)] + [2]
    bnd_pts.extend(side3[1:-1])

    poly_ix = chain1_ix[:-1] + chain3_ix[:-1] + chain2_ix[::-1][:-1]
    poly = np.array([[bnd_pts[i].real, bnd_pts[i].imag] for i in poly_ix])

    # --- interior seeds: stratified over the fan from p0 ------------------
    rng = np.random.default_rng(options.seed)
    seeds = []

    def seed_triangle(A, B, C, depth=0):
        ux, uy = B.real - A.real, B.imag - A.imag
        vx, vy = C.real - A.real, C.imag - A.imag
        area = 0.5 * abs(ux * vy - uy * vx)
        if area <= 0:
            return
        cen = (A + B + C) / 3.0
        dens_c = max(
            (lam_at(q) / size(q)) ** 2 for q in (cen, (A + cen) / 2, (B + cen) / 2, (C + cen) / 2)
        )
        n_est = max(1, int(2.4 * area * dens_c))
        if (n_est > 800 or depth < 2) and depth < 14:
            AB, BC, CA = 0.5 * (A + B), 0.5 * (B + C), 0.5 * (C + A)
            for sub in ((A, AB, CA), (AB, B, BC), (CA, BC, C), (AB, BC, CA)):
                seed_triangle(*sub, depth=depth + 1)
            return
        r1, r2 = rng.random(n_est), rng.random(n_est)
        flip = r1 + r2 > 1.0
        r1[flip], r2[flip] = 1.0 - r1[flip], 1.0 - r2[flip]
        px = A.real + r1 * ux + r2 * vx
        py = A.imag + r1 * uy + r2 * vy
        accept = rng.random(n_est)
        for xq, yq, aq in zip(px, py, accept):
            p = complex(xq, yq)
            dens = (lam_at(p) / size(p)) ** 2
            if aq < dens / (2.4 * dens_c):
                seeds.append(p)

    far_path = chain1_ix + chain3_ix[1:]  # p0 ... P1 ... P2
    for i in range(1, len(far_path) - 1):
        seed_triangle(corners[0], bnd_pts[far_path[i]], bnd_pts[far_path[i + 1]])

    boundary_arr = np.array([[p.real, p.imag] for p in bnd_pts])
    if seeds:
        seeds_arr = np.array([[p.real, p.imag] for p in seeds])
        inside = _point_in_polygon(seeds_arr, poly)
        tree_b = cKDTree(boundary_arr)
        dist_b, nearest = tree_b.query(seeds_arr)
        lam_s = 1.0 / (1.0 + 0.25 * kappa * (seeds_arr ** 2).sum(axis=1))
        loc_size = np.array([size(complex(*boundary_arr[j])) for j in nearest])
        inside &= dist_b * lam_s > 0.6 * loc_size
        seeds_arr = seeds_arr[inside]
    else:
        seeds_arr = np.zeros((0, 2))

    pts = np.vstack([boundary_arr, seeds_arr])
    n_bnd = len(boundary_arr)
    scale_w = 0.5 * math.sqrt(-kappa) if kappa < 0 else 1.0

    # --- Delaunay + smoothing ---------------------------------------------
    for _ in range(max(0, options.smooth_passes)):
        tris = Delaunay(pts * scale_w).simplices
        cent = pts[tris].mean(axis=1)
        tris = tris[_point_in_polygon(cent, poly)]
        acc = np.zeros_like(pts)
        cnt = np.zeros(len(pts))
        for k in range(3):
            i = tris[:, k]
            for k2 in (1, 2):
                j = tris[:, (k + k2) % 3]
                np.add.at(acc, i, pts[j])
                np.add.at(cnt, i, 1.0)
        mask = cnt > 0
        mask[:n_bnd] = False
        new_pts = pts.copy()
        new_pts[mask] = acc[mask] / cnt[mask, None]
        moved_ok = _point_in_polygon(new_pts, poly)
        moved_ok[:n_bnd] = False
        pts[moved_ok] = new_pts[moved_ok]

    # --- fix-up rounds: split boundary edges of flat caps, seed centroids
    # of interior offenders, re-triangulate ------------------------------
    chains = {1: chain1_ix, 2: chain2_ix, 3: chain3_ix}
    corner_vids = (0, 1, 2)
    corner_angles = (
        phi,
        chart.angle_at(P1, corners[0], P2),
        chart.angle_at(P2, corners[0], P1),
    )

    def lfs(p):
        d3 = chart.geodesic_to_halfplane_dist(p, P1, P2)
        dl1 = chart.geodesic_to_halfplane_dist(p, 0.0, P1)
        dl2 = chart.geodesic_to_halfplane_dist(p, 0.0, P2)
        return d3 + min(dl1, dl2)

    for _round in range(8):
        tris = Delaunay(pts * scale_w).simplices
        cent = pts[tris].mean(axis=1)
        tris = tris[_point_in_polygon(cent, poly)]
        z = pts[:, 0] + 1j * pts[:, 1]
        ang = np.empty((len(tris), 3))
        for k in range(3):
            pz = z[tris[:, k]]
            u = z[tris[:, (k + 1) % 3]] - pz
            v = z[tris[:, (k + 2) % 3]] - pz
            ang[:, k] = np.abs(np.angle(u / v))
        tri_min = ang.min(axis=1)
        bad_ids = []
        for tid in np.flatnonzero(tri_min < 1.05 * options.min_angle):
            t = tris[tid]
            skip = False
            for cid, ca in zip(corner_vids, corner_angles):
                if cid in t and tri_min[tid] >= 0.75 * ca:
                    skip = True
            cz = complex(*pts[t].mean(axis=0))
            longest = max(
                chart.dist(z[t[0]], z[t[1]]),
                chart.dist(z[t[1]], z[t[2]]),
                chart.dist(z[t[0]], z[t[2]]),
            )
            if lfs(cz) < 1.6 * longest:
                skip = True
            if not skip:
                bad_ids.append(tid)
        if not bad_ids:
            break
        chain_edges = {}
        for s, ch in chains.items():
            for a_, b_ in zip(ch[:-1], ch[1:]):
                chain_edges[frozenset((a_, b_))] = s
        new_interior = []
        for tid in bad_ids:
            t = [int(v) for v in tris[tid]]
            split = None
            for k in range(3):
                e = frozenset((t[k], t[(k + 1) % 3]))
                if e in chain_edges:
                    split = (e, chain_edges[e])
                    break
            if split is not None:
                # cap on a boundary edge: insert a point inward of the edge
                # midpoint, outside its diametral circle so the edge survives
                e, s = split
                i, j = tuple(e)
                pm = 0.5 * (pts[i] + pts[j])
                d = pts[j] - pts[i]
                if s == 2:
                    nrm = np.array([d[1], -d[0]])
                else:
                    nrm = np.array([-d[1], d[0]])
                L = np.hypot(*d)
                cz = pm + 0.75 * nrm
                if _point_in_polygon(cz[None, :], poly)[0]:
                    new_interior.append(cz)
            else:
                cz = pts[t].mean(axis=0)
                if _point_in_polygon(cz[None, :], poly)[0]:
                    new_interior.append(cz)
        if new_interior:
            pts = np.vstack([pts] + [np.asarray(pnt)[None, :] for pnt in new_interior])
        # relax interiors after the insertion
        for _ in range(2):
            tris_s = Delaunay(pts * scale_w).simplices
            cent = pts[tris_s].mean(axis=1)
            tris_s = tris_s[_point_in_polygon(cent, poly)]
            acc = np.zeros_like(pts)
            cnt = np.zeros(len(pts))
            for k in range(3):
                i = tris_s[:, k]
                for k2 in (1, 2):
                    j = tris_s[:, (k + k2) % 3]
                    np.add.at(acc, i, pts[j])
                    np.add.at(cnt, i, 1.0)
            mask = cnt > 0
            mask[:n_bnd] = False
            new_pts = pts.copy()
            new_pts[mask] = acc[mask] / cnt[mask, None]
            moved_ok = _point_in_polygon(new_pts, poly)
            moved_ok[:n_bnd] = False
            pts[moved_ok] = new_pts[moved_ok]

    chain1_ix, chain2_ix, chain3_ix = chains[1], chains[2], chains[3]

    # boundary recovery: any interior point inside the diametral circle of a
    # missing chain edge is removed, which makes the edge Delaunay again
    for _rec in range(6):
        edges = set()
        for t in tris:
            for k in range(3):
                edges.add(frozenset((int(t[k]), int(t[(k + 1) % 3]))))
        missing = []
        for ch in chains.values():
            for i, j in zip(ch[:-1], ch[1:]):
                if frozenset((int(i), int(j))) not in edges:
                    missing.append((int(i), int(j)))
        if not missing:
            break
        drop = set()
        for i, j in missing:
            cz = 0.5 * (pts[i] + pts[j])
            rad = 0.5 * np.hypot(*(pts[j] - pts[i]))
            d2 = ((pts[n_bnd:] - cz) ** 2).sum(axis=1)
            for q_ in np.flatnonzero(d2 < (1.02 * rad) ** 2):
                drop.add(n_bnd + int(q_))
        if not drop:
            break
        keep = np.setdiff1d(np.arange(len(pts)), np.fromiter(drop, int))
        pts = pts[keep]
        tris = Delaunay(pts * scale_w).simplices
        cent = pts[tris].mean(axis=1)
        tris = tris[_point_in_polygon(cent, poly)]

    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    sgn = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    tris[sgn < 0] = tris[sgn < 0][:, [0, 2, 1]]

    mesh = TriangleMesh(
        pts=pts, tris=np.ascontiguousarray(tris),
        chain1=np.asarray(chain1_ix), chain2=np.asarray(chain2_ix),
        chain3=np.asarray(chain3_ix),
        domain=domain, h=h, R=R if domain.semi_ideal else math.inf,
        min_angle=0.0,
    )
    _verify_boundary(mesh)
    _quality_gate(mesh, chart, corners, options, lfs)
    return mesh


def _verify_boundary(mesh):
    """Every consecutive boundary pair must be an edge of the triangulation."""
    edges = set()
    for t in mesh.tris:
        for k in range(3):
            edges.add(frozenset((int(t[k]), int(t[(k + 1) % 3]))))
    for chain in (mesh.chain1, mesh.chain2, mesh.chain3):
        for i, j in zip(chain[:-1], chain[1:]):
            if frozenset((int(i), int(j))) not in edges:
                raise MeshQualityError("boundary edge missing from triangulation")


def _quality_gate(mesh, chart, corners, options, lfs):
    """Conformal (= euclidean, in-model) angle check with corner exemption."""
    pts, tris = mesh.pts, mesh.tris
    z = pts[:, 0] + 1j * pts[:, 1]
    ang = np.empty((len(tris), 3))
    for k in range(3):
        p = z[tris[:, k]]
        u = z[tris[:, (k + 1) % 3]] - p
        v = z[tris[:, (k + 2) % 3]] - p
        ang[:, k] = np.abs(np.angle(u / v))
    tri_min = ang.min(axis=1)

    corner_ids = [mesh.i_p0, mesh.i_p1, mesh.i_p2]
    corner_angle = {
        mesh.i_p0: mesh.domain.phi,
        mesh.i_p1: chart.angle_at(corners[1], corners[0], corners[2]),
        mesh.i_p2: chart.angle_at(corners[2], corners[0], corners[1]),
    }
    thresh = np.full(len(tris), options.min_angle)
    for cid in corner_ids:
        touching = np.any(tris == cid, axis=1)
        thresh[touching] = np.minimum(thresh[touching], 0.8 * corner_angle[cid])
    bad = tri_min < thresh
    mesh.min_angle = float(tri_min.min())
    if np.any(bad):
        # thin-zone exemption: where the domain is locally thinner than the
        # cell, no triangulation can be fat; cells respecting the size field
        # elsewhere satisfy longest <= 0.5 lfs and are never exempted
        idx = np.flatnonzero(bad)
        cent = pts[tris[idx]].mean(axis=1)
        keep = np.ones(len(idx), dtype=bool)
        for irow, tid in enumerate(idx):
            t = tris[tid]
            cz = complex(*cent[irow])
            longest = max(
                chart.dist(z[t[0]], z[t[1]]),
                chart.dist(z[t[1]], z[t[2]]),
                chart.dist(z[t[0]], z[t[2]]),
            )
            if lfs(cz) < 1.6 * longest:
                keep[irow] = False
        bad[:] = False
        bad[idx[keep]] = True
    if np.any(bad):
        worst = float(tri_min[bad].min())
        raise MeshQualityError(
            f"{bad.sum()} triangles below the angle gate (worst {math.degrees(worst):.2f} deg)"
        )


def refine_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Uniform red refinement: each triangle splits into four at edge
    midpoints.  Boundary-edge midpoints are placed on the true geodesic side
    (so the polygonal boundary converges to it); interior midpoints are
    coordinate midpoints.  Produces the nested families used for convergence
    studies and ladders."""
    chart = BaseChart(mesh.domain.params)
    pts = [complex(x, y) for x, y in mesh.pts]
    chain_sets = {
        1: set(map(frozenset, zip(mesh.chain1[:-1], mesh.chain1[1:]))),
        2: set(map(frozenset, zip(mesh.chain2[:-1], mesh.chain2[1:]))),
        3: set(map(frozenset, zip(mesh.chain3[:-1], mesh.chain3[1:]))),
    }
    midpoint_of = {}

    def midpoint(i, j):
        e = frozenset((int(i), int(j)))
        m = midpoint_of.get(e)
        if m is not None:
            return m
        on_side = None
        for s, es in chain_sets.items():
            if e in es:
                on_side = s
        if on_side is None:
            p = 0.5 * (pts[int(i)] + pts[int(j)])
        else:
            d = chart.dist(pts[int(i)], pts[int(j)])
            p = chart.geodesic_point(pts[int(i)], pts[int(j)], 0.5 * d)
        pts.append(p)
        m = len(pts) - 1
        midpoint_of[e] = m
        return m

    new_tris = []
    for i, j, k in mesh.tris:
        mij, mjk, mik = midpoint(i, j), midpoint(j, k), midpoint(i, k)
        new_tris.extend(
            [(i, mij, mik), (mij, j, mjk), (mik, mjk, k), (mij, mjk, mik)]
        )

    def refine_chain(chain):
        out = [int(chain[0])]
        for a, b in zip(chain[:-1], chain[1:]):
            out.append(midpoint_of[frozenset((int(a), int(b)))])
            out.append(int(b))
        return np.asarray(out, dtype=int)

    pts_arr = np.array([[p.real, p.imag] for p in pts])
    tris_arr = np.asarray(new_tris, dtype=int)
    a, b, c = pts_arr[tris_arr[:, 0]], pts_arr[tris_arr[:, 1]], pts_arr[tris_arr[:, 2]]
    sgn = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    tris_arr[sgn < 0] = tris_arr[sgn < 0][:, [0, 2, 1]]
    return TriangleMesh(
        pts=pts_arr,
        tris=tris_arr,
        chain1=refine_chain(mesh.chain1),
        chain2=refine_chain(mesh.chain2),
        chain3=refine_chain(mesh.chain3),
        domain=mesh.domain,
        h=0.5 * mesh.h,
        R=mesh.R,
        min_angle=mesh.min_angle,
    )


def structured_lattice_mesh(domain_like, A, B, C, n: int) -> TriangleMesh:
    """Barycentric lattice over the straight-sided triangle A B C (model
    coordinates, complex).  Used for oracle convergence studies, where the
    regular structure gives clean second-order nodal accuracy.

    chain1 = A->B, chain2 = A->C, chain3 = B->C.
    """
    idx = {}
    pts = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = n - i - j
            idx[(i, j)] = len(pts)
            p = (i * B + j * C + k * A) / n
            pts.append([p.real, p.imag])
    tris = []
    for i in range(n):
        for j in range(n - i):
            tris.append([idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]])
            if i + j < n - 1:
                tris.append([idx[(i + 1, j)], idx[(i + 1, j + 1)], idx[(i, j + 1)]])
    chain1 = np.asarray([idx[(i, 0)] for i in range(n + 1)], dtype=int)
    chain2 = np.asarray([idx[(0, j)] for j in range(n + 1)], dtype=int)
    chain3 = np.asarray([idx[(n - j, j)] for j in range(n + 1)], dtype=int)
    return TriangleMesh(
        pts=np.asarray(pts),
        tris=np.asarray(tris, dtype=int),
        chain1=chain1,
        chain2=chain2,
        chain3=chain3,
        domain=domain_like,
        h=abs(B - A) / n,
        R=math.inf,
        min_angle=0.0,
    )
