"""Geodesic distance fields, geodesic balls and an injectivity-radius estimate.

Distances are propagated Dijkstra-style over vertices with a triangle-unfolding
update: for a triangle (p, q, x) with known distances at p and q, the virtual
source is placed in the unfolded plane at the intersection of the circles of
radii d(p), d(q) and, when the straight line from it to x crosses the edge pq,
d(x) is its Euclidean distance.  Otherwise the update falls back to going
through p or q.  On flat regions this reproduces polyhedral distances exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .surface import SurfacePoint, SurfaceMesh


class GeodesicError(ValueError):
    pass


def _unfold_tables(mesh: SurfaceMesh):
    tab = mesh._cache.get("unfold")
    if tab is not None:
        return tab
    L = mesh.face_lengths
    F = mesh.faces
    # entry (f, c): target corner c, p = c+1, q = c+2
    l_pq = np.roll(L, -1, axis=1)          # side c+1 -> c+2
    l_px = L                               # side c -> c+1
    l_qx = np.roll(L, 1, axis=1)           # side c+2 -> c
    xx = (l_px ** 2 - l_qx ** 2 + l_pq ** 2) / (2 * l_pq)
    yx = np.sqrt(np.maximum(l_px ** 2 - xx ** 2, 0.0))
    p = np.roll(F, -1, axis=1)
    q = np.roll(F, -2, axis=1)
    # incidence: for each vertex, list of (face, corner-of-vertex)
    inc = [[] for _ in range(mesh.n_vertices)]
    for f, row in enumerate(F.tolist()):
        for c, v in enumerate(row):
            inc[v].append((f, c))
    tab = {
        "l_pq": l_pq.tolist(), "l_px": l_px.tolist(), "l_qx": l_qx.tolist(),
        "xx": xx.tolist(), "yx": yx.tolist(), "p": p.tolist(), "q": q.tolist(),
        "faces": F.tolist(), "inc": inc,
    }
    mesh._cache["unfold"] = tab
    return tab


def _unfold_update(dp, dq, l, xx, yx):
    """Distance to the apex (xx, yx) from the virtual source seen through edge pq, or None."""
    xs = (dp * dp - dq * dq + l * l) / (2 * l)
    ys2 = dp * dp - xs * xs
    if ys2 < 0:
        return None
    ys = -math.sqrt(ys2)
    t = -ys / (yx - ys)
    xc = xs + t * (xx - xs)
    if xc < 0 or xc > l:
        return None
    return math.hypot(xx - xs, yx - ys)


def _propagate(mesh: SurfaceMesh, init: dict[int, float], max_dist: float) -> np.ndarray:
    tab = _unfold_tables(mesh)
    l_pq, l_px, l_qx, xx, yx = tab["l_pq"], tab["l_px"], tab["l_qx"], tab["xx"], tab["yx"]
    P, Q, Fc, inc = tab["p"], tab["q"], tab["faces"], tab["inc"]
    inf = math.inf
    d = [inf] * mesh.n_vertices
    heap = []
    for v, val in init.items():
        d[v] = val
        heap.append((val, v))
    heapq.heapify(heap)
    tol = 1e-14
    while heap:
        dv, v = heapq.heappop(heap)
        if dv > d[v]:
            continue
        if dv > max_dist:
            break
        for f, cv in inc[v]:
            row = Fc[f]
            for c in ((cv + 1) % 3, (cv + 2) % 3):
                x = row[c]
                p, q = P[f][c], Q[f][c]
                dp, dq = d[p], d[q]
                best = d[x]
                cand = inf
                if dp < inf and dq < inf:
                    u = _unfold_update(dp, dq, l_pq[f][c], xx[f][c], yx[f][c])
                    if u is not None:
                        cand = u
                if cand == inf:
                    cand = min(dp + l_px[f][c], dq + l_qx[f][c])
                if cand < best - tol * (1 + best if best < inf else 1):
                    d[x] = cand
                    heapq.heappush(heap, (cand, x))
    return np.array(d)


@dataclass
class DistanceField:
    """Geodesic distance from a source point, sampled at vertices."""

    mesh: SurfaceMesh
    source: SurfacePoint
    values: np.ndarray
    max_dist: float = math.inf

    def at(self, point: SurfacePoint) -> float:
        """Distance at an arbitrary surface point, unfolding across the face's sides."""
        m = self.mesh
        if point.face == self.source.face:
            return float(np.linalg.norm(m.point_layout(point) - m.point_layout(self.source)))
        f = point.face
        X = m.face_layout[f]
        P = np.asarray(point.bary) @ X
        d = self.values[m.faces[f]]
        best = math.inf
        for c in range(3):
            if d[c] < math.inf:
                best = min(best, d[c] + float(np.linalg.norm(P - X[c])))
        for c in range(3):
            a, b = c, (c + 1) % 3
            da, db = d[a], d[b]
            if not (da < math.inf and db < math.inf):
                continue
            # frame with a at origin, b on +x, third corner above
            e = X[b] - X[a]
            l = float(np.linalg.norm(e))
            ex = e / l
            ey = np.array([-ex[1], ex[0]])
            rel = P - X[a]
            px, py = float(rel @ ex), float(rel @ ey)
            if py < 0:
                continue
            if py == 0:
                if 0 <= px <= l:
                    best = min(best, da + (db - da) * px / l)
                continue
            u = _unfold_update(da, db, l, px, py)
            if u is not None:
                best = min(best, u)
        return best


def distance_field(mesh: SurfaceMesh, source: SurfacePoint, max_dist: float = math.inf) -> DistanceField:
    """Geodesic distances from ``source`` to every vertex (``inf`` beyond ``max_dist``)."""
    key = ("dist", source.face, source.bary)
    cache = mesh._cache.setdefault("dist_fields", {})
    hit = cache.get(key)
    if hit is not None and hit.max_dist >= max_dist:
        return hit
    X = mesh.face_layout[source.face]
    s = np.asarray(source.bary) @ X
    init = {int(v): float(np.linalg.norm(X[c] - s)) for c, v in enumerate(mesh.faces[source.face])}
    vals = _propagate(mesh, init, max_dist)
    field = DistanceField(mesh, source, vals, max_dist)
    if len(cache) > 64:
        cache.clear()
    cache[key] = field
    return field


def geodesic_distance(mesh: SurfaceMesh, x: SurfacePoint, y: SurfacePoint) -> float:
    """Symmetrized geodesic distance: the smaller of the two one-sided estimates."""
    if x == y:
        return 0.0
    return min(distance_field(mesh, x).at(y), distance_field(mesh, y).at(x))


def diameter(mesh: SurfaceMesh) -> float:
    """Double-sweep estimate of the intrinsic diameter."""
    val = mesh._cache.get("diameter")
    if val is None:
        d0 = distance_field(mesh, SurfacePoint.at_vertex(mesh, 0)).values
        far = int(np.argmax(d0))
        d1 = distance_field(mesh, SurfacePoint.at_vertex(mesh, far)).values
        val = float(d1.max())
        mesh._cache["diameter"] = val
    return val


def injectivity_radius(mesh: SurfaceMesh, samples: int = 8) -> float:
    """Injectivity-radius estimate used as a smallness threshold.

    Genus 0: half the diameter.  Otherwise half the length of the shortest
    homologically nontrivial closed edge path found from a few sampled base
    vertices (bounded above by half the diameter).
    """
    val = mesh._cache.get("injectivity")
    if val is not None:
        return val
    half_diam = 0.5 * diameter(mesh)
    if mesh.genus == 0:
        val = half_diam
    else:
        from .topology import harmonic_basis, homology_basis

        hb = harmonic_basis(mesh, homology_basis(mesh))
        val = half_diam
        for v in np.linspace(0, mesh.n_vertices - 1, samples).astype(int):
            val = min(val, 0.5 * _shortest_nontrivial_loop(mesh, int(v), hb.forms))
    mesh._cache["injectivity"] = val
    return val


def _shortest_nontrivial_loop(mesh: SurfaceMesh, root: int, forms: np.ndarray) -> float:
    # graph Dijkstra tree; a non-tree edge closes a loop whose harmonic periods
    # are potential(a) + form(a->b) - potential(b)
    n = mesh.n_vertices
    nb = [[] for _ in range(n)]
    for e, (a, b) in enumerate(mesh.edges.tolist()):
        nb[a].append((b, e, 1))
        nb[b].append((a, e, -1))
    L = mesh.edge_length
    dist = np.full(n, np.inf)
    pot = np.zeros((n, forms.shape[1]))
    parent_edge = np.full(n, -1)
    dist[root] = 0.0
    heap = [(0.0, root)]
    done = np.zeros(n, dtype=bool)
    while heap:
        dv, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for w, e, s in nb[v]:
            nd = dv + L[e]
            if nd < dist[w]:
                dist[w] = nd
                parent_edge[w] = e
                pot[w] = pot[v] + s * forms[e]
                heapq.heappush(heap, (nd, w))
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    tree = np.zeros(mesh.n_edges, dtype=bool)
    tree[parent_edge[parent_edge >= 0]] = True
    period = pot[a] + forms - pot[b]
    nontrivial = (np.abs(period).max(axis=1) > 1e-6 * np.abs(forms).max()) & ~tree
    if not nontrivial.any():
        return math.inf
    lengths = dist[a] + L + dist[b]
    return float(lengths[nontrivial].min())


# geodesic balls --------------------------------------------------------------------


def _inside_fraction(d: np.ndarray, r: float) -> np.ndarray:
    """Area fraction of each triangle where the linear interpolant of ``d`` is below ``r``."""
    d = np.asarray(d, float)
    below = d < r
    nb = below.sum(axis=1)
    frac = np.where(nb == 3, 1.0, 0.0)
    s = np.sort(d, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        one = nb == 1
        t1 = (r - s[:, 0]) / (s[:, 1] - s[:, 0])
        t2 = (r - s[:, 0]) / (s[:, 2] - s[:, 0])
        frac = np.where(one, t1 * t2, frac)
        two = nb == 2
        u1 = (s[:, 2] - r) / (s[:, 2] - s[:, 0])
        u2 = (s[:, 2] - r) / (s[:, 2] - s[:, 1])
        frac = np.where(two, 1.0 - u1 * u2, frac)
    return np.clip(np.nan_to_num(frac), 0.0, 1.0)


def ball_fraction(field: DistanceField, r: float) -> np.ndarray:
    """Per-face area fraction of the geodesic ball of radius ``r``."""
    d = field.values[field.mesh.faces]
    return _inside_fraction(np.where(np.isfinite(d), d, 1e300), r)


@dataclass
class GeodesicBall:
    center: SurfacePoint
    radius: float
    loop: list[SurfacePoint]
    length: float
    area: float
    face_fraction: np.ndarray


def geodesic_ball_boundary(mesh: SurfaceMesh, center: SurfacePoint, r: float) -> GeodesicBall:
    """Boundary polyline and interior of the geodesic ball of radius ``r``."""
    if r <= 0:
        raise GeodesicError("radius must be positive")
    inj = injectivity_radius(mesh)
    if r >= inj:
        raise GeodesicError(f"radius {r:.4g} exceeds the injectivity-radius estimate {inj:.4g}")
    field = distance_field(mesh, center, max_dist=r + 4 * mesh.h)
    d = np.where(np.isfinite(field.values), field.values, 1e300)
    F = mesh.faces
    frac = _inside_fraction(d[F], r)
    # level-set segments, keyed by the crossed edges
    segs: dict[int, list[tuple[int, int]]] = {}
    crossing: dict[int, SurfacePoint] = {}
    length = 0.0
    for f in np.nonzero((frac > 0) & (frac < 1))[0].tolist():
        pts, keys = [], []
        for c in range(3):
            a, b = c, (c + 1) % 3
            da, db = d[F[f, a]], d[F[f, b]]
            if (da < r) != (db < r):
                t = (r - da) / (db - da)
                bary = [0.0, 0.0, 0.0]
                bary[a] = 1 - t
                bary[b] = t
                pts.append(np.asarray(bary) @ mesh.face_layout[f])
                e = int(mesh.face_edges[f, c])
                keys.append(e)
                if e not in crossing:
                    crossing[e] = SurfacePoint(f, tuple(bary))
        if len(keys) != 2:
            continue
        length += float(np.linalg.norm(pts[0] - pts[1]))
        for k in keys:
            segs.setdefault(k, []).append((f, keys[0] if k == keys[1] else keys[1]))
    if not segs or any(len(v) != 2 for v in segs.values()):
        raise GeodesicError("ball boundary is not a closed curve at this radius")
    start = next(iter(segs))
    loop_keys = [start]
    prev, cur = None, start
    while True:
        nxt = [k for _, k in segs[cur] if k != prev]
        nxt = nxt[0] if nxt else segs[cur][0][1]
        if nxt == start:
            break
        loop_keys.append(nxt)
        prev, cur = cur, nxt
        if len(loop_keys) > len(segs):
            break
    if len(loop_keys) != len(segs):
        raise GeodesicError(
            f"ball boundary of radius {r:.4g} has several components; radius too large for this surface"
        )
    return GeodesicBall(
        center=center,
        radius=r,
        loop=[crossing[k] for k in loop_keys],
        length=length,
        area=float((frac * mesh.face_area).sum()),
        face_fraction=frac,
    )


def _subface_points(n: int) -> np.ndarray:
    """Barycentric centroids of the n^2 congruent sub-triangles of a triangle."""
    pts = []
    for i in range(n):
        for j in range(n - i):
            pts.append(((i + 1 / 3) / n, (j + 1 / 3) / n))
            if i + j < n - 1:
                pts.append(((i + 2 / 3) / n, (j + 2 / 3) / n))
    uv = np.array(pts)
    return np.column_stack([1 - uv.sum(axis=1), uv[:, 0], uv[:, 1]])


def virtual_sources(field: DistanceField, faces: np.ndarray) -> np.ndarray:
    """Per-face position of the unfolded source in the face layout.

    Solves |S - X_c|^2 = d_c^2 by subtracting the corner-0 equation from the
    other two, which leaves a 2x2 linear system.
    """
    m = field.mesh
    X = m.face_layout[faces]
    d = field.values[m.faces[faces]]
    M = 2 * (X[:, 1:] - X[:, :1])
    rhs = (X[:, 1:] ** 2).sum(axis=2) - (X[:, :1] ** 2).sum(axis=2) - d[:, 1:] ** 2 + d[:, :1] ** 2
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def weighted_ball_fraction(field: DistanceField, r: float, n_sub: int = 8, band: float = 2.0) -> np.ndarray:
    """Per-face share of a 1/rho^2 density lying inside the geodesic ball of radius r.

    Faces near the ball boundary are sampled on ``n_sub^2`` sub-triangles with
    distances measured from the face's unfolded source, so the boundary is a
    circle arc and the singular density is integrated consistently.  Faces
    away from the boundary are classified by their vertex distances.
    """
    m = field.mesh
    vals = np.where(np.isfinite(field.values), field.values, 1e300)
    D = vals[m.faces]
    out = (D.max(axis=1) < r).astype(float)
    near = np.nonzero((D.min(axis=1) < r + band * m.h) & (D.max(axis=1) > r - band * m.h))[0]
    if len(near) == 0:
        return out
    if field.source.face in near:
        near = near[near != field.source.face]
    S = virtual_sources(field, near)
    B = _subface_points(n_sub)
    P = np.einsum("qc,fcx->fqx", B, m.face_layout[near])
    rho = np.linalg.norm(P - S[:, None, :], axis=2)
    w = 1.0 / np.maximum(rho, 1e-3 * m.h) ** 2
    out[near] = (w * (rho < r)).sum(axis=1) / w.sum(axis=1)
    return out
