"""Canonical harmonic unit fields with prescribed vortices.

Given vortex points ``a_k`` with indices ``d_k`` (summing to the Euler
characteristic) and a flux vector ``Phi``, the current of the canonical field is

    j* = beta + sum_k Phi_k eta_k,

where ``beta`` is the co-exact 1-form with ``d beta = -K + 2 pi sum d_k delta_k``.
Each vortex atom is placed in the face containing ``a_k``.  Together with the
face holonomy of the frame this makes ``d(j* + A)`` an integer multiple of
``2 pi`` on every face.  A unit field with current ``j*`` therefore exists
exactly when the loop integrals of ``j* + A`` over the homology generators are
multiples of ``2 pi``, which is the lattice condition on ``Phi``.
"""

from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .connection import FrameField, TangentVectorField, build_frame, phase_increments, j_form
from .exterior import cotan_weights, d0, d1, solve_coexact
from .potential import check_index_sum
from .surface import SurfaceMesh, SurfacePoint
from .topology import CycleBasis, HarmonicBasis, HomologyError, harmonic_basis, homology_basis, path_to_chain

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
EXACT_LATTICE_TOL = 1e-6 * TWO_PI
MEASURED_LATTICE_TOL = 0.1 * TWO_PI


class LatticeError(ValueError):
    """Flux vector violates the lattice condition."""


class ReconstructionError(ValueError):
    pass


class DegreeError(ValueError):
    pass


class LocalizationError(ValueError):
    pass


@dataclass
class VortexConfiguration:
    points: list
    indices: list
    flux: np.ndarray | None = None

    def __post_init__(self):
        self.points = list(self.points)
        self.indices = [int(x) for x in self.indices]
        if len(self.points) != len(self.indices):
            raise ValueError("need one index per vortex point")
        if self.flux is not None:
            self.flux = np.asarray(self.flux, dtype=float)

    @property
    def n(self) -> int:
        return len(self.points)

    def validate(self, mesh: SurfaceMesh, distinct: bool = False) -> None:
        check_index_sum(mesh, self.indices)
        for p in self.points:
            if not 0 <= p.face < mesh.n_faces:
                raise ValueError(f"vortex point face {p.face} out of range")
        if distinct:
            keys = {(p.face, p.bary) for p in self.points}
            if len(keys) != len(self.points):
                raise ValueError("coincident vortex points")
        if self.flux is not None and len(self.flux) != 2 * mesh.genus:
            raise ValueError(f"flux needs {2 * mesh.genus} components")

    def with_flux(self, flux) -> "VortexConfiguration":
        return VortexConfiguration(self.points, self.indices, None if flux is None else np.asarray(flux, float))

    def to_json(self) -> dict:
        return {
            "points": [p.to_json() for p in self.points],
            "indices": list(self.indices),
            "flux": None if self.flux is None else [float(x) for x in self.flux],
        }

    @classmethod
    def from_json(cls, data: dict, mesh: SurfaceMesh | None = None) -> "VortexConfiguration":
        pts = []
        for item in data.get("points", []):
            if "vertex" in item:
                if mesh is None:
                    raise ValueError("vertex-based points need the mesh")
                pts.append(SurfacePoint.at_vertex(mesh, int(item["vertex"])))
            else:
                b = item["bary"]
                pts.append(SurfacePoint(int(item["face"]), tuple(b)))
        return cls(pts, data.get("indices", []), data.get("flux"))


# ---------------------------------------------------------------------------
# co-exact part, zeta, lattice


def vortex_faces(config: VortexConfiguration) -> dict[int, int]:
    out: dict[int, int] = {}
    for p, dk in zip(config.points, config.indices):
        out[p.face] = out.get(p.face, 0) + dk
    return out


def vortex_curl(mesh: SurfaceMesh, config: VortexConfiguration) -> np.ndarray:
    """Face 2-form -K_f + 2 pi sum_k d_k [f contains a_k]."""
    curl = -mesh.face_curvature()
    for f, dk in vortex_faces(config).items():
        curl[f] += TWO_PI * dk
    return curl


def coexact_current(mesh: SurfaceMesh, config: VortexConfiguration, basis: HarmonicBasis | None = None) -> np.ndarray:
    """The 1-form d*psi: co-exact, orthogonal to harmonic forms, with d = -K + 2 pi sum d delta."""
    config.validate(mesh)
    basis = harmonic_basis(mesh) if basis is None else basis
    return solve_coexact(mesh, vortex_curl(mesh, config), basis.forms)


def reroute_loop(mesh: SurfaceMesh, loop: list[int], avoid: set[int], max_passes: int = 20) -> list[int]:
    """Homologous closed vertex path using no edge of a face in ``avoid``.

    An offending step u -> w is replaced by u -> x -> w, where x is the third
    vertex of the adjacent face across (u, w) that is not avoided.
    """
    ef = mesh.edge_faces
    cur = list(loop)
    for _ in range(max_passes):
        out, changed = [], False
        n = len(cur)
        for i in range(n):
            u, w = cur[i], cur[(i + 1) % n]
            out.append(u)
            e, _ = mesh.edge_between(u, w)
            f0, f1 = int(ef[e, 0]), int(ef[e, 1])
            if f0 not in avoid and f1 not in avoid:
                continue
            g = f1 if f0 in avoid else f0
            if g in avoid:
                raise HomologyError(f"no vortex-free detour around edge {e}: both faces contain vortices")
            x = int(next(v for v in mesh.faces[g] if v != u and v != w))
            out.append(x)
            changed = True
        cur = _cancel_backtracks(out)
        if not changed:
            return cur
    raise HomologyError("no vortex-free homologous loop found (mesh too coarse near the vortices)")


def _cancel_backtracks(path: list[int]) -> list[int]:
    out: list[int] = []
    for v in path:
        if len(out) >= 2 and out[-2] == v:
            out.pop()
        else:
            out.append(v)
    # backtracks across the closing step
    while len(out) > 2 and out[1] == out[-1]:
        out = out[1:-1]
    return out


def zeta(
    mesh: SurfaceMesh,
    config: VortexConfiguration,
    cycles: CycleBasis | None = None,
    frame: FrameField | None = None,
    basis: HarmonicBasis | None = None,
    loops: list[list[int]] | None = None,
    beta: np.ndarray | None = None,
) -> np.ndarray:
    """Holonomy constants: loop integrals of d*psi + A over the generators, in [0, 2 pi).

    ``loops`` may replace the stored generators by homologous closed vertex
    paths (used to check loop independence).
    """
    config.validate(mesh)
    cycles = homology_basis(mesh) if cycles is None else cycles
    if len(cycles) == 0:
        return np.zeros(0)
    frame = build_frame(mesh) if frame is None else frame
    basis = harmonic_basis(mesh, cycles) if basis is None else basis
    beta = coexact_current(mesh, config, basis) if beta is None else beta
    avoid = set(vortex_faces(config))
    loops = cycles.loops if loops is None else loops
    vals = []
    for loop in loops:
        lam = reroute_loop(mesh, loop, avoid) if avoid else loop
        chain = path_to_chain(mesh, lam).astype(float)
        vals.append(float(chain @ (beta + frame.A)))
    return np.mod(np.asarray(vals), TWO_PI)


def circular_difference(x, y) -> np.ndarray:
    """Distance on R / 2 pi Z, componentwise."""
    return np.abs(np.angle(np.exp(1j * (np.asarray(x) - np.asarray(y)))))


@dataclass
class FluxLattice:
    """The affine lattice of admissible flux vectors: alpha Phi + zeta in 2 pi Z^{2g}."""

    zeta: np.ndarray
    periods: np.ndarray
    tol: float = EXACT_LATTICE_TOL

    @property
    def dim(self) -> int:
        return len(self.zeta)

    def defect(self, phi) -> float:
        """Largest distance of alpha Phi + zeta to 2 pi Z (componentwise)."""
        if self.dim == 0:
            return 0.0
        v = self.periods @ np.asarray(phi, float) + self.zeta
        return float(np.abs(v - TWO_PI * np.rint(v / TWO_PI)).max())

    def contains(self, phi, tol: float | None = None) -> bool:
        return self.defect(phi) <= (self.tol if tol is None else tol)

    def point(self, n) -> np.ndarray:
        """Lattice point with integer label ``n``: alpha^{-1} (2 pi n - zeta)."""
        return np.linalg.solve(self.periods, TWO_PI * np.asarray(n, float) - self.zeta)

    def generators(self) -> np.ndarray:
        """Columns spanning the lattice directions: 2 pi alpha^{-1}."""
        return TWO_PI * np.linalg.inv(self.periods)

    def shortest_vector(self) -> np.ndarray:
        B = self.generators()
        best = None
        for n in itertools.product((-1, 0, 1), repeat=self.dim):
            if not any(n):
                continue
            v = B @ np.asarray(n, float)
            if best is None or np.linalg.norm(v) < np.linalg.norm(best):
                best = v
        return best

    def to_json(self) -> dict:
        return {"zeta": self.zeta.tolist(), "periods": self.periods.tolist(), "tol": self.tol}


def flux_lattice(mesh: SurfaceMesh, config: VortexConfiguration, frame: FrameField | None = None,
                 basis: HarmonicBasis | None = None, beta: np.ndarray | None = None) -> FluxLattice:
    basis = harmonic_basis(mesh) if basis is None else basis
    z = zeta(mesh, config, basis.cycles, frame, basis, beta=beta)
    return FluxLattice(z, basis.periods)


@dataclass
class Projection:
    flux: np.ndarray
    label: np.ndarray
    residual: float
    defect: float


def lattice_project(phi_raw, lat: FluxLattice) -> Projection:
    """Nearest lattice point to ``phi_raw`` (Euclidean), by rounding plus a local search."""
    if lat.dim == 0:
        return Projection(np.zeros(0), np.zeros(0, dtype=int), 0.0, 0.0)
    phi_raw = np.asarray(phi_raw, float)
    if lat.contains(phi_raw, 1e-9):
        return Projection(phi_raw.copy(), np.rint((lat.periods @ phi_raw + lat.zeta) / TWO_PI).astype(int),
                          0.0, lat.defect(phi_raw))
    n0 = np.rint((lat.periods @ phi_raw + lat.zeta) / TWO_PI)
    best = None
    for dn in itertools.product((-1, 0, 1), repeat=lat.dim):
        n = n0 + np.asarray(dn)
        p = lat.point(n)
        r = float(np.linalg.norm(p - phi_raw))
        if best is None or r < best[2]:
            best = (p, n, r)
    p, n, r = best
    return Projection(p, n.astype(int), r, lat.defect(p))


# ---------------------------------------------------------------------------
# the canonical field


@dataclass
class CanonicalField:
    mesh: SurfaceMesh
    config: VortexConfiguration
    frame: FrameField
    basis: HarmonicBasis
    beta: np.ndarray
    lattice: FluxLattice
    flux: np.ndarray
    jstar: np.ndarray = field(repr=False)

    def codifferential_residual(self) -> float:
        """max |d* j*| over vertices."""
        m = self.mesh
        return float(np.abs(d0(m).T @ (cotan_weights(m) * self.jstar) / m.vertex_area).max())

    def curl_residual(self) -> float:
        return float(np.abs(d1(self.mesh) @ self.jstar - vortex_curl(self.mesh, self.config)).max())

    def reconstruct(self, root: int = 0, phase: float = 0.0) -> TangentVectorField:
        return reconstruct_field(self.mesh, self.jstar, self.frame, root=root, phase=phase, basis=self.basis)

    def core_mask(self, radius: float | None = None) -> np.ndarray:
        return core_mask(self.mesh, self.config.points, 2 * self.mesh.h if radius is None else radius)

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "zeta": self.lattice.zeta.tolist(),
            "Phi": self.flux.tolist(),
            "residuals": {
                "codifferential": self.codifferential_residual(),
                "curl": self.curl_residual(),
                "lattice": self.lattice.defect(self.flux),
            },
        }


def canonical_field(
    mesh: SurfaceMesh,
    config: VortexConfiguration,
    frame: FrameField | None = None,
    basis: HarmonicBasis | None = None,
    tol: float = EXACT_LATTICE_TOL,
) -> CanonicalField:
    """Assemble j* for ``config``; a missing flux defaults to the lattice point nearest to 0."""
    config.validate(mesh)
    frame = build_frame(mesh) if frame is None else frame
    basis = harmonic_basis(mesh) if basis is None else basis
    beta = coexact_current(mesh, config, basis)
    lat = flux_lattice(mesh, config, frame, basis, beta)
    if config.flux is None:
        phi = lattice_project(np.zeros(lat.dim), lat).flux
        config = config.with_flux(phi)
    phi = config.flux
    if not lat.contains(phi, tol):
        raise LatticeError(f"flux {phi.tolist()} violates the lattice condition (defect {lat.defect(phi):.3g})")
    jstar = beta + (basis.forms @ phi if lat.dim else 0.0)
    return CanonicalField(mesh, config, frame, basis, beta, lat, phi, jstar)


def canonical_jstar(mesh: SurfaceMesh, config: VortexConfiguration, frame: FrameField | None = None) -> np.ndarray:
    return canonical_field(mesh, config, frame).jstar


def _bfs_tree(mesh: SurfaceMesh, root: int):
    nb = [[] for _ in range(mesh.n_vertices)]
    for e, (a, b) in enumerate(mesh.edges.tolist()):
        nb[a].append((b, e, 1))
        nb[b].append((a, e, -1))
    order, seen = [], np.zeros(mesh.n_vertices, dtype=bool)
    via = [None] * mesh.n_vertices
    seen[root] = True
    q = deque([root])
    while q:
        v = q.popleft()
        order.append(v)
        for w, e, s in nb[v]:
            if not seen[w]:
                seen[w] = True
                via[w] = (v, e, s)
                q.append(w)
    return order, via


def reconstruct_field(
    mesh: SurfaceMesh,
    jstar: np.ndarray,
    frame: FrameField,
    root: int = 0,
    phase: float = 0.0,
    basis: HarmonicBasis | None = None,
    tol: float = 1e-3,
) -> TangentVectorField:
    """Unit field whose angle increments after transport are ``j*``.

    The angle is integrated along a breadth-first tree from ``root`` using the
    increments ``j* + A``; every other edge must then close up to a multiple of
    ``2 pi``.
    """
    tau = jstar + frame.A
    order, via = _bfs_tree(mesh, root)
    theta = np.zeros(mesh.n_vertices)
    theta[root] = phase
    for v in order[1:]:
        p, e, s = via[v]
        theta[v] = theta[p] + s * tau[e]
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    gap = theta[a] + tau - theta[b]
    defect = np.abs(gap - TWO_PI * np.rint(gap / TWO_PI))
    if defect.max() > tol:
        msg = f"period defect {defect.max():.3g} on edge {int(np.argmax(defect))}"
        if basis is not None and basis.dim:
            per = basis.cycles.chains.astype(float) @ tau
            bad = np.abs(per - TWO_PI * np.rint(per / TWO_PI))
            msg += f"; generator defects {np.round(bad, 6).tolist()} (worst loop {int(np.argmax(bad))})"
        raise ReconstructionError(msg)
    return TangentVectorField(frame, np.exp(1j * theta))


def core_mask(mesh: SurfaceMesh, points, radius: float) -> np.ndarray:
    """Vertices within ``radius`` of any point (geodesic)."""
    from .geodesic import distance_field

    mask = np.zeros(mesh.n_vertices, dtype=bool)
    for p in points:
        mask |= distance_field(mesh, p, max_dist=radius + 2 * mesh.h).values <= radius
    return mask


def edge_mask_from_vertices(mesh: SurfaceMesh, vmask: np.ndarray) -> np.ndarray:
    return vmask[mesh.edges].any(axis=1)


# ---------------------------------------------------------------------------
# degree, vorticity, localization


def loop_region(mesh: SurfaceMesh, loop) -> np.ndarray:
    """Faces on the left of a closed vertex path, found by flood fill (boolean mask)."""
    verts = [int(v) for v in loop]
    if len(verts) > 1 and verts[0] == verts[-1]:
        verts = verts[:-1]
    blocked = set()
    seeds = []
    for u, w in zip(verts, verts[1:] + verts[:1]):
        h = mesh.halfedge(u, w)
        blocked.add(int(mesh.halfedge_edge[h]))
        seeds.append(h // 3)
    inside = np.zeros(mesh.n_faces, dtype=bool)
    q = deque(seeds)
    for f in seeds:
        inside[f] = True
    ef = mesh.edge_faces
    while q:
        f = q.popleft()
        for e in mesh.face_edges[f].tolist():
            if e in blocked:
                continue
            g = int(ef[e, 0] if ef[e, 1] == f else ef[e, 1])
            if not inside[g]:
                inside[g] = True
                q.append(g)
    return inside


def _region_euler(mesh: SurfaceMesh, faces_mask: np.ndarray) -> int:
    idx = np.nonzero(faces_mask)[0]
    V = len(np.unique(mesh.faces[idx]))
    E = len(np.unique(mesh.face_edges[idx]))
    return V - E + len(idx)


def degree(mesh: SurfaceMesh, u: TangentVectorField, loop, basis: HarmonicBasis | None = None) -> int:
    """Curvature-corrected winding number of ``u`` along a loop bounding a disk (on its left)."""
    verts = [int(v) for v in loop]
    if len(verts) > 1 and verts[0] == verts[-1]:
        verts = verts[:-1]
    mod = np.abs(u.z[verts])
    if mod.min() < 0.5:
        raise DegreeError(f"field modulus {mod.min():.3g} < 1/2 on the loop")
    chain = path_to_chain(mesh, verts).astype(float)
    if mesh.genus:
        basis = harmonic_basis(mesh) if basis is None else basis
        if np.abs(chain @ basis.forms).max() > 1e-8:
            raise DegreeError("loop is not null-homologous, it bounds no region")
    region = loop_region(mesh, verts)
    if region.all() or _region_euler(mesh, region) != 1:
        raise DegreeError("loop does not bound a disk on its left")
    total = float(chain @ phase_increments(u)) + float(mesh.face_curvature()[region].sum())
    val = total / TWO_PI
    k = int(np.rint(val))
    if abs(val - k) > 0.05:
        raise DegreeError(f"degree {val:.4f} is not close to an integer")
    return k


def vorticity(mesh: SurfaceMesh, u: TangentVectorField, quantized: bool = False) -> np.ndarray:
    """Face 2-form d j(u) + K.

    With ``quantized=True`` the unit-field current (exact angle increments) is
    used, so every face value is an integer multiple of 2 pi; this locates
    vortices of non-unit fields to single faces.
    """
    j = phase_increments(u) if quantized else j_form(u)
    return d1(mesh) @ j + mesh.face_curvature()


@dataclass
class VorticityMeasure:
    """Weighted point masses ``2 pi d_k delta_{a_k}`` (or a raw face 2-form)."""

    points: list = field(default_factory=list)
    indices: list = field(default_factory=list)
    raw: np.ndarray | None = None
    residuals: list = field(default_factory=list)
    masses: list = field(default_factory=list)

    @classmethod
    def from_config(cls, config: VortexConfiguration) -> "VorticityMeasure":
        return cls(list(config.points), list(config.indices))

    @property
    def total_mass(self) -> float:
        if self.raw is not None:
            return float(self.raw.sum())
        return TWO_PI * float(sum(self.indices))

    def vertex_masses(self, mesh: SurfaceMesh) -> np.ndarray:
        """Masses moved to vertices: point masses barycentrically, face values equally."""
        out = np.zeros(mesh.n_vertices)
        if self.raw is not None:
            np.add.at(out, mesh.faces.ravel(), np.repeat(np.asarray(self.raw) / 3.0, 3))
        for p, dk in zip(self.points, self.indices):
            np.add.at(out, mesh.faces[p.face], TWO_PI * dk * np.asarray(p.bary))
        return out

    def to_json(self) -> list:
        return [
            {"face": p.face, "bary": list(p.bary), "index": int(d), "mass": float(m), "residual": float(r)}
            for p, d, m, r in zip(self.points, self.indices, self.masses or [np.nan] * len(self.points),
                                  self.residuals or [0.0] * len(self.points))
        ]


def localize(
    mesh: SurfaceMesh,
    omega: np.ndarray,
    threshold: float = np.pi / 2,
    grow: int = 2,
    max_residual: float = 0.2,
) -> VorticityMeasure:
    """Cluster faces with ``|omega_f| > threshold`` into point vortices.

    Seed faces sharing a vertex are merged; each cluster collects the mass of
    faces within ``grow`` vertex rings, and its weight is the rounded mass over
    2 pi.  The location is the mass-weighted centroid, snapped to the
    heaviest face.
    """
    seeds = np.nonzero(np.abs(omega) > threshold)[0]
    if len(seeds) == 0:
        return VorticityMeasure()
    vf = [[] for _ in range(mesh.n_vertices)]
    for f, tri in enumerate(mesh.faces.tolist()):
        for v in tri:
            vf[v].append(f)
    seed_set = set(seeds.tolist())
    comp = {}
    clusters = []
    for s in seeds.tolist():
        if s in comp:
            continue
        cid = len(clusters)
        members = [s]
        comp[s] = cid
        q = deque([s])
        while q:
            f = q.popleft()
            for v in mesh.faces[f]:
                for g in vf[v]:
                    if g in seed_set and g not in comp:
                        comp[g] = cid
                        members.append(g)
                        q.append(g)
        clusters.append(members)
    owner = -np.ones(mesh.n_faces, dtype=int)
    for cid, members in enumerate(clusters):
        region = set(members)
        frontier = set(members)
        for _ in range(grow):
            verts = {v for f in frontier for v in mesh.faces[f]}
            new = {g for v in verts for g in vf[v]} - region
            region |= new
            frontier = new
        for f in region:
            if owner[f] < 0:
                owner[f] = cid
    pts, idx, res, masses = [], [], [], []
    for cid, members in enumerate(clusters):
        region = np.nonzero(owner == cid)[0]
        mass = float(omega[region].sum())
        w = mass / TWO_PI
        k = int(np.rint(w))
        r = abs(w - k)
        if r > max_residual:
            raise LocalizationError(f"cluster mass {mass:.4g} is not close to a multiple of 2 pi (residual {r:.3f})")
        if k == 0:
            continue
        heavy = max(members, key=lambda f: abs(omega[f]))
        pts.append(SurfacePoint.centroid(heavy))
        idx.append(k)
        res.append(r)
        masses.append(mass)
    return VorticityMeasure(pts, idx, None, res, masses)


def vorticity_distance(mesh: SurfaceMesh, mu, nu, solver: str | None = None) -> float:
    """Dual bounded-Lipschitz distance sup { int f (mu - nu) : |f|_inf + |df|_inf <= 1 }.

    ``f`` is piecewise linear; the sup is a second-order cone program solved
    with cvxpy.
    """
    import cvxpy as cp

    def masses(x):
        if isinstance(x, VorticityMeasure):
            return x.vertex_masses(mesh)
        arr = np.asarray(x, float)
        if arr.shape == (mesh.n_faces,):
            return VorticityMeasure(raw=arr).vertex_masses(mesh)
        if arr.shape == (mesh.n_vertices,):
            return arr
        raise ValueError("measure must be a VorticityMeasure, a face 2-form or vertex masses")

    diff = masses(mu) - masses(nu)
    if np.abs(diff).max() < 1e-14:
        return 0.0
    support = np.abs(diff) > 0
    G = _gradient_operator(mesh)
    f = cp.Variable(mesh.n_vertices)
    t = cp.Variable()
    s = cp.Variable()
    grad = cp.reshape(G @ f, (mesh.n_faces, 2), order="C")
    cons = [cp.abs(f) <= t, cp.norm(grad, 2, axis=1) <= s, t + s <= 1]
    prob = cp.Problem(cp.Maximize(diff[support] @ f[np.nonzero(support)[0]]), cons)
    prob.solve(solver=solver or "CLARABEL")
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"vorticity distance program ended with status {prob.status}")
    return float(prob.value)


def _gradient_operator(mesh: SurfaceMesh):
    """Sparse (2F, V) map from vertex values to per-face gradients in the face layout."""
    import scipy.sparse as sp

    G = mesh._cache.get("grad_op")
    if G is not None:
        return G
    X = mesh.face_layout
    e1 = X[:, 1] - X[:, 0]
    e2 = X[:, 2] - X[:, 0]
    M = np.stack([e1, e2], axis=1)           # rows are edge vectors
    Minv = np.linalg.inv(M)                  # grad = Minv @ [f1 - f0, f2 - f0]
    rows, cols, vals = [], [], []
    F = mesh.n_faces
    for k in range(2):
        r = 2 * np.arange(F) + k
        c1, c2 = Minv[:, k, 0], Minv[:, k, 1]
        rows += [r, r, r]
        cols += [mesh.faces[:, 0], mesh.faces[:, 1], mesh.faces[:, 2]]
        vals += [-(c1 + c2), c1, c2]
    G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * F, mesh.n_vertices))
    mesh._cache["grad_op"] = G
    return G


def flux(mesh: SurfaceMesh, u: TangentVectorField, basis: HarmonicBasis | None = None) -> np.ndarray:
    """Flux integrals Phi_k = <j(u), eta_k> in the cotan inner product."""
    basis = harmonic_basis(mesh) if basis is None else basis
    return basis.forms.T @ (cotan_weights(mesh) * j_form(u))


# ---------------------------------------------------------------------------
# continuity probe


def zeta_continuity_probe(mesh: SurfaceMesh, path, frame: FrameField | None = None) -> list[dict]:
    """Table of zeta along a sequence of configurations ``path = [(t, config), ...]``."""
    frame = build_frame(mesh) if frame is None else frame
    basis = harmonic_basis(mesh)
    rows = []
    prev = None
    for t, cfg in path:
        z = zeta(mesh, cfg, basis.cycles, frame, basis)
        step = None if prev is None else float(circular_difference(z, prev).max()) if len(z) else 0.0
        rows.append({"t": float(t), "zeta": z.tolist(), "step": step, "n": cfg.n})
        prev = z
    return rows


def report_json(cf: CanonicalField, vortices: VorticityMeasure | None = None) -> str:
    out = cf.to_json()
    if vortices is not None:
        out["vortices"] = vortices.to_json()
    return json.dumps(out, indent=2, sort_keys=True)
