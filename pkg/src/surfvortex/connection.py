"""Discrete Levi-Civita connection and tangent vector fields.

Each vertex carries a tangent plane parametrized by polar angles: the corner
angles around the vertex are rescaled by ``2*pi / angle_sum`` so that they fill
a full turn.  Transport along an edge keeps the angle to the edge fixed; the
rotation it induces is ``rho(a->b) = polar_b(b->a) + pi - polar_a(a->b)``.

A frame field stores a reference direction ``phi_v`` per vertex.  A tangent
vector field is a complex coefficient ``z_v`` relative to that direction, and
the connection 1-form is ``A(a->b) = rho(a->b) + phi_a - phi_b`` wrapped to
(-pi, pi]: a field is parallel along an edge when ``z_b = z_a * exp(i A)``.
Around every face the boundary sum of ``A`` equals the face's curvature share
modulo 2*pi.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exterior import cotan_weights, d1
from .surface import SurfaceMesh, wrap_angle


def halfedge_polar_angles(mesh: SurfaceMesh) -> np.ndarray:
    """Polar angle of every halfedge a->b in the tangent plane of a (first halfedge at 0)."""
    out = mesh._cache.get("polar")
    if out is not None:
        return out
    nh = 3 * mesh.n_faces
    theta = mesh.corner_angles.ravel()  # halfedge (f, c) starts the corner c of face f
    scale = 2 * np.pi / mesh.angle_sum
    out = np.empty(nh)
    h = mesh.vertex_halfedge.copy()
    tail = mesh.halfedge_tail
    acc = np.zeros(mesh.n_vertices)
    alive = np.ones(mesh.n_vertices, dtype=bool)
    start = h.copy()
    while alive.any():
        hv = h[alive]
        out[hv] = acc[alive]
        acc[alive] += theta[hv] * scale[tail[hv]]
        h[alive] = mesh.halfedge_ccw[hv]
        alive[alive] = h[alive] != start[alive]
    mesh._cache["polar"] = out
    return out


def transport_angles(mesh: SurfaceMesh) -> np.ndarray:
    """Rotation of polar angle under transport along each stored edge a->b."""
    polar = halfedge_polar_angles(mesh)
    h_ab, h_ba = mesh.edge_halfedges[:, 0], mesh.edge_halfedges[:, 1]
    return wrap_angle(polar[h_ba] + np.pi - polar[h_ab])


@dataclass
class FrameField:
    """Per-vertex reference directions and the induced connection 1-form."""

    mesh: SurfaceMesh
    phi: np.ndarray
    A: np.ndarray

    def holonomy(self) -> np.ndarray:
        """Boundary sum of A around each face, wrapped to (-pi, pi]."""
        return wrap_angle(d1(self.mesh) @ self.A)

    def singular_faces(self) -> np.ndarray:
        """Integer index of the frame itself per face: (K_f - dA_f) / 2pi."""
        raw = self.mesh.face_curvature() - d1(self.mesh) @ self.A
        return np.rint(raw / (2 * np.pi)).astype(int)

    def rotated(self, beta: float) -> "FrameField":
        """Same frame with every reference direction turned by ``beta``."""
        return FrameField(self.mesh, self.phi + beta, self.A.copy())

    def ambient_coefficients(self, vectors: np.ndarray) -> np.ndarray:
        """Complex coefficients of ambient tangent vectors (embedded meshes only)."""
        return ambient_to_coefficients(self, vectors)


def build_frame(mesh: SurfaceMesh, mode: str = "transport", seed: int | None = None) -> FrameField:
    """Frame field on ``mesh``.

    ``mode="transport"`` parallel-transports the direction of vertex 0 along a
    breadth-first spanning tree, so ``A`` vanishes on tree edges (and
    identically on the flat torus).  ``mode="random"`` draws independent
    directions per vertex.
    """
    rho = transport_angles(mesh)
    if mode == "random":
        phi = np.random.default_rng(seed).uniform(-np.pi, np.pi, mesh.n_vertices)
    elif mode == "transport":
        phi = np.zeros(mesh.n_vertices)
        seen = np.zeros(mesh.n_vertices, dtype=bool)
        seen[0] = True
        q = deque([0])
        nb = _neighbors_with_edges(mesh)
        while q:
            v = q.popleft()
            for w, e, s in nb[v]:
                if not seen[w]:
                    seen[w] = True
                    phi[w] = phi[v] + s * rho[e]
                    q.append(w)
        phi = wrap_angle(phi)
    else:
        raise ValueError(f"unknown frame mode {mode!r}")
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    A = wrap_angle(rho + phi[a] - phi[b])
    return FrameField(mesh, phi, A)


def _neighbors_with_edges(mesh: SurfaceMesh):
    nb = mesh._cache.get("nbe")
    if nb is None:
        nb = [[] for _ in range(mesh.n_vertices)]
        for e, (a, b) in enumerate(mesh.edges.tolist()):
            nb[a].append((b, e, 1))
            nb[b].append((a, e, -1))
        mesh._cache["nbe"] = nb
    return nb


def ambient_to_coefficients(frame: FrameField, vectors: np.ndarray) -> np.ndarray:
    """Express ambient vectors at vertices as complex coefficients in the frame.

    Each vector is projected to the plane of the vertex's corner sector that
    contains it, and its angle inside the sector is rescaled like the polar map.
    """
    mesh = frame.mesh
    if mesh.positions is None:
        raise ValueError("intrinsic mesh has no ambient space")
    X = mesh.positions
    polar = halfedge_polar_angles(mesh)
    scale = 2 * np.pi / mesh.angle_sum
    out = np.zeros(mesh.n_vertices, dtype=complex)
    for v in range(mesh.n_vertices):
        vec = vectors[v]
        mag = np.linalg.norm(vec)
        if mag == 0:
            continue
        h0 = h = int(mesh.vertex_halfedge[v])
        best = None
        while True:
            f, c = divmod(h, 3)
            p = X[mesh.faces[f, (c + 1) % 3]] - X[v]
            q = X[mesh.faces[f, (c + 2) % 3]] - X[v]
            n = np.cross(p, q)
            n /= np.linalg.norm(n)
            t = vec - (vec @ n) * n
            ang_p = np.arctan2(np.cross(p, t) @ n, p @ t)
            ang_q = mesh.corner_angles[f, c]
            miss = 0.0 if 0 <= ang_p <= ang_q else min(abs(ang_p), abs(ang_p - ang_q))
            if best is None or miss < best[0]:
                best = (miss, polar[h] + np.clip(ang_p, 0, ang_q) * scale[v], np.linalg.norm(t))
            h = int(mesh.halfedge_ccw[h])
            if h == h0:
                break
        out[v] = mag * np.exp(1j * (best[1] - frame.phi[v]))
    return out


@dataclass
class TangentVectorField:
    """Vertex-based tangent vector field: ``z[v]`` times the frame direction at v."""

    frame: FrameField
    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        if self.z.shape != (self.frame.mesh.n_vertices,):
            raise ValueError("one coefficient per vertex required")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite vector field coefficients")

    @property
    def mesh(self) -> SurfaceMesh:
        return self.frame.mesh

    def modulus(self) -> np.ndarray:
        return np.abs(self.z)

    def rotated(self, beta: float) -> "TangentVectorField":
        return TangentVectorField(self.frame, self.z * np.exp(1j * beta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["vertex", "re", "im"])
        for v, val in enumerate(self.z):
            w.writerow([v, repr(float(val.real)), repr(float(val.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, frame: FrameField, text: str) -> "TangentVectorField":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        z = np.zeros(frame.mesh.n_vertices, dtype=complex)
        for v, re, im in rows:
            z[int(v)] = float(re) + 1j * float(im)
        return cls(frame, z)


def transport_operator(frame: FrameField) -> sp.csr_matrix:
    """Complex (E, V) matrix of transported differences ``z_b exp(-iA) - z_a``."""
    key = ("Dconn", id(frame.A))
    mesh = frame.mesh
    D = mesh._cache.get(key)
    if D is None:
        E = mesh.n_edges
        rows = np.repeat(np.arange(E), 2)
        cols = mesh.edges.ravel()
        vals = np.stack([-np.ones(E), np.exp(-1j * frame.A)], axis=1).ravel()
        D = sp.csr_matrix((vals, (rows, cols)), shape=(E, mesh.n_vertices))
        mesh._cache[key] = D
    return D


def phase_increments(u: TangentVectorField) -> np.ndarray:
    """Angle of the transported coefficient ratio along each edge, in (-pi, pi]."""
    a, b = u.mesh.edges[:, 0], u.mesh.edges[:, 1]
    return np.angle(np.conj(u.z[a]) * u.z[b] * np.exp(-1j * u.frame.A))


def j_form(u: TangentVectorField) -> np.ndarray:
    """Current 1-form j(u) = (Du, iu): phase increment weighted by |z_a||z_b|.

    For unit fields this is exactly the angle increment after transport.
    """
    a, b = u.mesh.edges[:, 0], u.mesh.edges[:, 1]
    return np.abs(u.z[a]) * np.abs(u.z[b]) * phase_increments(u)


def default_potential(s):
    return (1.0 - s) ** 2


def default_potential_derivative(s):
    return -2.0 * (1.0 - s)


def dirichlet_energy(u: TangentVectorField) -> float:
    """Cotan discretization of the covariant Dirichlet energy (1/2) int |Du|^2."""
    diff = transport_operator(u.frame) @ u.z
    return 0.5 * float(np.dot(cotan_weights(u.mesh), np.abs(diff) ** 2))


def potential_energy(u: TangentVectorField, eps: float, F=default_potential) -> float:
    """(1 / 4 eps^2) int F(|u|^2), by dual-area quadrature."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(np.dot(u.mesh.vertex_area, F(np.abs(u.z) ** 2))) / (4 * eps * eps)


def gl_energy(u: TangentVectorField, eps: float, F=default_potential) -> float:
    return dirichlet_energy(u) + potential_energy(u, eps, F)


def edge_face_energy(mesh: SurfaceMesh, edge_values: np.ndarray) -> np.ndarray:
    """Split (1/2) sum_e w_e x_e^2 into per-face contributions (1/4) sum cot(theta) x^2."""
    th = mesh.corner_angles
    cot = np.cos(th) / np.sin(th)
    opp_edge = np.roll(mesh.face_edges, -1, axis=1)
    return 0.25 * (cot * edge_values[opp_edge] ** 2).sum(axis=1)
