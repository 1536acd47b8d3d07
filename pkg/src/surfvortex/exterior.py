"""Discrete exterior calculus on a :class:`SurfaceMesh`.

Conventions
-----------
* 0-forms live on vertices, 1-forms on edges oriented low -> high vertex id,
  2-forms on faces (or, for scalar potentials, integrated over the barycentric
  dual cells of the vertices).
* ``hodge1`` is the cotan star; it may carry zero entries on meshes with right
  angles (the unit-square flat torus), so nothing here inverts it.
* ``codifferential1 = hodge0^{-1} d0^T hodge1`` is the L2 adjoint of ``d0``:
  ``<d* a, z>_0 = <a, d z>_1``.
"""

from __future__ import annotations

import logging
import threading
import warnings

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .surface import SurfaceMesh, SurfacePoint

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def d0(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Exterior derivative on 0-forms, shape (E, V)."""
    E = mesh.n_edges
    rows = np.repeat(np.arange(E), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], E)
    return sp.csr_matrix((vals, (rows, cols)), shape=(E, mesh.n_vertices))


def d1(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Exterior derivative on 1-forms, shape (F, E)."""
    F = mesh.n_faces
    rows = np.repeat(np.arange(F), 3)
    return sp.csr_matrix(
        (mesh.face_edge_sign.ravel().astype(float), (rows, mesh.face_edges.ravel())),
        shape=(F, mesh.n_edges),
    )


def cotan_weights(mesh: SurfaceMesh, warn: bool = True) -> np.ndarray:
    """Edge weights (cot(alpha) + cot(beta)) / 2 of the cotan Laplacian."""
    w = mesh._cache.get("cotw")
    if w is None:
        th = mesh.corner_angles
        cot = np.cos(th) / np.sin(th)
        # corner c is opposite side c+1 (from c+1 to c+2)
        opp_edge = np.roll(mesh.face_edges, -1, axis=1)
        w = 0.5 * np.bincount(opp_edge.ravel(), weights=cot.ravel(), minlength=mesh.n_edges)
        w[np.abs(w) < 1e-14] = 0.0
        mesh._cache["cotw"] = w
        neg = np.nonzero(w < 0)[0]
        if warn and len(neg):
            msg = f"{len(neg)} negative cotan weights on {mesh.name}, e.g. edges {neg[:5].tolist()}"
            logger.warning(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return w


def hodge0(mesh: SurfaceMesh) -> sp.dia_matrix:
    return sp.diags(mesh.vertex_area)


def hodge1(mesh: SurfaceMesh) -> sp.dia_matrix:
    return sp.diags(cotan_weights(mesh))


def hodge2(mesh: SurfaceMesh) -> sp.dia_matrix:
    return sp.diags(1.0 / mesh.face_area)


def codifferential1(mesh: SurfaceMesh) -> sp.csr_matrix:
    """d* on 1-forms, the adjoint of d0 in the star inner products."""
    return (sp.diags(1.0 / mesh.vertex_area) @ d0(mesh).T @ hodge1(mesh)).tocsr()


def laplacian0(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Cotan stiffness matrix d0^T hodge1 d0 (integrated -Laplacian on 0-forms)."""
    L = mesh._cache.get("L0")
    if L is None:
        D = d0(mesh)
        L = (D.T @ sp.diags(cotan_weights(mesh)) @ D).tocsr()
        mesh._cache["L0"] = L
    return L


def laplacian1(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Symmetric form of the Hodge Laplacian on 1-forms, hodge1 * (d d* + d* d).

    Equals ``W d0 M0^{-1} d0^T W + d1^T M2 d1``; its kernel is the harmonic space.
    """
    D0, D1 = d0(mesh), d1(mesh)
    W = hodge1(mesh)
    return (W @ D0 @ sp.diags(1.0 / mesh.vertex_area) @ D0.T @ W + D1.T @ hodge2(mesh) @ D1).tocsr()


def inner1(mesh: SurfaceMesh, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a * cotan_weights(mesh), b))


def point_delta(mesh: SurfaceMesh, p: SurfacePoint) -> np.ndarray:
    """Unit Dirac mass at ``p`` split barycentrically onto the face's corners."""
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.faces[p.face], p.bary)
    return out


def interpolate0(mesh: SurfaceMesh, values: np.ndarray, p: SurfacePoint) -> float:
    return float(np.dot(values[mesh.faces[p.face]], p.bary))


class ScalarPoissonSolver:
    """Factorized cotan Laplacian with the constant kernel removed.

    ``solve(rhs)`` returns the 0-form ``f`` with ``L0 f = rhs`` and
    ``sum(vertex_area * f) = 0``; ``rhs`` must integrate to zero.
    """

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        self.L = laplacian0(mesh)
        Lr = self.L[1:, 1:].tocsc()
        self._lu = splu(Lr)
        self._lock = threading.Lock()

    @classmethod
    def of(cls, mesh: SurfaceMesh) -> "ScalarPoissonSolver":
        s = mesh._cache.get("poisson0")
        if s is None:
            s = cls(mesh)
            mesh._cache["poisson0"] = s
        return s

    def solve(self, rhs: np.ndarray, check: bool = True) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        scale = np.abs(rhs).sum()
        if abs(rhs.sum()) > 1e-10 * max(scale, 1e-300) and scale > 0:
            raise SolverError(f"unbalanced right-hand side: total {rhs.sum():.3e}")
        x = np.zeros(rhs.shape)
        if scale == 0:
            return x
        with self._lock:
            x[1:] = self._lu.solve(rhs[1:])
        m = self.mesh.vertex_area
        x -= np.dot(m, x) / m.sum()
        if check:
            res = np.abs(self.L @ x - rhs).max()
            if res > 1e-9 * max(1.0, np.abs(rhs).max()):
                raise SolverError(f"Poisson residual {res:.3e} exceeds tolerance")
        return x


def solve_poisson2(mesh: SurfaceMesh, rhs: np.ndarray) -> np.ndarray:
    """Solve ``-Lap psi = rhs`` for a 2-form on dual cells with zero total integral.

    ``rhs`` and the result are integrated values per vertex dual cell; the
    result's density ``psi / vertex_area`` is the scalar potential.
    """
    f = ScalarPoissonSolver.of(mesh).solve(rhs)
    return f * mesh.vertex_area


def exact_part(mesh: SurfaceMesh, omega: np.ndarray) -> np.ndarray:
    """0-form ``alpha`` whose differential is the exact component of ``omega``."""
    rhs = d0(mesh).T @ (cotan_weights(mesh) * omega)
    return ScalarPoissonSolver.of(mesh).solve(rhs, check=False)


def solve_coexact(mesh: SurfaceMesh, curl: np.ndarray, harmonic: np.ndarray | None = None) -> np.ndarray:
    """Co-exact 1-form ``beta`` with ``d1 beta = curl``.

    ``curl`` is a face 2-form with zero total.  The result satisfies
    ``d* beta = 0`` and is orthogonal to the given harmonic forms (columns of
    ``harmonic``), which fixes it uniquely.
    """
    curl = np.asarray(curl, float)
    if abs(curl.sum()) > 1e-10 * max(1.0, np.abs(curl).sum()):
        raise SolverError(f"curl does not integrate to zero (total {curl.sum():.3e})")
    D1 = d1(mesh)
    lu = mesh._cache.get("dual_graph_lu")
    if lu is None:
        A = (D1 @ D1.T).tocsc()[1:, 1:]
        lu = splu(A.tocsc())
        mesh._cache["dual_graph_lu"] = lu
    lam = np.zeros(mesh.n_faces)
    lam[1:] = lu.solve(curl[1:])
    beta = D1.T @ lam
    beta = beta - d0(mesh) @ exact_part(mesh, beta)
    if harmonic is not None and harmonic.size:
        w = cotan_weights(mesh)
        beta = beta - harmonic @ (harmonic.T @ (w * beta))
    return beta
