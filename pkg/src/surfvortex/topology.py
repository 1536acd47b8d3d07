"""Homology generators, harmonic 1-forms and their periods.

Generators come from a tree-cotree decomposition: a breadth-first spanning
tree of the vertex graph, a spanning tree of the dual graph avoiding it, and
the ``2g`` leftover edges.  Each leftover edge closes a primal loop (through
the tree) and a dual loop (through the cotree).  The dual loops are closed
integer cochains whose harmonic parts span the harmonic space.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import eigsh

from .exterior import SolverError, cotan_weights, d0, d1, exact_part, laplacian1
from .surface import SurfaceMesh


class HomologyError(ValueError):
    pass


@dataclass
class CycleBasis:
    """``2g`` closed oriented edge loops generating first homology."""

    mesh: SurfaceMesh
    loops: list[list[int]]          # closed vertex sequences (first vertex not repeated)
    chains: np.ndarray              # (2g, E) signed edge multiplicities
    generator_edges: np.ndarray     # leftover edge of each loop
    cocycles: np.ndarray            # (2g, E) dual loops as closed integer cochains
    tree_edges: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.loops)

    def pairing(self) -> np.ndarray:
        """Algebraic intersection of primal loops with dual loops (entries +-1 on the diagonal)."""
        return self.chains @ self.cocycles.T

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["loop", "edge", "coefficient"])
        for l, ch in enumerate(self.chains):
            for e in np.nonzero(ch)[0]:
                w.writerow([l, int(e), int(ch[e])])
        return buf.getvalue()


@dataclass
class HarmonicBasis:
    """Orthonormal harmonic 1-forms (columns of ``forms``) and their periods."""

    mesh: SurfaceMesh
    cycles: CycleBasis
    forms: np.ndarray      # (E, 2g)
    gram: np.ndarray       # (2g, 2g)
    periods: np.ndarray    # alpha[l, k] = integral of form k over loop l

    @property
    def dim(self) -> int:
        return self.forms.shape[1]

    def residuals(self) -> dict:
        """Closedness and co-closedness defects, relative to the form size."""
        m = self.mesh
        if self.dim == 0:
            return {"d": 0.0, "dstar": 0.0, "gram": 0.0}
        scale = np.abs(self.forms).max()
        dd = np.abs(d1(m) @ self.forms).max() / scale
        # d* = M0^-1 d0^T W; measured against the size of its individual terms
        W = cotan_weights(m)
        num = d0(m).T @ (W[:, None] * self.forms)
        den = np.abs(d0(m)).T @ np.abs(W[:, None] * self.forms)
        ds = np.abs(num).max() / den.max()
        return {"d": float(dd), "dstar": float(ds), "gram": float(np.abs(self.gram - np.eye(self.dim)).max())}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["edge"] + [f"eta{k + 1}" for k in range(self.dim)])
        for e in range(self.mesh.n_edges):
            w.writerow([e] + [repr(float(x)) for x in self.forms[e]])
        return buf.getvalue()


def path_to_chain(mesh: SurfaceMesh, verts, closed: bool = True) -> np.ndarray:
    """Signed edge multiplicities of a vertex path (closed unless ``closed=False``)."""
    verts = [int(v) for v in verts]
    if closed and len(verts) > 1 and verts[0] == verts[-1]:
        verts = verts[:-1]
    chain = np.zeros(mesh.n_edges, dtype=np.int64)
    steps = zip(verts, verts[1:] + verts[:1]) if closed else zip(verts[:-1], verts[1:])
    for a, b in steps:
        try:
            e, s = mesh.edge_between(a, b)
        except KeyError:
            raise HomologyError(f"vertices {a} and {b} are not adjacent") from None
        chain[e] += s
    return chain


def homology_basis(mesh: SurfaceMesh) -> CycleBasis:
    """Tree-cotree generators of first homology (empty for the sphere)."""
    cached = mesh._cache.get("cycles")
    if cached is not None:
        return cached
    V, E, F = mesh.n_vertices, mesh.n_edges, mesh.n_faces
    edges = mesh.edges
    nb = [[] for _ in range(V)]
    for e, (a, b) in enumerate(edges.tolist()):
        nb[a].append((b, e))
        nb[b].append((a, e))
    parent = np.full(V, -1)
    parent_edge = np.full(V, -1)
    depth = np.zeros(V, dtype=np.int64)
    tree = np.zeros(E, dtype=bool)
    seen = np.zeros(V, dtype=bool)
    seen[0] = True
    q = deque([0])
    while q:
        v = q.popleft()
        for w, e in nb[v]:
            if not seen[w]:
                seen[w] = True
                parent[w], parent_edge[w], depth[w] = v, e, depth[v] + 1
                tree[e] = True
                q.append(w)
    # dual spanning tree over edges not in the primal tree
    cotree = np.zeros(E, dtype=bool)
    fparent = np.full(F, -1)
    fparent_edge = np.full(F, -1)
    fseen = np.zeros(F, dtype=bool)
    fseen[0] = True
    q = deque([0])
    ef = mesh.edge_faces
    while q:
        f = q.popleft()
        for e in mesh.face_edges[f].tolist():
            if tree[e]:
                continue
            g = int(ef[e, 0] if ef[e, 1] == f else ef[e, 1])
            if not fseen[g]:
                fseen[g] = True
                fparent[g], fparent_edge[g] = f, e
                cotree[e] = True
                q.append(g)
    gens = np.nonzero(~tree & ~cotree)[0]
    if len(gens) != 2 * mesh.genus:
        raise HomologyError(f"tree-cotree left {len(gens)} edges, expected {2 * mesh.genus}")

    def root_path(v):
        out = [v]
        while parent[v] >= 0:
            v = int(parent[v])
            out.append(v)
        return out

    def face_path(f):
        out = [f]
        while fparent[f] >= 0:
            f = int(fparent[f])
            out.append(f)
        return out

    loops, chains, cocycles = [], [], []
    for g in gens.tolist():
        a, b = (int(x) for x in edges[g])
        pa, pb = root_path(a), root_path(b)
        # strip the common ancestor chain
        while len(pa) > 1 and len(pb) > 1 and pa[-2] == pb[-2]:
            pa.pop()
            pb.pop()
        # loop: lca -> ... -> a -> b -> ... -> lca
        down_a = pa[::-1]              # lca ... a
        up_b = pb[:-1]                 # b ... (child of lca)
        loop = down_a + up_b
        loops.append(loop)
        chains.append(path_to_chain(mesh, loop))
        # dual loop: crossing g, then back through the cotree
        cyc = np.zeros(E, dtype=np.int64)
        fl, fr = int(ef[g, 0]), int(ef[g, 1])
        pl, pr = face_path(fl), face_path(fr)
        while len(pl) > 1 and len(pr) > 1 and pl[-2] == pr[-2]:
            pl.pop()
            pr.pop()
        cyc[g] = 1
        # walk the cotree path fr ... lca ... fl, closing each face in turn
        path = pr[:-1] + pl[::-1]
        _fill_cocycle(mesh, cyc, path, fparent, fparent_edge)
        cocycles.append(cyc)
    chains_a = np.array(chains, dtype=np.int64).reshape(len(gens), E)
    cocyc_a = np.array(cocycles, dtype=np.int64).reshape(len(gens), E)
    if len(gens):
        D1 = d1(mesh)
        if np.abs(D1 @ cocyc_a.T.astype(float)).max() != 0:
            raise HomologyError("dual loop construction produced a non-closed cochain")
        P = chains_a @ cocyc_a.T
        if round(abs(np.linalg.det(P.astype(float)))) != 1:
            raise HomologyError("primal and dual loops do not pair unimodularly")
    cb = CycleBasis(mesh, loops, chains_a, gens, cocyc_a, tree)
    mesh._cache["cycles"] = cb
    return cb


def _fill_cocycle(mesh, cyc, path, fparent, fparent_edge):
    """Assign the cotree edges along ``path`` so every face on it has zero boundary sum."""
    sign = mesh.face_edge_sign
    for f, nxt in zip(path, path[1:] + [None]):
        fe = mesh.face_edges[f]
        if nxt is None:
            if int((sign[f] * cyc[fe]).sum()) != 0:
                raise HomologyError("dual loop failed to close")
            return
        e = fparent_edge[f] if fparent[f] == nxt else fparent_edge[nxt]
        c = int(np.nonzero(fe == e)[0][0])
        rest = int((sign[f] * cyc[fe]).sum()) - sign[f, c] * cyc[e]
        cyc[e] = -rest * sign[f, c]


def harmonic_basis(mesh: SurfaceMesh, cycles: CycleBasis | None = None) -> HarmonicBasis:
    """Orthonormal harmonic basis obtained from the dual-loop cocycles.

    Each cocycle loses its exact part (one cotan Poisson solve); the results
    are orthonormalized by Gram-Schmidt in generator order, with one
    re-orthogonalization pass.
    """
    cycles = homology_basis(mesh) if cycles is None else cycles
    cached = mesh._cache.get("harmonic")
    if cached is not None and cached.cycles is cycles:
        return cached
    E = mesh.n_edges
    k = len(cycles)
    W = cotan_weights(mesh)
    D0 = d0(mesh)
    forms = np.zeros((E, k))
    for i in range(k):
        w = cycles.cocycles[i].astype(float)
        forms[:, i] = w - D0 @ exact_part(mesh, w)
    for _ in range(2):
        for i in range(k):
            v = forms[:, i]
            for j in range(i):
                v = v - np.dot(W * forms[:, j], v) * forms[:, j]
            nrm = np.sqrt(np.dot(W * v, v))
            if not nrm > 0:
                raise SolverError("harmonic form with zero norm")
            forms[:, i] = v / nrm
    gram = forms.T @ (W[:, None] * forms)
    periods = cycles.chains.astype(float) @ forms
    hb = HarmonicBasis(mesh, cycles, forms, gram, periods)
    mesh._cache["harmonic"] = hb
    return hb


def homology_class(loop, cycles: CycleBasis, basis: HarmonicBasis, tol: float = 0.05) -> np.ndarray:
    """Integer coordinates of a closed loop in the generator basis.

    ``loop`` is a closed vertex sequence or a signed edge chain (length E).
    """
    mesh = basis.mesh
    arr = np.asarray(loop)
    if arr.ndim == 1 and len(arr) == mesh.n_edges and not _looks_like_path(mesh, arr):
        chain = arr.astype(float)
        if np.abs(d0(mesh).T @ chain).max() > 1e-12:
            raise HomologyError("edge chain is not closed")
    else:
        chain = path_to_chain(mesh, arr).astype(float)
    if basis.dim == 0:
        return np.zeros(0, dtype=int)
    p = chain @ basis.forms
    c = np.linalg.solve(basis.periods.T, p)
    ci = np.rint(c)
    res = float(np.abs(c - ci).max())
    if res > tol:
        raise HomologyError(f"homology coordinates {c} are not integral (residual {res:.3g})")
    return ci.astype(int)


def _looks_like_path(mesh, arr):
    # a vertex path has consecutive adjacent vertices; edge chains are mostly zeros
    return arr.dtype.kind in "iu" and np.count_nonzero(arr) == len(arr) and arr.max() < mesh.n_vertices


def harmonic_spectrum(mesh: SurfaceMesh, count: int | None = None) -> np.ndarray:
    """Smallest eigenvalues of the symmetric 1-form Laplacian (normalized by its largest)."""
    L = laplacian1(mesh)
    k = (2 * mesh.genus + 2) if count is None else count
    top = eigsh(L, k=1, which="LA", return_eigenvectors=False, tol=1e-3)[0]
    shift = -1e-6 * top
    vals = eigsh(L, k=k, sigma=shift, which="LM", return_eigenvectors=False)
    return np.sort(vals) / top


def harmonic_dimension(mesh: SurfaceMesh, tol: float = 1e-10) -> tuple[int, float]:
    """Kernel dimension of the 1-form Laplacian and the first nonzero (relative) eigenvalue."""
    vals = harmonic_spectrum(mesh)
    dim = int(np.sum(np.abs(vals) < tol))
    gap = float(vals[dim]) if dim < len(vals) else float("nan")
    return dim, gap


def closed_to_harmonic_coefficients(basis: HarmonicBasis, omega: np.ndarray) -> np.ndarray:
    """Coordinates of the harmonic part of a 1-form in the orthonormal basis."""
    W = cotan_weights(basis.mesh)
    return basis.forms.T @ (W * omega)


__all__ = [
    "CycleBasis",
    "HarmonicBasis",
    "HomologyError",
    "homology_basis",
    "harmonic_basis",
    "homology_class",
    "harmonic_dimension",
    "harmonic_spectrum",
    "path_to_chain",
    "closed_to_harmonic_coefficients",
]
