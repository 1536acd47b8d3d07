"""Triangulated closed surfaces and their intrinsic metric primitives.

A :class:`SurfaceMesh` is built from oriented triangles plus either 3-D vertex
positions (embedded meshes) or per-face edge lengths (intrinsic meshes).  All
geometry downstream (angles, areas, curvature, transport) is computed from edge
lengths only, so both flavours behave identically.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised when a mesh document does not describe a closed oriented 2-manifold."""


@dataclass(frozen=True)
class SurfacePoint:
    """A point on the mesh given by a face id and barycentric coordinates."""

    face: int
    bary: tuple[float, float, float]

    def __post_init__(self):
        b = tuple(float(x) for x in self.bary)
        if len(b) != 3:
            raise ValueError("barycentric coordinates need three entries")
        if min(b) < -1e-12:
            raise ValueError(f"negative barycentric coordinate in {b}")
        if abs(sum(b) - 1.0) > 1e-12:
            raise ValueError(f"barycentric coordinates {b} do not sum to 1")
        object.__setattr__(self, "bary", b)
        object.__setattr__(self, "face", int(self.face))

    @classmethod
    def centroid(cls, face: int) -> "SurfacePoint":
        return cls(face, (1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0))

    @classmethod
    def at_vertex(cls, mesh: "SurfaceMesh", v: int) -> "SurfacePoint":
        f, c = mesh.vertex_corner[v]
        b = [0.0, 0.0, 0.0]
        b[c] = 1.0
        return cls(int(f), tuple(b))

    def to_json(self) -> dict:
        return {"face": self.face, "bary": list(self.bary)}

    def weights(self, mesh: "SurfaceMesh") -> tuple[np.ndarray, np.ndarray]:
        """Vertex ids and weights of the barycentric splitting of this point."""
        return mesh.faces[self.face].copy(), np.asarray(self.bary)

    def nearest_vertex(self, mesh: "SurfaceMesh") -> int:
        return int(mesh.faces[self.face][int(np.argmax(self.bary))])


class SurfaceMesh:
    """Immutable closed oriented triangle mesh.

    Parameters
    ----------
    faces : (F, 3) int array of counterclockwise vertex triples.
    positions : optional (V, 3) float array.  If given, edge lengths are derived.
    face_lengths : optional (F, 3) array, ``face_lengths[f, c]`` is the length of
        the side from corner ``c`` to corner ``c + 1``.  Required for intrinsic
        meshes.
    """

    def __init__(self, faces, positions=None, face_lengths=None, name: str = ""):
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
            raise MeshError("faces must be a non-empty (F, 3) array")
        self.name = name
        self.faces = faces
        self.n_faces = len(faces)
        self.n_vertices = int(faces.max()) + 1
        if faces.min() < 0:
            raise MeshError("negative vertex index")
        if positions is not None:
            positions = np.asarray(positions, dtype=float)
            if positions.shape[0] < self.n_vertices:
                raise MeshError("face refers to a vertex without a position")
            self.n_vertices = positions.shape[0]
        self.positions = positions
        self._build_combinatorics()
        if face_lengths is None:
            if positions is None:
                raise MeshError("need positions or edge lengths")
            p = positions[faces]
            face_lengths = np.linalg.norm(np.roll(p, -1, axis=1) - p, axis=2)
        self.face_lengths = np.asarray(face_lengths, dtype=float)
        self._build_geometry()
        self._cache: dict = {}
        for arr in (self.faces, self.face_lengths, self.edges, self.face_edges):
            arr.setflags(write=False)

    # construction -----------------------------------------------------------------

    def _build_combinatorics(self):
        F = self.faces
        nv = self.n_vertices
        if np.any(F[:, 0] == F[:, 1]) or np.any(F[:, 1] == F[:, 2]) or np.any(F[:, 0] == F[:, 2]):
            bad = np.nonzero((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2]))[0]
            raise MeshError(f"degenerate face {int(bad[0])}: {F[bad[0]].tolist()}")
        used = np.zeros(nv, dtype=bool)
        used[F.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.argmin(used))} is not used by any face")

        tail = F.ravel()
        head = np.roll(F, -1, axis=1).ravel()
        key = tail * nv + head
        order = np.argsort(key, kind="stable")
        dup = np.nonzero(np.diff(key[order]) == 0)[0]
        if len(dup):
            h = order[dup[0]]
            a, b = int(tail[h]), int(head[h])
            und = np.sum((np.minimum(tail, head) == min(a, b)) & (np.maximum(tail, head) == max(a, b)))
            if und > 2:
                raise MeshError(f"non-manifold edge ({a}, {b}) shared by {und} faces")
            raise MeshError(f"inconsistent orientation at edge ({a}, {b}) (faces {h // 3} and {order[dup[0] + 1] // 3})")
        # every directed halfedge must have its twin
        halfedge_of = dict(zip(key.tolist(), range(len(key))))
        twin = np.empty(len(key), dtype=np.int64)
        for h, (a, b) in enumerate(zip(tail.tolist(), head.tolist())):
            t = halfedge_of.get(b * nv + a)
            if t is None:
                und = np.sum((np.minimum(tail, head) == min(a, b)) & (np.maximum(tail, head) == max(a, b)))
                if und > 2:
                    raise MeshError(f"non-manifold edge ({a}, {b}) shared by {und} faces")
                raise MeshError(f"non-closed surface: boundary edge ({a}, {b}) in face {h // 3}")
            twin[h] = t
        self._halfedge_of = halfedge_of
        self.halfedge_twin = twin
        self.halfedge_tail = tail
        self.halfedge_head = head

        forward = tail < head
        hid = np.nonzero(forward)[0]
        E = len(hid)
        edge_of_half = np.empty(len(key), dtype=np.int64)
        edge_of_half[hid] = np.arange(E)
        edge_of_half[twin[hid]] = np.arange(E)
        self.edges = np.stack([tail[hid], head[hid]], axis=1)
        self.n_edges = E
        self.halfedge_edge = edge_of_half
        self.halfedge_sign = np.where(forward, 1, -1)
        self.face_edges = edge_of_half.reshape(-1, 3)
        self.face_edge_sign = self.halfedge_sign.reshape(-1, 3)
        # edge_faces[e] = (face left of a->b, face left of b->a)
        self.edge_faces = np.stack([hid // 3, twin[hid] // 3], axis=1)
        self.edge_halfedges = np.stack([hid, twin[hid]], axis=1)

        # vertex rings: next outgoing halfedge counterclockwise around the tail
        # halfedge h = (f, c) goes f[c] -> f[c+1]; the ccw successor around f[c]
        # is f[c] -> f[c+2], which is the twin of the halfedge (f, c+2).
        f_idx = np.arange(len(key)) // 3
        c_idx = np.arange(len(key)) % 3
        self.halfedge_ccw = twin[f_idx * 3 + (c_idx + 2) % 3]
        self.vertex_corner = np.empty((nv, 2), dtype=np.int64)
        self.vertex_corner[tail, 0] = f_idx
        self.vertex_corner[tail, 1] = c_idx
        self.vertex_halfedge = self.vertex_corner[:, 0] * 3 + self.vertex_corner[:, 1]
        degree = np.bincount(tail, minlength=nv)
        # each ring must be a single cycle (vertex manifoldness)
        ring_len = np.zeros(nv, dtype=np.int64)
        h = self.vertex_halfedge.copy()
        start = h.copy()
        alive = np.ones(nv, dtype=bool)
        for _ in range(int(degree.max()) + 1):
            ring_len[alive] += 1
            h[alive] = self.halfedge_ccw[h[alive]]
            alive &= h != start
            if not alive.any():
                break
        bad = np.nonzero(ring_len != degree)[0]
        if len(bad):
            raise MeshError(f"non-manifold vertex {int(bad[0])}: its faces do not form a single fan")
        self.vertex_degree = degree

        self.euler_characteristic = nv - E + len(F)
        if self.euler_characteristic % 2:
            raise MeshError(f"odd Euler characteristic {self.euler_characteristic}")
        self.genus = (2 - self.euler_characteristic) // 2
        if self.genus < 0:
            raise MeshError("mesh is not connected")
        if self._n_components() != 1:
            raise MeshError("mesh is not connected")

    def _n_components(self) -> int:
        nbrs = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges.tolist():
            nbrs[a].append(b)
            nbrs[b].append(a)
        seen = np.zeros(self.n_vertices, dtype=bool)
        comps = 0
        for s in range(self.n_vertices):
            if seen[s]:
                continue
            comps += 1
            seen[s] = True
            q = deque([s])
            while q:
                v = q.popleft()
                for w in nbrs[v]:
                    if not seen[w]:
                        seen[w] = True
                        q.append(w)
        return comps

    def _build_geometry(self):
        L = self.face_lengths
        if L.shape != self.faces.shape:
            raise MeshError("face_lengths must have shape (F, 3)")
        if np.any(~np.isfinite(L)) or np.any(L <= 0):
            f = int(np.nonzero(~(L > 0))[0][0])
            raise MeshError(f"nonpositive edge length in face {f}")
        # shared edges must agree
        he_len = L.ravel()
        mismatch = np.abs(he_len - he_len[self.halfedge_twin])
        tol = 1e-12 * np.maximum(1.0, he_len)
        if np.any(mismatch > tol):
            h = int(np.argmax(mismatch - tol))
            raise MeshError(
                f"edge ({self.halfedge_tail[h]}, {self.halfedge_head[h]}) has inconsistent lengths "
                f"{he_len[h]!r} and {he_len[self.halfedge_twin[h]]!r}"
            )
        self.edge_length = he_len[self.edge_halfedges[:, 0]]
        # corner c is opposite to side (c+1 -> c+2)
        a = L[:, 0]
        b = L[:, 1]
        c = L[:, 2]
        opp = np.stack([b, c, a], axis=1)
        s1 = np.stack([a, b, c], axis=1)
        s2 = np.stack([c, a, b], axis=1)
        slack = s1 + s2 - opp
        if np.any(slack <= 1e-14 * (s1 + s2)):
            f = int(np.nonzero((slack <= 1e-14 * (s1 + s2)).any(axis=1))[0][0])
            raise MeshError(f"triangle inequality violated in face {f}: lengths {L[f].tolist()}")
        cosang = (s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2)
        self.corner_angles = np.arccos(np.clip(cosang, -1.0, 1.0))
        # Kahan's stable Heron formula
        srt = np.sort(L, axis=1)[:, ::-1]
        x, y, z = srt[:, 0], srt[:, 1], srt[:, 2]
        self.face_area = 0.25 * np.sqrt(
            np.maximum((x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z)), 0.0)
        )
        self.vertex_area = np.bincount(
            self.faces.ravel(), weights=np.repeat(self.face_area / 3.0, 3), minlength=self.n_vertices
        )
        self.angle_sum = np.bincount(
            self.faces.ravel(), weights=self.corner_angles.ravel(), minlength=self.n_vertices
        )
        self.total_area = float(self.face_area.sum())
        self.mean_edge_length = float(self.edge_length.mean())
        # planar layout of each face: corner 0 at origin, corner 1 on +x axis
        l01 = L[:, 0]
        l20 = L[:, 2]
        ang0 = self.corner_angles[:, 0]
        layout = np.zeros((self.n_faces, 3, 2))
        layout[:, 1, 0] = l01
        layout[:, 2, 0] = l20 * np.cos(ang0)
        layout[:, 2, 1] = l20 * np.sin(ang0)
        self.face_layout = layout

    # basic queries ----------------------------------------------------------------

    @property
    def is_intrinsic(self) -> bool:
        return self.positions is None

    @property
    def h(self) -> float:
        """Mesh size: the mean edge length."""
        return self.mean_edge_length

    def halfedge(self, a: int, b: int) -> int:
        """Index of the halfedge a -> b (raises KeyError if a, b are not adjacent)."""
        return self._halfedge_of[int(a) * self.n_vertices + int(b)]

    def edge_between(self, a: int, b: int) -> tuple[int, int]:
        """Edge id and orientation sign (+1 when a -> b agrees with the stored edge)."""
        h = self.halfedge(a, b)
        return int(self.halfedge_edge[h]), int(self.halfedge_sign[h])

    def neighbors(self, v: int) -> list[int]:
        """Neighbours of ``v`` in counterclockwise order."""
        h0 = h = int(self.vertex_halfedge[v])
        out = []
        while True:
            out.append(int(self.halfedge_head[h]))
            h = int(self.halfedge_ccw[h])
            if h == h0:
                return out

    def vertex_faces(self, v: int) -> list[int]:
        h0 = h = int(self.vertex_halfedge[v])
        out = []
        while True:
            out.append(h // 3)
            h = int(self.halfedge_ccw[h])
            if h == h0:
                return out

    def face_adjacency(self) -> list[list[int]]:
        adj = self._cache.get("face_adj")
        if adj is None:
            tw = self.halfedge_twin.reshape(-1, 3) // 3
            adj = [row.tolist() for row in tw]
            self._cache["face_adj"] = adj
        return adj

    def point_position(self, p: SurfacePoint) -> np.ndarray:
        if self.positions is None:
            raise ValueError("intrinsic mesh has no positions")
        return np.asarray(p.bary) @ self.positions[self.faces[p.face]]

    def point_layout(self, p: SurfacePoint) -> np.ndarray:
        """2-D coordinates of ``p`` in its face's planar layout."""
        return np.asarray(p.bary) @ self.face_layout[p.face]

    def locate(self, x) -> SurfacePoint:
        """Closest surface point to an ambient position (embedded meshes only)."""
        if self.positions is None:
            raise ValueError("intrinsic mesh has no positions")
        x = np.asarray(x, dtype=float)
        P = self.positions[self.faces]
        cent = P.mean(axis=1)
        cand = np.argsort(np.linalg.norm(cent - x, axis=1))[:12]
        best = None
        for f in cand:
            b = _closest_bary(P[f], x)
            q = b @ P[f]
            dist = np.linalg.norm(q - x)
            if best is None or dist < best[0]:
                best = (dist, int(f), b)
        b = np.clip(best[2], 0, None)
        b = b / b.sum()
        return SurfacePoint(best[1], (b[0], b[1], 1.0 - b[0] - b[1]))

    # curvature --------------------------------------------------------------------

    def angle_defect(self) -> np.ndarray:
        """Vertex angle defects 2*pi - (sum of corner angles): curvature integrated over dual cells."""
        return 2.0 * np.pi - self.angle_sum

    def face_curvature(self) -> np.ndarray:
        """Per-face share of the curvature 2-form.

        Each vertex spreads its angle defect over incident corners in proportion
        to the corner angle; this is exactly the holonomy of the discrete
        Levi-Civita connection around the face.
        """
        th = self.corner_angles
        scale = (2.0 * np.pi - self.angle_sum) / self.angle_sum
        return (th * scale[self.faces]).sum(axis=1)

    def __repr__(self):
        kind = "intrinsic" if self.is_intrinsic else "embedded"
        return (
            f"SurfaceMesh({self.name!r}, {kind}, V={self.n_vertices}, E={self.n_edges}, "
            f"F={self.n_faces}, genus={self.genus})"
        )

    def info(self) -> dict:
        return {
            "name": self.name,
            "intrinsic": self.is_intrinsic,
            "V": self.n_vertices,
            "E": self.n_edges,
            "F": self.n_faces,
            "euler_characteristic": int(self.euler_characteristic),
            "genus": int(self.genus),
            "total_area": self.total_area,
            "total_curvature": float(self.angle_defect().sum()),
            "mean_edge_length": self.mean_edge_length,
        }


def gaussian_curvature(mesh: SurfaceMesh) -> np.ndarray:
    """Curvature 2-form on dual cells (one value per vertex): the angle defects.

    Sums to ``2*pi*chi`` up to rounding (discrete Gauss-Bonnet).
    """
    return mesh.angle_defect()


def _closest_bary(tri: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of the closest point of a 3-D triangle to ``x``."""
    a, b, c = tri
    ab, ac, ap = b - a, c - a, x - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return np.array([1.0, 0.0, 0.0])
    bp = x - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return np.array([1 - v, v, 0.0])
    cp = x - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return np.array([1 - w, 0.0, w])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.array([0.0, 1 - w, w])
    denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom
    return np.array([1 - v - w, v, w])


# mesh documents -------------------------------------------------------------------


def load_mesh(source, fmt: str | None = None) -> SurfaceMesh:
    """Load an OFF, OBJ or INTRINSIC mesh document from a path or text."""
    path = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        path = Path(source)
        text = path.read_text()
        if fmt is None:
            fmt = path.suffix.lstrip(".").lower() or None
    else:
        text = str(source)
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MeshError("empty mesh document")
    head = lines[0].split()[0].upper()
    if head == "INTRINSIC":
        fmt = "intrinsic"
    elif head == "OFF" or fmt == "off":
        fmt = "off"
    elif fmt is None:
        fmt = "obj"
    name = path.stem if path else fmt
    if fmt == "off":
        return _parse_off(lines, name)
    if fmt == "obj":
        return _parse_obj(lines, name)
    if fmt == "intrinsic":
        return _parse_intrinsic(lines, name)
    raise MeshError(f"unknown mesh format {fmt!r}")


def _parse_off(lines, name):
    first = lines[0].split()
    rest = lines[1:]
    if first[0].upper() == "OFF" and len(first) == 1:
        counts = rest[0].split()
        rest = rest[1:]
    else:
        counts = first[1:] if first[0].upper() == "OFF" else first
    nv, nf = int(counts[0]), int(counts[1])
    pos = np.array([[float(x) for x in ln.split()[:3]] for ln in rest[:nv]])
    faces = []
    for ln in rest[nv:nv + nf]:
        vals = [int(x) for x in ln.split()]
        k = vals[0]
        poly = vals[1:1 + k]
        if k < 3:
            raise MeshError(f"face with {k} vertices")
        for i in range(1, k - 1):
            faces.append([poly[0], poly[i], poly[i + 1]])
    return SurfaceMesh(np.array(faces), positions=pos, name=name)


def _parse_obj(lines, name):
    pos, faces = [], []
    for ln in lines:
        parts = ln.split()
        if parts[0] == "v":
            pos.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(pos) + i for i in idx]
            for i in range(1, len(idx) - 1):
                faces.append([idx[0], idx[i], idx[i + 1]])
    if not faces:
        raise MeshError("OBJ document has no faces")
    return SurfaceMesh(np.array(faces), positions=np.array(pos), name=name)


def _parse_intrinsic(lines, name):
    nv, nf = (int(x) for x in lines[1].split()[:2])
    rows = [ln.split() for ln in lines[2:2 + nf]]
    if len(rows) != nf:
        raise MeshError(f"expected {nf} face lines, found {len(rows)}")
    faces = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows])
    lengths = np.array([[float(r[3]), float(r[4]), float(r[5])] for r in rows])
    mesh = SurfaceMesh(faces, face_lengths=lengths, name=name)
    if mesh.n_vertices != nv:
        raise MeshError(f"header declares {nv} vertices but faces use {mesh.n_vertices}")
    return mesh


def write_intrinsic(mesh: SurfaceMesh) -> str:
    out = ["INTRINSIC", f"{mesh.n_vertices} {mesh.n_faces}"]
    for f, L in zip(mesh.faces.tolist(), mesh.face_lengths.tolist()):
        out.append(" ".join(str(i) for i in f) + " " + " ".join(repr(x) for x in L))
    return "\n".join(out) + "\n"


def write_off(mesh: SurfaceMesh) -> str:
    if mesh.positions is None:
        raise ValueError("intrinsic mesh cannot be written as OFF")
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}"]
    out += [" ".join(repr(float(x)) for x in p) for p in mesh.positions]
    out += ["3 " + " ".join(str(i) for i in f) for f in mesh.faces.tolist()]
    return "\n".join(out) + "\n"


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def sphere_distance(p, q) -> float:
    """Great-circle distance between two points, projected to the unit sphere."""
    p = np.asarray(p, float) / np.linalg.norm(p)
    q = np.asarray(q, float) / np.linalg.norm(q)
    return float(math.atan2(np.linalg.norm(np.cross(p, q)), p @ q))
