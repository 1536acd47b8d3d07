"""Test surfaces: icospheres, intrinsic flat tori, tori of revolution, a genus-2 polycube."""

from __future__ import annotations

import numpy as np

from .surface import SurfaceMesh


def icosphere(level: int = 3, radius: float = 1.0) -> SurfaceMesh:
    """Subdivided icosahedron projected to the sphere of the given radius."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    pts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = pts[a] + pts[b]
                pts.append(m / np.linalg.norm(m))
                cache[key] = len(pts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return SurfaceMesh(np.array(faces), positions=radius * np.array(pts), name=f"icosphere{level}")


def flat_torus(n: int = 16, m: int | None = None, h: float | None = None) -> SurfaceMesh:
    """Intrinsic flat torus: an n x m grid of square cells, each split by its diagonal.

    Cells have side ``h`` (default ``1/n``, so the torus has unit width).  Vertex
    ``(i, j)`` has id ``i + n * j``; ``i`` runs along x.
    """
    m = n if m is None else m
    if n < 3 or m < 3:
        raise ValueError("flat torus needs at least 3 cells per direction")
    h = 1.0 / n if h is None else float(h)
    vid = lambda i, j: (i % n) + n * (j % m)  # noqa: E731
    faces, lengths = [], []
    d = h * np.sqrt(2.0)
    for j in range(m):
        for i in range(n):
            a, b, c, e = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            lengths.append((h, h, d))
            faces.append((a, c, e))
            lengths.append((d, h, h))
    return SurfaceMesh(np.array(faces), face_lengths=np.array(lengths), name=f"flat_torus{n}x{m}")


def flat_torus_coords(mesh: SurfaceMesh, n: int, m: int | None = None, h: float | None = None) -> np.ndarray:
    """Grid coordinates (x, y) of the vertices of :func:`flat_torus`."""
    m = n if m is None else m
    h = 1.0 / n if h is None else float(h)
    ids = np.arange(n * m)
    return np.stack([(ids % n) * h, (ids // n) * h], axis=1)


def torus_of_revolution(R: float = 1.0, r: float = 0.5, nu: int = 64, nv: int = 32) -> SurfaceMesh:
    """Embedded torus of revolution with a staggered (near-equilateral) triangulation."""
    if nv % 2:
        raise ValueError("nv must be even for the staggered grid")
    pos = np.empty((nu * nv, 3))
    for j in range(nv):
        v = 2 * np.pi * j / nv
        u = 2 * np.pi * (np.arange(nu) + 0.5 * (j % 2)) / nu
        rho = R + r * np.cos(v)
        pos[j * nu:(j + 1) * nu] = np.stack([rho * np.cos(u), rho * np.sin(u), np.full(nu, r * np.sin(v))], axis=1)
    vid = lambda i, j: (i % nu) + nu * (j % nv)  # noqa: E731
    faces = []
    for j in range(nv):
        for i in range(nu):
            if j % 2 == 0:
                faces.append((vid(i, j), vid(i + 1, j), vid(i, j + 1)))
                faces.append((vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
            else:
                faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
                faces.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    faces = np.array(faces)
    # orient outward from the tube core
    P = pos[faces]
    nrm = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    c = P.mean(axis=1)
    core = c.copy()
    core[:, 2] = 0
    core *= R / np.linalg.norm(core, axis=1, keepdims=True)
    flip = np.einsum("ij,ij->i", nrm, c - core) < 0
    faces[flip] = faces[flip][:, ::-1]
    return SurfaceMesh(faces, positions=pos, name=f"torus_rev_{nu}x{nv}")


def double_torus(k: int = 2) -> SurfaceMesh:
    """Genus-2 polycube: boundary of a 3 x 5 x 1 block of unit cubes with two holes.

    Each unit cube is split into ``k^3`` cells before extracting the boundary,
    and every boundary square is split into two triangles.
    """
    mask = np.ones((3, 5, 1), dtype=bool)
    mask[1, 1, 0] = False
    mask[1, 3, 0] = False
    fine = np.repeat(np.repeat(np.repeat(mask, k, 0), k, 1), k, 2)
    occ = np.pad(fine, 1)
    vert_id: dict[tuple[int, int, int], int] = {}
    pos: list[tuple[float, float, float]] = []

    def vid(p):
        if p not in vert_id:
            vert_id[p] = len(pos)
            pos.append(p)
        return vert_id[p]

    faces = []
    cells = np.argwhere(occ)
    for x, y, z in cells:
        for axis in range(3):
            for s in (-1, 1):
                nb = [x, y, z]
                nb[axis] += s
                if occ[tuple(nb)]:
                    continue
                # square on the face of the cell, ordered ccw seen from outside
                u, w = [a for a in range(3) if a != axis]
                base = np.array([x, y, z]) - 1
                corner = base.copy()
                if s > 0:
                    corner[axis] += 1
                quad = []
                for du, dw in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = corner.copy()
                    p[u] += du
                    p[w] += dw
                    quad.append(tuple(int(t) for t in p))
                e1 = np.subtract(quad[1], quad[0])
                e2 = np.subtract(quad[2], quad[0])
                normal = np.zeros(3)
                normal[axis] = s
                if np.cross(e1, e2) @ normal < 0:
                    quad = quad[::-1]
                q = [vid(p) for p in quad]
                faces.append((q[0], q[1], q[2]))
                faces.append((q[0], q[2], q[3]))
    return SurfaceMesh(np.array(faces), positions=np.array(pos, float) / k, name=f"double_torus{k}")


PRESETS = {
    "sphere3": lambda: icosphere(3),
    "sphere4": lambda: icosphere(4),
    "sphere5": lambda: icosphere(5),
    "torus32": lambda: flat_torus(32),
    "torus64": lambda: flat_torus(64),
    "torusrev": lambda: torus_of_revolution(1.0, 0.5, 128, 64),
    "genus2": lambda: double_torus(2),
}


def preset(name: str) -> SurfaceMesh:
    """Build a named test surface.

    Besides the fixed names in ``PRESETS`` this accepts ``sphereN`` (icosphere
    level N), ``torusN`` (N x N flat torus) and ``torusrevNUxNV``.
    """
    if name in PRESETS:
        return PRESETS[name]()
    if name.startswith("torusrev"):
        nu, nv = (int(x) for x in name[len("torusrev"):].split("x"))
        return torus_of_revolution(1.0, 0.5, nu, nv)
    if name.startswith("sphere"):
        return icosphere(int(name[len("sphere"):]))
    if name.startswith("torus"):
        return flat_torus(int(name[len("torus"):]))
    if name.startswith("genus2_"):
        return double_torus(int(name[len("genus2_"):]))
    raise ValueError(f"unknown surface preset {name!r}")
