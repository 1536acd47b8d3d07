"""Green's function, its regular part, and the curvature and vortex potentials.

``G(., y)`` solves ``L0 g = delta_y - vertex_area / Area`` with zero mean, where
``delta_y`` is split barycentrically over the face containing ``y``.  Written
as ``G(x, y) = (b_x - m/A)^T S (b_y - m/A)`` with a symmetric pseudo-inverse
``S``, it is symmetric up to rounding.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field

import numpy as np

from .exterior import ScalarPoissonSolver, SolverError, interpolate0, laplacian0, point_delta
from .geodesic import distance_field
from .surface import SurfaceMesh, SurfacePoint

TWO_PI = 2.0 * np.pi


class PoincareHopfError(ValueError):
    """Vortex indices do not add up to the Euler characteristic."""


def check_index_sum(mesh: SurfaceMesh, d) -> None:
    total = int(np.sum(d)) if len(d) else 0
    if total != mesh.euler_characteristic:
        raise PoincareHopfError(
            f"Poincare-Hopf violation: indices sum to {total}, Euler characteristic is {mesh.euler_characteristic}"
        )


def level_set_average(mesh: SurfaceMesh, dist: np.ndarray, values: np.ndarray, r: float) -> tuple[float, float]:
    """Length-weighted mean of a P1 function on the level set ``dist = r``, and the set's length."""
    F = mesh.faces
    D = dist[F]
    Vv = values[F]
    below = D < r
    cross = np.nonzero(below.any(axis=1) & ~below.all(axis=1))[0]
    total, length = 0.0, 0.0
    for f in cross.tolist():
        pts, vals = [], []
        for c in range(3):
            a, b = c, (c + 1) % 3
            if below[f, a] != below[f, b]:
                t = (r - D[f, a]) / (D[f, b] - D[f, a])
                X = mesh.face_layout[f]
                pts.append((1 - t) * X[a] + t * X[b])
                vals.append((1 - t) * Vv[f, a] + t * Vv[f, b])
        if len(pts) != 2:
            continue
        seg = float(np.linalg.norm(pts[1] - pts[0]))
        total += seg * 0.5 * (vals[0] + vals[1])
        length += seg
    if length == 0:
        raise SolverError(f"empty level set at radius {r:.3g}")
    return total / length, length


@dataclass
class DiagonalEstimate:
    """Richardson extrapolation of ring means of G + log(r)/2pi."""

    value: float
    radii: list
    ring_values: list
    increments: list


def curvature_length(mesh: SurfaceMesh) -> float:
    """1 / sqrt(max |K|) from vertex curvature densities (inf when flat)."""
    hit = mesh._cache.get("curv_len")
    if hit is None:
        dens = float((np.abs(mesh.angle_defect()) / mesh.vertex_area).max())
        hit = 1.0 / np.sqrt(dens) if dens > 1e-12 else np.inf
        mesh._cache["curv_len"] = hit
    return hit


def diagonal_radii(mesh: SurfaceMesh) -> list[float]:
    """Ring radii for the H(y, y) fit: 6h to 24h in steps of 2h.

    The outer radius is capped by 0.45 times the injectivity radius (the r^2
    term absorbs the leading curvature correction of ring means); when fewer than five rings survive, six rings from 4h
    to the cap are used instead.
    """
    from .geodesic import injectivity_radius

    h = mesh.h
    rmax = min(24 * h, 0.45 * injectivity_radius(mesh))
    radii = [k * h for k in range(6, 25, 2) if k * h <= rmax + 1e-12]
    if len(radii) < 5:
        if rmax < 5 * h:
            raise SolverError(f"mesh too coarse for the regular part: cap {rmax:.3g} < 5h")
        radii = list(np.linspace(4 * h, rmax, 6))
    return radii


class GreenOperator:
    """Green's function columns on a fixed mesh, cached per source point."""

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        self.solver = ScalarPoissonSolver.of(mesh)
        self._columns: dict = {}
        self._lock = threading.Lock()

    @classmethod
    def of(cls, mesh: SurfaceMesh) -> "GreenOperator":
        g = mesh._cache.get("green")
        if g is None:
            g = cls(mesh)
            mesh._cache["green"] = g
        return g

    def source(self, y: SurfacePoint) -> np.ndarray:
        return point_delta(self.mesh, y) - self.mesh.vertex_area / self.mesh.total_area

    def column(self, y: SurfacePoint) -> np.ndarray:
        """Vertex values of ``G(., y)``."""
        key = (y.face, y.bary)
        with self._lock:
            col = self._columns.get(key)
        if col is None:
            col = self.solver.solve(self.source(y))
            col.setflags(write=False)
            with self._lock:
                if len(self._columns) > 4096:
                    self._columns.clear()
                self._columns[key] = col
        return col

    def value(self, x: SurfacePoint, y: SurfacePoint) -> float:
        return interpolate0(self.mesh, self.column(y), x)

    def diagonal_regular_part(self, y: SurfacePoint, radii=None) -> DiagonalEstimate:
        """H(y, y) from ring means of ``G(., y) + log(r) / 2pi`` extrapolated to r = 0.

        The ring mean removes the linear part of the smooth remainder, so the
        leading smooth correction is quadratic in r.  The discrete point source
        adds an error decaying like (h/r)^2 whose coefficient depends on the
        local triangles, so rings close to the source are noisy.  The ring
        values (default: see ``diagonal_radii``) are least-squares fitted by
        ``H + c r^2 + e (h/r)^2``.
        """
        mesh = self.mesh
        h = mesh.h
        radii = diagonal_radii(mesh) if radii is None else list(radii)
        if min(radii) < 2 * h:
            raise SolverError("radius sequence is not resolved by the mesh (need r >= 2h)")
        field_ = distance_field(mesh, y, max_dist=max(radii) + 4 * h)
        dist = np.where(np.isfinite(field_.values), field_.values, 1e300)
        g = self.column(y)
        rings = [level_set_average(mesh, dist, g, r)[0] + np.log(r) / TWO_PI for r in radii]
        r = np.asarray(radii)
        # smooth remainder ~ r^2; discrete point-source error ~ (h/r)^2
        A = np.stack([np.ones_like(r), r**2, (h / r) ** 2], axis=1)
        coef, *_ = np.linalg.lstsq(A, np.asarray(rings), rcond=None)
        val = float(coef[0])
        inc = [float(b - a) for a, b in zip(rings, rings[1:])]
        return DiagonalEstimate(val, list(radii), [float(v) for v in rings], inc)

    def H_diag(self, y: SurfacePoint) -> float:
        return self.diagonal_regular_part(y).value

    def regular_part(self, y: SurfacePoint) -> np.ndarray:
        """Vertex values of ``H(., y)``: ``G + log(dist)/2pi`` with the diagonal value at the source.

        Vertices closer than one mesh size to ``y`` take the extrapolated
        ``H(y, y)`` (the discrete G is not logarithmic there).
        """
        mesh = self.mesh
        field_ = distance_field(mesh, y)
        dist = field_.values
        out = self.column(y) + np.log(np.maximum(dist, 1e-300)) / TWO_PI
        near = dist < mesh.h
        if near.any():
            out = out.copy()
            out[near] = self.H_diag(y)
        return out

    def log_slope(self, y: SurfacePoint, rmin=None, rmax=None) -> float:
        """Least-squares slope of G(x, y) against -(1/2pi) log dist over an annulus (3h to 10h)."""
        mesh = self.mesh
        rmin = 3 * mesh.h if rmin is None else rmin
        rmax = 10 * mesh.h if rmax is None else rmax
        dist = distance_field(mesh, y, max_dist=rmax + 2 * mesh.h).values
        sel = (dist >= rmin) & (dist <= rmax)
        x = -np.log(dist[sel]) / TWO_PI
        A = np.stack([x, np.ones_like(x)], axis=1)
        coef, *_ = np.linalg.lstsq(A, self.column(y)[sel], rcond=None)
        return float(coef[0])

    def to_csv(self, y: SurfacePoint) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["vertex", "G"])
        for v, val in enumerate(self.column(y)):
            w.writerow([v, repr(float(val))])
        return buf.getvalue()


def green(mesh: SurfaceMesh, y: SurfacePoint) -> np.ndarray:
    return GreenOperator.of(mesh).column(y)


def regular_part(mesh: SurfaceMesh, y: SurfacePoint) -> np.ndarray:
    return GreenOperator.of(mesh).regular_part(y)


@dataclass
class CurvaturePotential:
    """Mean-zero solution of -Lap psi0 = -kappa + kappa_bar (vertex values)."""

    values: np.ndarray
    kappa_bar: float
    residual: float

    def at(self, mesh: SurfaceMesh, p: SurfacePoint) -> float:
        return interpolate0(mesh, self.values, p)

    def dirichlet(self, mesh: SurfaceMesh) -> float:
        """(1/2) int |d psi0|^2."""
        return 0.5 * float(self.values @ (laplacian0(mesh) @ self.values))


def psi0(mesh: SurfaceMesh) -> CurvaturePotential:
    hit = mesh._cache.get("psi0")
    if hit is not None:
        return hit
    kbar = TWO_PI * mesh.euler_characteristic / mesh.total_area
    rhs = -mesh.angle_defect() + kbar * mesh.vertex_area
    rhs -= rhs.sum() * mesh.vertex_area / mesh.total_area  # rounding only
    vals = ScalarPoissonSolver.of(mesh).solve(rhs)
    res = float(np.abs(laplacian0(mesh) @ vals - rhs).max())
    cp = CurvaturePotential(vals, kbar, res)
    mesh._cache["psi0"] = cp
    return cp


@dataclass
class VortexPotential:
    """The 2-form psi(a, d), stored as integrated dual-cell values and as a density."""

    two_form: np.ndarray
    density: np.ndarray
    points: list
    indices: list
    residual: float = field(default=0.0)


def psi(mesh: SurfaceMesh, a, d) -> VortexPotential:
    """Mean-zero solution of -Lap psi = -kappa vol + 2 pi sum d_k delta_{a_k}."""
    d = [int(x) for x in d]
    if len(a) != len(d):
        raise ValueError("need one index per vortex point")
    check_index_sum(mesh, d)
    rhs = -mesh.angle_defect()
    for p, dk in zip(a, d):
        rhs = rhs + TWO_PI * dk * point_delta(mesh, p)
    rhs -= rhs.sum() * mesh.vertex_area / mesh.total_area
    dens = ScalarPoissonSolver.of(mesh).solve(rhs)
    res = float(np.abs(laplacian0(mesh) @ dens - rhs).max())
    return VortexPotential(dens * mesh.vertex_area, dens, list(a), d, res)


def psi_decomposition_defect(mesh: SurfaceMesh, vp: VortexPotential) -> float:
    """max |psi - (2 pi sum d_k G(., a_k) + psi0) vol| over vertices (as densities)."""
    go = GreenOperator.of(mesh)
    recon = psi0(mesh).values.copy()
    for p, dk in zip(vp.points, vp.indices):
        recon += TWO_PI * dk * go.column(p)
    return float(np.abs(recon - vp.density).max())
