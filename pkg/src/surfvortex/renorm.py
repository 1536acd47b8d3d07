"""Renormalized energy of vortex configurations.

Two independent evaluations:

* the closed formula in Green's function, its diagonal regular part and the
  curvature potential, and
* the removed-ball limit of the canonical field's Dirichlet energy, with the
  ``pi log r sum d_k^2`` counterterm, extrapolated to r = 0.

The interaction term sums over unordered pairs of distinct vortices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .canonical import (
    FluxLattice,
    VortexConfiguration,
    canonical_field,
    coexact_current,
    flux_lattice,
    lattice_project,
)
from .connection import FrameField, build_frame, edge_face_energy
from .exterior import SolverError
from .geodesic import distance_field, injectivity_radius, weighted_ball_fraction
from .potential import GreenOperator, curvature_length, psi0
from .surface import SurfaceMesh, SurfacePoint
from .topology import harmonic_basis

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass
class RenormalizedEnergyReport:
    W_formula: float | None = None
    W_limit: float | None = None
    terms: dict = field(default_factory=dict)
    radii: list = field(default_factory=list)
    partial: list = field(default_factory=list)
    fit: dict = field(default_factory=dict)
    flux: list = field(default_factory=list)

    @property
    def relative_gap(self) -> float:
        return abs(self.W_formula - self.W_limit) / max(1.0, abs(self.W_formula))

    def to_json(self) -> dict:
        out = {
            "W_formula": self.W_formula,
            "W_limit": self.W_limit,
            "terms": self.terms,
            "radii": self.radii,
            "partial": self.partial,
            "fit": self.fit,
            "flux": self.flux,
        }
        if self.W_formula is not None and self.W_limit is not None:
            out["relative_gap"] = self.relative_gap
        return out


def _resolve_flux(mesh, config, frame, lattice=None):
    if mesh.genus == 0:
        return np.zeros(0), None
    lat = flux_lattice(mesh, config, frame) if lattice is None else lattice
    if config.flux is None:
        return lattice_project(np.zeros(lat.dim), lat).flux, lat
    if not lat.contains(config.flux):
        from .canonical import LatticeError

        raise LatticeError(f"flux violates the lattice condition (defect {lat.defect(config.flux):.3g})")
    return np.asarray(config.flux, float), lat


def W_terms(mesh: SurfaceMesh, config: VortexConfiguration, flux: np.ndarray, H=None) -> dict:
    """Per-term breakdown of the closed formula.  ``H`` optionally supplies H(a_k, a_k)."""
    go = GreenOperator.of(mesh)
    p0 = psi0(mesh)
    pts, d = config.points, config.indices
    inter = 0.0
    for l in range(len(pts)):
        for k in range(l + 1, len(pts)):
            inter += 4 * math.pi**2 * d[l] * d[k] * go.value(pts[l], pts[k])
    Hs = [go.H_diag(p) for p in pts] if H is None else list(H)
    self_ = sum(2 * math.pi**2 * dk * dk * hk for dk, hk in zip(d, Hs))
    curv_pts = sum(TWO_PI * dk * p0.at(mesh, p) for dk, p in zip(d, pts))
    return {
        "interaction": float(inter),
        "self": float(self_),
        "psi0_at_vortices": float(curv_pts),
        "flux": float(0.5 * np.dot(flux, flux)),
        "curvature_dirichlet": float(p0.dirichlet(mesh)),
        "H_diag": [float(h) for h in Hs],
    }


def _sum_terms(t: dict) -> float:
    return t["interaction"] + t["self"] + t["psi0_at_vortices"] + t["flux"] + t["curvature_dirichlet"]


def W_formula(mesh: SurfaceMesh, config: VortexConfiguration, frame: FrameField | None = None) -> RenormalizedEnergyReport:
    config.validate(mesh, distinct=True)
    frame = build_frame(mesh) if frame is None else frame
    phi, _ = _resolve_flux(mesh, config, frame)
    terms = W_terms(mesh, config, phi)
    return RenormalizedEnergyReport(W_formula=float(_sum_terms(terms)), terms=terms, flux=phi.tolist())


def default_radii(mesh: SurfaceMesh, config: VortexConfiguration) -> list[float]:
    h = mesh.h
    sep = min_separation(mesh, config.points) if config.n > 1 else math.inf
    inj = injectivity_radius(mesh)
    # balls must stay small against the curvature length, or the r^2 model breaks down
    rmax = min(16 * h, 0.45 * sep, 0.9 * inj, curvature_length(mesh))
    radii = [k * h for k in (3, 3.5, 4, 5, 6, 7, 8, 10, 12, 14, 16) if k * h <= rmax]
    return radii


def min_separation(mesh: SurfaceMesh, points) -> float:
    from .geodesic import geodesic_distance

    best = math.inf
    for i in range(len(points)):
        for k in range(i + 1, len(points)):
            best = min(best, geodesic_distance(mesh, points[i], points[k]))
    return best


def removed_ball_energy(mesh: SurfaceMesh, face_energy: np.ndarray, points, r: float) -> float:
    """Energy outside the union of geodesic balls of radius r."""
    inside = np.zeros(mesh.n_faces)
    for p in points:
        fld = distance_field(mesh, p, max_dist=r + 4 * mesh.h)
        inside += weighted_ball_fraction(fld, r)
    return float((face_energy * (1.0 - np.minimum(inside, 1.0))).sum())


def W_limit(
    mesh: SurfaceMesh,
    config: VortexConfiguration,
    radii=None,
    frame: FrameField | None = None,
) -> RenormalizedEnergyReport:
    """Removed-ball limit of (1/2) int |j*|^2 + pi log r sum d^2.

    The discrete current carries each vortex atom in the face containing
    ``a_k``, so the balls are centred at that face's centroid.  The partial
    values are fitted by ``W + c r^2 + e (h/r)^2`` (smooth remainder plus the
    discretization error next to the cores) and the fit is evaluated at r = 0.
    """
    config.validate(mesh, distinct=True)
    frame = build_frame(mesh) if frame is None else frame
    phi, _ = _resolve_flux(mesh, config, frame)
    cf = canonical_field(mesh, config.with_flux(phi) if mesh.genus else config, frame)
    e_face = edge_face_energy(mesh, cf.jstar)
    if config.n == 0:
        val = float(e_face.sum())
        return RenormalizedEnergyReport(W_limit=val, radii=[], partial=[val], fit={"exact": True}, flux=phi.tolist())
    radii = default_radii(mesh, config) if radii is None else sorted(radii)
    h = mesh.h
    if len(radii) < 3:
        raise SolverError("need at least three mesh-resolved radii below the separation and injectivity bounds")
    if radii[0] < 3 * h - 1e-12:
        raise SolverError(f"radius {radii[0]:.3g} is below 3h = {3 * h:.3g}")
    dsq = float(sum(dk * dk for dk in config.indices))
    centers = [SurfacePoint.centroid(p.face) for p in config.points]
    partial = [removed_ball_energy(mesh, e_face, centers, r) + math.pi * math.log(r) * dsq for r in radii]
    r = np.asarray(radii)
    A = np.stack([np.ones_like(r), r**2, (h / r) ** 2], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, np.asarray(partial), rcond=None)
    fitted = A @ coef
    return RenormalizedEnergyReport(
        W_limit=float(coef[0]),
        radii=[float(x) for x in radii],
        partial=[float(x) for x in partial],
        fit={
            "r2_coefficient": float(coef[1]),
            "core_coefficient": float(coef[2]),
            "max_residual": float(np.abs(fitted - partial).max()),
        },
        flux=phi.tolist(),
    )


def renormalized_energy(mesh: SurfaceMesh, config: VortexConfiguration, radii=None) -> RenormalizedEnergyReport:
    """Both evaluations side by side."""
    frame = build_frame(mesh)
    f = W_formula(mesh, config, frame)
    lim = W_limit(mesh, config.with_flux(np.asarray(f.flux)) if mesh.genus else config, radii, frame)
    f.W_limit = lim.W_limit
    f.radii, f.partial, f.fit = lim.radii, lim.partial, lim.fit
    return f


# ---------------------------------------------------------------------------
# minimization over positions


@dataclass
class MinimizationResult:
    config: VortexConfiguration
    W: float
    converged: bool
    collapse: bool
    log: list
    terms: dict

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "W": self.W,
            "converged": self.converged,
            "status": "collapse detected" if self.collapse else ("converged" if self.converged else "not converged"),
            "moves": self.log,
            "terms": self.terms,
        }


class _Objective:
    """W as a function of vortex faces (centroids), with per-face caches."""

    def __init__(self, mesh: SurfaceMesh, d, frame: FrameField):
        self.mesh = mesh
        self.d = list(d)
        self.frame = frame
        self.go = GreenOperator.of(mesh)
        self.p0 = psi0(mesh)
        self._H: dict[int, float] = {}
        self.basis = harmonic_basis(mesh) if mesh.genus else None

    def H(self, f: int) -> float:
        v = self._H.get(f)
        if v is None:
            v = self.go.H_diag(SurfacePoint.centroid(f))
            self._H[f] = v
        return v

    def lattice(self, faces) -> FluxLattice | None:
        if self.mesh.genus == 0:
            return None
        cfg = VortexConfiguration([SurfacePoint.centroid(f) for f in faces], self.d)
        beta = coexact_current(self.mesh, cfg, self.basis)
        return flux_lattice(self.mesh, cfg, self.frame, self.basis, beta)

    def value(self, faces, phi_prev) -> tuple[float, np.ndarray]:
        pts = [SurfacePoint.centroid(f) for f in faces]
        lat = self.lattice(faces)
        phi = np.zeros(0) if lat is None else lattice_project(phi_prev, lat).flux
        cfg = VortexConfiguration(pts, self.d, phi)
        t = W_terms(self.mesh, cfg, phi, H=[self.H(f) for f in faces])
        return _sum_terms(t), phi


def _vertex_ring_faces(mesh: SurfaceMesh, f: int) -> list[int]:
    out = set()
    for v in mesh.faces[f]:
        out.update(mesh.vertex_faces(int(v)))
    out.discard(f)
    return sorted(out)


def _too_close(mesh, faces, k, cand, min_sep) -> bool:
    p = SurfacePoint.centroid(cand)
    for i, f in enumerate(faces):
        if i == k:
            continue
        fld = distance_field(mesh, SurfacePoint.centroid(f), max_dist=min_sep + 2 * mesh.h)
        if fld.at(p) < min_sep:
            return True
    return False


def minimize_W(
    mesh: SurfaceMesh,
    d,
    start=None,
    seed: int | None = None,
    max_moves: int = 2000,
    min_sep_factor: float = 5.0,
    frame: FrameField | None = None,
) -> MinimizationResult:
    """Coordinate descent on vortex positions over face centroids.

    Each sweep tries, for every vortex, the faces sharing a vertex with its
    current face and takes the best improving move.  Moves closer than
    ``min_sep_factor * h`` to another vortex are refused; if the refused move
    was the only improvement the run stops with ``collapse`` set.  On
    surfaces with genus the flux is re-projected after every move to the
    lattice point nearest the previous flux.
    """
    from .potential import check_index_sum

    d = [int(x) for x in d]
    check_index_sum(mesh, d)
    frame = build_frame(mesh) if frame is None else frame
    obj = _Objective(mesh, d, frame)
    rng = np.random.default_rng(seed)
    min_sep = min_sep_factor * mesh.h
    if start is None:
        faces = []
        while len(faces) < len(d):
            f = int(rng.integers(mesh.n_faces))
            if not _too_close(mesh, faces + [f], len(faces), f, 2 * min_sep):
                faces.append(f)
    else:
        faces = [p.face if isinstance(p, SurfacePoint) else int(p) for p in start]
    phi = np.zeros(2 * mesh.genus)
    val, phi = obj.value(faces, phi)
    log = [{"move": 0, "faces": list(faces), "W": val}]
    if len(d) == 0:
        cfg = VortexConfiguration([], [], phi)
        return MinimizationResult(cfg, val, True, False, log, W_terms(mesh, cfg, phi))
    converged = collapse = False
    for it in range(1, max_moves + 1):
        best = None
        blocked_better = False
        for k in range(len(faces)):
            for cand in _vertex_ring_faces(mesh, faces[k]):
                trial = list(faces)
                trial[k] = cand
                v, ph = obj.value(trial, phi)
                if v < val - 1e-12 and (best is None or v < best[0]):
                    if _too_close(mesh, faces, k, cand, min_sep):
                        blocked_better = True
                        continue
                    best = (v, trial, ph)
        if best is None:
            converged = not blocked_better
            collapse = blocked_better
            break
        val, faces, phi = best
        log.append({"move": it, "faces": list(faces), "W": val})
    cfg = VortexConfiguration([SurfacePoint.centroid(f) for f in faces], d, phi)
    if collapse:
        logger.info("minimize_W: collapse detected at W = %.6g", val)
    return MinimizationResult(cfg, val, converged, collapse, log, W_terms(mesh, cfg, phi, [obj.H(f) for f in faces]))
