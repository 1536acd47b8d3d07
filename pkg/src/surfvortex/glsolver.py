"""Minimization of the discrete Ginzburg-Landau energy and the energy-expansion experiment.

The energy of a vertex field ``z`` with frame connection ``A`` is

    E_eps(z) = (1/2) sum_e w_e |z_b exp(-i A_e) - z_a|^2 + (1 / 4 eps^2) sum_v area_v F(|z_v|^2)

with cotan weights ``w``.  It is minimized over the real and imaginary parts of
``z`` by L-BFGS with the analytic gradient.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp

from .canonical import (
    VortexConfiguration,
    VorticityMeasure,
    canonical_field,
    flux,
    lattice_project,
    localize,
    vorticity,
    vorticity_distance,
)
from .connection import FrameField, TangentVectorField, build_frame, transport_operator
from .exterior import cotan_weights
from .geodesic import distance_field, injectivity_radius
from .potential import check_index_sum
from .profile import DEFAULT_F, PotentialF, gamma_F, radial_grid, solve_profile
from .renorm import W_terms, _sum_terms, min_separation
from .surface import SurfaceMesh
from .topology import harmonic_basis

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

# eps must be at least this many mesh sizes
DEFAULT_MIN_EPS_FACTOR = 1.0

LIMINF_TOL = 0.5

EXPANSION_NOTE = (
    "The eps -> 0 limit is out of reach at this mesh resolution; "
    "the decrease of |D(eps)| along the sweep is reported in its place."
)


class ResolutionError(ValueError):
    """eps is too small for the mesh to resolve vortex cores."""


class GLSolverError(RuntimeError):
    """The minimizer stopped without reaching stationarity; ``state`` holds the last iterate."""

    def __init__(self, msg: str, state: "SolverState"):
        super().__init__(msg)
        self.state = state


def check_resolution(mesh: SurfaceMesh, eps: float, min_eps_factor: float = DEFAULT_MIN_EPS_FACTOR) -> None:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps < min_eps_factor * mesh.h:
        raise ResolutionError(f"eps = {eps:g} is below {min_eps_factor:g} h = {min_eps_factor * mesh.h:.4g}")


class GLEnergy:
    """Energy and gradient of ``E_eps`` in the stacked real variables ``[Re z, Im z]``."""

    def __init__(self, frame: FrameField, eps: float, F: PotentialF = DEFAULT_F):
        self.frame, self.eps, self.F = frame, eps, F
        mesh = frame.mesh
        D = transport_operator(frame)
        self.M = (D.conj().T @ sp.diags(cotan_weights(mesh)) @ D).tocsr()
        self.area = mesh.vertex_area
        self.n = mesh.n_vertices
        self.c = 1.0 / (4.0 * eps * eps)

    def split(self, x: np.ndarray) -> np.ndarray:
        return x[: self.n] + 1j * x[self.n :]

    @staticmethod
    def stack(z: np.ndarray) -> np.ndarray:
        return np.concatenate([z.real, z.imag])

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        z = self.split(x)
        Mz = self.M @ z
        s = z.real**2 + z.imag**2
        E = 0.5 * float(np.real(np.vdot(z, Mz))) + self.c * float(self.area @ self.F.value(s))
        gp = 2.0 * self.c * self.area * self.F.first(s)
        return E, np.concatenate([Mz.real + gp * z.real, Mz.imag + gp * z.imag])

    def energy(self, z: np.ndarray) -> float:
        return self(self.stack(np.asarray(z, dtype=complex)))[0]


@dataclass
class SolverState:
    """Final iterate of a minimization with its energy history."""

    field: TangentVectorField
    eps: float
    energy_history: list
    grad_norm: float
    iterations: int
    evaluations: int
    seed: int | None
    converged: bool
    message: str

    @property
    def energy(self) -> float:
        return self.energy_history[-1]

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "seed": self.seed,
            "converged": self.converged,
            "message": self.message,
        }


def random_field(frame: FrameField, seed: int | None) -> TangentVectorField:
    """Unit field with independent uniformly distributed phases."""
    rng = np.random.default_rng(seed)
    return TangentVectorField(frame, np.exp(1j * rng.uniform(-np.pi, np.pi, frame.mesh.n_vertices)))


def minimize_E(
    mesh: SurfaceMesh,
    eps: float,
    F: PotentialF = DEFAULT_F,
    init: TangentVectorField | int | None = None,
    frame: FrameField | None = None,
    gtol: float = 1e-6,
    max_iter: int = 50000,
    min_eps_factor: float = DEFAULT_MIN_EPS_FACTOR,
) -> SolverState:
    """L-BFGS minimization of E_eps from a field or from a seeded random unit field.

    Converged means ``|grad|_2 <= gtol (1 + |E|)``; otherwise GLSolverError is
    raised carrying the last state.
    """
    check_resolution(mesh, eps, min_eps_factor)
    if isinstance(init, TangentVectorField):
        frame = init.frame if frame is None else frame
        seed = None
        if init.frame is not frame:
            raise ValueError("initial field must use the solver frame")
        z0 = init.z
    else:
        frame = build_frame(mesh) if frame is None else frame
        seed = init
        z0 = random_field(frame, seed).z
    obj = GLEnergy(frame, eps, F)
    x0 = obj.stack(z0)
    E0, g0 = obj(x0)
    history = [E0]
    bound = gtol * (1.0 + abs(E0))
    if np.linalg.norm(g0) <= bound:
        state = SolverState(TangentVectorField(frame, z0.copy()), eps, history, float(np.linalg.norm(g0)), 0, 1, seed, True, "initial field is stationary")
        return state

    def record(xk):
        history.append(obj(xk)[0])

    res = so.minimize(
        obj,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": max_iter, "maxfun": 2 * max_iter, "maxcor": 20, "ftol": 1e-16, "gtol": 1e-10},
    )
    E, g = obj(res.x)
    if not history or history[-1] != E:
        history.append(E)
    gn = float(np.linalg.norm(g))
    ok = gn <= gtol * (1.0 + abs(E))
    state = SolverState(
        TangentVectorField(frame, obj.split(res.x)), eps, [float(e) for e in history], gn, int(res.nit), int(res.nfev), seed, ok, str(res.message)
    )
    if not ok:
        raise GLSolverError(f"no stationarity at eps = {eps:g}: |grad| = {gn:.3g} ({res.message})", state)
    return state


def detect_vortices(state_or_field, threshold: float = np.pi / 2) -> VorticityMeasure:
    """Vortex atoms from the quantized vorticity (every face value is a multiple of 2 pi)."""
    u = state_or_field.field if isinstance(state_or_field, SolverState) else state_or_field
    return localize(u.mesh, vorticity(u.mesh, u, quantized=True), threshold=threshold)


def recovery_radius(mesh: SurfaceMesh, config: VortexConfiguration, eps: float, K: float = 8.0) -> float:
    """Core radius max(5h, 2 eps K), capped at 0.45 times the separation and the injectivity radius."""
    rho = max(5 * mesh.h, 2 * eps * K)
    cap = 0.45 * injectivity_radius(mesh)
    if config.n > 1:
        cap = min(cap, 0.45 * min_separation(mesh, config.points))
    return min(rho, cap)


def recovery_sequence(
    mesh: SurfaceMesh,
    config: VortexConfiguration,
    eps: float,
    F: PotentialF = DEFAULT_F,
    frame: FrameField | None = None,
    K: float = 8.0,
    min_eps_factor: float = DEFAULT_MIN_EPS_FACTOR,
) -> TangentVectorField:
    """Canonical field outside the cores, radial profile modulus inside.

    Inside ``B_rho(a_k)`` the modulus is the minimizer of the radial problem
    on the disk of radius rho with parameter eps, evaluated at the geodesic
    distance to ``a_k``; it equals 1 on the ball boundary, so the field is
    continuous.
    """
    check_resolution(mesh, eps, min_eps_factor)
    if any(abs(d) != 1 for d in config.indices):
        raise ValueError("recovery fields need indices +-1")
    cf = canonical_field(mesh, config, frame)
    u = cf.reconstruct()
    if config.n == 0:
        return u
    rho = recovery_radius(mesh, config, eps, K)
    if rho <= eps:
        raise ResolutionError(f"core radius {rho:.3g} does not exceed eps = {eps:g}")
    prof = solve_profile(rho * radial_grid(eps / rho), eps, F)
    mod = np.ones(mesh.n_vertices)
    for p in config.points:
        dist = distance_field(mesh, p, max_dist=rho + 2 * mesh.h).values
        inside = dist < rho
        mod[inside] = np.minimum(mod[inside], prof.at(dist[inside]))
    return TangentVectorField(u.frame, u.z * mod)


@dataclass
class ExpansionRecord:
    """Sweep results: one row per eps plus the fitted compactness bound."""

    rows: list = field(default_factory=list)
    gamma_F: float = float("nan")
    N: float = float("nan")
    C: float = float("nan")
    defect_decreasing: bool = False
    liminf_ok: bool = False
    note: str = EXPANSION_NOTE

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "gamma_F": self.gamma_F,
            "bound_fit": {"N": self.N, "C": self.C},
            "defect_decreasing": self.defect_decreasing,
            "liminf_ok": self.liminf_ok,
            "note": self.note,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["eps", "E", "E_minus_n_pi_log", "n", "indices", "W", "defect", "flux", "vorticity_distance"])
        for r in self.rows:
            w.writerow(
                [
                    repr(r["eps"]),
                    repr(r["E"]),
                    repr(r["E_minus_n_pi_log"]),
                    r["n"],
                    " ".join(str(d) for d in r["indices"]),
                    repr(r["W"]),
                    repr(r["defect"]),
                    " ".join(repr(x) for x in r["flux"]),
                    "" if r["vorticity_distance"] is None else repr(r["vorticity_distance"]),
                ]
            )
        return buf.getvalue()


def limit_energy(mesh: SurfaceMesh, vortices: VorticityMeasure, u: TangentVectorField, frame: FrameField):
    """W(a, d, Phi) at detected vortices, with the measured flux projected to the lattice."""
    from .canonical import flux_lattice

    config = VortexConfiguration(list(vortices.points), list(vortices.indices))
    phi_meas = np.zeros(0)
    phi = np.zeros(0)
    if mesh.genus:
        basis = harmonic_basis(mesh)
        phi_meas = flux(mesh, u, basis)
        lat = flux_lattice(mesh, config, frame, basis)
        phi = lattice_project(phi_meas, lat).flux
    terms = W_terms(mesh, config.with_flux(phi) if mesh.genus else config, phi)
    return _sum_terms(terms), terms, phi_meas, phi


def expansion_experiment(
    mesh: SurfaceMesh,
    eps_list,
    seeds=(0,),
    F: PotentialF = DEFAULT_F,
    frame: FrameField | None = None,
    continuation: bool = True,
    gamma: float | None = None,
    measure_distance: bool = False,
    min_eps_factor: float = DEFAULT_MIN_EPS_FACTOR,
    init: TangentVectorField | None = None,
) -> ExpansionRecord:
    """Minimize E_eps over a decreasing eps sweep and compare with W + n gamma_F.

    Each eps keeps the lowest-energy run over ``seeds``; with ``continuation``
    the minimizer at the previous eps is one more starting point.  The defect
    is ``D(eps) = E - n pi |log eps| - W - n gamma_F``.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    for e in eps_list:
        check_resolution(mesh, e, min_eps_factor)
    frame = build_frame(mesh) if frame is None else frame
    gamma = gamma_F(F).value if gamma is None else float(gamma)
    rec = ExpansionRecord(gamma_F=gamma)
    prev = init
    for eps in eps_list:
        starts = list(seeds) if prev is None or not continuation else [prev] + list(seeds)
        best = failure = None
        for s in starts:
            try:
                st = minimize_E(mesh, eps, F, init=s, frame=frame, min_eps_factor=min_eps_factor)
            except GLSolverError as exc:
                log.warning("eps %g: %s", eps, exc)
                failure = exc
                continue
            if best is None or st.energy < best.energy:
                best = st
        if best is None:
            raise GLSolverError(f"no converged run at eps = {eps:g}", failure.state)
        prev = best.field
        vm = detect_vortices(best)
        n = len(vm.indices)
        check_index_sum(mesh, vm.indices)
        W, terms, phi_meas, phi = limit_energy(mesh, vm, best.field, frame)
        core = n * math.pi * abs(math.log(eps))
        dist = None
        if measure_distance and n:
            dist = vorticity_distance(mesh, vorticity(mesh, best.field), vm)
        rec.rows.append(
            {
                "eps": eps,
                "E": best.energy,
                "E_minus_n_pi_log": best.energy - core,
                "n": n,
                "indices": [int(d) for d in vm.indices],
                "points": [p.to_json() for p in vm.points],
                "W": W,
                "W_terms": terms,
                "defect": best.energy - core - W - n * gamma,
                "liminf_margin": best.energy - core - (W + n * gamma),
                "flux": [float(x) for x in phi_meas],
                "flux_projected": [float(x) for x in phi],
                "vorticity_distance": dist,
                "solver": best.to_json(),
            }
        )
        log.info("eps %g: E %.6f n %d W %.6f D %.6f", eps, best.energy, n, W, rec.rows[-1]["defect"])
    D = [abs(r["defect"]) for r in rec.rows]
    rec.defect_decreasing = all(b <= a for a, b in zip(D, D[1:]))
    rec.liminf_ok = all(r["liminf_margin"] >= -LIMINF_TOL for r in rec.rows)
    if len(rec.rows) >= 2:
        x = np.array([math.pi * abs(math.log(r["eps"])) for r in rec.rows])
        y = np.array([r["E"] for r in rec.rows])
        (rec.N, rec.C), *_ = np.linalg.lstsq(np.stack([x, np.ones_like(x)], 1), y, rcond=None)
        rec.N, rec.C = float(rec.N), float(rec.C)
    return rec
