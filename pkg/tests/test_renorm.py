from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from surfvortex.canonical import VortexConfiguration, flux_lattice
from surfvortex.exterior import SolverError
from surfvortex.geodesic import geodesic_distance
from surfvortex.meshgen import torus_of_revolution
from surfvortex.potential import GreenOperator, PoincareHopfError
from surfvortex.renorm import (
    W_formula,
    W_limit,
    W_terms,
    default_radii,
    min_separation,
    minimize_W,
    renormalized_energy,
)
from surfvortex.surface import SurfacePoint


def sphere_W(p, q):
    """Unit sphere, d = (1, 1): W = pi (3 log 2 - 2 - log(1 - cos theta))."""
    c = float(np.clip(p @ q / (np.linalg.norm(p) * np.linalg.norm(q)), -1.0, 1.0))
    return math.pi * (3 * math.log(2.0) - 2.0 - math.log(1.0 - c))


def _centroid_at(mesh, x):
    return SurfacePoint.centroid(mesh.locate(x).face)


@pytest.fixture(scope="module")
def antipodal4(sphere4):
    return VortexConfiguration([_centroid_at(sphere4, [0, 0, 1.0]), _centroid_at(sphere4, [0, 0, -1.0])], [1, 1])


# ---------------------------------------------------------------- formula


def test_sphere_formula_terms(sphere4, antipodal4):
    rep = W_formula(sphere4, antipodal4)
    t = rep.terms
    go = GreenOperator.of(sphere4)
    a1, a2 = antipodal4.points
    assert t["flux"] == 0.0 and rep.flux == []
    assert abs(t["interaction"] - 4 * math.pi**2 * go.value(a1, a2)) <= 1e-12
    assert abs(t["self"] - 2 * math.pi**2 * sum(t["H_diag"])) <= 1e-12
    # psi0 vanishes on the round sphere up to discretization
    assert abs(t["psi0_at_vortices"]) <= 1e-3 and t["curvature_dirichlet"] <= 1e-5
    total = t["interaction"] + t["self"] + t["psi0_at_vortices"] + t["flux"] + t["curvature_dirichlet"]
    assert abs(rep.W_formula - total) <= 1e-12
    exact = sphere_W(*(sphere4.point_position(q) for q in antipodal4.points))
    assert abs(rep.W_formula - exact) <= 0.01


def test_sphere_formula_matches_closed_form(sphere4, rng):
    checked = 0
    while checked < 5:
        f = rng.integers(sphere4.n_faces, size=2)
        pts = [SurfacePoint.centroid(int(x)) for x in f]
        P = [sphere4.point_position(p) for p in pts]
        if min_separation(sphere4, pts) < 0.5:
            continue
        exact = sphere_W(*P)
        assert abs(W_formula(sphere4, VortexConfiguration(pts, [1, 1])).W_formula - exact) <= 0.02 * max(1.0, abs(exact))
        checked += 1


def test_sphere_W_depends_only_on_distance(sphere5):
    x = np.array([0.0, 0.0, 1.0])
    y = np.array([math.sin(2.0), 0.0, math.cos(2.0)])
    vals = []
    for s in range(5):
        R = Rotation.random(random_state=s).as_matrix()
        cfg = VortexConfiguration([sphere5.locate(R @ x), sphere5.locate(R @ y)], [1, 1])
        vals.append(W_formula(sphere5, cfg).W_formula)
    vals = np.array(vals)
    assert np.ptp(vals) <= 0.01 * max(1.0, abs(vals.mean()))


def test_flat_torus_trivial_W(torus16):
    cfg = VortexConfiguration([], [])
    assert W_formula(torus16, cfg).W_formula == 0.0
    lim = W_limit(torus16, cfg)
    assert lim.W_limit == 0.0 and lim.partial == [0.0]


def test_flat_torus_flux_only(torus16):
    lat = flux_lattice(torus16, VortexConfiguration([], []))
    phi = lat.shortest_vector()
    cfg = VortexConfiguration([], [], flux=phi)
    rep = renormalized_energy(torus16, cfg)
    half = 0.5 * float(phi @ phi)
    assert abs(rep.W_formula - half) <= 1e-12
    assert abs(rep.W_limit - half) <= 1e-9 * half


def test_flux_term_removal_is_exact(torusrev_coarse, rng):
    mesh = torusrev_coarse
    cfg = VortexConfiguration([_centroid_at(mesh, [1.5, 0, 0]), _centroid_at(mesh, [-1.5, 0, 0])], [1, -1])
    lat = flux_lattice(mesh, cfg)
    phi = lat.point([1, 0])
    with_flux = W_terms(mesh, cfg, phi)
    without = W_terms(mesh, cfg, np.zeros_like(phi))
    assert without["flux"] == 0.0
    for key in ("interaction", "self", "psi0_at_vortices", "curvature_dirichlet"):
        assert with_flux[key] == without[key]
    assert with_flux["flux"] == 0.5 * float(phi @ phi)


def test_formula_rejects_bad_configurations(sphere3):
    p = SurfacePoint.centroid(4)
    with pytest.raises(ValueError, match="coincident"):
        W_formula(sphere3, VortexConfiguration([p, p], [1, 1]))
    with pytest.raises(PoincareHopfError):
        W_formula(sphere3, VortexConfiguration([p], [1]))


# ---------------------------------------------------------------- limit


def test_limit_partials_converge(sphere4, antipodal4):
    rep = renormalized_energy(sphere4, antipodal4)
    r = np.asarray(rep.radii)
    p = np.asarray(rep.partial)
    assert np.all(np.diff(p) > 0)  # monotone in r
    # increments per unit radius shrink as r decreases (the innermost ring is core-dominated)
    slopes = np.diff(p) / np.diff(r)
    mid = 0.5 * (r[1:] + r[:-1])
    assert np.polyfit(mid, slopes, 1)[0] > 0
    assert slopes[:3].mean() < 0.75 * slopes[-3:].mean()
    assert rep.relative_gap <= 0.05
    assert rep.radii == default_radii(sphere4, antipodal4)


def test_limit_rejects_unresolved_radii(sphere4, antipodal4):
    h = sphere4.h
    with pytest.raises(SolverError, match="below 3h"):
        W_limit(sphere4, antipodal4, radii=[h, 4 * h, 6 * h])
    with pytest.raises(SolverError, match="three"):
        W_limit(sphere4, antipodal4, radii=[3 * h, 4 * h])


def test_report_json(sphere4, antipodal4):
    out = renormalized_energy(sphere4, antipodal4).to_json()
    assert set(out) >= {"W_formula", "W_limit", "terms", "radii", "partial", "fit", "relative_gap"}


# ---------------------------------------------------------------- minimization


def test_sphere_minimizer_moves_apart(sphere4):
    res = minimize_W(sphere4, (1, 1), seed=1)
    a, b = res.config.points
    assert res.converged and not res.collapse
    assert geodesic_distance(sphere4, a, b) >= math.pi - 0.1
    ws = [entry["W"] for entry in res.log]
    assert all(w1 < w0 for w0, w1 in zip(ws, ws[1:]))
    assert abs(res.W - math.pi * (2 * math.log(2.0) - 2.0)) <= 0.05


def test_dipole_collapse_detected():
    mesh = torus_of_revolution(1.0, 0.5, 48, 24)
    res = minimize_W(mesh, (1, -1), seed=0)
    assert res.collapse and not res.converged
    assert res.to_json()["status"] == "collapse detected"
    a, b = res.config.points
    assert geodesic_distance(mesh, a, b) <= 7 * mesh.h


def test_no_vortices_trivial_minimum(torus16):
    res = minimize_W(torus16, (), seed=0)
    assert res.converged and res.W == 0.0
    assert np.all(res.config.flux == 0.0)


def test_minimizer_is_deterministic(sphere4):
    r1 = minimize_W(sphere4, (1, 1), seed=7, max_moves=3)
    r2 = minimize_W(sphere4, (1, 1), seed=7, max_moves=3)
    assert r1.log == r2.log
