from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from conftest import random_point
from surfvortex.exterior import SolverError, laplacian0
from surfvortex.geodesic import distance_field
from surfvortex.meshgen import flat_torus_coords, icosphere
from surfvortex.potential import (
    GreenOperator,
    PoincareHopfError,
    diagonal_radii,
    green,
    psi,
    psi0,
    psi_decomposition_defect,
)
from surfvortex.surface import SurfacePoint

# unit sphere: G(x, y) = -(1/2pi)(log|x - y| - log 2 + 1/2), hence H(y, y) below
SPHERE_H = (math.log(2.0) - 0.5) / (2 * math.pi)
# unit square flat torus: H(y, y) = -(1/2pi) log(Gamma(1/4)^2 / (2 sqrt(pi)))
TORUS_H = -math.log(gamma_fn(0.25) ** 2 / (2 * math.sqrt(math.pi))) / (2 * math.pi)
# fixed ring radii resolved on icosphere levels 3 to 5
SPHERE_RADII = np.linspace(0.34, 0.68, 6)


def _antipodes(mesh):
    z = mesh.positions[:, 2]
    return int(np.argmax(z)), int(np.argmin(z))


# ---------------------------------------------------------------- Green's function


def test_green_symmetry_and_zero_mean(sphere4, rng):
    go = GreenOperator.of(sphere4)
    worst = 0.0
    for _ in range(50):
        x, y = random_point(sphere4, rng), random_point(sphere4, rng)
        worst = max(worst, abs(go.value(x, y) - go.value(y, x)))
    assert worst <= 1e-8
    for _ in range(5):
        g = go.column(random_point(sphere4, rng))
        assert abs(sphere4.vertex_area @ g) <= 1e-10


def test_green_symmetry_genus2(genus2, rng):
    go = GreenOperator.of(genus2)
    for _ in range(10):
        x, y = random_point(genus2, rng), random_point(genus2, rng)
        assert abs(go.value(x, y) - go.value(y, x)) <= 1e-8


def test_antipodal_green_matches_dense_oracle(sphere4):
    top, bot = _antipodes(sphere4)
    y = SurfacePoint.at_vertex(sphere4, top)
    # dense oracle: pin vertex 0, solve, then remove the area-weighted mean
    L = laplacian0(sphere4).toarray()
    rhs = -sphere4.vertex_area / sphere4.total_area
    rhs[top] += 1.0
    g = np.zeros(sphere4.n_vertices)
    g[1:] = np.linalg.solve(L[1:, 1:], rhs[1:])
    g -= (sphere4.vertex_area @ g) / sphere4.total_area
    val = GreenOperator.of(sphere4).value(SurfacePoint.at_vertex(sphere4, bot), y)
    assert abs(val - g[bot]) <= 1e-6
    assert abs(val + 1 / (4 * math.pi)) <= 1e-3
    assert np.abs(green(sphere4, y) - g).max() <= 1e-6


@pytest.mark.parametrize("name", ["sphere4", "sphere5", "torus64", "torusrev"])
def test_log_slope(name, request, rng):
    mesh = request.getfixturevalue(name)
    slope = GreenOperator.of(mesh).log_slope(random_point(mesh, rng))
    assert abs(slope - 1.0) <= 0.05


def test_green_csv(sphere3):
    text = GreenOperator.of(sphere3).to_csv(SurfacePoint.centroid(0))
    rows = text.splitlines()
    assert rows[0] == "vertex,G" and len(rows) == sphere3.n_vertices + 1


# ---------------------------------------------------------------- regular part


def test_sphere_diagonal_regular_part_constant(sphere4, rng):
    go = GreenOperator.of(sphere4)
    vals = np.array([go.H_diag(random_point(sphere4, rng)) for _ in range(10)])
    assert (vals.max() - vals.min()) <= 0.02 * abs(vals.mean())
    assert abs(vals.mean() - SPHERE_H) <= 0.02 * SPHERE_H


def test_flat_torus_translation_invariance(torus64, rng):
    go = GreenOperator.of(torus64)
    vals = np.array([go.H_diag(random_point(torus64, rng)) for _ in range(6)])
    assert vals.max() - vals.min() <= 1e-3
    assert abs(vals.mean() - TORUS_H) <= 1e-3


def test_flat_torus_translation_of_green(torus32):
    """Shifting both arguments by a lattice translation leaves G unchanged."""
    n = 32
    xy = np.rint(flat_torus_coords(torus32, n) * n).astype(int)
    vid = {(i % n, j % n): v for v, (i, j) in enumerate(xy.tolist())}
    go = GreenOperator.of(torus32)
    g0 = go.column(SurfacePoint.at_vertex(torus32, vid[(0, 0)]))
    g1 = go.column(SurfacePoint.at_vertex(torus32, vid[(5, 11)]))
    shifted = np.array([g0[vid[((i - 5) % n, (j - 11) % n)]] for i, j in xy.tolist()])
    assert np.abs(shifted - g1).max() <= 1e-10


def test_diagonal_refinement_is_cauchy():
    x = np.array([0.2, 0.5, 0.8])
    values = []
    for level in (3, 4, 5):
        m = icosphere(level)
        values.append(GreenOperator.of(m).diagonal_regular_part(m.locate(x), SPHERE_RADII).value)
    inc = np.abs(np.diff(values))
    assert inc[1] < inc[0]
    assert abs(values[-1] - SPHERE_H) <= 1e-4


def test_regular_part_continuous_near_source(sphere5):
    y = sphere5.locate([0.2, 0.5, 0.8])
    go = GreenOperator.of(sphere5)
    reg = go.regular_part(y)
    dist = distance_field(sphere5, y).values
    near = dist < 4 * sphere5.h
    assert np.abs(reg[near] - go.H_diag(y)).max() <= 0.5 * sphere5.h


def test_unresolved_radii_rejected(sphere4):
    y = SurfacePoint.centroid(0)
    with pytest.raises(SolverError, match="need r >= 2h"):
        GreenOperator.of(sphere4).diagonal_regular_part(y, [sphere4.h, 4 * sphere4.h, 8 * sphere4.h])


def test_too_coarse_mesh_rejected(sphere3):
    with pytest.raises(SolverError, match="too coarse"):
        diagonal_radii(sphere3)


# ---------------------------------------------------------------- potentials


def test_flat_torus_psi0_vanishes(torus32):
    cp = psi0(torus32)
    assert np.all(cp.values == 0.0) and cp.kappa_bar == 0.0


@pytest.mark.parametrize("name", ["sphere4", "torusrev", "genus2"])
def test_psi0_residual_and_mean(name, request):
    mesh = request.getfixturevalue(name)
    cp = psi0(mesh)
    assert cp.residual <= 1e-9
    assert abs(mesh.vertex_area @ cp.values) <= 1e-10
    assert abs(cp.kappa_bar - 2 * math.pi * mesh.euler_characteristic / mesh.total_area) <= 1e-12


@pytest.mark.xfail(strict=True, reason="discrete curvature is not uniform on an icosphere; psi0 is O(h^2) only")
def test_sphere_psi0_vanishes_to_1e9(sphere5):
    assert np.abs(psi0(sphere5).values).max() <= 1e-9


def test_sphere_psi0_converges_to_zero():
    peaks = [np.abs(psi0(icosphere(level)).values).max() for level in (3, 4, 5)]
    assert peaks[0] / peaks[1] >= 2.5 and peaks[1] / peaks[2] >= 2.5
    assert peaks[2] <= 1e-4


def test_sphere_antipodal_psi_decomposition(sphere4):
    top, bot = _antipodes(sphere4)
    a = [SurfacePoint.at_vertex(sphere4, top), SurfacePoint.at_vertex(sphere4, bot)]
    vp = psi(sphere4, a, [1, 1])
    assert vp.residual <= 1e-9
    assert psi_decomposition_defect(sphere4, vp) <= 1e-8
    go = GreenOperator.of(sphere4)
    direct = 2 * math.pi * (go.column(a[0]) + go.column(a[1])) + psi0(sphere4).values
    assert np.abs(vp.two_form - direct * sphere4.vertex_area).max() <= 1e-8 * sphere4.vertex_area.max()


@pytest.mark.parametrize("name,d", [("torusrev", [1, -1]), ("genus2", [-1, -1]), ("genus2", [1, -2, -1])])
def test_psi_decomposition_general(name, d, request, rng):
    mesh = request.getfixturevalue(name)
    a = [random_point(mesh, rng) for _ in d]
    vp = psi(mesh, a, d)
    assert vp.residual <= 1e-9
    assert abs(vp.two_form.sum()) <= 1e-9
    assert psi_decomposition_defect(mesh, vp) <= 1e-8


def test_poincare_hopf_violation(sphere3):
    with pytest.raises(PoincareHopfError, match="Poincare-Hopf violation"):
        psi(sphere3, [SurfacePoint.centroid(0)], [1])
    with pytest.raises(ValueError):
        psi(sphere3, [SurfacePoint.centroid(0)], [1, 1])
