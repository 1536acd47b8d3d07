from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_point
from surfvortex.canonical import (
    DegreeError,
    FluxLattice,
    LatticeError,
    LocalizationError,
    ReconstructionError,
    VortexConfiguration,
    VorticityMeasure,
    canonical_field,
    canonical_jstar,
    circular_difference,
    degree,
    flux,
    flux_lattice,
    lattice_project,
    localize,
    reconstruct_field,
    vorticity,
    vorticity_distance,
    zeta,
    zeta_continuity_probe,
)
from surfvortex.connection import TangentVectorField, build_frame, j_form, phase_increments
from surfvortex.geodesic import geodesic_distance
from surfvortex.meshgen import flat_torus, flat_torus_coords, icosphere
from surfvortex.potential import PoincareHopfError
from surfvortex.surface import SurfacePoint
from surfvortex.topology import harmonic_basis, homology_class, path_to_chain

TWO_PI = 2 * math.pi


def _cell(n, i, j):
    """Lower triangle of grid cell (i, j) on the n x n flat torus."""
    return SurfacePoint.centroid(2 * ((i % n) + n * (j % n)))


def _row(n, j):
    return [i + n * j for i in range(n)]


def _col(n, i):
    return [i + n * j for j in range(n)]


def _dipole(n, s, i0=None, j0=None):
    i0 = n // 4 if i0 is None else i0
    j0 = n // 4 if j0 is None else j0
    return VortexConfiguration([_cell(n, i0, j0), _cell(n, i0 + s, j0)], [1, -1])


def _square(n, i0, j0, w, hgt):
    """Counter-clockwise vertex loop around the box [i0, i0 + w] x [j0, j0 + hgt]."""
    pts = [(i0 + k, j0) for k in range(w)] + [(i0 + w, j0 + k) for k in range(hgt)]
    pts += [(i0 + w - k, j0 + hgt) for k in range(w)] + [(i0, j0 + hgt - k) for k in range(hgt)]
    return [i % n + n * (j % n) for i, j in pts]


@pytest.fixture(scope="module")
def sphere_canonical(sphere4):
    a = [sphere4.locate([0, 0, 1.0]), sphere4.locate([0, 0, -1.0])]
    return canonical_field(sphere4, VortexConfiguration(a, [1, 1]))


# ---------------------------------------------------------------- zeta


def test_sphere_zeta_is_empty(sphere3):
    cfg = VortexConfiguration([SurfacePoint.centroid(0), SurfacePoint.centroid(100)], [1, 1])
    assert zeta(sphere3, cfg).shape == (0,)


def test_torus_zeta_without_vortices(torus16):
    z = zeta(torus16, VortexConfiguration([], []))
    assert circular_difference(z, 0.0).max() <= 1e-12


def test_zeta_requires_index_sum(torus16):
    with pytest.raises(PoincareHopfError):
        zeta(torus16, VortexConfiguration([_cell(16, 2, 2)], [1]))


def test_zeta_loop_independence(torus16):
    n = 16
    hb = harmonic_basis(torus16)
    cb = hb.cycles
    frame = build_frame(torus16)
    cfg = VortexConfiguration([_cell(n, 5, 5), _cell(n, 10, 9)], [1, -1])
    ref = zeta(torus16, cfg, cb, frame, hb)
    rows = {tuple(homology_class(_row(n, j), cb, hb)) for j in range(n)}
    cols = {tuple(homology_class(_col(n, i), cb, hb)) for i in range(n)}
    assert len(rows) == len(cols) == 1
    row_first = homology_class(_row(n, 0), cb, hb)[0] != 0
    for k in (0, 2, 5, 7, 9, 12):
        loops = [_row(n, k), _col(n, k)] if row_first else [_col(n, k), _row(n, k)]
        assert circular_difference(zeta(torus16, cfg, cb, frame, hb, loops=loops), ref).max() <= 1e-3


def test_zeta_continuity_probe_merging_pair():
    """A +1/-1 pair merging along a row: zeta moves by 2 pi h per step and tends to zeta(empty)."""
    tables = {}
    for n in (16, 32, 64):
        mesh = flat_torus(n)
        path = [(s / n, _dipole(n, s)) for s in range(n // 4, 0, -1)]
        path.append((0.0, VortexConfiguration([], [])))
        rows = zeta_continuity_probe(mesh, path)
        steps = np.array([r["step"] for r in rows[1:]])
        assert np.abs(steps - TWO_PI / n).max() <= 1e-9
        t = np.array([r["t"] for r in rows[:-1]])
        z = np.unwrap(np.array([r["zeta"][0] for r in rows[:-1]]))
        slope, intercept = np.polyfit(t, z, 1)
        assert circular_difference(intercept, rows[-1]["zeta"][0]) <= 1e-2
        assert circular_difference(rows[-1]["zeta"], 0.0).max() <= 1e-12
        tables[n] = {r["t"]: np.array(r["zeta"]) for r in rows}
    # same physical configuration on refined meshes: Cauchy with zero increments
    for t in (0.25, 0.125, 0.0625):
        d1 = circular_difference(tables[16][t], tables[32][t]).max()
        d2 = circular_difference(tables[32][t], tables[64][t]).max()
        assert d1 <= 1e-9 and d2 <= 1e-9


def test_zeta_constant_path(torus16):
    cfg = _dipole(16, 3)
    rows = zeta_continuity_probe(torus16, [(k, cfg) for k in range(3)])
    assert rows[0]["step"] is None
    assert all(r["step"] <= 1e-12 for r in rows[1:])


# ---------------------------------------------------------------- lattice


def test_lattice_project_member_unchanged(torus16):
    lat = flux_lattice(torus16, _dipole(16, 3))
    phi = lat.point([2, -1])
    proj = lattice_project(phi, lat)
    assert np.array_equal(proj.flux, phi) and proj.residual == 0.0
    assert proj.label.tolist() == [2, -1]


def test_lattice_project_genus0(sphere3):
    lat = flux_lattice(sphere3, VortexConfiguration([SurfacePoint.centroid(0), SurfacePoint.centroid(9)], [1, 1]))
    proj = lattice_project(np.zeros(0), lat)
    assert proj.flux.shape == (0,) and proj.residual == 0.0


def test_flat_torus_lattice_is_scaled_integer_lattice(torus16):
    lat = flux_lattice(torus16, VortexConfiguration([], []))
    assert np.abs(lat.periods - np.eye(2)).max() <= 1e-6
    assert circular_difference(lat.zeta, 0.0).max() <= 1e-12
    rng = np.random.default_rng(8)
    for _ in range(20):
        raw = rng.normal(scale=10.0, size=2)
        proj = lattice_project(raw, lat)
        assert np.abs(proj.flux - TWO_PI * np.rint(raw / TWO_PI)).max() <= 1e-6
        assert proj.defect <= 1e-9
        assert abs(proj.residual - np.linalg.norm(proj.flux - raw)) <= 1e-12
        # no lattice neighbour is closer
        for g in lat.generators().T:
            for sgn in (1, -1):
                assert np.linalg.norm(proj.flux + sgn * g - raw) >= proj.residual - 1e-12


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    st.lists(st.floats(0, 6.3), min_size=2, max_size=2),
    st.lists(st.integers(-4, 4), min_size=2, max_size=2),
    st.lists(st.integers(-3, 3), min_size=2, max_size=2),
)
def test_lattice_membership_shift_invariance(entries, z, shift, wrap):
    alpha = np.eye(2) + 0.2 * np.reshape(entries, (2, 2))
    if abs(np.linalg.det(alpha)) < 0.1:
        return
    lat = FluxLattice(np.array(z), alpha)
    phi = lat.point([1, 0])
    shifted = phi + lat.generators() @ np.asarray(shift, float)
    assert lat.defect(shifted) <= 1e-9
    wrapped = FluxLattice(np.array(z) + TWO_PI * np.asarray(wrap, float), alpha)
    for p in (phi, shifted, phi + 0.3):
        assert abs(wrapped.defect(p) - lat.defect(p)) <= 1e-9


def test_lattice_violation_rejected(torus16):
    cfg = VortexConfiguration([], [], flux=[0.5, 0.0])
    with pytest.raises(LatticeError):
        canonical_field(torus16, cfg)


# ---------------------------------------------------------------- canonical field


def test_flat_torus_trivial_canonical(torus16):
    cf = canonical_field(torus16, VortexConfiguration([], [], flux=[0.0, 0.0]))
    assert np.abs(cf.jstar).max() <= 1e-12
    u = cf.reconstruct(phase=0.4)
    assert np.abs(u.z - np.exp(0.4j)).max() <= 1e-12


def test_generator_flux_winds_once(torus16):
    n = 16
    hb = harmonic_basis(torus16)
    lat = flux_lattice(torus16, VortexConfiguration([], []))
    phi = lat.point([1, 0])
    cf = canonical_field(torus16, VortexConfiguration([], [], flux=phi))
    assert np.abs(cf.jstar - hb.forms @ phi).max() <= 1e-12
    u = cf.reconstruct()
    assert np.abs(flux(torus16, u, hb) - phi).max() <= 1e-6
    inc = phase_increments(u)
    windings = [path_to_chain(torus16, loop) @ inc / TWO_PI for loop in hb.cycles.loops]
    assert np.allclose(windings, [1, 0], atol=1e-9)
    # closed form: the field is exp(2 pi i k.x) for an integer vector k
    xy = flat_torus_coords(torus16, n)
    k = np.array([round(path_to_chain(torus16, _row(n, 0)) @ inc / TWO_PI),
                  round(path_to_chain(torus16, _col(n, 0)) @ inc / TWO_PI)])
    assert abs(k).sum() == 1
    rel = u.z * np.exp(-TWO_PI * 1j * (xy @ k))
    assert np.abs(rel - rel[0]).max() <= 1e-9


def test_sphere_canonical_residuals(sphere_canonical):
    assert sphere_canonical.codifferential_residual() <= 1e-8
    assert sphere_canonical.curl_residual() <= 1e-9
    assert canonical_jstar(sphere_canonical.mesh, sphere_canonical.config).shape == (sphere_canonical.mesh.n_edges,)


@pytest.mark.parametrize("name,d", [("torusrev_coarse", [1, -1]), ("genus2", [-1, -1])])
def test_canonical_residuals_with_genus(name, d, request, rng):
    mesh = request.getfixturevalue(name)
    cfg = VortexConfiguration([random_point(mesh, rng) for _ in d], d)
    cf = canonical_field(mesh, cfg)
    assert cf.codifferential_residual() <= 1e-8
    assert cf.lattice.defect(cf.flux) <= 1e-6 * TWO_PI
    u = cf.reconstruct()
    mask = ~cf.core_mask()
    edges = mask[mesh.edges].all(axis=1)
    assert np.abs(j_form(u) - cf.jstar)[edges].max() <= 1e-6
    assert np.abs(np.abs(u.z) - 1).max() <= 1e-12


def test_reconstruction_unique_up_to_phase(sphere_canonical):
    u1 = sphere_canonical.reconstruct(root=0)
    u2 = sphere_canonical.reconstruct(root=500, phase=1.3)
    diff = np.angle(u1.z * np.conj(u2.z))
    spread = np.angle(np.exp(1j * (diff - diff[0])))
    assert np.std(spread) <= 1e-6


def test_sphere_canonical_is_rotation_field(sphere_canonical):
    m = sphere_canonical.mesh
    u = sphere_canonical.reconstruct()
    e_phi = np.cross([0.0, 0.0, 1.0], m.positions)
    zt = sphere_canonical.frame.ambient_coefficients(e_phi)
    zt = zt / np.maximum(np.abs(zt), 1e-300)
    rel = np.angle(u.z * np.conj(zt))
    away = ~sphere_canonical.core_mask(5 * m.h)
    rel = np.angle(np.exp(1j * (rel - np.angle(np.mean(np.exp(1j * rel[away]))))))
    assert np.abs(rel[away]).max() <= 0.02 * TWO_PI


def test_reconstruction_reports_failing_cycle(torus16):
    hb = harmonic_basis(torus16)
    frame = build_frame(torus16)
    with pytest.raises(ReconstructionError, match="generator defects"):
        reconstruct_field(torus16, 0.5 * hb.forms[:, 0], frame, basis=hb)


# ---------------------------------------------------------------- degree


def test_constant_field_degree_zero(torus16):
    u = TangentVectorField(build_frame(torus16), np.ones(torus16.n_vertices))
    assert degree(torus16, u, _square(16, 0, 0, 2, 2)) == 0


def _synthetic(mesh, n, centers, d):
    xy = flat_torus_coords(mesh, n)
    z = np.ones(mesh.n_vertices, complex)
    for c, dk in zip(centers, d):
        w = (xy[:, 0] - c[0]) + 1j * (xy[:, 1] - c[1])
        z *= (w / np.abs(w)) ** dk
    return TangentVectorField(build_frame(mesh), z)


def test_synthetic_vortex_degree(torus16):
    n = 16
    c = np.array([7.5, 7.25]) / n
    u = _synthetic(torus16, n, [c], [1])
    assert degree(torus16, u, _square(n, 5, 5, 5, 5)) == 1
    assert degree(torus16, u, _square(n, 1, 1, 3, 3)) == 0


def test_degree_additivity_random_cases(torus32):
    """Degree over a box equals the sum of enclosed indices on 20 random configurations."""
    n = 32
    rng = np.random.default_rng(21)
    for _ in range(20):
        k = int(rng.integers(1, 4))
        cells = rng.integers(4, n - 4, size=(k, 2))
        centers = (cells + rng.uniform(0.2, 0.8, size=(k, 2))) / n
        d = rng.choice([-2, -1, 1, 2], size=k)
        u = _synthetic(torus32, n, centers, d)
        i0, j0 = rng.integers(2, n // 2, size=2)
        w, hgt = rng.integers(4, n // 2 - 2, size=2)
        inside = [(i0 < c[0] * n < i0 + w) and (j0 < c[1] * n < j0 + hgt) for c in centers]
        expected = int(sum(dk for dk, ins in zip(d, inside) if ins))
        assert degree(torus32, u, _square(n, i0, j0, w, hgt)) == expected


def test_sphere_hemisphere_degree(sphere_canonical):
    m = sphere_canonical.mesh
    u = sphere_canonical.reconstruct()
    up = m.positions[m.faces].mean(axis=1)[:, 2] > 0
    nxt = {}
    for f in np.nonzero(up)[0].tolist():
        for c in range(3):
            h = 3 * f + c
            if not up[m.halfedge_twin[h] // 3]:
                nxt[int(m.halfedge_tail[h])] = int(m.halfedge_head[h])
    loop = [next(iter(nxt))]
    while nxt[loop[-1]] != loop[0]:
        loop.append(nxt[loop[-1]])
    assert len(loop) == len(nxt)
    assert degree(m, u, loop) == 1
    assert degree(m, u, loop[::-1]) == 1


def test_degree_errors(torus16):
    n = 16
    u = _synthetic(torus16, n, [np.array([7.5, 7.25]) / n], [1])
    with pytest.raises(DegreeError, match="does not bound a disk"):
        degree(torus16, u, _square(n, 5, 5, 5, 5)[::-1])
    with pytest.raises(DegreeError, match="not null-homologous"):
        degree(torus16, u, _row(n, 3))
    weak = TangentVectorField(u.frame, 0.3 * u.z)
    with pytest.raises(DegreeError, match="modulus"):
        degree(torus16, weak, _square(n, 5, 5, 5, 5))


# ---------------------------------------------------------------- vorticity


def test_constant_field_has_no_vorticity(torus16):
    u = TangentVectorField(build_frame(torus16), np.ones(torus16.n_vertices))
    assert np.abs(vorticity(torus16, u)).max() <= 1e-14
    assert len(localize(torus16, vorticity(torus16, u)).points) == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_unit_field_vorticity_total(seed):
    mesh = icosphere(2)
    theta = np.random.default_rng(seed).uniform(-np.pi, np.pi, mesh.n_vertices)
    u = TangentVectorField(build_frame(mesh), np.exp(1j * theta))
    assert abs(vorticity(mesh, u).sum() - 4 * math.pi) <= 1e-6
    assert abs(vorticity(mesh, u, quantized=True).sum() - 4 * math.pi) <= 1e-6


def test_sphere_vorticity_atoms(sphere_canonical):
    m = sphere_canonical.mesh
    om = vorticity(m, sphere_canonical.reconstruct())
    assert abs(om.sum() - 4 * math.pi) <= 1e-6
    vm = localize(m, om)
    assert sorted(vm.indices) == [1, 1]
    for mass in vm.masses:
        assert abs(mass - TWO_PI) <= 0.05 * TWO_PI
    for a in sphere_canonical.config.points:
        assert min(geodesic_distance(m, a, p) for p in vm.points) <= 3 * m.h
    assert abs(vm.total_mass - 4 * math.pi) <= 1e-12


def test_localize_rejects_fractional_cluster(torus16):
    om = np.zeros(torus16.n_faces)
    om[40] = math.pi
    with pytest.raises(LocalizationError):
        localize(torus16, om)


# ---------------------------------------------------------------- vorticity distance


def _dirac(mesh, v, d=1):
    return VorticityMeasure([SurfacePoint.at_vertex(mesh, v)], [d])


def test_vorticity_distance_identity(torus16):
    mu = _dirac(torus16, 40)
    assert vorticity_distance(torus16, mu, mu) == 0.0


@pytest.mark.parametrize("s", [1, 2, 3])
def test_vorticity_distance_two_diracs(torus16, s):
    n = 16
    v = 5 + n * 5
    expected = TWO_PI * s / n
    d_pair = vorticity_distance(torus16, _dirac(torus16, v), _dirac(torus16, v + s))
    assert abs(d_pair - expected) <= 0.1 * expected
    dipole = VorticityMeasure([SurfacePoint.at_vertex(torus16, v), SurfacePoint.at_vertex(torus16, v + s)], [1, -1])
    assert abs(vorticity_distance(torus16, dipole, VorticityMeasure()) - expected) <= 0.1 * expected


def test_vorticity_distance_metric_axioms(torus16):
    rng = np.random.default_rng(3)
    measures = [rng.normal(size=torus16.n_faces) for _ in range(3)]
    d = lambda a, b: vorticity_distance(torus16, a, b)  # noqa: E731
    ab, ba = d(measures[0], measures[1]), d(measures[1], measures[0])
    assert abs(ab - ba) <= 1e-9 * max(1.0, ab)
    assert d(measures[0], measures[2]) <= ab + d(measures[1], measures[2]) + 1e-9
    assert ab > 0


def test_vorticity_distance_bad_shape(torus16):
    with pytest.raises(ValueError):
        vorticity_distance(torus16, np.ones(5), VorticityMeasure())
