from __future__ import annotations

import numpy as np
import pytest

from surfvortex.meshgen import double_torus, flat_torus, icosphere, torus_of_revolution
from surfvortex.surface import SurfaceMesh, SurfacePoint


def random_point(mesh: SurfaceMesh, rng: np.random.Generator) -> SurfacePoint:
    f = int(rng.integers(mesh.n_faces))
    w = rng.dirichlet([1.0, 1.0, 1.0])
    return SurfacePoint(f, (w[0], w[1], 1.0 - w[0] - w[1]))


def intrinsic_copy(mesh: SurfaceMesh) -> SurfaceMesh:
    return SurfaceMesh(mesh.faces, face_lengths=mesh.face_lengths, name=mesh.name + "_intrinsic")


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return icosphere(4)


@pytest.fixture(scope="session")
def sphere5():
    return icosphere(5)


@pytest.fixture(scope="session")
def torus16():
    return flat_torus(16)


@pytest.fixture(scope="session")
def torus32():
    return flat_torus(32)


@pytest.fixture(scope="session")
def torus64():
    return flat_torus(64)


@pytest.fixture(scope="session")
def torusrev_coarse():
    return torus_of_revolution(1.0, 0.5, 64, 32)


@pytest.fixture(scope="session")
def torusrev():
    return torus_of_revolution(1.0, 0.5, 128, 64)


@pytest.fixture(scope="session")
def genus2():
    return double_torus(2)


@pytest.fixture(scope="session")
def genus2_intrinsic(genus2):
    return intrinsic_copy(genus2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
