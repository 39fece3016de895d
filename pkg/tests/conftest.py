import warnings

import numpy as np
import pytest

from bolzalab import fuchsian, surfmesh


@pytest.fixture(autouse=True)
def _quiet_cotan_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*nonpositive cotan weight")
        yield


@pytest.fixture(scope="session")
def gens():
    return fuchsian.bolza_group()


_meshes = {}
_bases = {}


def _mesh(level):
    if level not in _meshes:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _meshes[level] = surfmesh.build_mesh(level)
    return _meshes[level]


def _basis(level):
    if level not in _bases:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _bases[level] = surfmesh.harmonic_basis(_mesh(level))
    return _bases[level]


@pytest.fixture(scope="session")
def mesh_at():
    return _mesh


@pytest.fixture(scope="session")
def basis_at():
    return _basis


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
