"""Shared fixtures: the 45-degree reference cavity and bundled datasets.

Kernel construction and eigendecomposition dominate test setup cost, so the
standard cavity is built once per session.
"""

import numpy as np
import pytest

import vcavity as vc


@pytest.fixture(scope="session")
def d65():
    return vc.builtin("D65")


@pytest.fixture(scope="session")
def camera():
    return vc.default_camera()


@pytest.fixture(scope="session")
def patches():
    return dict(vc.builtin("ColorChecker24"))


@pytest.fixture(scope="session")
def cavity45():
    return vc.build_v_cavity(0.02, 0.02, 45.0, 10, 10)


@pytest.fixture(scope="session")
def kernel45(cavity45):
    return vc.kernel_exact(cavity45)


@pytest.fixture(scope="session")
def eig45(kernel45):
    return vc.eigen_prepare(kernel45)


@pytest.fixture(scope="session")
def e0_45(cavity45, d65):
    return vc.direct_irradiance(cavity45, d65)


@pytest.fixture(scope="session")
def small_cavity():
    """Cheap 2x16-facet cavity for plumbing tests."""
    return vc.build_v_cavity(0.02, 0.02, 60.0, 4, 4)


@pytest.fixture(scope="session")
def small_eig(small_cavity):
    return vc.eigen_prepare(vc.kernel_exact(small_cavity))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260825)
