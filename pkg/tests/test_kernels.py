import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import special, stats

from insidertc import _fallback, kernels
from insidertc.fbode import TimeGrid, gamma_parts, solve_equilibrium

from conftest import FIG3

HAS_CYTHON = "cython" in kernels.available_backends()
needs_cython = pytest.mark.skipif(not HAS_CYTHON, reason="compiled extension not built")


def test_norm_ppf_matches_reference(backend):
    impl = kernels.get_backend(backend)
    p = np.concatenate([np.linspace(1e-6, 1 - 1e-6, 20001), np.geomspace(1e-300, 1e-6, 300),
                        1 - np.geomspace(1e-16, 1e-6, 200)])
    got = impl.norm_ppf(p)
    want = special.ndtri(p)
    assert np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want))) < 1e-14


def test_norm_ppf_symmetry():
    p = np.linspace(0.001, 0.499, 999)
    assert np.max(np.abs(_fallback.norm_ppf(p) + _fallback.norm_ppf(1 - p))) < 1e-13


def test_keys_do_not_depend_on_chunking(backend):
    impl = kernels.get_backend(backend)
    whole = impl.path_keys(42, 0, 10)
    part = impl.path_keys(42, 4, 3)
    assert np.array_equal(whole[4:7], part)


def test_uniforms_open_interval_and_seed_sensitivity(backend):
    impl = kernels.get_backend(backend)
    u = impl.uniforms(impl.path_keys(7, 0, 100000), 3)
    assert np.all((u > 0) & (u < 1))
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    other = impl.uniforms(impl.path_keys(8, 0, 100000), 3)
    assert not np.array_equal(u, other)


def test_normals_have_unit_moments():
    keys = _fallback.path_keys(2024, 0, 200000)
    z = _fallback.norm_ppf(_fallback.uniforms(keys, 1))
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)
    # different counters are uncorrelated
    z2 = _fallback.norm_ppf(_fallback.uniforms(keys, 2))
    assert abs(np.corrcoef(z, z2)[0, 1]) < 5 / np.sqrt(z.size)


@needs_cython
def test_rng_parity():
    cy, py = kernels.get_backend("cython"), kernels.get_backend("python")
    keys = py.path_keys(2 ** 64 - 1, 12345, 1000)
    assert np.array_equal(cy.path_keys(2 ** 64 - 1, 12345, 1000), keys)
    assert np.array_equal(cy.uniforms(keys, 17), py.uniforms(keys, 17))
    u = py.uniforms(keys, 3)
    np.testing.assert_allclose(cy.norm_ppf(u), py.norm_ppf(u), rtol=4e-16, atol=4e-16)


@needs_cython
@pytest.mark.parametrize("ktil", [1.0, 1.05307, 3.0])
def test_rk4_parity(ktil):
    gamma, gm1 = gamma_parts(FIG3)
    args = (FIG3.Sigma0v, FIG3.A, FIG3.sigma, gamma, gm1, ktil, 1e-3, 1000)
    a, bad_a = kernels.get_backend("cython").rk4_x1(*args)
    b, bad_b = kernels.get_backend("python").rk4_x1(*args)
    assert bad_a == bad_b == -1
    np.testing.assert_allclose(a, b, rtol=1e-14)


@needs_cython
@pytest.mark.parametrize("fixed_v", [float("nan"), 1.0])
def test_simulate_chunk_parity(fixed_v):
    grid = TimeGrid(1.0, 50)
    prof = solve_equilibrium(FIG3, grid)
    out = {}
    for name in ("cython", "python"):
        arrays = (np.zeros((2, 51)), np.zeros((4, 51)), np.zeros(2), np.zeros(2))
        kernels.get_backend(name).simulate_chunk(
            prof.beta, prof.lam, 0.0, FIG3.Sigma0v, FIG3.sigma, FIG3.c, FIG3.A, grid.dt, 99, 10,
            500, fixed_v, *arrays, None)
        out[name] = arrays
    for a, b in zip(out["cython"], out["python"]):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)


def test_unknown_backend():
    with pytest.raises(ValueError, match="not available"):
        kernels.get_backend("fortran")


def test_environment_forces_python_backend():
    env = dict(os.environ, INSIDERTC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import insidertc; print(insidertc.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
