import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astetag import kernels

needs_numba = pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 15), st.integers(0, 2 ** 31))
def test_decode_scan_twins(n, seed):
    m = np.random.default_rng(seed).integers(0, 5, size=(n, n)).astype(np.int8)
    np.testing.assert_array_equal(kernels.decode_scan_nb(m, 1, 2), kernels.decode_scan_np(m, 1, 2))


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 31), st.booleans(), st.floats(0.1, 10.0))
def test_contrastive_twins(n, seed, mean, d):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n, 4))
    r = rng.integers(0, 3, size=n)
    mask = np.triu(np.where(r[:, None] == r[None, :], 1, -1), 1).astype(np.int8)
    a = kernels.contrastive_fwd_bwd_nb(h, mask, d, mean)
    b = kernels.contrastive_fwd_bwd_np(h, mask, d, mean)
    assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-10, atol=1e-12)


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2 ** 31), st.floats(0.0, 4.0))
def test_focal_twins(n, seed, gamma):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 5)) * 5
    g = rng.integers(0, 5, size=n).astype(np.int64)
    w = rng.random(n) + 0.1
    a = kernels.focal_fwd_bwd_nb(z, g, w, gamma)
    b = kernels.focal_fwd_bwd_np(z, g, w, gamma)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-9, atol=1e-14)


@needs_numba
def test_adam_twins_update_in_place():
    rng = np.random.default_rng(0)
    states = []
    for fn in (kernels.adam_update_nb, kernels.adam_update_np):
        p = rng.normal(size=(4, 3))
        p0 = p.copy()
        m, v = np.zeros_like(p), np.zeros_like(p)
        for step in range(1, 4):
            fn(p, np.sin(p0 * step), m, v, 1e-2, 0.9, 0.999, 1e-8, step)
        states.append((p, m, v))
        rng = np.random.default_rng(0)
    for x, y in zip(*states):
        np.testing.assert_allclose(x, y, rtol=1e-12)


def test_focal_gamma_handles_certain_cells():
    z = np.array([[50.0, 0, 0, 0, 0]])
    loss, grad = kernels.focal_fwd_bwd_np(z, np.array([0]), np.ones(1), 0.5)
    assert np.isfinite(loss) and np.isfinite(grad).all()


def test_env_flag_selects_numpy():
    env = dict(os.environ, ASTETAG_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from astetag import kernels; print(kernels.BACKEND, "
                          "kernels.decode_scan is kernels.decode_scan_np)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
