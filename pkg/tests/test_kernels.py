import numpy as np
import pytest

import mmctune._kernels_py as pure
from mmctune import kernels
from mmctune.geometry import Component, phi_component
from conftest import random_component


def random_params(rng, n):
    return np.stack([random_component(rng).as_array() for _ in range(n)])


class TestAgainstScalarReference:
    def test_phi_one_matches_scalar(self, rng):
        prm = random_component(rng).as_array()
        c = Component.from_array(prm)
        xs = rng.uniform(0, 2, 40)
        ys = rng.uniform(0, 1, 40)
        got = kernels.phi_one(prm, xs, ys, 6)
        want = [phi_component((x, y), c, 6) for x, y in zip(xs, ys)]
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_phi_max_matches_bruteforce(self, rng):
        prm = random_params(rng, 6)
        xs = rng.uniform(0, 2, 60)
        ys = rng.uniform(0, 1, 60)
        phi, amax = kernels.phi_max(prm, xs, ys, 6)
        stack = np.stack([kernels.phi_one(prm[i], xs, ys, 6) for i in range(6)])
        np.testing.assert_array_equal(phi, stack.max(axis=0))
        np.testing.assert_array_equal(amax, stack.argmax(axis=0))

    def test_phi_max_tie_lowest_index(self, rng):
        c = random_component(rng).as_array()
        prm = np.stack([c, c, c])  # exact ties everywhere
        xs = rng.uniform(0, 2, 25)
        ys = rng.uniform(0, 1, 25)
        _, amax = kernels.phi_max(prm, xs, ys, 6)
        assert np.all(amax == 0)

    def test_fd_grad_matches_manual(self, rng):
        prm = random_params(rng, 3)
        xs = rng.uniform(0, 2, 30)
        ys = rng.uniform(0, 1, 30)
        idx = rng.integers(0, 3, 30).astype(np.int64)
        step = 1e-6
        got = kernels.component_fd_grad(prm, xs, ys, idx, 6, step)
        for j in range(30):
            i = idx[j]
            for k in range(7):
                plus = prm[i].copy()
                plus[k] += step
                minus = prm[i].copy()
                minus[k] -= step
                want = (
                    kernels.phi_one(plus, xs[j : j + 1], ys[j : j + 1], 6)[0]
                    - kernels.phi_one(minus, xs[j : j + 1], ys[j : j + 1], 6)[0]
                ) / (2 * step)
                assert got[j, k] == pytest.approx(want, rel=1e-9, abs=1e-9)


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="compiled kernels unavailable")
class TestBackendEquivalence:
    def test_phi_max_equivalent(self, rng):
        prm = random_params(rng, 16)
        xs = rng.uniform(0, 2, 5000)
        ys = rng.uniform(0, 1, 5000)
        phi_c, amax_c = kernels.phi_max(prm, xs, ys, 6)
        phi_p, amax_p = pure.phi_max(prm, xs, ys, 6)
        np.testing.assert_allclose(phi_c, phi_p, rtol=1e-13, atol=1e-13)
        np.testing.assert_array_equal(amax_c, amax_p)

    def test_grad_equivalent(self, rng):
        prm = random_params(rng, 8)
        xs = rng.uniform(0, 2, 800)
        ys = rng.uniform(0, 1, 800)
        idx = rng.integers(0, 8, 800).astype(np.int64)
        g_c = kernels.component_fd_grad(prm, xs, ys, idx, 6, 1e-6)
        g_p = pure.component_fd_grad(prm, xs, ys, idx, 6, 1e-6)
        np.testing.assert_allclose(g_c, g_p, rtol=1e-10, atol=1e-10)

    def test_backend_flag_consistent(self):
        assert kernels.BACKEND in ("compiled", "pure")
        assert set(kernels.backends()) >= {"pure"}
