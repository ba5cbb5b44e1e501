"""Backend equivalence: compiled extension vs pure-numpy fallback."""

import numpy as np
import pytest

from savid import kernels

rng = np.random.default_rng(5)

needs_native = pytest.mark.skipif(
    kernels.native_impl is None, reason="compiled extension not built"
)


class TestBackendSelection:
    def test_backend_reported(self):
        assert kernels.BACKEND in ("native", "python")

    def test_python_impl_always_available(self):
        assert kernels.python_impl is not None


@needs_native
class TestBitIdentical:
    def test_kgf_projection_identical(self):
        for trial in range(20):
            r = np.random.default_rng(trial)
            f_s = r.normal(size=(6, 6, 8))
            f_l = r.normal(size=(6, 6, 8))
            f_l[r.random((6, 6)) < 0.3] = 0.0
            sup = np.any(f_l != 0.0, axis=2).astype(np.uint8)
            a = kernels.native_impl.kgf_project_window3x3(f_s, f_l, sup)
            b = kernels.python_impl.kgf_project_window3x3(f_s, f_l, sup)
            np.testing.assert_array_equal(a, b)

    def test_kgf_projection_no_support(self):
        f_s = rng.normal(size=(3, 3, 2))
        f_l = np.zeros((3, 3, 2))
        sup = np.zeros((3, 3), dtype=np.uint8)
        a = kernels.native_impl.kgf_project_window3x3(f_s, f_l, sup)
        np.testing.assert_array_equal(a, np.zeros((3, 3)))

    def test_fps_identical(self):
        for trial in range(10):
            r = np.random.default_rng(100 + trial)
            xyz = np.ascontiguousarray(r.uniform(-5, 5, size=(200, 3)))
            a = kernels.native_impl.fps(xyz, 32, 0)
            b = kernels.python_impl.fps(xyz, 32, 0)
            assert list(a) == list(b)

    def test_fps_start_index_respected(self):
        xyz = np.ascontiguousarray(rng.uniform(-1, 1, size=(50, 3)))
        got = kernels.native_impl.fps(xyz, 5, 7)
        assert got[0] == 7
