from __future__ import annotations

import numpy as np
import pytest

from decusum import _backend
from decusum.kernels import cusum_paths, decusum_paths, kernel
from decusum.rng import NoiseBuffer, substream


class TestBackendSelection:
    def test_default_is_numba(self, monkeypatch):
        monkeypatch.delenv(_backend.ENV_VAR, raising=False)
        assert _backend.active_backend() == "numba"

    @pytest.mark.parametrize("name", ["numba", "numpy", " NumPy "])
    def test_env_flag(self, monkeypatch, name):
        monkeypatch.setenv(_backend.ENV_VAR, name)
        assert _backend.active_backend() == name.strip().lower()

    def test_unknown_backend(self, monkeypatch):
        monkeypatch.setenv(_backend.ENV_VAR, "cuda")
        with pytest.raises(ValueError):
            _backend.active_backend()

    def test_dispatch_follows_env(self, monkeypatch):
        monkeypatch.setenv(_backend.ENV_VAR, "numpy")
        assert kernel("all") is kernel("all", "numpy")
        assert kernel("all") is not kernel("all", "numba")


class TestPathKernels:
    @pytest.mark.parametrize("h", [0.0, 0.5, 20.0, np.inf])
    def test_backends_agree(self, h):
        llr = np.random.default_rng(1).normal(-0.08, 0.4, (50, 400))
        W1, S1 = decusum_paths(llr, 0.1, h, backend="numba")
        W2, S2 = decusum_paths(llr, 0.1, h, backend="numpy")
        assert np.array_equal(W1, W2) and np.array_equal(S1, S2)
        assert np.array_equal(cusum_paths(llr, backend="numba"), cusum_paths(llr, backend="numpy"))

    def test_per_row_parameters(self):
        llr = np.full((2, 3), -1.0)
        W, _ = decusum_paths(llr, [0.5, 0.25], [0.5, 1.0], start=[0.0, -0.5])
        assert W.tolist() == [[-0.5, 0.0, -0.5], [-0.25, 0.0, -1.0]]


class TestRandomStreams:
    def test_substreams_independent_of_order(self):
        a = substream(1, 2, 3).standard_normal(5)
        substream(1, 2, 4).standard_normal(5)
        assert np.array_equal(a, substream(1, 2, 3).standard_normal(5))

    def test_keys_separate_streams(self):
        base = substream(1, 2, 3, 0).standard_normal(4)
        for other in (substream(2, 2, 3, 0), substream(1, 3, 3, 0), substream(1, 2, 4, 0), substream(1, 2, 3, 1)):
            assert not np.array_equal(base, other.standard_normal(4))

    def test_block_size_invariance(self):
        whole = substream(0, 0, 0).standard_normal((1000, 3))
        gen = substream(0, 0, 0)
        parts = np.concatenate([gen.standard_normal((k, 3)) for k in (32, 64, 128, 776)])
        assert np.array_equal(whole, parts)
        buf = NoiseBuffer(substream(0, 0, 0), 3)
        assert np.array_equal(buf.row(999), whole[998])
        assert np.array_equal(buf.row(1), whole[0])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            substream(-1, 0, 0)
        with pytest.raises(ValueError):
            NoiseBuffer(substream(0, 0, 0), 1).row(0)
