import numpy as np
import pytest

from orderbias import _kernels
from orderbias._kernels import pure


def test_backend_reporting():
    assert _kernels.backend() in ("compiled", "pure")
    assert _kernels.backend() == ("compiled" if _kernels.HAVE_COMPILED else "pure")


@pytest.mark.skipif(not _kernels.HAVE_COMPILED, reason="compiled kernel not built")
def test_compiled_matches_pure():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        v = rng.normal(size=n)
        w = rng.uniform(0.5, 2.0, size=n)
        f_c, b_c = _kernels.pava(np.ascontiguousarray(v), np.ascontiguousarray(w))
        f_p, b_p = pure.pava(v, w)
        assert np.array_equal(f_c, f_p)
        assert np.array_equal(b_c, b_p)


def test_pure_blocks_are_maximal_level_sets():
    fitted, bounds = pure.pava(np.array([1.0, 1.0, 3.0, 2.0]), np.ones(4))
    assert np.allclose(fitted, [1.0, 1.0, 2.5, 2.5])
    # equal-valued neighbours coalesce into one block
    assert bounds.tolist() == [0, 2, 4]
