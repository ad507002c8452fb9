"""numba and numpy kernels must agree to rounding on the same inputs."""
import numpy as np
import pytest
from scipy.spatial import Delaunay

from abplab import kernels
from abplab.envelope import _node_tables, default_directions, default_steps
from abplab.grid import Domain, make_grid, sample

NP = kernels.get_kernels("numpy")
NB = kernels.get_kernels("numba")


def _relax_args(dim, res, seed=0):
    rng = np.random.default_rng(seed)
    om = Domain.ball(1.0, dim)
    g = make_grid(om, res)
    f = sample(lambda x: np.minimum(np.sum(x * x, axis=-1) - 0.6, 0.0), g, om)
    U = f.values[f.mask] + 0.01 * rng.normal(size=int(f.mask.sum())).clip(max=0)
    mi, lut = _node_tables(f.mask)
    return (U.copy(), U, mi, np.arange(len(mi), dtype=np.int64), np.full(len(mi), -np.inf), lut,
            np.asarray(g.shape, dtype=np.int64), default_directions(dim), default_steps(max(g.shape)),
            np.asarray(g.origin, dtype=float), np.asarray(g.h, dtype=float), np.zeros(dim), 2.0)


@pytest.mark.parametrize("dim, res", [(2, 24), (4, 6)])
def test_relax_sweep_backends_agree(dim, res):
    a = _relax_args(dim, res)
    np.testing.assert_allclose(NP["relax_sweep"](*a), NB["relax_sweep"](*a), rtol=0, atol=1e-14)


def test_relax_sweep_subset_and_threshold():
    a = list(_relax_args(2, 24, seed=1))
    G, U, mi = a[0], a[1], a[2]
    rng = np.random.default_rng(2)
    sub = np.sort(rng.choice(len(mi), 40, replace=False))
    a[2] = mi[sub]
    a[3] = sub.astype(np.int64)
    a[4] = U[sub] - 0.05
    out_np = NP["relax_sweep"](*a)
    out_nb = NB["relax_sweep"](*a)
    np.testing.assert_allclose(out_np, out_nb, atol=1e-14)
    # without a threshold the result can only be lower
    a[4] = np.full(len(sub), -np.inf)
    assert np.all(NP["relax_sweep"](*a) <= out_np + 1e-15)


def test_relax_sweep_never_raises():
    a = _relax_args(2, 20)
    assert np.all(NB["relax_sweep"](*a) <= a[1] + 1e-15)


def test_tilted_argmin_backends_and_bruteforce():
    rng = np.random.default_rng(3)
    P, X, V = rng.normal(size=(300, 3)), rng.normal(size=(50, 3)), rng.normal(size=50)
    m1, a1 = NP["tilted_argmin"](P, X, V)
    m2, a2 = NB["tilted_argmin"](P, X, V)
    brute = V[None, :] - P @ X.T
    np.testing.assert_allclose(m1, brute.min(axis=1), atol=1e-13)
    np.testing.assert_allclose(m2, brute.min(axis=1), atol=1e-13)
    assert np.array_equal(a1, a2)


def test_legendre_lines():
    rng = np.random.default_rng(4)
    G = rng.normal(size=(7, 11))
    x = np.linspace(-1, 1, 11)
    p = np.linspace(-3, 3, 13)
    want = np.max(p[None, :, None] * x[None, None, :] + G[:, None, :], axis=2)
    np.testing.assert_array_equal(NP["legendre_lines"](G, x, p), want)
    np.testing.assert_array_equal(NB["legendre_lines"](G, x, p), want)


def test_rasterize_matches_delaunay_locator():
    rng = np.random.default_rng(5)
    pts = np.vstack([rng.uniform(-1, 1, size=(30, 2)), [[-1, -1], [1, -1], [1, 1], [-1, 1]]])
    tri = Delaunay(pts)
    T = np.ascontiguousarray(pts[tri.simplices])
    shape = np.array([41, 41], dtype=np.int64)
    origin, h = np.array([-1.0, -1.0]), np.array([0.05, 0.05])
    a = NP["rasterize_facets"](T, origin, h, shape)
    b = NB["rasterize_facets"](T, origin, h, shape)
    assert np.array_equal(a, b)
    assert np.all(a >= 0)
    # each node lies in the triangle it was assigned
    g = make_grid(Domain.box([1.0, 1.0]), 40).points()
    lam = np.einsum("nij,nj->ni", tri.transform[a.ravel(), :2],
                    g.reshape(-1, 2) - tri.transform[a.ravel(), 2])
    bary = np.c_[lam, 1 - lam.sum(axis=1)]
    assert bary.min() > -1e-9


def test_backend_selection_env(monkeypatch):
    monkeypatch.setenv("ABPLAB_BACKEND", "numpy")
    assert kernels._pick_backend() == "numpy"
    with pytest.raises(ValueError):
        kernels.get_kernels("fortran")
