import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latsec.numerics import (
    NonFiniteError,
    TimeGrid,
    det_cofactor,
    eig2x2,
    expm2x2,
    integrate_rk4,
    null_direction,
    rank_with_tol,
    rk4_step,
    rk4_step2,
)

entry = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
mat2 = st.lists(entry, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


def quadratic_roots(m):
    tr, det = m[0, 0] + m[1, 1], m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    d = cmath.sqrt(tr * tr - 4 * det)
    return sorted([(tr - d) / 2, (tr + d) / 2], key=lambda z: (z.real, z.imag))


# --- TimeGrid --------------------------------------------------------------

def test_grid_from_duration():
    g = TimeGrid.from_duration(10.0, 1e-3)
    assert g.n_steps == 10000
    assert g.time(500) == pytest.approx(0.5)
    assert g.index_of(0.5004) == 500
    assert len(g.times()) == 10000


@pytest.mark.parametrize("dt, n", [(0.0, 10), (-1e-3, 10), (math.nan, 10), (1e-3, 0)])
def test_grid_rejects_bad_values(dt, n):
    with pytest.raises(ValueError):
        TimeGrid(0.0, dt, n)


# --- eig2x2 ----------------------------------------------------------------

def test_eig2x2_examples():
    assert eig2x2([[0, 1], [-1, 0]]) == (complex(0, -1), complex(0, 1))
    assert eig2x2([[2, 0], [0, 3]]) == (2, 3)
    assert eig2x2([[1, 1], [0, 1]]) == (1, 1)


def test_eig2x2_rejects_nonfinite():
    with pytest.raises(ValueError):
        eig2x2([[np.nan, 0], [0, 1]])
    with pytest.raises(ValueError):
        eig2x2(np.eye(3))


@settings(max_examples=300, deadline=None)
@given(mat2)
def test_eig2x2_trace_det_identities(m):
    l1, l2 = eig2x2(m)
    scale = max(1.0, float(np.max(np.abs(m))))
    assert abs((l1 + l2) - np.trace(m)) <= 1e-12 * scale
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    # the product carries a rounding error of order eps * scale^2
    assert abs(l1 * l2 - det) <= 1e-12 * scale * scale * 10


@settings(max_examples=200, deadline=None)
@given(mat2)
def test_eig2x2_matches_quadratic_formula(m):
    got = eig2x2(m)
    ref = quadratic_roots(m)
    scale = max(1.0, float(np.max(np.abs(m))))
    # a repeated root is ill-conditioned, so compare loosely
    for a, b in zip(got, ref):
        assert abs(a - b) <= 1e-6 * scale


# --- rank / null / det -----------------------------------------------------

def test_rank_examples():
    assert rank_with_tol(np.zeros((3, 2))) == 0
    assert rank_with_tol(np.eye(3)) == 3
    assert rank_with_tol([[1, 2], [2, 4]]) == 1
    assert rank_with_tol([[1, 0], [0, 1e-12]]) == 1
    assert rank_with_tol([[1, 0], [0, 1e-12]], tol=1e-13) == 2


def test_rank_tol_must_be_positive():
    with pytest.raises(ValueError):
        rank_with_tol(np.eye(2), tol=0)


@settings(max_examples=200, deadline=None)
@given(st.lists(entry, min_size=3, max_size=3), st.lists(entry, min_size=3, max_size=3),
       st.floats(-5, 5))
def test_rank_of_dependent_rows(r1, r2, c):
    m = np.array([r1, r2, [c * v for v in r1]])
    assert rank_with_tol(m) <= 2
    assert rank_with_tol(m) == np.linalg.matrix_rank(m, tol=1e-9 * max(1e-300, np.abs(m).max()))


def test_null_direction_properties():
    m = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
    v = null_direction(m)
    assert v is not None
    assert np.linalg.norm(m @ v) < 1e-12
    assert np.linalg.norm(v) == pytest.approx(1.0)
    lead = v[np.argmax(np.abs(v))]
    assert lead.imag == 0 and lead.real > 0
    assert null_direction(np.eye(3)) is None


def test_det_cofactor_against_numpy():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4):
        m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        assert det_cofactor(m) == pytest.approx(np.linalg.det(m), rel=1e-10)
    with pytest.raises(ValueError):
        det_cofactor(np.ones((2, 3)))


# --- expm2x2 ---------------------------------------------------------------

def expm_by_eigen(m, t):
    w, V = np.linalg.eig(m)
    return (V @ np.diag(np.exp(w * t)) @ np.linalg.inv(V)).real


@pytest.mark.parametrize("m", [
    [[-4.2, -16.0], [0.67, -6.0]],   # complex pair
    [[-1.0, 2.0], [0.5, -3.0]],      # real distinct
    [[0.0, 1.0], [-4.0, 0.0]],       # pure rotation
])
def test_expm2x2_matches_eigendecomposition(m):
    m = np.array(m)
    for t in (0.0, 1e-3, 0.37, 2.0):
        assert np.allclose(expm2x2(m, t), expm_by_eigen(m, t), rtol=1e-12, atol=1e-13)


def test_expm2x2_repeated_eigenvalue():
    # Jordan block: exp(Jt) = e^{-t} [[1, t], [0, 1]]
    J = np.array([[-1.0, 1.0], [0.0, -1.0]])
    t = 0.8
    assert np.allclose(expm2x2(J, t), math.exp(-t) * np.array([[1, t], [0, 1]]), rtol=1e-13)


# --- RK4 -------------------------------------------------------------------

def test_rk4_scalar_and_vector_variants_agree():
    A = np.array([[-4.2, -16.0], [0.67, -6.0]])
    f = lambda t, x: A @ x + np.array([0.0, math.sin(t)])
    f2 = lambda t, a, b: tuple(A @ np.array([a, b]) + np.array([0.0, math.sin(t)]))
    x = np.array([0.3, -0.1])
    y = rk4_step(f, 0.1, x, 0.01)
    y2 = rk4_step2(f2, 0.1, (0.3, -0.1), 0.01)
    assert np.allclose(y, y2, rtol=0, atol=1e-15)


def test_integrate_rk4_matches_exponential():
    A = np.array([[-4.2, -16.0], [0.67, -6.0]])
    grid = TimeGrid(0.0, 1e-3, 2000)
    out = integrate_rk4(lambda t, x, u: A @ x, [1.0, 0.0], lambda t: None, grid)
    assert out.shape == (2001, 2)
    assert np.allclose(out[-1], expm2x2(A, 2.0) @ [1.0, 0.0], atol=1e-12)


def test_integrate_rk4_raises_on_blowup():
    grid = TimeGrid(0.0, 1.0, 2000)
    with pytest.raises(NonFiniteError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate_rk4(lambda t, x, u: x * x, [1.0], lambda t: None, grid)
    assert info.value.step >= 1


def test_rk4_convergence_order():
    A = np.array([[-4.2, -16.0], [0.67, -6.0]])
    u = lambda t: np.array([0.0, 3.0 * math.sin(5.0 * t)])
    deriv = lambda t, x, uu: A @ x + uu
    ends = []
    for dt in (0.04, 0.02, 0.01):
        grid = TimeGrid.from_duration(1.0, dt)
        ends.append(integrate_rk4(deriv, [1.0, 0.0], u, grid)[-1])
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    assert math.log2(e1 / e2) >= 3.9
