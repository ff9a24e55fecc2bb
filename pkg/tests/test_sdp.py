import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds
from qgames import sdp
from qgames.channels import ChoiMatrix
from qgames.linalg import DimensionError, Rng, partial_trace, random_hermitian


def _trace_one(n):
    return ((np.eye(n), 1.0),)


@given(st.integers(1, 6), seeds)
def test_lambda_max_family(n, seed):
    h = random_hermitian(n, Rng(seed))
    sol = sdp.solve(sdp.SdpProblem(h, _trace_one(n)))
    assert sol.converged
    assert abs(sol.objective_value - np.linalg.eigvalsh(h)[-1]) < 1e-6
    assert np.linalg.eigvalsh(sol.X)[0] > -1e-6


def test_block_diagonal_problem_takes_best_block():
    rng = Rng(3)
    h1, h2 = random_hermitian(2, rng), random_hermitian(3, rng)
    c = np.zeros((5, 5), dtype=complex)
    c[:2, :2], c[2:, 2:] = h1, h2
    sol = sdp.solve(sdp.SdpProblem(c, _trace_one(5), blocks=(2, 3)))
    best = max(np.linalg.eigvalsh(h1)[-1], np.linalg.eigvalsh(h2)[-1])
    assert abs(sol.objective_value - best) < 1e-6


def test_problem_validation():
    with pytest.raises(DimensionError):
        sdp.SdpProblem(np.eye(2), ((np.eye(3), 1.0),))
    with pytest.raises(ValueError):
        sdp.SdpProblem(np.array([[0, 1], [0, 0]]), ())
    with pytest.raises(DimensionError):
        sdp.SdpProblem(np.eye(3), (), blocks=(1, 1))


def test_inconsistent_constraints_are_infeasible():
    with pytest.raises(sdp.InfeasibleError):
        sdp.GramAffineSet([(np.eye(2), 1.0), (2 * np.eye(2), 3.0)], (2,))


def test_linear_constraints_match_dense_rows():
    rng = Rng(7)
    lc = sdp.LinearConstraints((3,))
    lc.add([(0, 0, 1, 1.0), (0, 2, 2, 0.5 - 1j)], 0.3 + 0.2j)
    lc.add_real([(0, 1, 1, 2.0)], 1.0)
    x = random_hermitian(3, rng)
    y = lc.affine_set().project([x])[0]
    assert lc.residual([y]) < 1e-12
    assert abs(y[0, 1] + (0.5 - 1j) * y[2, 2] - (0.3 + 0.2j)) < 1e-12
    assert abs(2 * y[1, 1].real - 1.0) < 1e-12
    # projection is idempotent and orthogonal
    z = lc.affine_set().project([y])[0]
    assert np.abs(z - y).max() < 1e-12
    w = lc.affine_set().project([random_hermitian(3, rng)])[0]
    assert abs(np.vdot(x - y, w - y).real) < 1e-10


@given(st.integers(1, 3), st.integers(1, 3), seeds)
def test_partial_trace_projector_matches_gram_projector(a, x, seed):
    # two independent routes to the projection onto {J : Tr_A J = I}
    rng = Rng(seed)
    n = a * x
    j = random_hermitian(n, rng)
    fast = sdp.PartialTraceAffineSet([a, x], 0, np.eye(x)).project([j])[0]
    cons = []
    for i in range(x):
        for k in range(x):
            e = np.zeros((x, x), dtype=complex)
            e[i, k] = 1
            for m, rhs in (((e + e.T) / 2, float(i == k)), (1j * (e - e.T) / 2, 0.0)):
                if np.abs(m).max() > 0:
                    cons.append((np.kron(np.eye(a), m), rhs))
    slow = sdp.GramAffineSet(cons, (n,)).project([j])[0]
    assert np.abs(fast - slow).max() < 1e-10
    assert np.abs(partial_trace(fast, [a, x], [0]) - np.eye(x)).max() < 1e-10


@given(st.integers(1, 5), seeds)
def test_dual_bound_is_a_valid_upper_bound(n, seed):
    h = random_hermitian(n, Rng(seed))
    lam = np.linalg.eigvalsh(h)[-1]
    affine = sdp.GramAffineSet(list(_trace_one(n)), (n,))
    for iters in (3, 20, 10_000):
        st_ = sdp.admm([h], affine, max_iter=iters)
        b = sdp.dual_bound([h], affine, st_.U, st_.rho)
        assert b is not None and b >= lam - 1e-9
    assert b <= lam + 1e-5


def test_admm_early_stop_and_history():
    h = random_hermitian(4, Rng(1))
    affine = sdp.GramAffineSet(list(_trace_one(4)), (4,))
    calls = []

    def stop(state):
        calls.append(state.iterations)
        return True

    st_ = sdp.admm([h], affine, early_stop=stop, record=True)
    assert calls and st_.iterations == calls[0]
    assert len(st_.history) >= 1


@pytest.mark.parametrize("d", [1, 2, 3])
def test_max_over_choi_identity_overlap(d):
    omega = np.eye(d).ravel()
    w = np.outer(omega, omega)
    j, val = sdp.max_over_choi(w, d, d)
    assert abs(val - d * d) < 1e-6
    assert ChoiMatrix(j, d, d).is_channel()


def test_max_over_choi_with_redundant_extra_constraint():
    d = 2
    omega = np.eye(d).ravel()
    w = np.outer(omega, omega)
    j, val = sdp.max_over_choi(w, d, d, extra=((np.eye(d * d), float(d)),))
    assert abs(val - d * d) < 1e-5
    with pytest.raises(DimensionError):
        sdp.max_over_choi(np.eye(3), 2, 2)


def test_normalize_choi_makes_channel():
    rng = Rng(2)
    g = rng.complex_normal((6, 6))
    j = sdp.normalize_choi(g @ g.conj().T, 3, 2)
    assert ChoiMatrix(j, 2, 3).is_channel()


def test_embed_identity():
    rng = Rng(9)
    m = rng.complex_normal((6, 6))
    assert np.allclose(sdp.embed_identity(m, [2, 2, 3], 0), np.kron(np.eye(2), m))
    assert np.allclose(sdp.embed_identity(m, [2, 3, 2], 2), np.kron(m, np.eye(2)))
