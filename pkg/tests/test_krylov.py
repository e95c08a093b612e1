import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfipm import precond
from sfipm.factor import ldlt_factor
from sfipm.ipm import build_f, build_g
from sfipm.krylov import bicgstab, diag_operator, make_kf_operator, matrix_operator, pcg
from sfipm.ledger import CostLedger
from sfipm.problems import SyQpSpec, gen_syqp
from sfipm.spectral import dense_kf
from sfipm.sparse import SYMMETRIC_LOWER, SparseMat, sym_block


def dense_problem(rng, n, m1, m2):
    B = rng.standard_normal((n, n))
    H = B.T @ B + np.eye(n)
    A = rng.standard_normal((m1, n))
    C = rng.standard_normal((m2, n))
    D = rng.random(m2) + 0.5
    return H, A, C, D


def factored_f(H, A):
    n, m1 = H.shape[0], A.shape[0]
    F = np.block([[-H, A.T], [A, np.zeros((m1, m1))]])
    return ldlt_factor(SparseMat.from_dense(F, SYMMETRIC_LOWER, keep_zeros=True))


def test_kf_operator_zero_c():
    H, A = np.eye(3), np.array([[1.0, 0.0, 0.0]])
    C = SparseMat.zeros(2, 3)
    op = make_kf_operator(C, factored_f(H, A), np.array([2.0, 5.0]))
    np.testing.assert_allclose(op.apply(np.array([1.0, 1.0])), [2.0, 5.0])


def test_kf_operator_scalar_case():
    fF = factored_f(np.array([[2.0]]), np.array([[1.0]]))
    op = make_kf_operator(SparseMat.identity(1), fF, np.array([0.7]))
    np.testing.assert_allclose(op.apply(np.array([3.0])), [2.1], atol=1e-15)


def test_kf_operator_dense_oracle(rng):
    H, A, C, D = dense_problem(rng, 6, 3, 6)
    op = make_kf_operator(SparseMat.from_dense(C), factored_f(H, A), D)
    K = dense_kf(H, A, C, D)
    v = rng.standard_normal(6)
    np.testing.assert_allclose(op.apply(v), K @ v, atol=1e-10)


def test_kf_operator_charges(rng):
    H, A, C, D = dense_problem(rng, 5, 2, 4)
    fF = factored_f(H, A)
    Cs = SparseMat.from_dense(C)
    led = CostLedger()
    make_kf_operator(Cs, fF, D).apply(np.ones(4), led)
    assert led.trsv == 2 * fF.trsv_cost
    assert led.spmv == 2 * (2 * Cs.nnz())


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_kf_operator_is_spd(n, seed):
    rng = np.random.default_rng(seed)
    m1 = int(rng.integers(1, n + 1))
    m2 = int(rng.integers(1, n + 3))
    H, A, C, D = dense_problem(rng, n, m1, m2)
    K = make_kf_operator(SparseMat.from_dense(C), factored_f(H, A), D).to_dense()
    assert np.allclose(K, K.T, atol=1e-9 * np.abs(K).max())
    assert np.linalg.eigvalsh(0.5 * (K + K.T)).min() > 0.0


def test_pcg_identity_one_iteration(rng):
    x, rep = pcg(diag_operator(np.ones(5)), rng.standard_normal(5))
    assert rep.converged and rep.iterations == 1


def test_pcg_perfect_preconditioner():
    d = np.array([1.0, 2.0, 3.0])
    x, rep = pcg(diag_operator(d), np.ones(3), precond.build_pl(d))
    assert rep.iterations == 1
    np.testing.assert_allclose(x, 1.0 / d)


def test_pcg_zero_rhs():
    x, rep = pcg(diag_operator(np.ones(3)), np.zeros(3))
    assert rep.converged and rep.iterations == 0
    np.testing.assert_array_equal(x, 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_pcg_pl_one_iteration_when_m1_equals_n(seed):
    # K_F = D exactly here; a strongly graded D leaves an F-solve roundoff
    # floor near 1e-10, so the check uses D = I
    p = gen_syqp(SyQpSpec(n=6, m1=6, seed=seed))
    D = np.ones(p.m2)
    fF = ldlt_factor(build_f(p))
    _, rep = pcg(make_kf_operator(p.C, fF, D), np.ones(p.m2), precond.build_pl(D), tol=1e-10)
    assert rep.converged and rep.iterations <= 1


def test_pcg_residual_meets_tolerance(rng):
    B = rng.standard_normal((12, 12))
    K = B @ B.T + np.eye(12)
    b = rng.standard_normal(12)
    op = matrix_operator(SparseMat.from_dense(K, SYMMETRIC_LOWER))
    x, rep = pcg(op, b, tol=1e-9)
    assert rep.converged
    assert np.linalg.norm(b - K @ x) <= 1e-9 * np.linalg.norm(b) * (1 + 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**31 - 1))
def test_pcg_energy_decreases(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    K = B @ B.T + 0.1 * np.eye(n)
    op = matrix_operator(SparseMat.from_dense(K, SYMMETRIC_LOWER))
    d = np.diag(K).copy()
    x, rep = pcg(op, rng.standard_normal(n), precond.build_pl(d), tol=1e-12)
    e = np.array(rep.energy_history)
    assert np.all(np.diff(e) <= 1e-12 * np.abs(e).max())


def test_pcg_charges_operator_and_precond_per_iteration(rng):
    H, A, C, D = dense_problem(rng, 6, 2, 6)
    fF = factored_f(H, A)
    Cs = SparseMat.from_dense(C)
    led = CostLedger()
    _, rep = pcg(make_kf_operator(Cs, fF, D), np.ones(6), precond.build_pl(D), tol=1e-10, ledger=led)
    assert led.trsv == rep.iterations * 2 * fF.trsv_cost
    assert led.spmv == rep.iterations * 4 * Cs.nnz()


def test_pcg_preconditioned_norm_option(rng):
    B = rng.standard_normal((8, 8))
    K = B @ B.T + np.eye(8)
    op = matrix_operator(SparseMat.from_dense(K, SYMMETRIC_LOWER))
    _, rep = pcg(op, np.ones(8), precond.build_pl(np.diag(K)), tol=1e-8, norm="preconditioned")
    assert rep.converged
    with pytest.raises(ValueError):
        pcg(op, np.ones(8), norm="energy")


def test_pcg_detects_indefinite():
    _, rep = pcg(diag_operator(np.array([1.0, -1.0])), np.array([0.0, 1.0]))
    assert rep.breakdown == "indefinite" and not rep.converged


def test_pcg_maxit():
    d = np.linspace(1, 100, 30)
    _, rep = pcg(diag_operator(d), np.ones(30), tol=1e-14, maxit=3)
    assert rep.iterations == 3 and not rep.converged


def test_bicgstab_identity():
    _, rep = bicgstab(diag_operator(np.ones(4)), np.arange(1.0, 5.0))
    assert rep.converged and rep.iterations == 1


def test_bicgstab_spd_diagonal():
    d = np.array([1.0, 3.0, 7.0, 10.0])
    x, rep = bicgstab(diag_operator(d), np.ones(4), tol=1e-10)
    assert rep.converged and rep.iterations <= 4
    np.testing.assert_allclose(x, 1.0 / d, rtol=1e-9)


def test_bicgstab_two_applies_per_iteration(rng):
    B = rng.standard_normal((10, 10)) + 5 * np.eye(10)
    M = SparseMat.from_dense(B)
    led = CostLedger()
    _, rep = bicgstab(matrix_operator(M), np.ones(10), tol=1e-10, ledger=led)
    assert led.spmv == rep.iterations * 2 * 2 * M.nnz()


def test_bicgstab_constraint_preconditioned_kc(syqp_8_4):
    p = syqp_8_4
    D = np.ones(p.m2)
    G = build_g(p, D)
    K = sym_block(G, p.A)
    P = precond.build_pcp(G, p.A)
    b = np.arange(1.0, K.nrows + 1)
    x, rep = bicgstab(matrix_operator(K), b, P, tol=1e-8)
    assert rep.converged and rep.iterations <= 20
    ref = np.linalg.solve(K.to_dense(), b)
    np.testing.assert_allclose(x, ref, rtol=1e-6, atol=1e-8 * np.abs(ref).max())


def test_bicgstab_zero_rhs():
    x, rep = bicgstab(diag_operator(np.ones(2)), np.zeros(2))
    assert rep.converged and rep.iterations == 0
