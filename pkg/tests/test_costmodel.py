import json

import numpy as np
import pytest

from sfipm.costmodel import (
    DENSE_EXEMPT,
    KernelCosts,
    c_rhs,
    kernel_costs,
    predict_variant,
    reconcile,
    reconcile_result,
)
from sfipm.factor import symbolic_cholesky
from sfipm.ipm import VARIANTS, IpmConfig, solve_qp
from sfipm.ledger import CostLedger
from sfipm.problems import SyQpSpec, gen_syqp
from sfipm.sparse import SYMMETRIC_LOWER, SparseMat

# distinct values so every term of a formula is identifiable
HAND = KernelCosts(
    {
        "spmv_H": 3, "spmv_A": 5, "spmv_C": 7, "spmv_K_C": 11,
        "spmm_CtDC": 13, "spmm_AtDWA": 17, "spmm_CDHCt": 19, "norm_G": 23,
        "fact_F": 29, "trsv_F": 31, "fact_K_C": 37, "trsv_K_C": 41,
        "fact_P_CP": 43, "trsv_P_CP": 47, "fact_P_RG": 53, "trsv_P_RG": 59,
        "fact_P_H": 61, "trsv_P_H": 67,
    }
)


def test_diagonal_kernel_costs():
    info = symbolic_cholesky(SparseMat.identity(7, symmetry=SYMMETRIC_LOWER))
    assert (info.fact_cost, info.trsv_cost) == (7, 14)


def test_tridiagonal_kernel_costs():
    T = SparseMat.from_dense(2 * np.eye(5) - np.eye(5, k=-1), SYMMETRIC_LOWER)
    info = symbolic_cholesky(T)
    assert (info.fact_cost, info.trsv_cost) == (17, 18)


def test_identity_c_spmm_cost():
    kc = kernel_costs(gen_syqp(SyQpSpec(n=8, m1=4)))
    assert kc["spmm_CDHCt"] == 8
    assert kc["spmm_CtDC"] == 8
    assert kc["spmv_C"] == 16


def test_c_rhs():
    assert c_rhs(HAND, 2) == 2 * (3 + 10 + 14)


def test_pl_kf_setup_only():
    pred = predict_variant("pl-kf", HAND, 0)
    assert pred.total == HAND["fact_F"]


def test_d_kc_single_iteration():
    pred = predict_variant("d-kc", HAND, 1)
    assert pred.total == 37 + 2 * 41 + 2 * 7 + 13 + c_rhs(HAND, 1)


def test_ph_kf_hand_formula():
    pred = predict_variant("ph-kf", HAND, 2, [3, 4])
    N, S = 2, 7
    expected = (
        29 + N * 61  # F once, P_H every iteration
        + 2 * (2 * N + S) * 31 + 2 * S * 67  # F solves and P_H solves
        + c_rhs(HAND, N) + 2 * (N + S) * 7  # residuals, C products
        + 19  # T built once
    )
    assert pred.total == expected
    assert pred.n_kr_total == 7


def test_pl_kf_paper_total():
    N, S = 3, 10
    pred = predict_variant("pl-kf", HAND, N, S)
    assert pred.total == 29 + N * (4 * 31 + 2 * 7) + 2 * S * 31 + 2 * S * 7 + c_rhs(HAND, N)


def test_rg_kc_norm_term():
    pred = predict_variant("rg-kc", HAND, 4, 6)
    assert pred.components["norm"] == 4 * 23
    assert pred.components["spmm"] == 4 * (13 + 17)


def test_u_kf_is_pl_kf_without_preconditioner_terms():
    # P_L applies are free, so the two formulas coincide
    assert predict_variant("u-kf", HAND, 5, 9).components == predict_variant("pl-kf", HAND, 5, 9).components


def test_per_iteration_counts_are_summed():
    assert predict_variant("cp-kc", HAND, 3, [1, 2, 3]).total == predict_variant("cp-kc", HAND, 3, 6).total


def test_unknown_variant():
    with pytest.raises(ValueError):
        predict_variant("lu-kc", HAND, 1)


@pytest.fixture(scope="module")
def small():
    return gen_syqp(SyQpSpec(n=8, m1=4, seed=3))


@pytest.mark.parametrize("variant", VARIANTS)
def test_reconcile_sparse_exact(small, variant):
    res = solve_qp(small, IpmConfig(strategy=variant, consistent_iterates=True, krylov_tol=1e-8))
    pred, report = reconcile_result(small, res, variant)
    assert report.ok, report.to_csv()
    assert all(r.deviation == 0.0 for r in report.rows)
    assert pred.components["fact"] == res.ledger.fact


def test_reconcile_dense_backend_exempts_factor_pattern(small):
    res = solve_qp(small, IpmConfig(strategy="pl-kf", backend="dense-bk", consistent_iterates=True))
    _, report = reconcile_result(small, res, "pl-kf", backend="dense-bk")
    assert report.ok
    exempt = {r.kernel for r in report.rows if r.exempt}
    assert exempt == {"fact", "trsv"}
    assert all(r.exempt == DENSE_EXEMPT for r in report.rows if r.exempt)
    assert all(r.deviation == 0.0 for r in report.rows if not r.exempt)


def test_reconcile_flags_mismatch():
    pred = predict_variant("d-kc", HAND, 1)
    led = CostLedger(**pred.components)
    led.spmv += 1
    report = reconcile(pred, led)
    assert not report.ok
    assert [r.kernel for r in report.failures()] == ["spmv"]


def test_report_serialization():
    pred = predict_variant("pl-kf", HAND, 1, 2)
    report = reconcile(pred, CostLedger(**pred.components))
    rows = json.loads(report.to_json())
    assert {r["kernel"] for r in rows} == {"fact", "trsv", "spmv", "spmm", "norm"}
    assert report.to_csv().splitlines()[0] == "variant,kernel,predicted,measured,deviation,exempt"
