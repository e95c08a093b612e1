import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfipm import _fallback
from sfipm.factor import _upper_csc
from sfipm.sparse import SYMMETRIC_LOWER, SparseMat

compiled = pytest.importorskip("sfipm._kernels")


def random_spd(rng, n, density):
    M = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    M = M + M.T
    M += np.diag(np.abs(M).sum(axis=1) + 1.0)
    return SparseMat.from_dense(M, SYMMETRIC_LOWER)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.booleans(), st.integers(0, 2**31 - 1))
def test_spmv_csc_parity(m, n, transpose, seed):
    rng = np.random.default_rng(seed)
    B = SparseMat.from_dense(rng.standard_normal((m, n)) * (rng.random((m, n)) < 0.3))
    x = rng.standard_normal(m if transpose else n)
    args = (B.col_ptr, B.row_idx, B.values, x, m, transpose)
    np.testing.assert_allclose(compiled.spmv_csc(*args), _fallback.spmv_csc(*args), rtol=1e-14, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_spmv_sym_parity(n, seed):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, n, 0.3)
    x = rng.standard_normal(n)
    args = (S.col_ptr, S.row_idx, S.values, x)
    np.testing.assert_allclose(compiled.spmv_sym_lower(*args), _fallback.spmv_sym_lower(*args), rtol=1e-13, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_ldl_and_solve_parity(n, seed):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, n, 0.2)
    Ap, Ai, Ax = _upper_csc(S)
    pa, la = compiled.etree_upper(n, Ap, Ai)
    pb, lb = _fallback.etree_upper(n, Ap, Ai)
    np.testing.assert_array_equal(pa, pb)
    np.testing.assert_array_equal(la, lb)
    fa = compiled.ldl_numeric(n, Ap, Ai, Ax, np.asarray(pa), np.asarray(la), 0.0)
    fb = _fallback.ldl_numeric(n, Ap, Ai, Ax, pb, lb, 0.0)
    for a, b in zip(fa[:3], fb[:3]):
        np.testing.assert_allclose(np.asarray(a), b, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(np.asarray(fa[3]), fb[3], rtol=1e-12)
    assert fa[4] == fb[4] == -1
    Lp, Li, Lx = (np.asarray(v) for v in fb[:3])
    x = rng.standard_normal(n)
    for name in ("lsolve_unit", "ltsolve_unit"):
        xa, xb = x.copy(), x.copy()
        getattr(compiled, name)(Lp, Li, Lx, xa)
        getattr(_fallback, name)(Lp, Li, Lx, xb)
        np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-14)


def test_zero_pivot_flag_parity():
    S = SparseMat.from_dense(np.diag([1.0, 0.0, 2.0]), SYMMETRIC_LOWER, keep_zeros=True)
    Ap, Ai, Ax = _upper_csc(S)
    parent, lnz = _fallback.etree_upper(3, Ap, Ai)
    assert compiled.ldl_numeric(3, Ap, Ai, Ax, parent, lnz, 0.0)[4] == 1
    assert _fallback.ldl_numeric(3, Ap, Ai, Ax, parent, lnz, 0.0)[4] == 1


def test_etree_rejects_lower_pattern():
    with pytest.raises(ValueError):
        _fallback.etree_upper(2, np.array([0, 2, 2]), np.array([0, 1]))


def backend_name(env):
    code = "import sfipm; print(sfipm.BACKEND)"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.strip()


def test_backend_selection(monkeypatch):
    import os

    env = dict(os.environ)
    env.pop("SFIPM_PURE_PYTHON", None)
    assert backend_name(env) == compiled.NAME
    env["SFIPM_PURE_PYTHON"] = "1"
    assert backend_name(env) == "python"


def test_pure_python_solve_matches():
    import os

    code = (
        "from sfipm import *; from sfipm.problems import SyQpSpec, gen_syqp;"
        "r = solve_qp(gen_syqp(SyQpSpec(n=16, m1=8)), IpmConfig(strategy='ph-kf', consistent_iterates=True, krylov_tol=1e-8));"
        "print(repr(r.objective), r.status, r.n_ipm_iters)"
    )
    out = {}
    for flag in ("", "1"):
        env = dict(os.environ, SFIPM_PURE_PYTHON=flag)
        out[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    assert out[""][1:] == out["1"][1:]
    assert float(out[""][0]) == pytest.approx(float(out["1"][0]), rel=1e-10)
