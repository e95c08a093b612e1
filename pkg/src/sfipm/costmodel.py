"""Analytic flop-cost model of the seven IPM variants.

Kernel costs follow the counting conventions of the instrumented kernels:
``c_spmv(B) = 2 nnz(B)`` with symmetric matrices counted by stored (lower)
entries, ``c_spmm`` sums squared row or column counts, ``c_fact`` sums
squared column counts of the symbolic Cholesky factor (diagonal included)
and ``c_trsv = 2 nnz(L)``. One linear solve with a factor costs
``2 c_trsv``. Vector operations and diagonal scalings are free.
"""

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .factor import symbolic_cholesky
from .ipm import VARIANTS, build_f, build_g
from .ledger import KERNELS
from .sparse import SYMMETRIC_LOWER, SparseMat, add, add_diagonal, spmm_BDBt, spmm_BtDB, sym_block


@dataclass(frozen=True)
class KernelCosts:
    """Per-problem kernel costs, keyed by short names such as ``spmv_C``."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        return dict(self.values)


def _row_sq(B):
    return int(np.sum(B.row_counts().astype(np.int64) ** 2))


def _col_sq(B):
    return int(np.sum(B.col_counts().astype(np.int64) ** 2))


def _fact_trsv(M):
    info = symbolic_cholesky(M)
    return info.fact_cost, info.trsv_cost


def variant_patterns(p):
    """Sparsity patterns of every matrix any variant factors or multiplies.

    Values are placeholders; only the (structural) patterns matter.
    """
    G = build_g(p, np.ones(p.m2))
    n, m1 = p.n, p.m1
    idx = np.arange(n)
    E = SparseMat.from_coo(n, n, idx, idx, np.ones(n), SYMMETRIC_LOWER)
    first = add(G, spmm_BtDB(p.A, np.ones(m1)))
    T = spmm_BDBt(p.C, np.ones(n))
    return {
        "H": p.H,
        "A": p.A,
        "C": p.C,
        "G": G,
        "F": build_f(p),
        "K_C": sym_block(G, p.A),
        "P_CP": sym_block(E, p.A),
        "P_RG": sym_block(first, SparseMat.zeros(m1, n), np.ones(m1)),
        "P_H": add_diagonal(T, np.ones(p.m2)),
    }


def kernel_costs(p):
    """Kernel cost table for problem ``p``."""
    pat = variant_patterns(p)
    v = {
        "spmv_H": 2 * pat["H"].nnz(),
        "spmv_A": 2 * pat["A"].nnz(),
        "spmv_C": 2 * pat["C"].nnz(),
        "spmv_K_C": 2 * pat["K_C"].nnz(),
        "spmm_CtDC": _row_sq(p.C),
        "spmm_AtDWA": _row_sq(p.A),
        "spmm_CDHCt": _col_sq(p.C),
        "norm_G": pat["G"].nnz(),
    }
    for name in ("F", "K_C", "P_CP", "P_RG", "P_H"):
        v[f"fact_{name}"], v[f"trsv_{name}"] = _fact_trsv(pat[name])
    return KernelCosts(v)


@dataclass
class CostPrediction:
    variant: str
    components: dict
    n_ipm: int = 0
    n_kr_total: int = 0

    @property
    def total(self):
        return sum(self.components.values())

    def to_dict(self):
        return {"variant": self.variant, **self.components, "total": self.total, "N_I": self.n_ipm, "n_kr_total": self.n_kr_total}


def c_rhs(kc, n_ipm):
    """Residual assembly over ``n_ipm`` iterations: one ``H``, two ``A`` and two ``C`` products each."""
    return n_ipm * (kc["spmv_H"] + 2 * kc["spmv_A"] + 2 * kc["spmv_C"])


def predict_variant(variant, kc, n_ipm, n_kr=0):
    """Predicted per-kernel flops of one ``solve_qp`` run.

    Args:
        variant: one of :data:`sfipm.ipm.VARIANTS`.
        kc: :class:`KernelCosts` of the problem.
        n_ipm: number of IPM iterations ``N_I``.
        n_kr: Krylov iterations, either a total or a per-iteration sequence
            (summed).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    N = int(n_ipm)
    S = int(np.sum(n_kr)) if np.ndim(n_kr) else int(n_kr)
    comp = dict.fromkeys(KERNELS, 0)
    comp["spmv"] = c_rhs(kc, N)
    if variant in ("d-kc", "u-kc", "cp-kc", "rg-kc"):
        comp["spmm"] = N * kc["spmm_CtDC"]
        comp["spmv"] += 2 * N * kc["spmv_C"]
        if variant == "d-kc":
            comp["fact"] = N * kc["fact_K_C"]
            comp["trsv"] = 2 * N * kc["trsv_K_C"]
        else:
            comp["spmv"] += 2 * S * kc["spmv_K_C"]
        if variant == "cp-kc":
            comp["fact"] = N * kc["fact_P_CP"]
            comp["trsv"] = 4 * S * kc["trsv_P_CP"]
        elif variant == "rg-kc":
            comp["fact"] = N * kc["fact_P_RG"]
            comp["trsv"] = 4 * S * kc["trsv_P_RG"]
            comp["spmm"] += N * kc["spmm_AtDWA"]
            comp["norm"] = N * kc["norm_G"]
    else:
        comp["fact"] = kc["fact_F"]
        comp["trsv"] = 2 * (2 * N + S) * kc["trsv_F"]
        comp["spmv"] += 2 * (N + S) * kc["spmv_C"]
        if variant == "ph-kf":
            comp["fact"] += N * kc["fact_P_H"]
            comp["trsv"] += 2 * S * kc["trsv_P_H"]
            comp["spmm"] = kc["spmm_CDHCt"]
    return CostPrediction(variant, comp, N, S)


@dataclass
class ReconcileRow:
    variant: str
    kernel: str
    predicted: int
    measured: int
    exempt: str = ""

    @property
    def deviation(self):
        if self.predicted == self.measured:
            return 0.0
        return (self.measured - self.predicted) / max(abs(self.predicted), 1)

    @property
    def ok(self):
        return bool(self.exempt) or self.predicted == self.measured


@dataclass
class ReconcileReport:
    rows: list = field(default_factory=list)

    @property
    def ok(self):
        return all(r.ok for r in self.rows)

    def failures(self):
        return [r for r in self.rows if not r.ok]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "kernel", "predicted", "measured", "deviation", "exempt"])
        for r in self.rows:
            w.writerow([r.variant, r.kernel, r.predicted, r.measured, f"{r.deviation:.6g}", r.exempt])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(
            [
                {"variant": r.variant, "kernel": r.kernel, "predicted": r.predicted, "measured": r.measured, "deviation": r.deviation, "exempt": r.exempt}
                for r in self.rows
            ],
            indent=2,
        )


DENSE_EXEMPT = "dense-backend-pattern"


def reconcile(pred, measured, backend="sparse"):
    """Compare a prediction with a measured :class:`~sfipm.ledger.CostLedger`.

    Every kernel must agree exactly. With the ``dense-bk`` backend the
    factor pattern is the dense one, so fact and trsv deviations are reported
    but exempt.
    """
    rows = []
    for k in KERNELS:
        exempt = DENSE_EXEMPT if backend == "dense-bk" and k in ("fact", "trsv") else ""
        rows.append(ReconcileRow(pred.variant, k, int(pred.components[k]), int(getattr(measured, k)), exempt))
    return ReconcileReport(rows)


def reconcile_result(p, result, variant, backend="sparse", kc=None):
    """Predict from the run's own ``N_I`` and ``n_kr`` and reconcile with its ledger."""
    if kc is None:
        if result.regularization:
            p = replace(p, H=add_diagonal(p.H, result.regularization))
        kc = kernel_costs(p)
    pred = predict_variant(variant, kc, result.n_ipm_iters, result.per_iter_krylov)
    return pred, reconcile(pred, result.ledger, backend)
