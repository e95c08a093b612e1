"""Preconditioners for the reduced KKT systems.

``low-dof`` and ``high-dof`` act on the inequality-constraint reduced matrix
``K_F``; ``constraint`` and ``aug-lagrangian`` act on the saddle-point matrix
``[[G, A^T], [A, 0]]`` with ``G = H + C^T D^{-1} C`` positive definite.
"""

from dataclasses import dataclass

import numpy as np

from . import factor
from .sparse import (
    SYMMETRIC_LOWER,
    DiagMat,
    SparseMat,
    add,
    add_diagonal,
    frob_count,
    spmm_BDBt,
    spmm_BtDB,
    sym_block,
    two_norm_estimate,
)


class InvalidPreconditioner(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PrecondHandle:
    kind: str
    dim: int
    diag: np.ndarray | None = None
    fact: factor.FactorHandle | None = None
    matrix: SparseMat | None = None
    gamma: float | None = None

    def apply(self, v, ledger=None):
        """Return ``P^{-1} v``."""
        if self.kind == "none":
            return np.array(v, dtype=np.float64)
        if self.kind == "low-dof":
            return v / self.diag
        return factor.solve(self.fact, v, ledger=ledger)


def identity(dim):
    return PrecondHandle("none", dim)


def _diag_values(D):
    return D.values if isinstance(D, DiagMat) else np.asarray(D, dtype=np.float64)


def build_pl(D):
    """Low-d.o.f. preconditioner ``P_L = D``; applying it is a diagonal scaling."""
    d = _diag_values(D)
    if np.any(~(d > 0.0)):
        raise InvalidPreconditioner("P_L needs a positive diagonal")
    return PrecondHandle("low-dof", d.size, diag=d.copy())


@dataclass(frozen=True, eq=False)
class PhBase:
    """Iteration-independent part ``T`` of the high-d.o.f. preconditioner."""

    T: SparseMat
    mode: str


def ph_setup(C, H, mode="diag-h", ledger=None):
    """Form ``T = C diag(H)^{-1} C^T`` (or ``C H^{-1} C^T`` for ``exact-h``).

    The diag-h product is charged ``c_spmm(C, D_H C^T)``. The exact form is a
    dense desk-scale construction used for spectral checks and is not charged.
    """
    if mode == "diag-h":
        h = H.diagonal()
        if np.any(~(h > 0.0)):
            raise InvalidPreconditioner("diag(H) must be positive")
        return PhBase(spmm_BDBt(C, 1.0 / h, ledger=ledger, label="C_DH_Ct"), mode)
    if mode == "exact-h":
        Cd = C.to_dense()
        T = Cd @ np.linalg.solve(H.to_dense(), Cd.T)
        T = 0.5 * (T + T.T)
        return PhBase(SparseMat.from_dense(T, SYMMETRIC_LOWER, keep_zeros=True), mode)
    raise ValueError(f"unknown P_H mode {mode!r}")


def build_ph(D, C=None, H=None, mode="diag-h", base=None, ledger=None):
    """High-d.o.f. preconditioner ``P_H = D + T``, Cholesky-factored.

    Pass ``base`` from :func:`ph_setup` to reuse ``T`` across IPM iterations;
    each call charges one factorization of ``P_H``.
    """
    d = _diag_values(D)
    if np.any(~(d > 0.0)):
        raise InvalidPreconditioner("P_H needs a positive D")
    if base is None:
        base = ph_setup(C, H, mode, ledger)
    P = add_diagonal(base.T, d)
    return PrecondHandle("high-dof", d.size, fact=factor.cholesky_factor(P, ledger=ledger, label="P_H"), matrix=P)


def build_pcp(G, A, ledger=None):
    """Constraint preconditioner ``[[diag(G), A^T], [A, 0]]`` factored by LDL^T."""
    e = G.diagonal()
    if np.any(e == 0.0):
        raise InvalidPreconditioner("diag(G) must be nonzero")
    n = G.nrows
    idx = np.arange(n)
    E = SparseMat.from_coo(n, n, idx, idx, e, SYMMETRIC_LOWER)
    P = sym_block(E, A)
    return PrecondHandle("constraint", P.nrows, fact=factor.ldlt_factor(P, ledger=ledger, label="P_CP"), matrix=P)


def rg_gamma(G, A, a_norm=None, ledger=None):
    """``gamma = ||A||^2 / ||G||`` with 2-norm estimates; charges ``c_norm(G)``."""
    if a_norm is None:
        a_norm = two_norm_estimate(A)
    frob_count(G, ledger, label="G")
    g_norm = two_norm_estimate(G)
    if g_norm == 0.0 or a_norm == 0.0:
        raise InvalidPreconditioner("gamma undefined for a zero block")
    return a_norm**2 / g_norm


def build_prg(G, A, a_norm=None, ledger=None):
    """Augmented Lagrangian block-diagonal ``[[G + A^T W^{-1} A, 0], [0, W]]``, ``W = gamma I``."""
    if A.nrows == 0:
        raise InvalidPreconditioner("augmented Lagrangian preconditioner needs equality rows")
    gamma = rg_gamma(G, A, a_norm, ledger)
    m1 = A.nrows
    aug = spmm_BtDB(A, np.full(m1, 1.0 / gamma), ledger=ledger, label="At_DW_A")
    first = add(G, aug)
    P = sym_block(first, SparseMat.zeros(m1, G.ncols), np.full(m1, gamma))
    fact = factor.cholesky_factor(P, ledger=ledger, label="P_RG")
    return PrecondHandle("aug-lagrangian", P.nrows, fact=fact, matrix=P, gamma=gamma)
