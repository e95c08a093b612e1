"""Preconditioned CG and BiCGSTAB over an explicit-ledger operator abstraction."""

from dataclasses import dataclass, field

import numpy as np

from . import factor
from .sparse import spmv


@dataclass(frozen=True)
class LinearOperator:
    """A square linear map ``v -> apply(v, ledger)``."""

    dim: int
    fn: object
    label: str = ""

    def apply(self, v, ledger=None):
        return self.fn(v, ledger)

    def to_dense(self):
        """Materialize column by column (diagnostics only, uncharged)."""
        return np.column_stack([self.apply(e) for e in np.eye(self.dim)]) if self.dim else np.zeros((0, 0))


@dataclass
class KrylovReport:
    iterations: int = 0
    converged: bool = False
    final_relres: float = 0.0
    breakdown: str | None = None
    relres_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)


def diag_operator(d):
    d = np.asarray(d, dtype=np.float64)
    return LinearOperator(d.size, lambda v, ledger=None: d * v, "diag")


def matrix_operator(M, label="matrix"):
    """Operator for a SparseMat; each apply charges ``c_spmv(M)``."""
    return LinearOperator(M.nrows, lambda v, ledger=None: spmv(M, v, ledger=ledger, label=label), label)


def make_kf_operator(C, fF, D):
    """Implicit ``K_F = D - [C 0] F^{-1} [C^T; 0]``.

    One apply costs a product with ``C^T``, a forward/backward solve with the
    factors of ``F`` and a product with ``C``.
    """
    d = D.values if hasattr(D, "values") else np.asarray(D, dtype=np.float64)
    n = C.ncols
    pad = fF.source_dim - n

    def apply(v, ledger=None):
        w = spmv(C, v, transpose=True, ledger=ledger, label="C")
        y = factor.solve(fF, np.concatenate((w, np.zeros(pad))), ledger=ledger, label="F")
        return d * v - spmv(C, y[:n], ledger=ledger, label="C")

    return LinearOperator(C.nrows, apply, "K_F")


def _apply_precond(precond, v, ledger):
    return v.copy() if precond is None else precond.apply(v, ledger)


def pcg(Kop, rhs, precond=None, tol=1e-8, maxit=None, ledger=None, norm="residual"):
    """Left-preconditioned conjugate gradient from a zero initial guess.

    With ``norm="residual"`` it stops when ``||rhs - K x|| <= tol * ||rhs||``
    and the iteration count equals the number of operator applies and of
    preconditioner applies. ``norm="preconditioned"`` measures residuals in
    the ``P^{-1}`` norm instead, which costs one extra preconditioner apply per
    solve. ``energy_history`` tracks ``x^T K x / 2 - rhs^T x``, which CG
    decreases monotonically.
    """
    if norm not in ("residual", "preconditioned"):
        raise ValueError(f"unknown norm {norm!r}")
    b = np.asarray(rhs, dtype=np.float64)
    maxit = 10 * Kop.dim if maxit is None else maxit
    x = np.zeros_like(b)
    report = KrylovReport()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.converged = True
        return x, report
    r = b.copy()
    z = _apply_precond(precond, r, ledger)
    rho = float(r @ z)
    p = z.copy()
    energy = 0.0
    scale = np.sqrt(rho) if norm == "preconditioned" else bnorm
    for it in range(1, maxit + 1):
        q = Kop.apply(p, ledger)
        report.iterations = it
        pq = float(p @ q)
        if not np.isfinite(pq) or pq <= 0.0:
            report.breakdown = "nonfinite" if not np.isfinite(pq) else "indefinite"
            break
        alpha = rho / pq
        x_new = x + alpha * p
        r_new = r - alpha * q
        if norm == "preconditioned":
            z = _apply_precond(precond, r_new, ledger)
            rho_new = float(r_new @ z)
            relres = np.sqrt(max(rho_new, 0.0)) / scale
        else:
            relres = np.linalg.norm(r_new) / scale
        if not np.isfinite(relres):
            report.breakdown = "nonfinite"
            break
        x, r = x_new, r_new
        energy -= 0.5 * alpha * rho
        report.energy_history.append(energy)
        report.relres_history.append(relres)
        report.final_relres = relres
        if relres <= tol:
            report.converged = True
            break
        if it == maxit:
            break
        if norm == "residual":
            z = _apply_precond(precond, r, ledger)
            rho_new = float(r @ z)
        p = z + (rho_new / rho) * p
        rho = rho_new
    if not report.relres_history:
        report.final_relres = 1.0
    return x, report


def bicgstab(Kop, rhs, precond=None, tol=1e-8, maxit=None, ledger=None):
    """Right-preconditioned BiCGSTAB from a zero initial guess.

    Every iteration performs exactly two operator applies and two
    preconditioner applies; convergence is tested on the unpreconditioned
    residual at the end of each full iteration.
    """
    b = np.asarray(rhs, dtype=np.float64)
    maxit = 10 * Kop.dim if maxit is None else maxit
    x = np.zeros_like(b)
    report = KrylovReport(final_relres=1.0)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.converged = True
        report.final_relres = 0.0
        return x, report
    r = b.copy()
    r_hat = b.copy()
    rho = alpha = omega = 1.0
    p = np.zeros_like(b)
    v = np.zeros_like(b)
    tiny = np.finfo(float).tiny
    for it in range(1, maxit + 1):
        rho_new = float(r_hat @ r)
        if abs(rho_new) <= tiny:
            report.breakdown = "rho"
            break
        if it == 1:
            p = r.copy()
        else:
            p = r + (rho_new / rho) * (alpha / omega) * (p - omega * v)
        p_hat = _apply_precond(precond, p, ledger)
        v = Kop.apply(p_hat, ledger)
        rv = float(r_hat @ v)
        alpha = rho_new / rv if rv != 0.0 else 0.0
        s = r - alpha * v
        s_hat = _apply_precond(precond, s, ledger)
        t = Kop.apply(s_hat, ledger)
        report.iterations = it
        tt = float(t @ t)
        omega = float(t @ s) / tt if tt > 0.0 else 0.0
        x_new = x + alpha * p_hat + omega * s_hat
        r_new = s - omega * t
        relres = np.linalg.norm(r_new) / bnorm
        if not np.isfinite(relres):
            report.breakdown = "nonfinite"
            break
        x, r = x_new, r_new
        report.relres_history.append(relres)
        report.final_relres = relres
        if relres <= tol:
            report.converged = True
            break
        if rv == 0.0:
            report.breakdown = "rho"
            break
        if omega == 0.0:
            report.breakdown = "omega"
            break
        rho = rho_new
    return x, report
