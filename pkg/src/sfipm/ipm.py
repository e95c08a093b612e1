"""Primal-dual interior point method with pluggable KKT strategies.

Problem form::

    minimize    x^T H x / 2 + c^T x
    subject to  A x = b,   C x >= d

with slacks ``C x - s = d``, ``s >= 0``, multipliers ``lam`` (equalities)
and ``nu >= 0`` (inequalities). The Newton system is reduced either to the
augmented matrix ``K_C`` (four ``*-kc`` strategies) or, through the fixed
saddle-point block ``F = [[-H, A^T], [A, 0]]`` factored once, to the
inequality-constraint reduced matrix ``K_F`` (three ``*-kf`` strategies).
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import factor, krylov, precond
from .ledger import CostLedger
from .sparse import (
    SYMMETRIC_LOWER,
    SparseMat,
    add,
    add_diagonal,
    scale,
    spmm_BtDB,
    spmv,
    sym_block,
    two_norm_estimate,
)

VARIANTS = ("d-kc", "u-kc", "cp-kc", "rg-kc", "u-kf", "pl-kf", "ph-kf")
KC_VARIANTS = VARIANTS[:4]
KF_VARIANTS = VARIANTS[4:]
ITERATIVE_VARIANTS = VARIANTS[1:]


class ProblemScopeError(ValueError):
    """The problem falls outside the supported QP shape."""


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: SparseMat
    c: np.ndarray
    A: SparseMat
    b: np.ndarray
    C: SparseMat
    d: np.ndarray
    name: str = ""
    obj_constant: float = 0.0
    col_names: tuple | None = None
    eq_names: tuple | None = None
    ineq_names: tuple | None = None

    def __post_init__(self):
        for attr in ("c", "b", "d"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=np.float64).ravel())
        if not self.H.is_symmetric:
            object.__setattr__(self, "H", self.H.lower())
        n = self.H.nrows
        if self.c.shape != (n,):
            raise ValueError("c does not match H")
        if self.A.ncols != n or self.b.shape != (self.A.nrows,):
            raise ValueError("A, b do not conform")
        if self.C.ncols != n or self.d.shape != (self.C.nrows,):
            raise ValueError("C, d do not conform")
        if self.m1 == 0:
            raise ProblemScopeError("problems without equality constraints (m1 = 0) are not supported")
        if self.m2 == 0:
            raise ProblemScopeError("problems without inequality constraints (m2 = 0) are not supported")
        if self.m1 > n:
            raise ProblemScopeError(f"m1 = {self.m1} exceeds n = {n}")

    @property
    def n(self):
        return self.H.nrows

    @property
    def m1(self):
        return self.A.nrows

    @property
    def m2(self):
        return self.C.nrows

    def objective(self, x):
        return float(0.5 * x @ spmv(self.H, x) + self.c @ x + self.obj_constant)

    def equality_rank(self):
        return int(np.linalg.matrix_rank(self.A.to_dense()))

    def structurally_equal(self, other, rtol=0.0):
        """Same dimensions, patterns and (to ``rtol``) values; names ignored."""
        if (self.n, self.m1, self.m2) != (other.n, other.m1, other.m2):
            return False
        for a, b in ((self.H, other.H), (self.A, other.A), (self.C, other.C)):
            if not a.pattern_equal(b) or not np.allclose(a.values, b.values, rtol=rtol, atol=0.0):
                return False
        return all(
            np.allclose(u, v, rtol=rtol, atol=0.0) for u, v in ((self.c, other.c), (self.b, other.b), (self.d, other.d))
        )

    def manifest(self):
        return {
            "name": self.name,
            "n": self.n,
            "m1": self.m1,
            "m2": self.m2,
            "nnz": {"H": self.H.nnz(), "A": self.A.nnz(), "C": self.C.nnz()},
        }


@dataclass
class IpmConfig:
    strategy: str = "pl-kf"
    krylov_tol: float = 1e-3
    ipm_tol: float = 1e-8
    max_iters: int = 100
    sigma: float = 0.1
    tau_boundary: float = 0.995
    regularization_rho_scale: float = 1e-4
    consistent_iterates: bool = False
    backend: str = "sparse"
    ph_mode: str = "diag-h"
    krylov_maxit: int | None = None
    krylov_norm: str = "residual"
    record_conditioning: bool = False

    def __post_init__(self):
        if self.strategy not in VARIANTS:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(VARIANTS)}")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0.0 < self.tau_boundary < 1.0:
            raise ValueError("tau_boundary must lie in (0, 1)")


@dataclass
class IpmState:
    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    s: np.ndarray
    k: int = 0

    @property
    def mu(self):
        return float(self.s @ self.nu / self.s.size)

    @property
    def D(self):
        return self.s / self.nu

    def copy(self):
        return IpmState(self.x.copy(), self.lam.copy(), self.nu.copy(), self.s.copy(), self.k)


@dataclass
class Residuals:
    r_g: np.ndarray
    r_e: np.ndarray
    r_i: np.ndarray
    r_c: np.ndarray

    def r_a(self, st):
        return self.r_i + self.r_c / st.nu

    def aug_rhs(self, st):
        """Right-hand side of the first augmented system.

        Its first row is ``-H dx + A^T dlam + C^T dnu = r_g``, so the
        ``-[g; r_e; r_a]`` form below uses ``g = -r_g``.
        """
        return np.concatenate((self.r_g, -self.r_e, -self.r_a(st)))


@dataclass
class Direction:
    dx: np.ndarray
    dlam: np.ndarray
    dnu: np.ndarray
    ds: np.ndarray
    n_kr: int = 0
    report: krylov.KrylovReport | None = None

    def as_vector(self):
        return np.concatenate((self.dx, self.dlam, self.dnu))


@dataclass
class IpmResult:
    state: IpmState
    objective: float
    n_ipm_iters: int
    per_iter_krylov: list
    ledger: CostLedger
    status: str
    history: list = field(default_factory=list)
    regularization: float = 0.0
    message: str = ""

    def to_dict(self):
        return {
            "status": self.status,
            "objective": self.objective,
            "N_I": self.n_ipm_iters,
            "n_kr": list(self.per_iter_krylov),
            "regularization": self.regularization,
            "message": self.message,
            "ledger": self.ledger.to_dict(),
        }


def starting_point(p):
    x = np.zeros(p.n)
    s = np.maximum(1.0, np.abs(spmv(p.C, x) - p.d) + 1.0)
    return IpmState(x, np.zeros(p.m1), np.ones(p.m2), s)


def residuals(p, st, sigma_mu, ledger=None):
    """KKT residuals at ``st``.

    ``r_g = H x + c - A^T lam - C^T nu``, ``r_e = A x - b``,
    ``r_i = C x - s - d``, ``r_c = S V e - sigma_mu e``. Charges one product
    with ``H`` and two each with ``A`` and ``C``.
    """
    r_g = (
        spmv(p.H, st.x, ledger=ledger, label="H")
        + p.c
        - spmv(p.A, st.lam, transpose=True, ledger=ledger, label="A")
        - spmv(p.C, st.nu, transpose=True, ledger=ledger, label="C")
    )
    r_e = spmv(p.A, st.x, ledger=ledger, label="A") - p.b
    r_i = spmv(p.C, st.x, ledger=ledger, label="C") - st.s - p.d
    r_c = st.s * st.nu - sigma_mu
    return Residuals(r_g, r_e, r_i, r_c)


def build_g(p, D, ledger=None):
    """``G = H + C^T D^{-1} C``; charged ``c_spmm(C^T, D C)``."""
    return add(p.H, spmm_BtDB(p.C, 1.0 / D, ledger=ledger, label="Ct_Dinv_C"))


def build_kc(p, D, ledger=None):
    """Augmented matrix ``K_C = [[-(H + C^T D^{-1} C), A^T], [A, 0]]`` (lower storage)."""
    return sym_block(scale(build_g(p, D, ledger), -1.0), p.A)


def build_f(p):
    """Saddle-point block ``F = [[-H, A^T], [A, 0]]``."""
    return sym_block(scale(p.H, -1.0), p.A)


def first_augmented_matrix(p, D):
    """Scipy CSC form of ``K = [[-H, A^T, C^T], [A, 0, 0], [C, 0, diag(D)]]``."""
    H = p.H.to_scipy()
    A = p.A.to_scipy()
    C = p.C.to_scipy()
    return sp.bmat(
        [[-H, A.T, C.T], [A, None, None], [C, None, sp.diags(D)]], format="csc"
    )


def augmented_residual(p, st, res, dirn):
    """Relative residual of a direction in the first augmented system."""
    K = first_augmented_matrix(p, st.D)
    rhs = res.aug_rhs(st)
    nr = np.linalg.norm(rhs)
    r = K @ dirn.as_vector() - rhs
    return float(np.linalg.norm(r) / nr) if nr > 0 else float(np.linalg.norm(r))


def complementarity_residual(st, res, dirn):
    """``||S dnu + V ds + r_c||_inf``, relative to ``max(1, ||r_c||_inf)``."""
    r = st.s * dirn.dnu + st.nu * dirn.ds + res.r_c
    return float(np.max(np.abs(r)) / max(1.0, float(np.max(np.abs(res.r_c)))))


def direct_direction(p, st, res):
    """Reference direction from a sparse direct solve of the first augmented system (uncharged)."""
    K = first_augmented_matrix(p, st.D)
    rhs = res.aug_rhs(st)
    sol = spla.spsolve(K, rhs)
    n, m1 = p.n, p.m1
    dnu = sol[n + m1:]
    return Direction(sol[:n], sol[n:n + m1], dnu, -res.r_c / st.nu - st.D * dnu)


@dataclass
class StrategyContext:
    """Persistent data of a strategy across IPM iterations."""

    strategy: str
    problem: QpProblem
    backend: str = "sparse"
    F: SparseMat | None = None
    fF: factor.FactorHandle | None = None
    ph_base: precond.PhBase | None = None
    a_norm: float | None = None


def setup_strategy(p, cfg, ledger=None):
    """Setup phase: for ``*-kf`` strategies factor ``F`` once (and form ``T`` for ph-kf)."""
    ctx = StrategyContext(cfg.strategy, p, cfg.backend)
    if cfg.strategy in KF_VARIANTS:
        ctx.F = build_f(p)
        ctx.fF = factor.ldlt_factor(ctx.F, backend=cfg.backend, ledger=ledger, label="F")
        if cfg.strategy == "ph-kf":
            ctx.ph_base = precond.ph_setup(p.C, p.H, cfg.ph_mode, ledger)
    elif cfg.strategy == "rg-kc":
        ctx.a_norm = two_norm_estimate(p.A)
    return ctx


def _flip(v, n):
    """Apply ``diag(I, -I)`` to a stacked ``(x, lam)`` vector."""
    out = v.copy()
    out[n:] *= -1.0
    return out


def _kc_direction(p, st, res, cfg, ctx, ledger):
    n = p.n
    D = st.D
    r_a = res.r_a(st)
    G = build_g(p, D, ledger)
    r_u = -res.r_g - spmv(p.C, r_a / D, transpose=True, ledger=ledger, label="C")
    rhs = -np.concatenate((r_u, res.r_e))
    tol, maxit = cfg.krylov_tol, cfg.krylov_maxit
    report = None
    if cfg.strategy == "d-kc":
        K_C = sym_block(scale(G, -1.0), p.A)
        f = factor.ldlt_factor(K_C, backend=cfg.backend, ledger=ledger, label="K_C")
        u = factor.solve(f, rhs, ledger=ledger, label="K_C")
    elif cfg.strategy == "u-kc":
        K_C = sym_block(scale(G, -1.0), p.A)
        u, report = krylov.bicgstab(krylov.matrix_operator(K_C, "K_C"), rhs, None, tol, maxit, ledger)
    else:
        # [[G, A^T], [A, 0]] = -J K_C J with J = diag(I, -I): the preconditioners
        # are posed on the positive-definite-(1,1) form, so solve there and map back.
        K_t = sym_block(G, p.A)
        if cfg.strategy == "cp-kc":
            P = precond.build_pcp(G, p.A, ledger=ledger)
        else:
            P = precond.build_prg(G, p.A, a_norm=ctx.a_norm, ledger=ledger)
        y, report = krylov.bicgstab(krylov.matrix_operator(K_t, "K_C"), -_flip(rhs, n), P, tol, maxit, ledger)
        u = _flip(y, n)
    dx, dlam = u[:n], u[n:]
    dnu = -(r_a + spmv(p.C, dx, ledger=ledger, label="C")) / D
    ds = -res.r_c / st.nu - D * dnu
    return Direction(dx, dlam, dnu, ds, report.iterations if report else 0, report)


def _kf_direction(p, st, res, cfg, ctx, ledger):
    n = p.n
    D = st.D
    r_a = res.r_a(st)
    g = -res.r_g
    y = factor.solve(ctx.fF, np.concatenate((g, res.r_e)), ledger=ledger, label="F")
    r_nu = -r_a + spmv(p.C, y[:n], ledger=ledger, label="C")
    Kop = krylov.make_kf_operator(p.C, ctx.fF, D)
    if cfg.strategy == "pl-kf":
        P = precond.build_pl(D)
    elif cfg.strategy == "ph-kf":
        P = precond.build_ph(D, base=ctx.ph_base, ledger=ledger)
    else:
        P = None
    dnu, report = krylov.pcg(Kop, r_nu, P, cfg.krylov_tol, cfg.krylov_maxit, ledger, cfg.krylov_norm)
    rhs = -np.concatenate((g + spmv(p.C, dnu, transpose=True, ledger=ledger, label="C"), res.r_e))
    u = factor.solve(ctx.fF, rhs, ledger=ledger, label="F")
    ds = -res.r_c / st.nu - D * dnu
    return Direction(u[:n], u[n:], dnu, ds, report.iterations, report)


def newton_step(p, st, res, cfg, ctx, ledger=None):
    """Search direction for the configured strategy.

    Raises ``factor.FactorizationError`` or ``precond.InvalidPreconditioner``
    when the linear algebra fails.
    """
    if cfg.strategy in KC_VARIANTS:
        return _kc_direction(p, st, res, cfg, ctx, ledger)
    return _kf_direction(p, st, res, cfg, ctx, ledger)


def step_lengths(st, dnu, ds, tau):
    """Fraction-to-boundary primal (slack) and dual step lengths in (0, 1]."""

    def _max_step(v, dv):
        neg = dv < 0.0
        if not np.any(neg):
            return 1.0
        return float(min(1.0, tau * np.min(v[neg] / -dv[neg])))

    return _max_step(st.s, ds), _max_step(st.nu, dnu)


def regularize(p, rho_scale):
    """Return ``(problem, rho)``; adds ``rho I`` to ``H`` when it is not SPD."""
    try:
        factor.cholesky_factor(p.H)
        return p, 0.0
    except factor.FactorizationError:
        pass
    rho = rho_scale * two_norm_estimate(p.H)
    if rho == 0.0:
        rho = rho_scale
    return replace(p, H=add_diagonal(p.H, rho)), rho


def _converged(p, st, res, mu0, tol):
    def inf(v):
        return float(np.max(np.abs(v))) if v.size else 0.0

    return (
        st.mu <= tol * (1.0 + mu0)
        and inf(res.r_g) <= tol * (1.0 + inf(p.c))
        and inf(res.r_e) <= tol * (1.0 + inf(p.b))
        and inf(res.r_i) <= tol * (1.0 + inf(p.d))
    )


def solve_qp(p, cfg=None, ledger=None):
    """Run the interior point method.

    Only flops attributable to IPM iterations are charged: the residual
    evaluation that detects convergence is not part of an iteration and is
    left out of the ledger.
    """
    cfg = cfg or IpmConfig()
    ledger = ledger if ledger is not None else CostLedger()
    original = p
    p, rho = regularize(p, cfg.regularization_rho_scale)
    st = starting_point(p)
    mu0 = st.mu
    history = []
    per_iter = []
    status, message = "max-iters", ""
    try:
        ctx = setup_strategy(p, cfg, ledger)
    except (factor.FactorizationError, precond.InvalidPreconditioner) as exc:
        ctx, status, message = None, "linear-solve-failure", f"setup: {exc}"
    while ctx is not None:
        trial = CostLedger()
        res = residuals(p, st, cfg.sigma * st.mu, trial)
        if _converged(p, st, residuals(p, st, 0.0), mu0, cfg.ipm_tol):
            status = "optimal"
            break
        if st.k >= cfg.max_iters:
            break
        _absorb(ledger, trial)
        try:
            dirn = newton_step(p, st, res, cfg, ctx, ledger)
        except (factor.FactorizationError, precond.InvalidPreconditioner) as exc:
            status, message = "linear-solve-failure", f"iteration {st.k}: {exc}"
            break
        record = {"k": st.k, "mu": st.mu, "n_kr": dirn.n_kr}
        if dirn.report is not None:
            record["krylov_relres"] = dirn.report.final_relres
            record["krylov_converged"] = dirn.report.converged
            record["breakdown"] = dirn.report.breakdown
        if cfg.record_conditioning:
            record.update(_conditioning(p, st, ctx))
        if cfg.consistent_iterates:
            record["inexact_aug_relres"] = augmented_residual(p, st, res, dirn)
            record["inexact_comp_relres"] = complementarity_residual(st, res, dirn)
            exact = direct_direction(p, st, res)
            exact.n_kr, exact.report = dirn.n_kr, dirn.report
            dirn = exact
        if not all(np.all(np.isfinite(v)) for v in (dirn.dx, dirn.dlam, dirn.dnu, dirn.ds)):
            status, message = "linear-solve-failure", f"iteration {st.k}: non-finite direction"
            break
        a_p, a_d = step_lengths(st, dirn.dnu, dirn.ds, cfg.tau_boundary)
        record.update(alpha_primal=a_p, alpha_dual=a_d)
        history.append(record)
        per_iter.append(dirn.n_kr)
        ledger.n_kr_per_iter.append(dirn.n_kr)
        st = IpmState(
            st.x + a_p * dirn.dx,
            st.lam + a_d * dirn.dlam,
            st.nu + a_d * dirn.dnu,
            st.s + a_p * dirn.ds,
            st.k + 1,
        )
        ledger.n_ipm = st.k
    return IpmResult(
        state=st,
        objective=original.objective(st.x),
        n_ipm_iters=st.k,
        per_iter_krylov=per_iter,
        ledger=ledger,
        status=status,
        history=history,
        regularization=rho,
        message=message,
    )


def _absorb(ledger, other):
    for kernel, value in other.totals().items():
        if value:
            ledger.charge(kernel, value)
    ledger.by_label.update(other.by_label)


def _conditioning(p, st, ctx):
    from .spectral import condition_number

    D = st.D
    out = {"cond_K_C": condition_number(build_kc(p, D).to_dense())}
    if ctx.fF is not None:
        out["cond_K_F"] = condition_number(krylov.make_kf_operator(p.C, ctx.fF, D).to_dense())
    return out
