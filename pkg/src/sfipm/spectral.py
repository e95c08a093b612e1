"""Dense spectral diagnostics for the reduced KKT matrices.

Everything here is dense and meant for desk-scale matrices (a few hundred
rows at most). Eigenvalues come from a cyclic Jacobi method with
round-robin ordering: each round applies ``n/2`` disjoint rotations at once,
so a sweep is ``n - 1`` vectorized rounds.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import krylov

UNIT_TOL = 1e-8
CLUSTER_RTOL = 1e-8


class EigenConvergenceError(RuntimeError):
    pass


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    source_dim: int
    cluster_report: list = field(default_factory=list)

    def __post_init__(self):
        self.eigenvalues = np.sort(np.asarray(self.eigenvalues, dtype=np.float64))
        if not self.cluster_report:
            self.cluster_report = clusters(self.eigenvalues)

    @property
    def n_clusters(self):
        return len(self.cluster_report)

    def unit_count(self, tol=UNIT_TOL):
        return int(np.sum(np.abs(self.eigenvalues - 1.0) <= tol))


def clusters(values, rtol=CLUSTER_RTOL):
    """Group sorted values; a new cluster starts where the gap exceeds ``rtol`` times the larger magnitude.

    Returns ``[(mean value, multiplicity), ...]``.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return []
    out, start = [], 0
    for i in range(1, v.size + 1):
        if i == v.size or v[i] - v[i - 1] > rtol * max(abs(v[i]), abs(v[i - 1])):
            out.append((float(v[start:i].mean()), i - start))
            start = i
    return out


def _round_robin(n):
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    ring = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(ring[i], ring[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        ring = [ring[0], ring[-1]] + ring[1:-1]
    return rounds


def _off_norm(A):
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def sym_eig(A, tol=1e-12, max_sweeps=60):
    """Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi.

    Returns ``(Spectrum, Q)`` with eigenvalues ascending and ``A ~ Q diag Q^T``.

    Raises:
        EigenConvergenceError: off-diagonal mass still above
            ``tol * ||A||_F`` after ``max_sweeps`` sweeps.
    """
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("sym_eig needs a square matrix")
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    Q = np.eye(n)
    scale = np.linalg.norm(A)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = _off_norm(A)
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            nz = apq != 0.0
            if not np.any(nz):
                continue
            theta = (A[q, q] - A[p, p]) / (2.0 * np.where(nz, apq, 1.0))
            # hypot avoids overflow of theta**2 when apq is tiny
            t = np.where(nz, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            t[nz & (theta == 0.0)] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            Qp, Qq = Q[:, p].copy(), Q[:, q].copy()
            Q[:, p] = Qp * c - Qq * s
            Q[:, q] = Qp * s + Qq * c
    else:
        off = _off_norm(A)
        if off > tol * scale:
            raise EigenConvergenceError(f"off-diagonal norm {off:.3e} after {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return Spectrum(w[order], n), Q[:, order]


def inv_sqrt(P):
    """``P^{-1/2}`` of a dense SPD matrix.

    Raises:
        ValueError: ``P`` is not positive definite.
    """
    spec, Q = sym_eig(P)
    w = spec.eigenvalues
    if w.size and w[0] <= 0.0:
        raise ValueError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e})")
    return (Q / np.sqrt(w)) @ Q.T


def preconditioned_spectrum(K, P):
    """Spectrum of ``P^{-1/2} K P^{-1/2}``."""
    S = inv_sqrt(P)
    spec, _ = sym_eig(S @ np.asarray(K, dtype=np.float64) @ S)
    return spec


def condition_number(A):
    """Ratio of extreme eigenvalue magnitudes; ``inf`` when the smallest is below 1e-300."""
    spec, _ = sym_eig(A)
    mags = np.abs(spec.eigenvalues)
    if mags.size == 0:
        return 1.0
    lo = mags.min()
    return float("inf") if lo < 1e-300 else float(mags.max() / lo)


def projection_term(H, A):
    """``H_A = A^T (A H^{-1} A^T)^{-1} A``."""
    HiAt = np.linalg.solve(H, A.T)
    return A.T @ np.linalg.solve(A @ HiAt, A)


def dense_kf(H, A, C, D):
    """``K_F = D - [C 0] F^{-1} [C^T; 0]`` with ``F = [[-H, A^T], [A, 0]]``."""
    n, m1 = H.shape[0], A.shape[0]
    F = np.block([[-H, A.T], [A, np.zeros((m1, m1))]])
    rhs = np.vstack([C.T, np.zeros((m1, C.shape[0]))])
    return np.diag(D) - C @ np.linalg.solve(F, rhs)[:n]


def dense_kf_schur(H, A, C, D):
    """``K_F = D + C (H^{-1} - H^{-1} H_A H^{-1}) C^T``, the explicit SPD form."""
    Hi = np.linalg.inv(H)
    R = Hi - Hi @ projection_term(H, A) @ Hi
    return np.diag(D) + C @ R @ C.T


def dense_ph(H, C, D, mode="exact-h"):
    if mode == "exact-h":
        T = C @ np.linalg.solve(H, C.T)
    elif mode == "diag-h":
        T = (C / np.diag(H)) @ C.T
    else:
        raise ValueError(f"unknown P_H mode {mode!r}")
    return np.diag(D) + 0.5 * (T + T.T)


@dataclass
class RankReport:
    rank_projection: int
    rank_remainder: int
    nullspace_residual: float
    m1: int
    n: int
    h_norm: float

    @property
    def projection_ok(self):
        return self.rank_projection <= self.m1

    @property
    def remainder_ok(self):
        return self.rank_remainder <= self.n - self.m1

    def nullspace_ok(self, rtol=1e-9):
        return self.nullspace_residual <= rtol * self.h_norm

    @property
    def passed(self):
        return self.projection_ok and self.remainder_ok and self.nullspace_ok()


def check_rank_lemmas(H, A, tol=1e-10):
    """Numerical ranks of ``H_A`` and ``H - H_A`` and the nullspace residual.

    Both matrices lie between 0 and ``H`` in the Loewner order, so their
    eigenvalues are counted against ``tol * lambda_max(H)``. The columns of
    ``H^{-1} A^T`` should span the nullspace of ``H - H_A``.
    """
    H = np.asarray(H, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    HA = projection_term(H, A)
    rest = H - HA
    h_spec, _ = sym_eig(H)
    lam_max = float(np.max(np.abs(h_spec.eigenvalues)))
    thr = tol * lam_max
    r1 = int(np.sum(np.abs(sym_eig(HA)[0].eigenvalues) > thr))
    r2 = int(np.sum(np.abs(sym_eig(rest)[0].eigenvalues) > thr))
    null = float(np.linalg.norm(rest @ np.linalg.solve(H, A.T), 2))
    return RankReport(r1, r2, null, A.shape[0], H.shape[0], lam_max)


def random_instance(seed, n, m1, m2):
    """Seeded dense ``(H, A, C, D)``: SPD ``H``, full-rank Gaussian ``A``, Gaussian ``C``, ``D > 0``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), n, m1, m2])))
    M = rng.standard_normal((n, n))
    H = M.T @ M / n + np.eye(n)
    A = rng.standard_normal((m1, n))
    C = rng.standard_normal((m2, n))
    D = np.exp(rng.uniform(-1.0, 1.0, m2))
    return H, A, C, D


@dataclass
class TheoremCheck:
    kind: str
    n: int
    m1: int
    m2: int
    unit_count: int
    unit_bound: int
    n_clusters: int
    cluster_bound: int
    min_eig: float
    max_eig: float

    @property
    def passed(self):
        ok = self.unit_count >= self.unit_bound and self.n_clusters <= self.cluster_bound
        if self.kind == "low-dof":
            ok = ok and self.min_eig >= 1.0 - 1e-10
        return ok


def theorem_check(H, A, C, D, kind):
    """Unit multiplicity and cluster count of the P_L (``low-dof``) or exact P_H (``high-dof``) preconditioned K_F."""
    n, m1, m2 = H.shape[0], A.shape[0], C.shape[0]
    K = dense_kf(H, A, C, D)
    K = 0.5 * (K + K.T)
    if kind == "low-dof":
        P = np.diag(D)
        unit_bound, cluster_bound = max(0, m2 - (n - m1)), (n - m1) + 1
    elif kind == "high-dof":
        P = dense_ph(H, C, D, "exact-h")
        unit_bound, cluster_bound = max(0, m2 - m1), m1 + 1
    else:
        raise ValueError(f"unknown preconditioner kind {kind!r}")
    spec = preconditioned_spectrum(K, P)
    ev = spec.eigenvalues
    return TheoremCheck(kind, n, m1, m2, spec.unit_count(), unit_bound, spec.n_clusters, cluster_bound, float(ev[0]), float(ev[-1]))


def cg_audit(H, A, C, D, kind, tol=1e-12):
    """CG iterations on the dense ``K_F`` versus the cluster count of the preconditioned matrix.

    Returns ``(iterations, clusters)``.
    """
    K = dense_kf(H, A, C, D)
    K = 0.5 * (K + K.T)
    P = np.diag(D) if kind == "low-dof" else dense_ph(H, C, D, "exact-h")
    Pinv = np.linalg.inv(P)
    op = krylov.LinearOperator(K.shape[0], lambda v, ledger=None: K @ v)
    pre = krylov.LinearOperator(K.shape[0], lambda v, ledger=None: Pinv @ v)
    rhs = np.ones(K.shape[0])
    _, rep = krylov.pcg(op, rhs, pre, tol=tol)
    return rep.iterations, preconditioned_spectrum(K, P).n_clusters


def write_spectrum_csv(path, spectrum):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(spectrum.eigenvalues):
            w.writerow([i, repr(float(v))])
