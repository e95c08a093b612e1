"""Problem sources: the seeded synthetic SyQP family and QPS files.

Random streams come from numpy's Philox (4x64, counter based) generator
seeded through ``SeedSequence((seed, n, ..., tag))``, so each matrix has an
independent stream and the Hessian depends only on ``(seed, n)``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .ipm import ProblemScopeError, QpProblem
from .sparse import GENERAL, SYMMETRIC_LOWER, SparseMat, spmv

_TAGS = {"H": 1, "A": 2, "b": 3, "c": 4}
SPD_SHIFT = 1e-8
MAX_RANK_RETRIES = 8
QPS_NAME_WIDTH = 8


class GenerationError(RuntimeError):
    pass


class ParseError(ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True)
class SyQpSpec:
    n: int
    m1: int
    block_size: int = 4
    band_width: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.block_size < 1:
            raise ValueError("n and block_size must be positive")
        if not 1 <= self.m1 <= self.n:
            raise ValueError(f"need 1 <= m1 <= n, got m1={self.m1}, n={self.n}")
        if self.band_width is not None and self.band_width < 1:
            raise ValueError("band_width must be positive")

    @property
    def width(self):
        return self.band_width if self.band_width is not None else max(2, self.n // 16)

    @property
    def name(self):
        return f"syqp-n{self.n}-m{self.m1}-s{self.seed}"

    @classmethod
    def parse(cls, text):
        """Build from ``"n=8,m1=4,seed=1"`` style text."""
        kw = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, sep, val = part.partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {part!r}")
            key = {"bw": "band_width", "bs": "block_size"}.get(key.strip(), key.strip())
            kw[key] = int(val)
        return cls(**kw)


def _syqp_hessian(spec):
    n, bs = spec.n, spec.block_size
    rng = _rng(spec.seed, n, bs, _TAGS["H"])
    rows, cols, vals = [], [], []
    for start in range(0, n, bs):
        k = min(bs, n - start)
        M = rng.random((k, k))
        B = M.T @ M
        B[np.diag_indices(k)] += SPD_SHIFT * np.trace(B) / k
        i, j = np.tril_indices(k)
        rows.append(i + start)
        cols.append(j + start)
        vals.append(B[i, j])
    return SparseMat.from_coo(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), SYMMETRIC_LOWER)


def _band_pattern(n, m1, width, offset):
    rows, cols = [], []
    for i in range(m1):
        center = ((i * n) // m1 + offset) % n
        lo, hi = max(0, center - width), min(n, center + width + 1)
        rows.append(np.full(hi - lo, i))
        cols.append(np.arange(lo, hi))
    return np.concatenate(rows), np.concatenate(cols)


def gen_syqp(spec):
    """Synthetic ``SyQP^n_{m1}``: block-diagonal SPD ``H``, banded ``A``, ``C = I``, ``d = 0``.

    ``b = A x0`` for a random ``x0 > 0`` so the problem is feasible.

    Raises:
        GenerationError: ``A`` stays rank deficient after all band shifts.
    """
    n, m1 = spec.n, spec.m1
    H = _syqp_hessian(spec)
    rng = _rng(spec.seed, n, m1, _TAGS["A"])
    for offset in range(MAX_RANK_RETRIES):
        r, c = _band_pattern(n, m1, spec.width, offset)
        A = SparseMat.from_coo(m1, n, r, c, rng.random(r.size))
        if np.linalg.matrix_rank(A.to_dense()) == m1:
            break
    else:
        raise GenerationError(f"A stayed rank deficient after {MAX_RANK_RETRIES} band shifts")
    x0 = _rng(spec.seed, n, m1, _TAGS["b"]).random(n)
    c = _rng(spec.seed, n, m1, _TAGS["c"]).random(n)
    return QpProblem(H, c, A, spmv(A, x0), SparseMat.identity(n), np.zeros(n), name=spec.name)


def syqp_grid(n, m1_values, seed=0, **kw):
    return [gen_syqp(SyQpSpec(n, m1, seed=seed, **kw)) for m1 in m1_values]


@dataclass
class QpsFile:
    """Raw records of a QPS file, before canonicalization."""

    name: str = ""
    rows: list = field(default_factory=list)  # (name, type)
    columns: list = field(default_factory=list)
    entries: dict = field(default_factory=dict)  # (row, col) -> value
    rhs: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)  # col -> [lo, hi]
    fixed: dict = field(default_factory=dict)
    quad: dict = field(default_factory=dict)  # (i, j) with i >= j -> value
    objective: str | None = None
    obj_constant: float = 0.0


_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "QUADOBJ", "QMATRIX", "ENDATA", "OBJSENSE"}


def _number(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(lineno, f"expected a number, got {tok!r}") from None


def _pairs(tokens, lineno):
    if len(tokens) not in (2, 4):
        raise ParseError(lineno, f"expected 1 or 2 name/value pairs, got {len(tokens)} fields")
    return [(tokens[k], _number(tokens[k + 1], lineno)) for k in range(0, len(tokens), 2)]


def read_qps(text):
    """Parse whitespace-delimited QPS text into a :class:`QpsFile`."""
    if isinstance(text, bytes):
        text = text.decode("ascii")
    q = QpsFile()
    row_type, col_index = {}, {}
    section = None
    saw_end = False
    quad_seen = set()

    def col_of(name, lineno):
        if name not in col_index:
            raise ParseError(lineno, f"undeclared column {name!r}")
        return col_index[name]

    def row_of(name, lineno):
        if name not in row_type:
            raise ParseError(lineno, f"undeclared row {name!r}")
        return name

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            head = tok[0].upper()
            if head not in _SECTIONS:
                raise ParseError(lineno, f"unknown section {tok[0]!r}")
            if saw_end:
                raise ParseError(lineno, "content after ENDATA")
            section = head
            if head == "NAME":
                q.name = tok[1] if len(tok) > 1 else ""
            elif head == "ENDATA":
                saw_end = True
            elif head == "OBJSENSE" and len(tok) > 1 and tok[1].upper() not in ("MIN", "MINIMIZE"):
                raise ParseError(lineno, "only minimization is supported")
            continue
        if section == "ROWS":
            if len(tok) != 2 or tok[0].upper() not in ("N", "E", "L", "G"):
                raise ParseError(lineno, f"bad row record {raw.strip()!r}")
            kind, name = tok[0].upper(), tok[1]
            if name in row_type:
                raise ParseError(lineno, f"duplicate row {name!r}")
            row_type[name] = kind
            if kind == "N":
                if q.objective is None:
                    q.objective = name
            else:
                q.rows.append((name, kind))
        elif section == "COLUMNS":
            if len(tok) >= 2 and tok[1] == "'MARKER'":
                raise ParseError(lineno, "integer markers are not supported")
            col = tok[0]
            if col not in col_index:
                col_index[col] = len(q.columns)
                q.columns.append(col)
            for row, val in _pairs(tok[1:], lineno):
                key = (row_of(row, lineno), col)
                if key in q.entries:
                    raise ParseError(lineno, f"duplicate entry ({row}, {col})")
                q.entries[key] = val
        elif section in ("RHS", "RANGES"):
            target = q.rhs if section == "RHS" else q.ranges
            body = tok[1:] if len(tok) in (3, 5) else tok
            for row, val in _pairs(body, lineno):
                row_of(row, lineno)
                if section == "RANGES" and row == q.objective:
                    raise ParseError(lineno, "range on the objective row")
                target[row] = val
        elif section == "BOUNDS":
            if len(tok) < 3:
                raise ParseError(lineno, f"bad bound record {raw.strip()!r}")
            kind = tok[0].upper()
            if kind in ("FR", "MI", "PL", "BV"):
                col, val = tok[-1] if len(tok) == 3 else tok[2], None
            else:
                if len(tok) != 4:
                    raise ParseError(lineno, f"bad bound record {raw.strip()!r}")
                col, val = tok[2], _number(tok[3], lineno)
            j = col_of(col, lineno)
            lo, hi = q.bounds.setdefault(j, [0.0, np.inf])
            if kind == "UP":
                hi = val
                if val < 0.0 and lo == 0.0:
                    lo = -np.inf
            elif kind == "LO":
                lo = val
            elif kind == "FX":
                q.fixed[j] = val
            elif kind == "FR":
                lo, hi = -np.inf, np.inf
            elif kind == "MI":
                lo = -np.inf
            elif kind == "PL":
                hi = np.inf
            else:
                raise ParseError(lineno, f"unsupported bound type {kind!r}")
            q.bounds[j] = [lo, hi]
        elif section in ("QUADOBJ", "QMATRIX"):
            if len(tok) != 3:
                raise ParseError(lineno, f"bad quadratic record {raw.strip()!r}")
            i, j = col_of(tok[0], lineno), col_of(tok[1], lineno)
            val = _number(tok[2], lineno)
            ordered = (i, j) if section == "QMATRIX" else (max(i, j), min(i, j))
            if ordered in quad_seen:
                raise ParseError(lineno, f"duplicate quadratic entry ({tok[0]}, {tok[1]})")
            quad_seen.add(ordered)
            key = (max(i, j), min(i, j))
            # QMATRIX lists both triangles, so each off-diagonal is seen twice.
            share = 0.5 if section == "QMATRIX" and i != j else 1.0
            q.quad[key] = q.quad.get(key, 0.0) + share * val
        else:
            raise ParseError(lineno, "data record outside a section")
    if not saw_end:
        raise ParseError(lineno if text else 0, "missing ENDATA")
    if q.objective is None:
        raise ParseError(0, "no objective (N) row")
    if q.objective in q.rhs:
        q.obj_constant = -q.rhs.pop(q.objective)
    return q


def _range_interval(kind, rhs, r):
    if kind == "E":
        return (rhs, rhs + r) if r >= 0 else (rhs + r, rhs)
    if kind == "G":
        return rhs, rhs + abs(r)
    return rhs - abs(r), rhs


def to_problem(q):
    """Canonical form ``min x'Hx/2 + c'x, A x = b, C x >= d``.

    E rows and fixed variables go to ``(A, b)``. G rows keep their sign, L rows
    are negated, ranged rows become a pair, and finite variable bounds become
    identity rows. The default bound is ``x >= 0``.
    """
    n = len(q.columns)
    col_index = {c: j for j, c in enumerate(q.columns)}
    c = np.zeros(n)
    constraint_rows = dict(q.rows)
    row_entries = {}
    for (row, col), val in q.entries.items():
        j = col_index[col]
        if row == q.objective:
            c[j] += val
        elif row in constraint_rows:
            row_entries.setdefault(row, []).append((j, val))
    eq_rows, eq_vals, eq_rhs, eq_names = [], [], [], []
    in_rows, in_vals, in_rhs, in_names = [], [], [], []

    def push(rows, vals, names, entries, sign, name):
        k = len(names)
        for j, v in entries:
            rows.append((k, j))
            vals.append(sign * v)
        names.append(name)

    for name, kind in q.rows:
        ent = sorted(row_entries.get(name, []))
        rhs = q.rhs.get(name, 0.0)
        if name in q.ranges:
            lo, hi = _range_interval(kind, rhs, q.ranges[name])
            push(in_rows, in_vals, in_names, ent, 1.0, name + ".lo")
            in_rhs.append(lo)
            push(in_rows, in_vals, in_names, ent, -1.0, name + ".hi")
            in_rhs.append(-hi)
        elif kind == "E":
            push(eq_rows, eq_vals, eq_names, ent, 1.0, name)
            eq_rhs.append(rhs)
        elif kind == "G":
            push(in_rows, in_vals, in_names, ent, 1.0, name)
            in_rhs.append(rhs)
        else:
            push(in_rows, in_vals, in_names, ent, -1.0, name)
            in_rhs.append(-rhs)
    for j, col in enumerate(q.columns):
        if j in q.fixed:
            push(eq_rows, eq_vals, eq_names, [(j, 1.0)], 1.0, col + ".fx")
            eq_rhs.append(q.fixed[j])
            continue
        lo, hi = q.bounds.get(j, [0.0, np.inf])
        if np.isfinite(lo):
            push(in_rows, in_vals, in_names, [(j, 1.0)], 1.0, col + ".lb")
            in_rhs.append(lo)
        if np.isfinite(hi):
            push(in_rows, in_vals, in_names, [(j, 1.0)], -1.0, col + ".ub")
            in_rhs.append(-hi)

    def mat(rows, vals, m):
        r = np.array([k for k, _ in rows], dtype=np.int64)
        cc = np.array([j for _, j in rows], dtype=np.int64)
        return SparseMat.from_coo(m, n, r, cc, np.array(vals, dtype=np.float64))

    if q.quad:
        keys = sorted(q.quad)
        qi = np.array([k[0] for k in keys], dtype=np.int64)
        qj = np.array([k[1] for k in keys], dtype=np.int64)
        H = SparseMat.from_coo(n, n, qi, qj, np.array([q.quad[k] for k in keys]), SYMMETRIC_LOWER)
    else:
        H = SparseMat.zeros(n, n, SYMMETRIC_LOWER)
    if not eq_names:
        raise ProblemScopeError(f"{q.name or 'problem'}: no equality constraints (m1 = 0); unsupported")
    if not in_names:
        raise ProblemScopeError(f"{q.name or 'problem'}: no inequality constraints or bounds (m2 = 0); unsupported")
    return QpProblem(
        H,
        c,
        mat(eq_rows, eq_vals, len(eq_names)),
        np.array(eq_rhs),
        mat(in_rows, in_vals, len(in_names)),
        np.array(in_rhs),
        name=q.name,
        obj_constant=q.obj_constant,
        col_names=tuple(q.columns),
        eq_names=tuple(eq_names),
        ineq_names=tuple(in_names),
    )


def parse_qps(text):
    """Parse QPS text straight to a :class:`QpProblem`.

    Raises:
        ParseError: malformed input, with the offending line number.
        ProblemScopeError: the canonical form has ``m1 = 0`` or ``m2 = 0``.
    """
    return to_problem(read_qps(text))


def short_names(names, prefix, width=QPS_NAME_WIDTH):
    """Deterministic names of at most ``width`` characters, unique in order.

    Collisions after truncation get a ``~k`` suffix.
    """
    out, used = [], set()
    for name in names:
        cand = "".join(name.split())[:width] or prefix
        k = 1
        while cand in used:
            suffix = f"~{k}"
            cand = "".join(name.split())[: width - len(suffix)] + suffix
            k += 1
        used.add(cand)
        out.append(cand)
    return out


def _fmt(v):
    return repr(float(v))


def write_qps(p):
    """Serialize a canonical problem to QPS text.

    Equalities become E rows and inequalities G rows, and every column is
    declared free, so ``parse_qps(write_qps(p))`` reproduces ``p``.
    """
    if p.m2 == 0:
        raise ProblemScopeError("problems without inequality rows cannot be written")
    cols = short_names(p.col_names or [f"x{j}" for j in range(p.n)], "x")
    rows = short_names(
        ["obj"] + list(p.eq_names or [f"e{i}" for i in range(p.m1)]) + list(p.ineq_names or [f"g{i}" for i in range(p.m2)]),
        "r",
    )
    obj, eqs, ins = rows[0], rows[1:p.m1 + 1], rows[p.m1 + 1:]
    lines = [f"NAME {p.name or 'QP'}", "ROWS", f" N {obj}"]
    lines += [f" E {r}" for r in eqs]
    lines += [f" G {r}" for r in ins]
    lines.append("COLUMNS")
    A, C = p.A, p.C
    for j in range(p.n):
        lines.append(f" {cols[j]} {obj} {_fmt(p.c[j])}")
        for M, names in ((A, eqs), (C, ins)):
            lo, hi = M.col_ptr[j], M.col_ptr[j + 1]
            for i, v in zip(M.row_idx[lo:hi], M.values[lo:hi]):
                lines.append(f" {cols[j]} {names[i]} {_fmt(v)}")
    lines.append("RHS")
    if p.obj_constant:
        lines.append(f" rhs {obj} {_fmt(-p.obj_constant)}")
    for names, vec in ((eqs, p.b), (ins, p.d)):
        lines += [f" rhs {names[i]} {_fmt(v)}" for i, v in enumerate(vec) if v != 0.0]
    lines.append("BOUNDS")
    lines += [f" FR bnd {cols[j]}" for j in range(p.n)]
    if p.H.nnz():
        lines.append("QUADOBJ")
        r, cc, v = p.H.coo()
        order = np.lexsort((r, cc))
        lines += [f" {cols[cc[k]]} {cols[r[k]]} {_fmt(v[k])}" for k in order]
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def manifest(p):
    """JSON-ready record ``{name, n, m1, m2, nnz}``."""
    return p.manifest()


def write_manifest(path, problems):
    with open(path, "w") as fh:
        json.dump([manifest(p) for p in problems], fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_qps(path):
    with open(path, "rb") as fh:
        return parse_qps(fh.read())
