from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfipm.ipm import ProblemScopeError
from sfipm.problems import (
    GenerationError,
    ParseError,
    SyQpSpec,
    gen_syqp,
    load_qps,
    parse_qps,
    read_qps,
    short_names,
    syqp_grid,
    write_manifest,
    write_qps,
)

FIXTURES = Path(__file__).parent / "fixtures"
GOOD = ["two_var_eq.qps", "mixed_rows.qps", "mixed_rows_qmatrix.qps", "long_names.qps"]
MALFORMED = {
    "bad_section.qps": (5, "unknown section"),
    "undeclared_row.qps": (7, "undeclared row"),
    "undeclared_column.qps": (8, "undeclared column"),
    "duplicate_quad.qps": (11, "duplicate quadratic"),
    "bad_number.qps": (6, "expected a number"),
    "missing_endata.qps": (6, "missing ENDATA"),
}


def fixture_text(name):
    return (FIXTURES / name).read_text()


def test_syqp_single_block():
    p = gen_syqp(SyQpSpec(n=4, m1=4, seed=7))
    assert p.H.nnz() == 10
    assert p.A.shape == (4, 4)
    assert p.equality_rank() == 4
    np.testing.assert_array_equal(p.C.to_dense(), np.eye(4))
    np.testing.assert_array_equal(p.d, 0.0)


def test_syqp_block_structure():
    p = gen_syqp(SyQpSpec(n=12, m1=5, seed=1))
    Hd = p.H.to_dense()
    blocks = np.kron(np.eye(3), np.ones((4, 4)))
    assert np.all(Hd[blocks == 0] == 0)
    assert np.linalg.eigvalsh(Hd).min() > 0


def test_syqp_band_is_bounded():
    spec = SyQpSpec(n=64, m1=16, seed=0)
    A = gen_syqp(spec).A.to_dense()
    assert np.all(A >= 0) and np.all(A < 1)
    assert np.all((A != 0).sum(axis=1) <= 2 * spec.width + 1)


def test_syqp_determinism():
    a = gen_syqp(SyQpSpec(n=16, m1=6, seed=3))
    b = gen_syqp(SyQpSpec(n=16, m1=6, seed=3))
    assert a.structurally_equal(b)
    c = gen_syqp(SyQpSpec(n=16, m1=6, seed=4))
    assert not a.structurally_equal(c)


def test_syqp_shared_hessian():
    a = gen_syqp(SyQpSpec(n=8, m1=3, seed=2))
    b = gen_syqp(SyQpSpec(n=8, m1=5, seed=2))
    assert a.H.pattern_equal(b.H)
    np.testing.assert_array_equal(a.H.values, b.H.values)
    assert a.A.shape != b.A.shape


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.data())
def test_syqp_full_rank(n, data):
    m1 = data.draw(st.integers(1, n))
    p = gen_syqp(SyQpSpec(n=n, m1=m1, seed=data.draw(st.integers(0, 1000))))
    assert p.equality_rank() == m1


def test_syqp_spec_validation():
    with pytest.raises(ValueError):
        SyQpSpec(n=4, m1=5)
    with pytest.raises(ValueError):
        SyQpSpec(n=4, m1=0)
    with pytest.raises(ValueError):
        SyQpSpec.parse("n=4,m1")


def test_syqp_spec_parse():
    assert SyQpSpec.parse("n=8,m1=4,seed=1") == SyQpSpec(n=8, m1=4, seed=1)
    assert SyQpSpec.parse("n=8, m1=2, bw=3").band_width == 3


def test_rank_repair_exhaustion(monkeypatch):
    from sfipm import problems

    # every row on the same single column: rank 1 whatever the shift
    def collapsed(n, m1, width, offset):
        return np.arange(m1), np.zeros(m1, dtype=int)

    monkeypatch.setattr(problems, "_band_pattern", collapsed)
    with pytest.raises(GenerationError):
        gen_syqp(SyQpSpec(n=6, m1=3))


def test_syqp_grid_names():
    grid = syqp_grid(16, [1, 8, 16], seed=5)
    assert [p.name for p in grid] == ["syqp-n16-m1-s5", "syqp-n16-m8-s5", "syqp-n16-m16-s5"]


def test_manifest(tmp_path):
    import json

    path = tmp_path / "manifest.json"
    write_manifest(path, syqp_grid(8, [2, 4]))
    rows = json.loads(path.read_text())
    assert rows[0]["n"] == 8 and rows[1]["m1"] == 4
    assert rows[0]["nnz"]["H"] == 20


def test_two_var_fixture():
    p = parse_qps(fixture_text("two_var_eq.qps"))
    np.testing.assert_array_equal(p.H.to_dense(), np.diag([2.0, 1.0]))
    np.testing.assert_array_equal(p.A.to_dense(), [[1.0, 1.0]])
    np.testing.assert_array_equal(p.b, [1.0])
    np.testing.assert_array_equal(p.C.to_dense(), np.eye(2))
    np.testing.assert_array_equal(p.c, [-1.0, -2.0])


def test_mixed_fixture_canonical_form():
    p = parse_qps(fixture_text("mixed_rows.qps"))
    assert p.col_names == ("x", "y", "z", "w")
    np.testing.assert_array_equal(p.c, [1.0, -1.0, 0.0, 0.5])
    assert p.obj_constant == 4.0
    np.testing.assert_array_equal(
        p.H.to_dense(), [[2.0, 0.5, 0, 0], [0.5, 3.0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 1.0]]
    )
    eq = dict(zip(p.eq_names, zip(map(tuple, p.A.to_dense()), p.b)))
    assert eq == {"eq1": ((1.0, 1.0, 0.0, -1.0), 2.0), "w.fx": ((0.0, 0.0, 0.0, 1.0), 0.25)}
    ineq = dict(zip(p.ineq_names, zip(map(tuple, p.C.to_dense()), p.d)))
    assert ineq == {
        "cap": ((-1.0, 0.0, -3.0, 0.0), -10.0),
        "floor": ((0.0, 2.0, 1.0, 0.0), -1.0),
        "band.lo": ((1.0, 0.0, -1.0, 0.0), 0.5),
        "band.hi": ((-1.0, 0.0, 1.0, 0.0), -2.5),
        "x.lb": ((1.0, 0.0, 0.0, 0.0), 0.0),
        "x.ub": ((-1.0, 0.0, 0.0, 0.0), -4.0),
        "y.lb": ((0.0, 1.0, 0.0, 0.0), -1.0),
    }


def test_qmatrix_matches_quadobj():
    a = parse_qps(fixture_text("mixed_rows.qps"))
    b = parse_qps(fixture_text("mixed_rows_qmatrix.qps"))
    assert a.structurally_equal(b)


def test_bounds_only_is_out_of_scope():
    with pytest.raises(ProblemScopeError, match="m1 = 0"):
        parse_qps(fixture_text("bounds_only.qps"))


@pytest.mark.parametrize("name", GOOD)
def test_round_trip_fixpoint(name):
    p1 = parse_qps(fixture_text(name))
    text1 = write_qps(p1)
    p2 = parse_qps(text1)
    assert p1.structurally_equal(p2)
    assert p2.obj_constant == p1.obj_constant
    assert write_qps(p2) == text1


def test_syqp_round_trip():
    p = gen_syqp(SyQpSpec(n=4, m1=2, seed=0))
    assert p.structurally_equal(parse_qps(write_qps(p)))


@pytest.mark.parametrize("name", sorted(MALFORMED))
def test_malformed_fixture_line_numbers(name):
    line, text = MALFORMED[name]
    with pytest.raises(ParseError) as exc:
        parse_qps(fixture_text(name))
    assert exc.value.line == line
    assert text in str(exc.value)
    assert str(exc.value).startswith(f"line {line}:")


@pytest.mark.parametrize("name", GOOD + sorted(MALFORMED))
def test_parsing_is_deterministic(name):
    def outcome():
        try:
            return write_qps(parse_qps(fixture_text(name)))
        except ParseError as exc:
            return str(exc)

    assert outcome() == outcome()


def test_load_qps_reads_bytes():
    assert load_qps(FIXTURES / "two_var_eq.qps").n == 2


def test_read_qps_rejects_markers():
    text = "NAME X\nROWS\n N obj\nCOLUMNS\n M1 'MARKER' 'INTORG'\nENDATA\n"
    with pytest.raises(ParseError) as exc:
        read_qps(text)
    assert exc.value.line == 5


def test_short_names_truncate_uniquely():
    out = short_names(["alpha_long_one", "alpha_long_two", "alpha_long_three", "b"], "x")
    assert out == ["alpha_lo", "alpha_~1", "alpha_~2", "b"]
    assert all(len(s) <= 8 for s in out)
    assert short_names(["alpha_long_one", "alpha_long_two"], "x") == out[:2]


def test_long_names_written_within_width():
    text = write_qps(parse_qps(fixture_text("long_names.qps")))
    names = {tok for line in text.splitlines() if line.startswith(" ") for tok in line.split()[:1]}
    assert all(len(nm) <= 8 for nm in names)
