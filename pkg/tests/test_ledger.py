import pytest

from sfipm.ledger import KERNELS, CostLedger, charge


def test_charge_and_totals():
    led = CostLedger()
    led.charge("spmv", 6, "A")
    led.charge("spmv", 4, "A")
    led.charge("fact", 9)
    assert led.totals() == {"fact": 9, "trsv": 0, "spmv": 10, "spmm": 0, "norm": 0}
    assert led.total == 19
    assert led.by_label["spmv:A"] == 10


def test_charge_validation():
    led = CostLedger()
    with pytest.raises(ValueError):
        led.charge("axpy", 1)
    with pytest.raises(ValueError):
        led.charge("spmv", -1)


def test_none_ledger_is_ignored():
    charge(None, "spmv", 5)


def test_factorization_events_and_dict():
    led = CostLedger()
    led.factorized("F")
    led.factorized("P_H")
    led.factorized("P_H")
    d = led.to_dict()
    assert d["fact_events"] == {"F": 1, "P_H": 2}
    assert set(KERNELS) <= set(d)
