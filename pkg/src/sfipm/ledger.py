"""Flop counters shared by the kernels, the IPM loop and the cost model."""

from collections import Counter
from dataclasses import dataclass, field

KERNELS = ("fact", "trsv", "spmv", "spmm", "norm")


@dataclass
class CostLedger:
    """Measured flop counts per kernel, plus the iteration counts of one run.

    Kernels take the ledger as an explicit argument and charge it with the
    analytic cost of the operation they perform. ``None`` in place of a ledger
    means "do not count" (used for oracles and diagnostics).
    """

    fact: int = 0
    trsv: int = 0
    spmv: int = 0
    spmm: int = 0
    norm: int = 0
    fact_events: Counter = field(default_factory=Counter)
    by_label: Counter = field(default_factory=Counter)
    n_ipm: int = 0
    n_kr_per_iter: list = field(default_factory=list)

    def charge(self, kernel, flops, label=None):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        flops = int(flops)
        if flops < 0:
            raise ValueError("negative flop charge")
        setattr(self, kernel, getattr(self, kernel) + flops)
        if label is not None:
            self.by_label[f"{kernel}:{label}"] += flops

    def factorized(self, label):
        self.fact_events[label] += 1

    def totals(self):
        return {k: getattr(self, k) for k in KERNELS}

    @property
    def total(self):
        return sum(self.totals().values())

    def to_dict(self):
        return {
            **self.totals(),
            "total": self.total,
            "fact_events": dict(sorted(self.fact_events.items())),
            "by_label": dict(sorted(self.by_label.items())),
            "n_ipm": self.n_ipm,
            "n_kr_per_iter": list(self.n_kr_per_iter),
        }


def charge(ledger, kernel, flops, label=None):
    """Charge ``ledger`` if it is not ``None``."""
    if ledger is not None:
        ledger.charge(kernel, flops, label)
