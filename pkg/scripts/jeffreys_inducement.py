"""How closely Beta(eps, 1) on psi induces a truncated 1/N prior on N.

    python scripts/jeffreys_inducement.py [--eps 1e-2 1e-3 1e-4] [--caps 50 400 1000]

Prints the mass the induced prior leaves at N = 0 and the TV distance to the
truncated Jeffreys prior on 1..M, conditional on N >= 1.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field

import numpy as np

from rjda import PriorOnN


@dataclass
class InducementTable:
    eps: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    caps: list[int] = field(default_factory=lambda: [50, 400, 1000])


def run(cfg: InducementTable) -> None:
    print("eps\tM\tmass_at_0\ttv_given_N>=1")
    for eps in cfg.eps:
        for M in cfg.caps:
            induced = np.exp(PriorOnN.psi_mixture(M, eps, 1.0).log_masses)
            jeff = np.exp(PriorOnN.jeffreys(M).log_masses)[1:]
            cond = induced[1:] / induced[1:].sum()
            print(f"{eps:g}\t{M}\t{induced[0]:.5f}\t{0.5 * np.abs(cond - jeff).sum():.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    ap.add_argument("--caps", type=int, nargs="+", default=[50, 400, 1000])
    a = ap.parse_args()
    run(InducementTable(a.eps, a.caps))
