"""RJ, DA and marginal Metropolis against the exact posterior on small cases.

    python scripts/equivalence_grid.py [--iters 1000000] [--checkpoints 10000 100000 1000000]

For each case the TV distance to the exact N-posterior is printed at every
checkpoint length, which shows the distances shrinking with run length.
Writes ``equivalence.csv`` when ``--out`` is given.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

from rjda import EncounterData, PriorOnN, RandomEffects
from rjda.diagnostics import empirical_pmf, tv_distance
from rjda.marginal import exact_posterior
from rjda.runner import McmcControls, run_chains

CASES = [
    ("toy-beta11", EncounterData.from_histories([[1, 0], [1, 1], [0, 1]]), RandomEffects.beta(1, 1), 6),
    ("k3-beta", EncounterData.from_frequencies([2, 1, 0]), RandomEffects.beta(0.5, 1.5), 8),
    ("k1-beta22", EncounterData.from_frequencies([2]), RandomEffects.beta(2, 2), 6),
    ("k2-logitnormal", EncounterData.from_frequencies([1, 1]), RandomEffects.logit_normal(0.0, 1.0), 7),
    ("k3-logitnormal", EncounterData.from_frequencies([3, 0, 1]), RandomEffects.logit_normal(-1.0, 0.5), 8),
    ("k3-logitnormal-tight", EncounterData.from_frequencies([1, 2, 0]), RandomEffects.logit_normal(0.5, 2.0), 8),
]


@dataclass
class GridExperiment:
    checkpoints: list[int] = field(default_factory=lambda: [10_000, 100_000, 1_000_000])
    burn_in: int = 1_000
    seed: int = 7
    samplers: tuple[str, ...] = ("rj", "da", "marginal-mh")
    term: str = "exact"


def run(exp: GridExperiment):
    rows = []
    longest = max(exp.checkpoints)
    for name, data, effects, M in CASES:
        prior = PriorOnN.uniform(M)
        exact = exact_posterior(data, effects, prior).pmf()
        for sampler in exp.samplers:
            ctl = McmcControls(longest + exp.burn_in, exp.burn_in, 1, exp.seed, term=exp.term)
            N = run_chains(sampler, data, effects, prior, ctl)[0]["N"]
            for c in exp.checkpoints:
                tv = tv_distance(empirical_pmf(N[:c]), exact)
                rows.append({"case": name, "sampler": sampler, "draws": c, "tv": tv})
                print(f"{name:22s} {sampler:12s} {c:>9d}  TV {tv:.4f}", flush=True)
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoints", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--term", choices=("exact", "durban"), default="exact")
    ap.add_argument("--out", type=Path)
    a = ap.parse_args()
    rows = run(GridExperiment(sorted(a.checkpoints), seed=a.seed, term=a.term))
    if a.out:
        a.out.mkdir(parents=True, exist_ok=True)
        with open(a.out / "equivalence.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["case", "sampler", "draws", "tv"])
            w.writeheader()
            w.writerows(rows)
    sys.stdout.flush()


if __name__ == "__main__":
    main()
