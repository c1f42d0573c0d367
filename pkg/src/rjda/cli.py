"""Command-line front end: ``run``, ``exact``, ``compare`` and ``hare``.

Every subcommand writes plain-text and CSV artifacts into ``--out``:
``chain_<i>.csv``, ``summary.txt``, ``density_N.csv``, ``manifest.txt`` and,
for comparisons, ``compare.txt``. Settings can come from an INI-style
``--config`` file (sections ``[run]``, ``[model]``, ``[mcmc]``, flat
``key = value`` lines); command-line flags override it.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .diagnostics import (
    Chain,
    compare_posteriors,
    density_data,
    format_summary,
    summarize,
)
from .marginal import exact_posterior
from .model import EncounterData, PriorOnN, RandomEffects
from .rng import config_digest
from .runner import SAMPLERS, McmcControls, run_chains

HARE_FREQUENCIES = (25, 22, 13, 5, 1, 2)
HARE_CAP = 400
HARE_ITERATIONS = 200_000
HARE_CHAINS = 4
HARE_BURN_IN = 5_000
HARE_MAX_STEP = 6
HARE_SEED = 1


class DataFormatError(ValueError):
    """Malformed encounter-data file; the message names line and column."""


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Data files
# ---------------------------------------------------------------------------


def _rows(text: str) -> list[tuple[int, list[str]]]:
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        rows.append((lineno, row))
    return rows


def _int_cell(cell: str, line: int, col: int) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise DataFormatError(f"line {line}, column {col}: {cell!r} is not an integer") from None


def parse_data(text: str, fmt: str = "frequencies") -> EncounterData:
    rows = _rows(text)
    if not rows:
        raise DataFormatError("line 1, column 1: empty data file")
    if fmt == "frequencies":
        if len(rows) != 1:
            line = rows[1][0]
            raise DataFormatError(f"line {line}, column 1: frequencies must be a single row")
        line, row = rows[0]
        counts = [_int_cell(c, line, j) for j, c in enumerate(row, start=1)]
        for j, c in enumerate(counts, start=1):
            if c < 0:
                raise DataFormatError(f"line {line}, column {j}: negative frequency {c}")
        return EncounterData.from_frequencies(counts)
    if fmt == "histories":
        width = len(rows[0][1])
        matrix = []
        for line, row in rows:
            if len(row) != width:
                raise DataFormatError(f"line {line}, column {min(len(row), width) + 1}: "
                                      f"ragged row, expected {width} columns, got {len(row)}")
            vals = []
            for j, c in enumerate(row, start=1):
                v = _int_cell(c, line, j)
                if v not in (0, 1):
                    raise DataFormatError(f"line {line}, column {j}: entry {v} is not 0/1")
                vals.append(v)
            if sum(vals) == 0:
                raise DataFormatError(f"line {line}, column 1: all-zero history for an observed individual")
            matrix.append(vals)
        return EncounterData.from_histories(matrix)
    raise ValueError(f"unknown data format {fmt!r}")


def ingest_data(path, fmt: str = "frequencies") -> EncounterData:
    """Read a frequencies row or a 0/1 history matrix from ``path``."""
    return parse_data(Path(path).read_text(), fmt)


def emit_data(data: EncounterData, fmt: str = "frequencies") -> str:
    if fmt == "frequencies":
        return ",".join(str(f) for f in data.frequencies) + "\r\n"
    if fmt == "histories":
        if not data.has_histories:
            raise ValueError("data carries no capture histories")
        lines = []
        for h, z in data.history_counts.items():
            lines += [",".join(str(v) for v in h)] * z
        return "\r\n".join(lines) + "\r\n"
    raise ValueError(f"unknown data format {fmt!r}")


# ---------------------------------------------------------------------------
# Model and prior specifications
# ---------------------------------------------------------------------------


def parse_effects(spec: str) -> RandomEffects:
    """``default`` | ``beta:A,B[:estimate]`` | ``logitnormal:MU,TAU[:estimate]``."""
    spec = spec.strip()
    if spec == "default":
        return RandomEffects.standard()
    parts = spec.split(":")
    if len(parts) not in (2, 3) or parts[0] not in ("beta", "logitnormal"):
        raise ConfigError(f"cannot parse effects {spec!r}")
    try:
        a, b = (float(v) for v in parts[1].split(","))
    except ValueError:
        raise ConfigError(f"effects {spec!r} needs two numeric parameters") from None
    estimate = len(parts) == 3
    if estimate and parts[2] != "estimate":
        raise ConfigError(f"unknown effects flag {parts[2]!r}")
    return RandomEffects(parts[0], (a, b), estimate=estimate)


def parse_prior(spec: str, cap: int) -> PriorOnN:
    """``uniform`` | ``jeffreys`` | ``psi:ALPHA,BETA`` | ``custom:FILE``."""
    spec = spec.strip()
    if spec == "uniform":
        return PriorOnN.uniform(cap)
    if spec == "jeffreys":
        return PriorOnN.jeffreys(cap)
    if spec.startswith("psi:"):
        a, b = (float(v) for v in spec[4:].split(","))
        return PriorOnN.psi_mixture(cap, a, b)
    if spec.startswith("custom:"):
        text = Path(spec[7:]).read_text().replace("\n", ",")
        masses = [float(v) for v in text.split(",") if v.strip()]
        if len(masses) != cap + 1:
            raise ConfigError(f"custom prior file has {len(masses)} masses, expected cap+1={cap + 1}")
        return PriorOnN.custom(masses)
    raise ConfigError(f"cannot parse prior {spec!r}")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    sampler: str
    data: str
    format: str
    effects: str
    prior: str
    cap: int
    iterations: int
    burn_in: int
    thin: int
    chains: int
    seed: int
    out: str
    max_step: int = 3
    term: str = "exact"

    def validate(self) -> None:
        if self.sampler not in SAMPLERS + ("exact",):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if not Path(self.data).is_file():
            raise ConfigError(f"data file {self.data!r} does not exist")
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")

    def digest(self) -> str:
        return config_digest(self)

    def controls(self) -> McmcControls:
        return McmcControls(self.iterations, self.burn_in, self.thin, self.seed, self.chains,
                            self.max_step, self.term)


CONFIG_KEYS = {
    "sampler": str, "data": str, "format": str, "effects": str, "prior": str, "cap": int,
    "iterations": int, "burn_in": int, "thin": int, "chains": int, "seed": int, "out": str,
    "max_step": int, "term": str,
}

DEFAULTS = {
    "sampler": "rj", "format": "frequencies", "effects": "default", "prior": "uniform",
    "iterations": 10_000, "burn_in": 1_000, "thin": 1, "chains": 1, "max_step": 3, "term": "exact",
}


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(Path(path).read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            values[key] = raw
    return values


def build_config(args: argparse.Namespace, sampler: Optional[str] = None) -> RunConfig:
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    flag_map = {
        "sampler": "sampler", "data": "data", "format": "format", "effects": "effects",
        "prior": "prior", "cap": "cap", "iters": "iterations", "burnin": "burn_in",
        "thin": "thin", "chains": "chains", "seed": "seed", "out": "out",
        "jump": "max_step", "term": "term",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if sampler is not None:
        values["sampler"] = sampler
    for key in ("data", "out", "cap", "seed"):
        if key not in values:
            raise ConfigError(f"missing required setting {key!r}")
    try:
        typed = {k: CONFIG_KEYS[k](v) for k, v in values.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(**typed)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def write_manifest(out: Path, items: dict) -> None:
    lines = [f"{k}={v}" for k, v in items.items()]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_manifest(path: Path) -> dict:
    items = {}
    if path.is_file():
        for line in path.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                items[k] = v
    return items


def emit_chains(out: Path, chains: Sequence[Chain]) -> Chain:
    """Write chain CSVs, the pooled summary and the N density table."""
    for i, ch in enumerate(chains):
        (out / f"chain_{i}.csv").write_text(ch.to_csv(), newline="")
    pooled = Chain.concat(list(chains))
    (out / "summary.txt").write_text(format_summary(summarize(pooled)))
    (out / "density_N.csv").write_text(density_data(pooled, "N").to_csv(), newline="")
    return pooled


def _ensure_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc}") from None
    return out


def run_pipeline(cfg: RunConfig, workers: int = 1) -> Path:
    """Execute one configured run and write its artifacts; returns the output dir."""
    cfg.validate()
    out = _ensure_out(cfg.out)
    data = ingest_data(cfg.data, cfg.format)
    effects = parse_effects(cfg.effects)
    prior = parse_prior(cfg.prior, cfg.cap)
    manifest = {"version": __version__, **{f.name: getattr(cfg, f.name) for f in fields(cfg)}}
    manifest.update(n=data.n, k=data.k, digest=cfg.digest())
    if cfg.sampler == "exact":
        post = exact_posterior(data, effects, prior)
        (out / "exact_N.csv").write_text(post.to_csv(), newline="")
        manifest["log_evidence"] = repr(post.log_evidence)
        write_manifest(out, manifest)
        return out
    chains = run_chains(cfg.sampler, data, effects, prior, cfg.controls(), workers)
    emit_chains(out, chains)
    for i, ch in enumerate(chains):
        manifest[f"chain_{i}_seed"] = ch.meta["seed"]
        manifest[f"chain_{i}_acceptance"] = ";".join(f"{k}:{v:.4f}" for k, v in ch.meta["acceptance"].items())
        manifest[f"chain_{i}_duration"] = f"{ch.meta['duration']:.3f}"
    write_manifest(out, manifest)
    return out


def load_run(path) -> Chain:
    """Pool every ``chain_<i>.csv`` in a run directory."""
    d = Path(path)
    files = sorted(d.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise ConfigError(f"no chain files in {d}")
    manifest = read_manifest(d / "manifest.txt")
    chains = []
    for i, f in enumerate(files):
        dur = float(manifest.get(f"chain_{i}_duration", 0.0))
        chains.append(Chain.from_csv(f.read_text(), {"duration": dur}))
    return Chain.concat(chains)


def compare_runs(dir_a, dir_b, out, param: str = "N", threshold: Optional[float] = None) -> str:
    report = compare_posteriors(load_run(dir_a), load_run(dir_b), param, threshold)
    text = f"a\t{dir_a}\nb\t{dir_b}\n" + report.format()
    out = _ensure_out(out)
    (out / "compare.txt").write_text(text)
    return text


def reproduce_hare(
    out, iterations: int = HARE_ITERATIONS, chains: int = HARE_CHAINS, seed: int = HARE_SEED,
    cap: int = HARE_CAP, burn_in: int = HARE_BURN_IN, max_step: int = HARE_MAX_STEP, workers: int = 1,
) -> dict:
    """Snowshoe hare analysis with the logit-normal defaults, RJ and DA side by side."""
    out = _ensure_out(out)
    data = EncounterData.from_frequencies(HARE_FREQUENCIES)
    (out / "hare.csv").write_text(emit_data(data), newline="")
    report = {"n": data.n, "k": data.k, "cap": cap, "seed": seed}
    pooled = {}
    for sampler in ("rj", "da"):
        cfg = RunConfig(
            sampler=sampler, data=str(out / "hare.csv"), format="frequencies", effects="default",
            prior="uniform", cap=cap, iterations=iterations, burn_in=burn_in, thin=1,
            chains=chains, seed=seed, out=str(out / sampler), max_step=max_step,
        )
        run_pipeline(cfg, workers)
        pooled[sampler] = load_run(out / sampler)
        dens = density_data(pooled[sampler], "N")
        report[f"{sampler}_mode"] = dens.mode
        report[f"{sampler}_peaks"] = dens.n_local_maxima()
        report[f"{sampler}_min_N"] = int(pooled[sampler]["N"].min())
        report[f"{sampler}_mass_below_n"] = float(np.mean(pooled[sampler]["N"] < data.n))
        report[f"{sampler}_mean"] = float(pooled[sampler]["N"].mean())
    cmp = compare_posteriors(pooled["rj"], pooled["da"], "N")
    (out / "compare.txt").write_text(f"a\trj\nb\tda\n" + cmp.format())
    report["tv_rj_da"] = cmp.tv
    (out / "hare_report.txt").write_text("".join(f"{k}\t{v}\n" for k, v in report.items()))
    return report


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser, with_sampler: bool = True) -> None:
    if with_sampler:
        p.add_argument("--sampler", choices=SAMPLERS)
    p.add_argument("--config", help="INI-style settings file")
    p.add_argument("--data", help="encounter data file")
    p.add_argument("--format", choices=("frequencies", "histories"))
    p.add_argument("--effects", help="default | beta:A,B[:estimate] | logitnormal:MU,TAU[:estimate]")
    p.add_argument("--prior", help="uniform | jeffreys | psi:ALPHA,BETA | custom:FILE")
    p.add_argument("--cap", type=int, metavar="M", help="upper bound M on N")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rjda", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run MCMC chains")
    _add_run_flags(run)
    run.add_argument("--iters", type=int)
    run.add_argument("--burnin", type=int)
    run.add_argument("--thin", type=int)
    run.add_argument("--chains", type=int)
    run.add_argument("--jump", type=int, help="largest N step of the random-walk proposal")
    run.add_argument("--term", choices=("exact", "durban"))
    run.add_argument("--workers", type=int, default=1)

    exact = sub.add_parser("exact", help="exact posterior over N for small problems")
    _add_run_flags(exact, with_sampler=False)

    cmp = sub.add_parser("compare", help="compare the N posteriors of two run directories")
    cmp.add_argument("run_a")
    cmp.add_argument("run_b")
    cmp.add_argument("--param", default="N")
    cmp.add_argument("--threshold", type=float)
    cmp.add_argument("--out", required=True)

    hare = sub.add_parser("hare", help="reproduce the snowshoe hare analysis")
    hare.add_argument("--out", required=True)
    hare.add_argument("--iters", type=int, default=HARE_ITERATIONS)
    hare.add_argument("--burnin", type=int, default=HARE_BURN_IN)
    hare.add_argument("--chains", type=int, default=HARE_CHAINS)
    hare.add_argument("--seed", type=int, default=HARE_SEED)
    hare.add_argument("--cap", type=int, default=HARE_CAP, metavar="M")
    hare.add_argument("--jump", type=int, default=HARE_MAX_STEP)
    hare.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = build_config(args)
            if cfg.sampler == "exact":
                raise ConfigError("use the exact subcommand for the exact posterior")
            out = run_pipeline(cfg, args.workers)
            print(f"wrote {out}")
        elif args.command == "exact":
            out = run_pipeline(build_config(args, sampler="exact"))
            print(f"wrote {out / 'exact_N.csv'}")
        elif args.command == "compare":
            print(compare_runs(args.run_a, args.run_b, args.out, args.param, args.threshold), end="")
        elif args.command == "hare":
            report = reproduce_hare(args.out, args.iters, args.chains, args.seed, args.cap,
                                    args.burnin, args.jump, args.workers)
            for k, v in report.items():
                print(f"{k}\t{v}")
    except (ConfigError, DataFormatError, FileNotFoundError) as exc:
        print(f"rjda: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"rjda: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0
