"""Chain container and post-processing: summaries, ESS, densities, comparisons."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass
class Chain:
    """Posterior draws, one named column per parameter, plus run metadata.

    ``meta`` carries at least ``sampler`` and ``seed``; samplers also record
    ``acceptance`` (a name -> rate mapping), ``digest`` and ``duration``.
    """

    draws: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.draws.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
        self.draws = {k: np.asarray(v) for k, v in self.draws.items()}

    def __len__(self) -> int:
        return len(next(iter(self.draws.values()))) if self.draws else 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[name]

    @property
    def columns(self) -> list[str]:
        return list(self.draws)

    def to_csv(self) -> str:
        """Serialize as RFC-4180 CSV with a header row."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.columns)
        cols = [_format_column(self.draws[c]) for c in self.columns]
        writer.writerows(zip(*cols))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, meta: Optional[dict] = None) -> "Chain":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty chain file")
        header, body = rows[0], rows[1:]
        draws = {}
        for j, name in enumerate(header):
            vals = [r[j] for r in body]
            if all(_is_int(v) for v in vals):
                draws[name] = np.array([int(v) for v in vals], dtype=np.int64)
            else:
                draws[name] = np.array([float(v) for v in vals])
        return cls(draws, dict(meta or {}))

    @staticmethod
    def concat(chains: Sequence["Chain"]) -> "Chain":
        """Stack several chains with the same columns into one pooled chain."""
        if not chains:
            raise ValueError("nothing to concatenate")
        cols = chains[0].columns
        draws = {c: np.concatenate([ch.draws[c] for ch in chains]) for c in cols}
        meta = dict(chains[0].meta)
        meta["chains"] = len(chains)
        meta["duration"] = sum(ch.meta.get("duration", 0.0) for ch in chains)
        return Chain(draws, meta)


def _format_column(col: np.ndarray) -> list[str]:
    if np.issubdtype(col.dtype, np.integer):
        return [str(int(v)) for v in col]
    return [repr(float(v)) for v in col]


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# Effective sample size
# ---------------------------------------------------------------------------


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(xc, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n] / n
    if acov[0] <= 0:
        return np.ones(1)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """Geyer's initial monotone positive-sequence ESS, capped at ``len(x)``.

    A constant column has no autocorrelation structure to speak of; its ESS
    is reported as its length.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty series")
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    m_max = (rho.size - 1) // 2
    pairs = rho[0 : 2 * m_max : 2] + rho[1 : 2 * m_max + 1 : 2]
    negative = np.flatnonzero(pairs <= 0)
    pairs = pairs[: negative[0]] if negative.size else pairs
    if pairs.size == 0:
        return float(n)
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(min(n, n / max(tau, 1e-12)))


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


@dataclass
class ParamSummary:
    name: str
    mean: float
    sd: float
    quantiles: tuple[float, ...]
    ess: float
    mcse: float
    mode: Optional[float] = None


def _is_integer_column(col: np.ndarray) -> bool:
    return np.issubdtype(col.dtype, np.integer)


def summarize(chain: Chain) -> dict[str, ParamSummary]:
    """Per-parameter mean, sd, quantiles, ESS and MC standard error.

    Integer-valued columns also get their posterior mode.
    """
    if len(chain) == 0:
        raise ValueError("cannot summarize an empty chain")
    out = {}
    for name, col in chain.draws.items():
        x = np.asarray(col, dtype=float)
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
        ess = effective_sample_size(x)
        mode = None
        if _is_integer_column(col):
            vals, counts = np.unique(col, return_counts=True)
            mode = float(vals[np.argmax(counts)])
        out[name] = ParamSummary(
            name=name,
            mean=float(x.mean()),
            sd=sd,
            quantiles=tuple(float(q) for q in np.quantile(x, QUANTILES)),
            ess=ess,
            mcse=sd / np.sqrt(ess),
            mode=mode,
        )
    return out


def format_summary(summary: Mapping[str, ParamSummary]) -> str:
    head = ["param", "mean", "sd", "2.5%", "25%", "50%", "75%", "97.5%", "mode", "ess", "mcse"]
    lines = ["\t".join(head)]
    for s in summary.values():
        mode = "" if s.mode is None else f"{s.mode:g}"
        vals = [f"{s.mean:.6g}", f"{s.sd:.6g}", *(f"{q:.6g}" for q in s.quantiles)]
        lines.append("\t".join([s.name, *vals, mode, f"{s.ess:.1f}", f"{s.mcse:.4g}"]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Discrete posteriors and comparisons
# ---------------------------------------------------------------------------


def empirical_pmf(values) -> dict[int, float]:
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    total = counts.sum()
    return {int(v): c / total for v, c in zip(vals, counts)}


def tv_distance(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    """Half the L1 distance between two pmfs given as value -> mass maps."""
    support = set(a) | set(b)
    return 0.5 * float(sum(abs(a.get(v, 0.0) - b.get(v, 0.0)) for v in support))


@dataclass
class ComparisonReport:
    param: str
    tv: float
    deltas: dict[str, float]
    ess_per_second: tuple[float, float]
    threshold: Optional[float] = None

    @property
    def passed(self) -> Optional[bool]:
        return None if self.threshold is None else self.tv < self.threshold

    def format(self) -> str:
        lines = [f"param\t{self.param}", f"tv_distance\t{self.tv:.6f}"]
        for k, v in self.deltas.items():
            lines.append(f"delta_{k}\t{v:.6g}")
        lines.append(f"ess_per_second_a\t{self.ess_per_second[0]:.6g}")
        lines.append(f"ess_per_second_b\t{self.ess_per_second[1]:.6g}")
        if self.threshold is not None:
            lines.append(f"threshold\t{self.threshold:g}")
            lines.append(f"result\t{'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def compare_posteriors(a: Chain, b: Chain, param: str = "N", threshold=None) -> ComparisonReport:
    """TV distance and summary deltas between two chains' pmfs for ``param``."""
    for label, ch in (("first", a), ("second", b)):
        if param not in ch.draws:
            raise KeyError(f"{label} chain has no column {param!r}")
    xa, xb = np.asarray(a[param]), np.asarray(b[param])
    tv = tv_distance(empirical_pmf(xa), empirical_pmf(xb))
    qa, qb = np.quantile(xa, QUANTILES), np.quantile(xb, QUANTILES)
    deltas = {"mean": float(xa.mean() - xb.mean()), "median": float(np.median(xa) - np.median(xb))}
    for q, da, db in zip(QUANTILES, qa, qb):
        deltas[f"q{100 * q:g}"] = float(da - db)
    eps = []
    for ch, x in ((a, xa), (b, xb)):
        dur = ch.meta.get("duration", 0.0)
        eps.append(effective_sample_size(x) / dur if dur > 0 else float("nan"))
    return ComparisonReport(param, tv, deltas, tuple(eps), threshold)


# ---------------------------------------------------------------------------
# Density tables
# ---------------------------------------------------------------------------


@dataclass
class DensityTable:
    """Histogram masses on bins plus a Gaussian-kernel density at bin centres."""

    param: str
    centers: np.ndarray
    counts: np.ndarray
    mass: np.ndarray
    kde: np.ndarray
    bandwidth: float
    integer: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow([self.param, "count", "mass", "kde"])
        for c, n, m, d in zip(self.centers, self.counts, self.mass, self.kde):
            center = str(int(c)) if self.integer else repr(float(c))
            writer.writerow([center, int(n), repr(float(m)), repr(float(d))])
        return buf.getvalue()

    @property
    def mode(self) -> float:
        return float(self.centers[np.argmax(self.kde)])

    def n_local_maxima(self, rel_tol: float = 1e-9) -> int:
        """Count strict interior peaks of the smoothed density (plateaus count once)."""
        d = self.kde
        if d.size == 0:
            return 0
        tol = rel_tol * d.max()
        # collapse plateaus so a flat top is one peak
        keep = np.concatenate([[True], np.abs(np.diff(d)) > tol])
        d = d[keep]
        if d.size == 1:
            return 1
        left = np.concatenate([[-np.inf], d[:-1]])
        right = np.concatenate([d[1:], [-np.inf]])
        return int(np.sum((d > left) & (d > right)))


def silverman_bandwidth(x: np.ndarray, n_eff: Optional[float] = None) -> float:
    """Silverman's rule ``0.9 min(sd, IQR/1.34) n^(-1/5)``.

    ``n_eff`` replaces the sample size, which matters for autocorrelated
    MCMC output where the raw length overstates the information content.
    """
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    iqr = np.subtract(*np.quantile(x, [0.75, 0.25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    n = x.size if n_eff is None else n_eff
    return float(0.9 * spread * n ** (-0.2)) if spread > 0 else 0.0


def density_data(chain: Chain, param: str = "N", bins: int = 50, use_ess: bool = True) -> DensityTable:
    """Histogram and kernel density for one column.

    Integer columns use unit bins over ``min..max``. The KDE bandwidth follows
    Silverman's rule, with the sample size replaced by the ESS when
    ``use_ess`` is set.
    """
    col = np.asarray(chain[param])
    if col.size == 0:
        raise ValueError("empty column")
    x = col.astype(float)
    integer = _is_integer_column(col)
    if integer:
        lo, hi = int(col.min()), int(col.max())
        centers = np.arange(lo, hi + 1, dtype=float)
        counts = np.bincount(col - lo, minlength=hi - lo + 1)
    else:
        counts, edges = np.histogram(x, bins=bins)
        centers = 0.5 * (edges[:-1] + edges[1:])
    mass = counts / counts.sum()
    n_eff = effective_sample_size(x) if use_ess else None
    bw = silverman_bandwidth(x, n_eff)
    if bw <= 0:
        kde = mass.astype(float).copy()
    else:
        if integer:
            support, weights = centers, mass
        else:
            support, weights = x, np.full(x.size, 1.0 / x.size)
        z = (centers[:, None] - support[None, :]) / bw
        kde = (np.exp(-0.5 * z**2) @ weights) / (bw * np.sqrt(2 * np.pi))
    return DensityTable(param, centers, counts, mass, kde, bw, integer)
