"""Relative-efficiency experiments under perfect and imperfect ranking."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rng as rngmod
from .designs import Design, DesignSpec, draw_batch, feasibility_check
from .errors import InfeasibleDesignError
from .estimators import hajek_edf_batch, true_variance
from .inclusion import InclusionTable, inclusion_table
from .population import DistributionKind, Population, auxiliary_values, generate_grid_population, true_edf

DECILES = tuple(round(0.1 * i, 1) for i in range(1, 10))
N_BATCHES = 10


@dataclass
class SimulationConfig:
    N: int
    dist: DistributionKind = DistributionKind.NORMAL
    designs: tuple[Design, ...] = (Design.SRS, Design.LEVEL0, Design.LEVEL1, Design.LEVEL2)
    m: int = 1
    k: int = 2
    rank_pattern: tuple[int, ...] = ()
    rho: float = 1.0
    reps: int = 10_000
    p_grid: tuple[float, ...] = DECILES
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.designs = tuple(Design(d) for d in self.designs)
        if Design.SRS not in self.designs:
            self.designs = (Design.SRS,) + self.designs
        self.dist = DistributionKind(self.dist)
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for d in self.designs:
            if not feasibility_check(self.spec(d), self.N):
                raise InfeasibleDesignError(f"{self.spec(d).describe()} infeasible for N={self.N}")

    def spec(self, design: Design) -> DesignSpec:
        rss = DesignSpec(Design.LEVEL2, self.k, self.m, self.rank_pattern)
        if design is Design.SRS:
            return DesignSpec.srs(rss.n)
        return DesignSpec(design, self.k, self.m, rss.rank_pattern)

    @classmethod
    def from_json(cls, source) -> "SimulationConfig":
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            source = Path(source).read_text(encoding="utf-8")
        doc = dict(json.loads(source))
        for key in ("designs", "rank_pattern", "p_grid"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps({
            "N": self.N, "dist": self.dist.value, "designs": [d.value for d in self.designs],
            "m": self.m, "k": self.k, "rank_pattern": list(self.rank_pattern), "rho": self.rho,
            "reps": self.reps, "p_grid": list(self.p_grid), "master_seed": self.master_seed,
        })


@dataclass(frozen=True)
class RERow:
    design: Design
    p: float
    x_p: float
    bias: float
    variance: float
    mse: float
    re: float
    re_se: float = 0.0


@dataclass
class REResult:
    mode: str  # "exact" or "mc"
    rows: list[RERow] = field(default_factory=list)

    def get(self, design: Design, p: float) -> RERow:
        for row in self.rows:
            if row.design is design and abs(row.p - p) < 1e-12:
                return row
        raise KeyError((design, p))

    def re_curve(self, design: Design) -> np.ndarray:
        return np.array([r.re for r in self.rows if r.design is design])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["design", "p", "bias", "variance", "mse", "re", "re_se"])
        for r in self.rows:
            writer.writerow([r.design.value, r.p, repr(r.bias), repr(r.variance), repr(r.mse), repr(r.re), repr(r.re_se)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _tables(config: SimulationConfig) -> dict[Design, InclusionTable]:
    return {d: inclusion_table(config.spec(d), config.N) for d in config.designs}


def run_perfect_re(config: SimulationConfig, tables: Optional[dict] = None) -> REResult:
    """Perfect-ranking RE from exact design variances (no simulation)."""
    pop = generate_grid_population(config.N, config.dist)
    tables = tables or _tables(config)
    result = REResult("exact")
    for p in config.p_grid:
        x_p = pop.quantile_value(p)
        v_srs = true_variance(pop, tables[Design.SRS], x_p)
        for d in config.designs:
            v = true_variance(pop, tables[d], x_p)
            re = 1.0 if d is Design.SRS else _ratio(v_srs, v)
            result.rows.append(RERow(d, p, x_p, 0.0, v, v, re))
    return result


def _ratio(num: float, den: float) -> float:
    if den <= 0:
        return float("inf") if num > 0 else 1.0
    return num / den


def _simulate_block(args):
    """Estimates for one block of replications: array (designs, size, len(p_grid))."""
    config, pop, inv_pi, thresholds, block, size = args
    N = config.N
    if config.rho >= 1.0:
        keys = np.arange(1, N + 1)
    else:
        z = rngmod.block_rng(config.master_seed, block, stream=0).standard_normal((size, N))
        y = auxiliary_values(pop.x_values, config.rho, z)
        order = np.argsort(y, axis=1, kind="stable")
        keys = np.empty_like(order)
        np.put_along_axis(keys, order, np.arange(1, N + 1)[None, :].repeat(size, 0), 1)
    out = np.empty((len(config.designs), size, len(thresholds)))
    for j, d in enumerate(config.designs):
        spec = config.spec(d)
        rng = rngmod.block_rng(config.master_seed, block, stream=j + 1)
        batch = draw_batch(d, N, spec.k, spec.rank_pattern, keys, size, rng)
        units = batch.measured
        ranks = np.take_along_axis(np.broadcast_to(keys, (size, N)), units, 1)
        out[j] = hajek_edf_batch(pop.x_values[units], units, inv_pi[d][ranks - 1], thresholds)
    return out


def simulate_estimates(config: SimulationConfig, tables: Optional[dict] = None):
    """Monte Carlo Hajek estimates, shape (designs, reps, len(p_grid)).

    Each block of replications has its own streams derived from the master
    seed, and blocks are concatenated in order, so the output does not depend
    on ``config.workers``.
    """
    pop = generate_grid_population(config.N, config.dist)
    tables = tables or _tables(config)
    inv_pi = {d: 1.0 / t.first_order for d, t in tables.items()}
    thresholds = np.array([pop.quantile_value(p) for p in config.p_grid])
    jobs = [(config, pop, inv_pi, thresholds, b, size) for b, size in rngmod.blocks(config.reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            parts = list(ex.map(_simulate_block, jobs))
    else:
        parts = [_simulate_block(job) for job in jobs]
    return pop, thresholds, np.concatenate(parts, axis=1)


def _moments(est: np.ndarray, truth: float):
    bias = est.mean() - truth
    var = est.var()
    mse = float(np.mean((est - truth) ** 2))
    return float(bias), float(var), mse


def run_imperfect_re(config: SimulationConfig, tables: Optional[dict] = None) -> REResult:
    """Monte Carlo RE = Var(SRS) / MSE(design), with batch standard errors.

    Every replication regenerates the auxiliary variable (when rho < 1),
    re-ranks the population by it and draws every design.
    """
    pop, thresholds, est = simulate_estimates(config, tables)
    srs = config.designs.index(Design.SRS)
    batches = np.array_split(np.arange(config.reps), N_BATCHES) if config.reps >= N_BATCHES else None
    result = REResult("mc")
    for pi_idx, p in enumerate(config.p_grid):
        truth = true_edf(pop, thresholds[pi_idx])
        srs_est = est[srs, :, pi_idx]
        v_srs = float(srs_est.var())
        for j, d in enumerate(config.designs):
            e = est[j, :, pi_idx]
            bias, var, mse = _moments(e, truth)
            if d is Design.SRS:
                re, se = 1.0, 0.0
            else:
                re = _ratio(v_srs, mse)
                se = 0.0
                if batches is not None:
                    per = [_ratio(float(srs_est[b].var()), _moments(e[b], truth)[2]) for b in batches]
                    se = float(np.std(per, ddof=1) / np.sqrt(len(per)))
            result.rows.append(RERow(d, p, float(thresholds[pi_idx]), bias, var, mse, re, se))
    return result


def distribution_invariance_check(
    N: int,
    m: int,
    k: int,
    p_grid: Sequence[float] = DECILES,
    designs: Sequence[Design] = (Design.SRS, Design.LEVEL0, Design.LEVEL1, Design.LEVEL2),
) -> dict:
    """Perfect-ranking RE curves for every distribution and their largest spread."""
    designs = tuple(d for d in designs if feasibility_check(_spec_for(d, k, m), N))
    curves = {}
    tables = None
    for dist in DistributionKind:
        config = SimulationConfig(N, dist, designs, m, k, p_grid=tuple(p_grid), reps=1)
        tables = tables or _tables(config)
        res = run_perfect_re(config, tables)
        curves[dist] = {d: res.re_curve(d) for d in config.designs}
    ref = curves[DistributionKind.NORMAL]
    spread = max(
        float(np.max(np.abs(curves[dist][d] - ref[d]))) for dist in curves for d in ref
    )
    return {"curves": curves, "max_abs_diff": spread}


def _spec_for(design: Design, k: int, m: int) -> DesignSpec:
    return DesignSpec.srs(k * m) if design is Design.SRS else DesignSpec(design, k, m)
