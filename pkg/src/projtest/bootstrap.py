"""Multiplier bootstrap, critical values, p-values, and the test runner.

A bootstrap replicate multiplies each observation's summand by an
independent mean-zero unit-variance draw and reuses every fitted quantity
from the precomputed core, so each replicate costs one (n,) x (n, n)
product.  Critical values are order statistics of the B scaled bootstrap
statistics; the test rejects when the observed scaled statistic strictly
exceeds the critical value.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .estimators import CoreDiagnostics, Dataset, Guards, build_core
from .kernels import KernelSpec, bandwidth_rule
from .statistics import ProcessValues, ci_residual_matrix, process_column_means, summand_matrix

__all__ = [
    "MULTIPLIER_KINDS",
    "TestConfig",
    "StatResult",
    "TestReport",
    "draw_multipliers",
    "bootstrap_process",
    "critical_value",
    "p_value",
    "run_test",
]

SCHEMA_VERSION = 1

MULTIPLIER_KINDS = ("mammen_two_point", "rademacher", "standard_normal")

# Mammen two-point law: values (1 -+ sqrt5)/2 with probabilities
# (sqrt5 +- 1)/(2 sqrt5); mean 0 and variance 1 hold exactly.
_SQRT5 = math.sqrt(5.0)
_MAMMEN_LO = (1.0 - _SQRT5) / 2.0
_MAMMEN_HI = (1.0 + _SQRT5) / 2.0
_MAMMEN_P_LO = (_SQRT5 + 1.0) / (2.0 * _SQRT5)

METHODS = ("pj", "dm")
STATISTICS = ("cvm", "ks")
TEST_KINDS = ("significance", "conditional_independence")

_OBSERVED_KIND = {
    ("significance", "pj"): "projected",
    ("significance", "dm"): "dm",
    ("conditional_independence", "pj"): "projected_ci",
    ("conditional_independence", "dm"): "dm_ci",
}


@dataclass(frozen=True)
class TestConfig:
    """Configuration of a single test run."""

    test_kind: str = "significance"
    method: str = "both"            # pj | dm | both
    statistic: str = "both"         # cvm | ks | both
    order: int = 2                  # kernel order
    c: float = 1.0                  # rule-of-thumb coefficient
    scale_mode: str = "none"
    B: int = 199                    # bootstrap replicates
    alphas: tuple[float, ...] = (0.10, 0.05, 0.01)
    multiplier: str = "rademacher"
    seed: int = 0
    delta_floor: float = 1e-12
    fx_floor: float = 1e-12
    draw_cap: int | None = None     # None retains all bootstrap draws in the report
    dm_center: str = "leave_in"     # conditional-CDF estimator recentering the dm bootstrap

    def __post_init__(self) -> None:
        if self.test_kind not in TEST_KINDS:
            raise ValueError(f"unknown test_kind {self.test_kind!r}")
        if self.method not in METHODS + ("both",):
            raise ValueError(f"unknown method {self.method!r}")
        if self.statistic not in STATISTICS + ("both",):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.multiplier not in MULTIPLIER_KINDS:
            raise ValueError(f"unknown multiplier {self.multiplier!r}")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ValueError("alphas must lie strictly between 0 and 1")
        if self.c <= 0:
            raise ValueError("c must be positive")

    @property
    def methods(self) -> tuple[str, ...]:
        return METHODS if self.method == "both" else (self.method,)

    @property
    def statistics(self) -> tuple[str, ...]:
        return STATISTICS if self.statistic == "both" else (self.statistic,)

    def to_dict(self) -> dict:
        return {
            "test_kind": self.test_kind, "method": self.method, "statistic": self.statistic,
            "order": self.order, "c": self.c, "scale_mode": self.scale_mode, "B": self.B,
            "alphas": list(self.alphas), "multiplier": self.multiplier, "seed": self.seed,
            "delta_floor": self.delta_floor, "fx_floor": self.fx_floor, "draw_cap": self.draw_cap,
            "dm_center": self.dm_center,
        }

    @staticmethod
    def from_dict(d: dict) -> "TestConfig":
        d = dict(d)
        d["alphas"] = tuple(d.get("alphas", (0.10, 0.05, 0.01)))
        return TestConfig(**d)


def draw_multipliers(n: int, kind: str, rng: np.random.Generator) -> np.ndarray:
    """n independent draws from the chosen mean-zero unit-variance law."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if kind == "mammen_two_point":
        return np.where(rng.random(n) < _MAMMEN_P_LO, _MAMMEN_LO, _MAMMEN_HI)
    if kind == "rademacher":
        return rng.integers(0, 2, size=n) * 2.0 - 1.0
    if kind == "standard_normal":
        return rng.standard_normal(n)
    raise ValueError(f"unknown multiplier kind {kind!r}")


def multiplier_matrix(n: int, B: int, kind: str, seed: int) -> np.ndarray:
    """(B, n) multiplier draws; replicate b uses the stream (seed, b).

    Each replicate's stream is spawned from the seed by replicate index, so
    results do not depend on how replicates are scheduled.
    """
    out = np.empty((B, n))
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
        out[b] = draw_multipliers(n, kind, rng)
    return out


def bootstrap_process(core, V: np.ndarray, kind: str, ci_resid: np.ndarray | None = None) -> ProcessValues:
    """One bootstrap replicate of the process: each i-summand scaled by V[i]."""
    V = np.asarray(V, dtype=float)
    if V.shape != (core.n,):
        raise ValueError(f"multiplier vector must have shape ({core.n},)")
    m = summand_matrix(core, kind, ci_resid, bootstrap=True)
    return ProcessValues(values=(V @ m) / core.n, kind=kind)


def critical_value(draws: np.ndarray, alpha: float) -> float:
    """The ceil(B(1-alpha))-th smallest of the B bootstrap draws."""
    draws = np.asarray(draws, dtype=float)
    B = draws.size
    if B < 1:
        raise ValueError("need at least one bootstrap draw")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if B < 1.0 / alpha - 1.0:
        warnings.warn(
            f"B={B} is below the recommended 1/alpha - 1 = {1.0 / alpha - 1.0:.0f} "
            f"for alpha={alpha}; the test cannot resolve this level", stacklevel=2)
    k = math.ceil(B * (1.0 - alpha))
    if k < 1:
        warnings.warn(f"B(1-alpha) = {B * (1 - alpha):.3g} < 1; using the smallest draw", stacklevel=2)
        k = 1
    return float(np.sort(draws)[k - 1])


def p_value(draws: np.ndarray, observed: float) -> float:
    """Bootstrap p-value (1 + #{draws >= observed}) / (B + 1); always in (0, 1]."""
    draws = np.asarray(draws, dtype=float)
    return float((1 + np.count_nonzero(draws >= observed)) / (draws.size + 1))


@dataclass(frozen=True)
class StatResult:
    """Observed scaled statistic with its bootstrap draws and decisions."""

    observed: float
    critical_values: dict[float, float]
    p_value: float
    reject: dict[float, bool]
    draws: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "observed": self.observed,
            "critical_values": {repr(a): cv for a, cv in self.critical_values.items()},
            "p_value": self.p_value,
            "reject": {repr(a): bool(r) for a, r in self.reject.items()},
            "draws": None if self.draws is None else [float(v) for v in self.draws],
        }

    @staticmethod
    def from_dict(d: dict) -> "StatResult":
        return StatResult(
            observed=float(d["observed"]),
            critical_values={float(a): float(cv) for a, cv in d["critical_values"].items()},
            p_value=float(d["p_value"]),
            reject={float(a): bool(r) for a, r in d["reject"].items()},
            draws=None if d.get("draws") is None else np.asarray(d["draws"], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class TestReport:
    """Full outcome of one test run; ``elapsed_seconds`` is excluded from equality."""

    config: TestConfig
    n: int
    q: int
    p: int
    results: dict[str, dict[str, StatResult]]   # method -> statistic -> result
    diagnostics: CoreDiagnostics
    elapsed_seconds: float | None = None

    def result(self, method: str, statistic: str) -> StatResult:
        return self.results[method][statistic]

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "n": self.n, "q": self.q, "p": self.p,
            "results": {m: {s: r.to_dict() for s, r in stats.items()}
                        for m, stats in self.results.items()},
            "diagnostics": self.diagnostics.to_dict(),
        }
        if include_timing:
            d["elapsed_seconds"] = self.elapsed_seconds
        return d

    @staticmethod
    def from_dict(d: dict) -> "TestReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        return TestReport(
            config=TestConfig.from_dict(d["config"]),
            n=int(d["n"]), q=int(d["q"]), p=int(d["p"]),
            results={m: {s: StatResult.from_dict(r) for s, r in stats.items()}
                     for m, stats in d["results"].items()},
            diagnostics=CoreDiagnostics(**d["diagnostics"]),
            elapsed_seconds=d.get("elapsed_seconds"),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TestReport):
            return NotImplemented
        return self.to_dict(include_timing=False) == other.to_dict(include_timing=False)


def _stat_draws(values: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaled (cvm, ks) statistics for a (B, n) matrix of process values."""
    cvm = n * np.mean(values**2, axis=-1)
    ks = np.sqrt(n) * np.max(np.abs(values), axis=-1)
    return cvm, ks


def run_test(data: Dataset, cfg: TestConfig) -> TestReport:
    """Run the configured test end to end on one dataset.

    Builds the precomputed core once, evaluates the observed processes,
    then draws B multiplier replicates (each an O(n^2) product against the
    prebuilt summand matrices) and derives critical values, p-values, and
    reject flags per requested (method, statistic, alpha).
    """
    start = time.perf_counter()
    n = data.n
    spec = KernelSpec(order=cfg.order)
    plan = bandwidth_rule(n, cfg.c, spec, cfg.scale_mode, x=data.x, z=data.z)
    core = build_core(data, plan, spec, Guards(fx_floor=cfg.fx_floor, delta_floor=cfg.delta_floor),
                      dm_center=cfg.dm_center)

    ci_resid = None
    if cfg.test_kind == "conditional_independence":
        ci_resid = ci_residual_matrix(core, data.y)

    V = multiplier_matrix(n, cfg.B, cfg.multiplier, cfg.seed)

    results: dict[str, dict[str, StatResult]] = {}
    for method in cfg.methods:
        kind = _OBSERVED_KIND[(cfg.test_kind, method)]
        m_obs = summand_matrix(core, kind, ci_resid, bootstrap=False)
        observed_values = process_column_means(m_obs)
        m_boot = m_obs if method == "pj" else summand_matrix(core, kind, ci_resid, bootstrap=True)
        boot_values = (V @ m_boot) / n

        obs_cvm, obs_ks = _stat_draws(observed_values, n)
        draws_cvm, draws_ks = _stat_draws(boot_values, n)
        per_stat: dict[str, StatResult] = {}
        for stat_name, obs, draws in (("cvm", float(obs_cvm), draws_cvm),
                                      ("ks", float(obs_ks), draws_ks)):
            if stat_name not in cfg.statistics:
                continue
            cvs = {a: critical_value(draws, a) for a in cfg.alphas}
            per_stat[stat_name] = StatResult(
                observed=obs,
                critical_values=cvs,
                p_value=p_value(draws, obs),
                reject={a: obs > cv for a, cv in cvs.items()},
                draws=draws if cfg.draw_cap is None else draws[: cfg.draw_cap],
            )
        results[method] = per_stat

    return TestReport(
        config=cfg, n=n, q=data.q, p=data.p, results=results,
        diagnostics=core.diagnostics,
        elapsed_seconds=time.perf_counter() - start,
    )

