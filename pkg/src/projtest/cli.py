"""Command-line surface: run tests on CSV data, run simulations, self-check kernels.

Exit codes: 0 the command ran (a test decision is data, not a failure),
2 I/O or parse errors, 3 validation errors.  Reports are JSON for single
tests and CSV or aligned text for simulation grids.  Setting
SOURCE_DATE_EPOCH pins the manifest timestamp and suppresses wall-time,
making outputs byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_csv_columns(path: str) -> tuple[dict[str, list[float]], bytes]:
    """Parse a numeric CSV with a header row; returns columns and raw bytes."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError(f"{path} is not UTF-8: {exc}", EXIT_IO)
    reader = csv.reader(text.splitlines())
    rows = list(reader)
    if not rows:
        raise CliError(f"{path} is empty", EXIT_IO)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise CliError(f"{path} has duplicate column names", EXIT_VALIDATION)
    cols: dict[str, list[float]] = {h: [] for h in header}
    for rnum, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue
        if len(row) != len(header):
            raise CliError(f"{path}: row {rnum} has {len(row)} fields, expected {len(header)}",
                           EXIT_IO)
        for h, field in zip(header, row):
            field = field.strip()
            if field == "":
                raise CliError(f"{path}: missing value at row {rnum}, column {h!r}",
                               EXIT_VALIDATION)
            try:
                val = float(field)
            except ValueError:
                raise CliError(f"{path}: non-numeric value {field!r} at row {rnum}, column {h!r}",
                               EXIT_VALIDATION)
            cols[h].append(val)
    return cols, raw


def _column_roles(cols: dict[str, list[float]], y: str, x: list[str], z: list[str]) -> None:
    names = list(cols)
    for role, wanted in (("y", [y]), ("x", x), ("z", z)):
        for name in wanted:
            if name not in names:
                raise CliError(f"column {name!r} (role {role}) not in CSV header {names}",
                               EXIT_VALIDATION)
    roles = [y, *x, *z]
    if len(set(roles)) != len(roles):
        raise CliError("y, x, z column roles must be disjoint", EXIT_VALIDATION)
    if not x or not z:
        raise CliError("need at least one x column and one z column", EXIT_VALIDATION)


def _timestamp() -> tuple[str, bool]:
    """ISO timestamp; SOURCE_DATE_EPOCH pins it for reproducible output."""
    sde = os.environ.get("SOURCE_DATE_EPOCH")
    if sde is not None:
        dt = datetime.fromtimestamp(int(sde), tz=timezone.utc)
        return dt.isoformat(), True
    return datetime.now(tz=timezone.utc).isoformat(), False


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _load_toml(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO)
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"invalid TOML in {path}: {exc}", EXIT_IO)


def _merge(args: argparse.Namespace, toml_cfg: dict, key: str, default):
    """Config precedence: command-line flag > TOML key > default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in toml_cfg:
        return toml_cfg[key]
    return default


def _build_test_config(args: argparse.Namespace, toml_cfg: dict, test_kind: str):
    from .bootstrap import TestConfig

    alphas = _merge(args, toml_cfg, "alpha", "0.10,0.05,0.01")
    if isinstance(alphas, str):
        alphas = tuple(float(a) for a in _split_list(alphas))
    else:
        alphas = tuple(float(a) for a in alphas)
    multiplier = {
        "mammen": "mammen_two_point", "rademacher": "rademacher", "normal": "standard_normal",
    }.get(str(_merge(args, toml_cfg, "multiplier", "rademacher")))
    if multiplier is None:
        raise CliError("--multiplier must be one of mammen, rademacher, normal", EXIT_VALIDATION)
    try:
        return TestConfig(
            test_kind=test_kind,
            method={"pj": "pj", "dm": "dm", "both": "both"}[str(_merge(args, toml_cfg, "method", "both"))],
            statistic={"cvm": "cvm", "ks": "ks", "both": "both"}[str(_merge(args, toml_cfg, "stat", "both"))],
            order=int(_merge(args, toml_cfg, "order", 2)),
            c=float(_merge(args, toml_cfg, "c", 1.0)),
            scale_mode=str(_merge(args, toml_cfg, "scale-mode", "none")),
            B=int(_merge(args, toml_cfg, "B", 199)),
            alphas=alphas,
            multiplier=multiplier,
            seed=int(_merge(args, toml_cfg, "seed", 0)),
            delta_floor=float(_merge(args, toml_cfg, "delta-floor", 1e-12)),
            fx_floor=float(_merge(args, toml_cfg, "fx-floor", 1e-12)),
            dm_center=str(_merge(args, toml_cfg, "dm-center", "leave_in")),
        )
    except (KeyError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_VALIDATION)


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        try:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {out}: {exc}", EXIT_IO)


def _cmd_test(args: argparse.Namespace, test_kind: str) -> int:
    import numpy as np

    from . import __version__
    from .bootstrap import run_test
    from .estimators import Dataset

    toml_cfg = _load_toml(args.config)
    csv_path = _merge(args, toml_cfg, "csv", None)
    if csv_path is None:
        raise CliError("--csv is required", EXIT_VALIDATION)
    y_col = _merge(args, toml_cfg, "y", None)
    x_cols = _merge(args, toml_cfg, "x", None)
    z_cols = _merge(args, toml_cfg, "z", None)
    if y_col is None or x_cols is None or z_cols is None:
        raise CliError("--y, --x, and --z are required", EXIT_VALIDATION)
    if isinstance(x_cols, str):
        x_cols = _split_list(x_cols)
    if isinstance(z_cols, str):
        z_cols = _split_list(z_cols)

    cols, raw = _read_csv_columns(csv_path)
    _column_roles(cols, y_col, x_cols, z_cols)
    cfg = _build_test_config(args, toml_cfg, test_kind)

    try:
        data = Dataset.from_arrays(
            np.asarray(cols[y_col]),
            np.column_stack([cols[c] for c in x_cols]),
            np.column_stack([cols[c] for c in z_cols]),
        )
    except ValueError as exc:
        raise CliError(f"invalid dataset: {exc}", EXIT_VALIDATION)

    started, pinned = _timestamp()
    t0 = time.perf_counter()
    report = run_test(data, cfg)
    elapsed = None if pinned else time.perf_counter() - t0

    doc = report.to_dict(include_timing=False)
    doc["roles"] = {"y": y_col, "x": x_cols, "z": z_cols}
    doc["manifest"] = {
        "tool_version": __version__,
        "input_digest": "sha256:" + hashlib.sha256(raw).hexdigest(),
        "input_path": os.path.basename(csv_path),
        "seed": cfg.seed,
        "created_at": started,
        "elapsed_seconds": elapsed,
    }
    _write_output(json.dumps(doc, sort_keys=True, indent=2), args.out)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    from .bootstrap import TestConfig
    from .simulation import (
        TABLE_PRESETS, DgpSpec, emit_csv, emit_table, preset_config,
        run_monte_carlo, run_preset,
    )
    from dataclasses import replace

    toml_cfg = _load_toml(args.config)
    reps = int(_merge(args, toml_cfg, "reps", 1000))
    seed = int(_merge(args, toml_cfg, "seed", 0))
    workers = _merge(args, toml_cfg, "threads", None)
    workers = int(workers) if workers is not None else None
    fmt = str(_merge(args, toml_cfg, "format", "text"))
    if fmt not in ("text", "csv", "both"):
        raise CliError("--format must be text, csv, or both", EXIT_VALIDATION)

    base = TestConfig(
        B=int(_merge(args, toml_cfg, "B", 199)),
        multiplier={"mammen": "mammen_two_point", "rademacher": "rademacher",
                    "normal": "standard_normal"}[str(_merge(args, toml_cfg, "multiplier", "rademacher"))],
        dm_center=str(_merge(args, toml_cfg, "dm-center", "leave_in")),
    )

    preset_name = _merge(args, toml_cfg, "preset", None)
    if preset_name is not None:
        if preset_name not in TABLE_PRESETS:
            raise CliError(
                f"unknown preset {preset_name!r}; available: table1..table{len(TABLE_PRESETS)}",
                EXIT_VALIDATION)
        preset = TABLE_PRESETS[preset_name]
        cs = _merge(args, toml_cfg, "cs", None)
        ns = _merge(args, toml_cfg, "ns", None)
        gammas = _merge(args, toml_cfg, "gammas", None)
        results = run_preset(
            preset, reps=reps, master_seed=seed, workers=workers, base_config=base,
            cs=tuple(float(v) for v in _split_list(cs)) if isinstance(cs, str) else cs,
            ns=tuple(int(v) for v in _split_list(ns)) if isinstance(ns, str) else ns,
            gammas=tuple(float(v) for v in _split_list(gammas)) if isinstance(gammas, str) else gammas,
        )
        layout = preset.layout
    else:
        design = _merge(args, toml_cfg, "design", None)
        if design is None:
            raise CliError("either --preset or --design is required", EXIT_VALIDATION)
        kind = str(_merge(args, toml_cfg, "test-kind", "significance"))
        p = int(_merge(args, toml_cfg, "p", 1))
        q = int(_merge(args, toml_cfg, "q", 1))
        try:
            spec = DgpSpec(design=design, p=p, q=q,
                           alternative=str(_merge(args, toml_cfg, "alternative", "sine")),
                           gamma=float(_merge(args, toml_cfg, "gamma", 0.0)),
                           response="mean" if kind == "significance" else "variance",
                           n=int(_merge(args, toml_cfg, "n", 200)))
            stub = TABLE_PRESETS["table1"]
            cfg = preset_config(replace(stub, test_kind=kind, design=design), p, q,
                                float(_merge(args, toml_cfg, "c", 1.0)), base)
        except ValueError as exc:
            raise CliError(f"invalid simulation spec: {exc}", EXIT_VALIDATION)
        res = run_monte_carlo(spec, cfg, reps=reps, master_seed=seed, workers=workers)
        results = [replace(res, c_display=float(_merge(args, toml_cfg, "c", 1.0)))]
        layout = "by_gamma"

    pieces = []
    if fmt in ("text", "both"):
        pieces.append(emit_table(results, layout=layout, statistic=str(_merge(args, toml_cfg, "stat-view", "cvm"))))
    if fmt in ("csv", "both"):
        pieces.append(emit_csv(results))
    _write_output("\n".join(pieces), args.out)
    return EXIT_OK


def _cmd_kernel_selfcheck(args: argparse.Namespace) -> int:
    import numpy as np

    from .kernels import KernelSpec, epanechnikov, kernel_cdf, kernel_selfconv

    tol = float(args.tol)
    orders = (2, 4) if args.order == "both" else (int(args.order),)
    nodes, weights = np.polynomial.legendre.leggauss(64)
    failures: list[str] = []

    for order in orders:
        spec = KernelSpec(order=order)
        kvals = epanechnikov(nodes, spec)
        # moment conditions on [-1, 1]
        for i in range(order):
            moment = float(np.sum(nodes**i * kvals * weights))
            target = 1.0 if i == 0 else 0.0
            if abs(moment - target) > tol:
                failures.append(f"order {order}: moment {i} = {moment:.3e}, want {target}")
        # antiderivative agrees with quadrature
        for u in (-0.75, -0.2, 0.3, 0.9):
            half = 0.5 * (u + 1.0)
            t = -1.0 + half * (nodes + 1.0)
            quad = float(np.sum(epanechnikov(t, spec) * weights) * half)
            if abs(quad - kernel_cdf(u, spec)) > tol:
                failures.append(f"order {order}: cdf({u}) off by {abs(quad - kernel_cdf(u, spec)):.3e}")
        # self-convolution agrees with quadrature
        for v in (0.0, 0.4, 1.1, 1.9):
            lo, hi = -1.0, 1.0 - v
            half = 0.5 * (hi - lo)
            t = 0.5 * (hi + lo) + half * nodes
            quad = float(np.sum(epanechnikov(t, spec) * epanechnikov(t + v, spec) * weights) * half)
            if abs(quad - kernel_selfconv(v, spec)) > tol:
                failures.append(
                    f"order {order}: selfconv({v}) off by {abs(quad - kernel_selfconv(v, spec)):.3e}")
        # symmetry of the antiderivative
        for u in (0.1, 0.6, 0.95):
            resid = kernel_cdf(u, spec) + kernel_cdf(-u, spec) - 1.0
            if abs(resid) > max(tol, 1e-12):
                failures.append(f"order {order}: cdf symmetry residual {resid:.3e} at u={u}")

    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return 1
    print(f"kernel self-check passed for order(s) {', '.join(str(o) for o in orders)} at tol {tol:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    parser = argparse.ArgumentParser(
        prog="projtest",
        description="Projection-based nonparametric significance and conditional-independence tests",
    )
    parser.add_argument("--version", action="version", version=f"projtest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_test_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--csv", help="input CSV file (header row, numeric, comma-separated)")
        p.add_argument("--y", help="response column name")
        p.add_argument("--x", help="comma-separated covariate columns known significant")
        p.add_argument("--z", help="comma-separated covariate columns under test")
        p.add_argument("--method", choices=["pj", "dm", "both"])
        p.add_argument("--stat", choices=["cvm", "ks", "both"])
        p.add_argument("--order", type=int, choices=[2, 4])
        p.add_argument("--c", type=float, help="bandwidth coefficient (default 1.0)")
        p.add_argument("--scale-mode", choices=["none", "per_coordinate_std"])
        p.add_argument("--B", type=int, help="bootstrap replicates (default 199)")
        p.add_argument("--alpha", help="comma-separated significance levels (default 0.10,0.05,0.01)")
        p.add_argument("--multiplier", choices=["mammen", "rademacher", "normal"])
        p.add_argument("--dm-center", choices=["leave_in", "leave_one_out"])
        p.add_argument("--delta-floor", type=float)
        p.add_argument("--fx-floor", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="accepted for interface parity; single tests run in-process")
        p.add_argument("--config", help="TOML config file (flags take precedence)")
        p.add_argument("--out", help="write the JSON report here instead of stdout")

    p_test = sub.add_parser("test", help="nonparametric significance test on CSV data")
    add_test_flags(p_test)
    p_ci = sub.add_parser("ci-test", help="conditional independence test on CSV data")
    add_test_flags(p_ci)

    p_sim = sub.add_parser("simulate", help="Monte Carlo rejection-frequency study")
    p_sim.add_argument("--preset", help="named table preset (table1..table24)")
    p_sim.add_argument("--design", choices=["x_eq_z_plus_u", "independent_normal", "independent_uniform"])
    p_sim.add_argument("--test-kind", choices=["significance", "conditional_independence"])
    p_sim.add_argument("--p", type=int)
    p_sim.add_argument("--q", type=int)
    p_sim.add_argument("--alternative", choices=["sine", "exp"])
    p_sim.add_argument("--gamma", type=float)
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--c", type=float)
    p_sim.add_argument("--cs", help="comma-separated c grid override for presets")
    p_sim.add_argument("--ns", help="comma-separated n grid override for presets")
    p_sim.add_argument("--gammas", help="comma-separated gamma grid override for presets")
    p_sim.add_argument("--reps", type=int, help="Monte Carlo replications (default 1000)")
    p_sim.add_argument("--B", type=int)
    p_sim.add_argument("--multiplier", choices=["mammen", "rademacher", "normal"])
    p_sim.add_argument("--dm-center", choices=["leave_in", "leave_one_out"])
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--threads", type=int, help="worker processes (default: machine parallelism)")
    p_sim.add_argument("--format", choices=["text", "csv", "both"])
    p_sim.add_argument("--stat-view", choices=["cvm", "ks"], help="statistic shown in text tables")
    p_sim.add_argument("--config", help="TOML config file (flags take precedence)")
    p_sim.add_argument("--out")

    p_check = sub.add_parser("kernel-selfcheck", help="verify kernel moments, antiderivatives, convolutions")
    p_check.add_argument("--order", choices=["2", "4", "both"], default="both")
    p_check.add_argument("--tol", type=float, default=1e-8)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "test":
            return _cmd_test(args, "significance")
        if args.command == "ci-test":
            return _cmd_test(args, "conditional_independence")
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "kernel-selfcheck":
            return _cmd_kernel_selfcheck(args)
        parser.error(f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
